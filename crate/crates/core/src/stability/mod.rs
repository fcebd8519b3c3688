//! Incremental-stability certificates.
//!
//! A [`DemidovichCertificate`] is a pair `(P, mu)` with `J^T P J - mu P <= 0`
//! for every state Jacobian `J` of the system. The matrix inequality is checked
//! on a finite grid, so a passing check is a *sampled* certificate; the Lur'e
//! pipeline in [`lure`] produces certificates that hold algebraically.

pub mod dtbr;
pub mod linear;
pub mod lure;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::statespace::{BetaFunction, State, StateSpaceSystem};

pub use dtbr::{dtbr_solve, DtbrSolution, R0Search};
pub use linear::{
    controllability_check, gain_on_circle, hinf_norm, observability_check, schur_check, RankCheck, SchurCheck,
};
pub use lure::{lure_certify, lure_from_vectors, LureCertification, LureSystem, Psi};

const TAG_GRID: u64 = 0x61;
const TAG_LYAP: u64 = 0x62;
const MAX_LATTICE: usize = 50_000;

pub const SAMPLED_CERTIFICATE: &str = "sampled certificate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CertificateRepr", into = "CertificateRepr")]
pub struct DemidovichCertificate {
    pub p: DMatrix<f64>,
    pub mu: f64,
    /// `lambda_max(P) / lambda_min(P)`.
    pub kappa: f64,
    /// Worst `lambda_max(J^T P J - mu P)` seen during verification; `None`
    /// for certificates that were never checked on a grid.
    pub margin: Option<f64>,
    pub provenance: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateRepr {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    mu: f64,
    /// Derived from `P` when omitted; checked against it when present.
    #[serde(default)]
    kappa: Option<f64>,
    #[serde(default)]
    margin: Option<f64>,
    #[serde(default)]
    provenance: Option<String>,
}

impl TryFrom<CertificateRepr> for DemidovichCertificate {
    type Error = Error;
    fn try_from(r: CertificateRepr) -> Result<Self> {
        let n = r.p.len();
        if r.p.iter().any(|row| row.len() != n) {
            return Err(Error::Parse("P must be square".into()));
        }
        let p = DMatrix::from_fn(n, n, |i, j| r.p[i][j]);
        let mut cert = DemidovichCertificate::new(p, r.mu)?;
        if let Some(kappa) = r.kappa {
            if (cert.kappa - kappa).abs() > 1e-6 * cert.kappa {
                return Err(Error::InvalidCertificate(format!(
                    "stored kappa {kappa} does not match P (kappa {})",
                    cert.kappa
                )));
            }
        }
        cert.margin = r.margin;
        if let Some(p) = r.provenance {
            cert.provenance = p;
        }
        Ok(cert)
    }
}

impl From<DemidovichCertificate> for CertificateRepr {
    fn from(c: DemidovichCertificate) -> Self {
        let n = c.p.nrows();
        CertificateRepr {
            p: (0..n).map(|i| (0..n).map(|j| c.p[(i, j)]).collect()).collect(),
            mu: c.mu,
            kappa: Some(c.kappa),
            margin: c.margin,
            provenance: Some(c.provenance),
        }
    }
}

fn symmetric_eigen_range(p: &DMatrix<f64>) -> (f64, f64) {
    let eig = p.clone().symmetric_eigen().eigenvalues;
    (eig.min(), eig.max())
}

impl DemidovichCertificate {
    /// Validates `P` (square, symmetric, positive definite) and `mu in (0, 1)`.
    pub fn new(p: DMatrix<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::InvalidCertificate(format!("mu must lie in (0,1), got {mu}")));
        }
        if !p.is_square() || p.nrows() == 0 {
            return Err(Error::InvalidCertificate("P must be a nonempty square matrix".into()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("certificate matrix P".into()));
        }
        let scale = p.amax().max(1.0);
        if (&p - p.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidCertificate("P is not symmetric".into()));
        }
        let p = (&p + p.transpose()) * 0.5;
        let (lo, hi) = symmetric_eigen_range(&p);
        if lo <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
        }
        Ok(Self { p, mu, kappa: hi / lo, margin: None, provenance: "unverified".into() })
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// `beta(C, t) = sqrt(kappa) C mu^{t/2}`.
    pub fn beta(&self) -> BetaFunction {
        BetaFunction::Exponential { scale: self.kappa.sqrt(), rate: self.mu.sqrt() }
    }

    /// `(a - b)^T P (a - b)`.
    pub fn v(&self, a: &State, b: &State) -> f64 {
        let d = a - b;
        d.dot(&(&self.p * &d))
    }
}

/// `P = I_n`, `mu = lambda^2`: the certificate of a `lambda`-contraction.
pub fn contraction_certificate(lambda: f64, n: usize) -> Result<DemidovichCertificate> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid("lambda", format!("must lie in (0,1), got {lambda}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "state dimension must be positive"));
    }
    let mut cert = DemidovichCertificate::new(DMatrix::identity(n, n), lambda * lambda)?;
    cert.provenance = format!("contraction with rate {lambda}");
    Ok(cert)
}

/// Region of `X x U` explored by the grid and sampling checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// States range over the cube `[-state_radius, state_radius]^n`.
    pub state_radius: f64,
    pub input_radius: f64,
    /// Lattice resolution per axis (the lattice is skipped when it would
    /// exceed 50 000 states).
    pub points_per_axis: usize,
    /// Additional uniformly drawn `(x, u)` points.
    pub random_points: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { state_radius: 2.0, input_radius: 1.0, points_per_axis: 9, random_points: 2000, seed: 0 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.state_radius > 0.0 && self.state_radius.is_finite()) {
            return Err(Error::invalid("state_radius", "must be positive"));
        }
        if !(self.input_radius >= 0.0 && self.input_radius.is_finite()) {
            return Err(Error::invalid("input_radius", "must be nonnegative"));
        }
        if self.points_per_axis == 0 && self.random_points == 0 {
            return Err(Error::invalid("grid", "no points requested"));
        }
        Ok(())
    }

    fn axis(&self, radius: f64) -> Vec<f64> {
        match self.points_per_axis {
            0 => vec![],
            1 => vec![0.0],
            k => (0..k).map(|i| -radius + 2.0 * radius * i as f64 / (k - 1) as f64).collect(),
        }
    }

    /// Deterministic list of `(x, u)` points.
    pub fn points(&self, n: usize) -> Vec<(State, f64)> {
        let mut out = Vec::new();
        let xs = self.axis(self.state_radius);
        let us = self.axis(self.input_radius);
        let lattice = xs.len().checked_pow(n as u32).filter(|&c| c > 0 && c <= MAX_LATTICE);
        if let Some(count) = lattice {
            for idx in 0..count {
                let mut rem = idx;
                let x = DVector::from_fn(n, |_, _| {
                    let v = xs[rem % xs.len()];
                    rem /= xs.len();
                    v
                });
                for &u in &us {
                    out.push((x.clone(), u));
                }
            }
        }
        let mut g = rng::tagged(self.seed, TAG_GRID, 0);
        let (sr, ir) = (self.state_radius, self.input_radius);
        for _ in 0..self.random_points {
            let x = DVector::from_fn(n, |_, _| g.gen_range(-sr..=sr));
            let u = if ir > 0.0 { g.gen_range(-ir..=ir) } else { 0.0 };
            out.push((x, u));
        }
        out
    }
}

/// Checks `J^T P J - mu P <= 0` at every grid point.
///
/// On success the returned certificate carries the worst (largest) eigenvalue
/// of the residual as `margin` and is labelled a sampled certificate. A point
/// with positive residual beyond round-off yields `CriterionViolated`.
pub fn verify_demidovich(
    sys: &StateSpaceSystem,
    p: &DMatrix<f64>,
    mu: f64,
    grid: &GridSpec,
) -> Result<DemidovichCertificate> {
    if !sys.has_jacobian() {
        return Err(Error::MissingJacobian);
    }
    grid.validate()?;
    let mut cert = DemidovichCertificate::new(p.clone(), mu)?;
    let n = sys.dim();
    if cert.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cert.dim() });
    }
    let points = grid.points(n);
    let margins = points
        .par_iter()
        .map(|(x, u)| -> Result<f64> {
            let j = sys.jacobian_x(x, *u)?;
            let s = j.transpose() * &cert.p * &j - &cert.p * mu;
            let s = (&s + s.transpose()) * 0.5;
            Ok(s.symmetric_eigen().eigenvalues.max())
        })
        .collect::<Result<Vec<_>>>()?;
    let (worst_idx, worst) =
        margins.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let tol = 1e-12 * cert.p.norm().max(1.0);
    if worst > tol {
        let (x, u) = &points[worst_idx];
        return Err(Error::CriterionViolated { margin: worst, x: x.iter().copied().collect(), u: *u });
    }
    cert.margin = Some(worst);
    cert.provenance = format!("{SAMPLED_CERTIFICATE} ({} grid points)", points.len());
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest observed `V(f(xi,u), f(xi',u)) / V(xi, xi')`.
    pub worst_ratio: f64,
    pub mu: f64,
    pub worst_point: Option<LyapunovWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovWitness {
    pub xi: Vec<f64>,
    pub xi_prime: Vec<f64>,
    pub u: f64,
}

impl LyapunovReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

const LYAP_REL_TOL: f64 = 1e-10;

/// `sqrt V` of a difference of two states of size `scale` carries a rounding
/// error of a few ulps of `scale`; the comparison allows for it.
fn lyap_violated(next: f64, prev: f64, factor: f64, scale: f64, p_norm: f64) -> bool {
    let slack = 64.0 * f64::EPSILON * scale * p_norm.sqrt();
    next.sqrt() > (factor * prev * (1.0 + LYAP_REL_TOL)).sqrt() + slack
}

/// Samples `(xi, xi', u)` in the grid region and checks
/// `V(f(xi,u), f(xi',u)) <= mu V(xi, xi')`.
pub fn lyapunov_decrease_check(
    sys: &StateSpaceSystem,
    cert: &DemidovichCertificate,
    region: &GridSpec,
    samples: usize,
    seed: u64,
) -> Result<LyapunovReport> {
    region.validate()?;
    let n = sys.dim();
    if cert.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cert.dim() });
    }
    let (sr, ir) = (region.state_radius, region.input_radius);
    let p_norm = cert.p.norm();
    let results: Vec<(f64, bool, LyapunovWitness)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::tagged(seed, TAG_LYAP, i as u64);
            let xi = DVector::from_fn(n, |_, _| g.gen_range(-sr..=sr));
            // the first sample pins the xi = xi' case
            let xi2 = if i == 0 { xi.clone() } else { DVector::from_fn(n, |_, _| g.gen_range(-sr..=sr)) };
            let u = if ir > 0.0 { g.gen_range(-ir..=ir) } else { 0.0 };
            let before = cert.v(&xi, &xi2);
            let after = cert.v(&sys.step(&xi, u), &sys.step(&xi2, u));
            let ratio = if before > 0.0 { after / before } else { 0.0 };
            let w = LyapunovWitness { xi: xi.iter().copied().collect(), xi_prime: xi2.iter().copied().collect(), u };
            let scale = 1.0 + xi.amax().max(xi2.amax());
            (ratio, lyap_violated(after, before, cert.mu, scale, p_norm), w)
        })
        .collect();
    let violations = results.iter().filter(|r| r.1).count();
    let worst = results.iter().fold(None::<&(f64, bool, LyapunovWitness)>, |a, b| match a {
        Some(a) if a.0 >= b.0 => Some(a),
        _ => Some(b),
    });
    Ok(LyapunovReport {
        samples,
        violations,
        worst_ratio: worst.map_or(0.0, |w| w.0),
        mu: cert.mu,
        worst_point: worst.map(|w| w.2.clone()),
    })
}

/// Iterated form: along `trials` pairs of trajectories driven by a shared
/// uniform input, `V(x_t, x'_t) <= mu^t V(xi, xi')` for every `t <= horizon`.
pub fn lyapunov_trajectory_check(
    sys: &StateSpaceSystem,
    cert: &DemidovichCertificate,
    region: &GridSpec,
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<LyapunovReport> {
    region.validate()?;
    let n = sys.dim();
    let (sr, ir) = (region.state_radius, region.input_radius);
    let p_norm = cert.p.norm();
    let results = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<(f64, usize)> {
            let mut g = rng::tagged(seed, TAG_LYAP ^ 0xff, i as u64);
            let xi = DVector::from_fn(n, |_, _| g.gen_range(-sr..=sr));
            let xi2 = DVector::from_fn(n, |_, _| g.gen_range(-sr..=sr));
            let u = crate::seqcore::Sequence::new(
                (0..horizon).map(|_| if ir > 0.0 { g.gen_range(-ir..=ir) } else { 0.0 }).collect(),
            )?;
            let a = sys.trajectory(&xi, &u, horizon)?;
            let b = sys.trajectory(&xi2, &u, horizon)?;
            let v0 = cert.v(&xi, &xi2);
            let mut worst = 0.0_f64;
            let mut bad = 0;
            for t in 1..=horizon {
                let vt = cert.v(&a[t], &b[t]);
                let factor = cert.mu.powi(t as i32);
                let scale = 1.0 + a[t].amax().max(b[t].amax());
                if lyap_violated(vt, v0, factor, scale, p_norm) {
                    bad += 1;
                }
                if v0 > 0.0 && factor > 0.0 {
                    worst = worst.max((vt / v0).powf(1.0 / t as f64));
                }
            }
            Ok((worst, bad))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovReport {
        samples: trials,
        violations: results.iter().map(|r| r.1).sum(),
        worst_ratio: results.iter().map(|r| r.0).fold(0.0, f64::max),
        mu: cert.mu,
        worst_point: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64) -> StateSpaceSystem {
        StateSpaceSystem::new(
            "scalar",
            1,
            move |x: &State, u| DVector::from_element(1, a * x[0] + b * u),
            |x: &State, _| x[0],
        )
        .with_jacobian(move |_, _| DMatrix::from_element(1, 1, a))
    }

    fn one() -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }

    #[test]
    fn demidovich_examples() {
        let cert = verify_demidovich(&scalar(0.5, 1.0), &one(), 0.25, &GridSpec::default()).unwrap();
        assert_eq!(cert.margin, Some(0.0));
        assert_eq!(cert.kappa, 1.0);
        assert!(cert.provenance.starts_with(SAMPLED_CERTIFICATE));

        match verify_demidovich(&scalar(1.1, 0.0), &one(), 0.99, &GridSpec::default()) {
            Err(Error::CriterionViolated { margin, .. }) => assert!((margin - 0.22).abs() < 1e-12),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn demidovich_rejects_bad_inputs() {
        let no_jac = StateSpaceSystem::new("x", 1, |x: &State, _| x.clone(), |x: &State, _| x[0]);
        assert_eq!(verify_demidovich(&no_jac, &one(), 0.5, &GridSpec::default()), Err(Error::MissingJacobian));
        let neg = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            verify_demidovich(&scalar(0.5, 1.0), &neg, 0.5, &GridSpec::default()),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn lyapunov_examples() {
        let sys = scalar(0.5, 1.0);
        let cert = contraction_certificate(0.5, 1).unwrap();
        let report = lyapunov_decrease_check(&sys, &cert, &GridSpec::default(), 500, 4).unwrap();
        assert!(report.passed());
        assert!((report.worst_ratio - 0.25).abs() < 1e-12);
        let traj = lyapunov_trajectory_check(&sys, &cert, &GridSpec::default(), 50, 30, 4).unwrap();
        assert!(traj.passed());

        let v = cert.v(&DVector::from_element(1, 2.0), &DVector::from_element(1, 1.0));
        let next =
            cert.v(&sys.step(&DVector::from_element(1, 2.0), 0.3), &sys.step(&DVector::from_element(1, 1.0), 0.3));
        assert!((next - 0.25 * v).abs() < 1e-15);

        let loose = scalar(0.9, 0.0);
        let report = lyapunov_decrease_check(&loose, &cert, &GridSpec::default(), 100, 0).unwrap();
        assert_eq!(report.violations, 99);
    }

    #[test]
    fn contraction_examples() {
        let cert = contraction_certificate(0.5, 3).unwrap();
        assert_eq!((cert.mu, cert.kappa), (0.25, 1.0));
        assert_eq!(cert.beta().eval(2.0, 3), 0.25);
        assert!(contraction_certificate(1.0, 1).is_err());
        assert!(contraction_certificate(0.0, 1).is_err());
    }

    #[test]
    fn certificate_json_roundtrip() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mut cert = DemidovichCertificate::new(p, 0.5).unwrap();
        cert.margin = Some(-0.1);
        let text = serde_json::to_string(&cert).unwrap();
        assert!(text.contains("\"P\":[[2.0,0.5],[0.5,1.0]]"));
        let back: DemidovichCertificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cert);
        let bad = text.replace("\"mu\":0.5", "\"mu\":1.5");
        assert!(serde_json::from_str::<DemidovichCertificate>(&bad).is_err());
    }

    #[test]
    fn grid_is_deterministic_and_covers_lattice() {
        let g = GridSpec { points_per_axis: 3, random_points: 5, ..GridSpec::default() };
        let pts = g.points(2);
        assert_eq!(pts.len(), 9 * 3 + 5);
        assert_eq!(pts, g.points(2));
    }
}
