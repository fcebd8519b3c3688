//! Lur'e systems `x+ = A x + B psi(u - C x)`, `y = C x`, certified through the
//! bounded-real solve.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dtbr::{dtbr_solve, DtbrSolution, R0Search};
use super::linear::{controllability_check, observability_check, schur_check};
use super::{verify_demidovich, DemidovichCertificate, GridSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::statespace::{State, StateSpaceSystem};

const TAG_SLOPE: u64 = 0x71;

/// Scalar nonlinearity with `psi(0) = 0` and known slope bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Psi {
    /// `scale * tanh(v)`.
    Tanh {
        scale: f64,
    },
    /// `slope * v`.
    Linear {
        slope: f64,
    },
    Zero,
}

impl Psi {
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            Psi::Tanh { scale } => scale * v.tanh(),
            Psi::Linear { slope } => slope * v,
            Psi::Zero => 0.0,
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        match *self {
            Psi::Tanh { scale } => {
                let t = v.tanh();
                scale * (1.0 - t * t)
            }
            Psi::Linear { slope } => slope,
            Psi::Zero => 0.0,
        }
    }

    /// `(a, b)` with `a <= psi' <= b` everywhere.
    pub fn slope_bounds(&self) -> (f64, f64) {
        match *self {
            Psi::Tanh { scale } => (scale.min(0.0), scale.max(0.0)),
            Psi::Linear { slope } => (slope, slope),
            Psi::Zero => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LureSystem {
    pub a: DMatrix<f64>,
    /// `n x 1`.
    pub b: DMatrix<f64>,
    /// `1 x n`.
    pub c: DMatrix<f64>,
    pub psi: Psi,
    pub gamma: f64,
}

impl LureSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, psi: Psi, gamma: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::invalid("A", "must be a nonempty square matrix"));
        }
        if b.shape() != (n, 1) {
            return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
        }
        if c.shape() != (1, n) {
            return Err(Error::DimensionMismatch { expected: n, got: c.ncols() });
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Lur'e matrices".into()));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
        }
        Ok(Self { a, b, c, psi, gamma })
    }

    /// Scalar convenience constructor.
    pub fn scalar(a: f64, b: f64, c: f64, psi: Psi, gamma: f64) -> Result<Self> {
        let one = |v| DMatrix::from_element(1, 1, v);
        Self::new(one(a), one(b), one(c), psi, gamma)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `f(x, u) = A x + B psi(u - C x)`, `g(x) = C x`, with Jacobian
    /// `A - psi'(u - C x) B C` and `L_f = |B| max(|a|, |b|)`, `L_g = |C|`.
    pub fn to_state_space(&self) -> StateSpaceSystem {
        let n = self.dim();
        let (a, b, c, psi) = (self.a.clone(), self.b.column(0).into_owned(), self.c.row(0).transpose(), self.psi);
        let (a2, b2, c2) = (a.clone(), b.clone(), c.clone());
        let c3 = c.clone();
        let bc = &b * c.transpose();
        let f = move |x: &State, u: f64| &a * x + &b * psi.eval(u - c.dot(x));
        let g = move |x: &State, _: f64| c3.dot(x);
        let jac = move |x: &State, u: f64| &a2 - &bc * psi.derivative(u - c2.dot(x));
        let (lo, hi) = psi.slope_bounds();
        StateSpaceSystem::new(format!("lure(n={n})"), n, f, g)
            .with_jacobian(jac)
            .with_lipschitz(b2.norm() * lo.abs().max(hi.abs()), self.c.norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LureCertification {
    pub certificate: DemidovichCertificate,
    pub solution: DtbrSolution,
    pub rho: f64,
    pub slope_bounds: (f64, f64),
}

fn failed(assumption: &'static str, detail: impl Into<String>) -> Error {
    Error::AssumptionFailed { assumption, detail: detail.into() }
}

/// Checks `psi(0) = 0` and the declared slope bounds on sampled points.
fn check_slopes(psi: &Psi, seed: u64) -> Result<(f64, f64)> {
    let (lo, hi) = psi.slope_bounds();
    if psi.eval(0.0) != 0.0 {
        return Err(failed("slope", "psi(0) != 0"));
    }
    let mut g = rng::tagged(seed, TAG_SLOPE, 0);
    for _ in 0..1000 {
        let v: f64 = g.gen_range(-10.0..=10.0);
        let d = psi.derivative(v);
        if d < lo - 1e-12 || d > hi + 1e-12 {
            return Err(failed("slope", format!("psi'({v}) = {d} outside [{lo}, {hi}]")));
        }
    }
    Ok((lo, hi))
}

/// Full pipeline: slope, Schur, controllability, observability and small-gain
/// checks, bounded-real solve, `mu = r0^2`, then a grid cross-check of the
/// resulting certificate against the Jacobian `A - psi' B C`.
pub fn lure_certify(sys: &LureSystem, grid: &GridSpec, search: &R0Search) -> Result<LureCertification> {
    let slope_bounds = check_slopes(&sys.psi, grid.seed)?;
    let (lo, hi) = slope_bounds;
    let schur = schur_check(&sys.a)?;
    if !schur.pass {
        return Err(failed("schur", format!("rho(A) = {} is not below 1", schur.rho)));
    }
    let ctrb = controllability_check(&sys.a, &sys.b)?;
    if !ctrb.pass {
        return Err(failed("controllable", format!("controllability rank {} < {}", ctrb.rank, sys.dim())));
    }
    let obsv = observability_check(&sys.a, &sys.c)?;
    if !obsv.pass {
        return Err(failed("observable", format!("observability rank {} < {}", obsv.rank, sys.dim())));
    }
    let worst_slope = lo.abs().max(hi.abs());
    if worst_slope > sys.gamma {
        return Err(failed("slope_within_gain", format!("slope bound {worst_slope} exceeds gamma = {}", sys.gamma)));
    }
    let solution = match dtbr_solve(&sys.a, &sys.b, &sys.c, sys.gamma, search) {
        Err(Error::NormTooLarge { product }) => {
            return Err(failed("small_gain", format!("gamma ||G|| = {product} is not below 1")))
        }
        other => other?,
    };
    if !solution.positive_definite {
        return Err(Error::InvalidCertificate("bounded-real P is not positive definite".into()));
    }
    let mu = solution.mu;
    if !(mu > schur.rho * schur.rho) {
        return Err(Error::InvalidCertificate(format!("mu = {mu} not above rho(A)^2")));
    }
    let ss = sys.to_state_space();
    let mut certificate = match verify_demidovich(&ss, &solution.p, mu, grid) {
        Ok(c) => c,
        Err(Error::CriterionViolated { margin, x, u }) => {
            return Err(Error::CrossCheckFailed(format!(
                "grid check contradicts the bounded-real certificate: margin {margin:e} at x = {x:?}, u = {u}"
            )))
        }
        Err(e) => return Err(e),
    };
    certificate.provenance = format!("bounded-real lemma, r0 = {}; {}", solution.r0, certificate.provenance);
    Ok(LureCertification { certificate, solution, rho: schur.rho, slope_bounds })
}

/// Lur'e system with `B` and `C` given as plain arrays.
pub fn lure_from_vectors(a: DMatrix<f64>, b: &[f64], c: &[f64], psi: Psi, gamma: f64) -> Result<LureSystem> {
    let b = DMatrix::from_column_slice(b.len(), 1, b);
    let c = DMatrix::from_row_slice(1, c.len(), c);
    LureSystem::new(a, b, c, psi, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::lyapunov_decrease_check;

    #[test]
    fn scalar_pipeline() {
        let sys = LureSystem::scalar(0.5, 1.0, 1.0, Psi::Tanh { scale: 0.2 }, 0.25).unwrap();
        let out = lure_certify(&sys, &GridSpec::default(), &R0Search::default()).unwrap();
        let mu = out.certificate.mu;
        assert!(mu > 0.25 && mu < 1.0, "mu = {mu}");
        assert!(out.solution.max_residual() < 1e-10);
        let ss = sys.to_state_space();
        let lyap = lyapunov_decrease_check(&ss, &out.certificate, &GridSpec::default(), 2000, 1).unwrap();
        assert!(lyap.passed());
    }

    #[test]
    fn linear_feedback_free_case() {
        let sys = LureSystem::scalar(0.5, 1.0, 1.0, Psi::Zero, 0.25).unwrap();
        let out = lure_certify(&sys, &GridSpec::default(), &R0Search::default()).unwrap();
        assert!(out.certificate.mu > 0.25 && out.certificate.mu < 1.0);
    }

    #[test]
    fn assumption_failures() {
        let steep = LureSystem::scalar(0.5, 1.0, 1.0, Psi::Tanh { scale: 0.3 }, 0.25).unwrap();
        assert!(matches!(
            lure_certify(&steep, &GridSpec::default(), &R0Search::default()),
            Err(Error::AssumptionFailed { assumption: "slope_within_gain", .. })
        ));
        let unstable = LureSystem::scalar(1.1, 1.0, 1.0, Psi::Zero, 0.25).unwrap();
        assert!(matches!(
            lure_certify(&unstable, &GridSpec::default(), &R0Search::default()),
            Err(Error::AssumptionFailed { assumption: "schur", .. })
        ));
        let big = LureSystem::scalar(0.5, 1.0, 1.0, Psi::Tanh { scale: 0.5 }, 0.6).unwrap();
        assert!(matches!(
            lure_certify(&big, &GridSpec::default(), &R0Search::default()),
            Err(Error::AssumptionFailed { assumption: "small_gain", .. })
        ));
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]);
        let hidden = lure_from_vectors(a, &[1.0, 0.0], &[0.0, 1.0], Psi::Zero, 0.25).unwrap();
        assert!(matches!(
            lure_certify(&hidden, &GridSpec::default(), &R0Search::default()),
            Err(Error::AssumptionFailed { assumption: "controllable", .. })
        ));
    }

    #[test]
    fn two_state_lure_certifies() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.3, -0.2, 0.3]);
        let sys = lure_from_vectors(a, &[1.0, 0.5], &[0.4, 1.0], Psi::Tanh { scale: 0.3 }, 0.35).unwrap();
        let out = lure_certify(&sys, &GridSpec::default(), &R0Search::default()).unwrap();
        assert!(out.certificate.mu > out.rho * out.rho);
        assert!(out.certificate.kappa >= 1.0);
    }

    #[test]
    fn psi_values() {
        let p = Psi::Tanh { scale: 0.2 };
        assert_eq!(p.eval(0.0), 0.0);
        assert!((p.derivative(0.0) - 0.2).abs() < 1e-15);
        assert_eq!(p.slope_bounds(), (0.0, 0.2));
        assert_eq!(Psi::Linear { slope: -0.3 }.slope_bounds(), (-0.3, -0.3));
    }
}
