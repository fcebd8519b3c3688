//! Discrete-time bounded-real solve for the scaled system
//! `H(z) = gamma G(r0 z)`, realized as `(A / r0, B, gamma C / r0)`.
//!
//! For the scaled system the standard bounded-real equations are
//!
//! ```text
//! Ah^T P Ah + Ch^T Ch + L^T L = P
//! B^T P B + W^T W             = 1
//! Ah^T P B + L^T W            = 0
//! ```
//!
//! which, multiplied out by `r0`, read
//! `A^T P A + gamma^2 C^T C + r0^2 L^T L = r0^2 P`, `B^T P B + W^T W = 1` and
//! `A^T P B + r0 L^T W = 0`. Residuals are reported in that unscaled form.
//! Eliminating `L` and `W` leaves the Riccati equation
//! `P = Ah^T P Ah + Ch^T Ch + Ah^T P B (1 - B^T P B)^{-1} B^T P Ah`, solved by
//! value iteration from `P = 0` (which increases monotonically to the minimal
//! solution) and polished with policy-iteration (Newton) steps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear::{gain_on_circle, hinf_norm_with_grid, spectral_radius, DEFAULT_CIRCLE_POINTS};
use crate::error::{Error, Result};

/// How `r0` is chosen in `(rho(A), 1)`.
///
/// `g(r) = sup |G(r z)|` is nonincreasing in `r`, so every `r` above the
/// threshold where `g(r)` drops below the target works; the smallest such `r`
/// gives the smallest `mu = r0^2`. The target is `(1 - slack) / gamma`, or the
/// midpoint between `||G||` and `1 / gamma` when the slack would exclude
/// `r = 1` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct R0Search {
    pub slack: f64,
    /// Lower end of the search is `rho + eta_fraction (1 - rho)`.
    pub eta_fraction: f64,
    pub bisection_steps: usize,
    pub circle_points: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for R0Search {
    fn default() -> Self {
        Self {
            slack: 0.01,
            eta_fraction: 0.05,
            bisection_steps: 50,
            circle_points: 1024,
            max_iterations: 100_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtbrSolution {
    pub r0: f64,
    pub mu: f64,
    pub gamma: f64,
    pub hinf_norm: f64,
    /// `g(r0)`.
    pub gain_at_r0: f64,
    pub p: DMatrix<f64>,
    /// `1 x n`.
    pub l: DMatrix<f64>,
    /// `1 x 1`.
    pub w: DMatrix<f64>,
    /// Frobenius norms of the three equation residuals (unscaled form).
    pub residuals: [f64; 3],
    pub iterations: usize,
    pub positive_definite: bool,
}

impl DtbrSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

struct Scaled<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
    ctc: DMatrix<f64>,
}

impl Scaled<'_> {
    /// `(1 - B^T P B, B^T P A)`.
    fn gain_terms(&self, p: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let btp = self.b.transpose() * p;
        (1.0 - (&btp * self.b)[(0, 0)], btp * self.a)
    }

    fn riccati(&self, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let (s, bpa) = self.gain_terms(p);
        if !(s > 0.0) {
            return None;
        }
        let next = self.a.transpose() * p * self.a + &self.ctc + bpa.transpose() * &bpa / s;
        Some(symmetrize(&next))
    }

    fn residual(&self, p: &DMatrix<f64>) -> f64 {
        self.riccati(p).map_or(f64::INFINITY, |r| (r - p).norm())
    }

    /// One policy-iteration step: with `K = (1 - B^T P B)^{-1} B^T P A` solve
    /// `X = (A + BK)^T X (A + BK) + C^T C - K^T K`.
    fn newton(&self, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let (s, bpa) = self.gain_terms(p);
        if !(s > 0.0) {
            return None;
        }
        let k = bpa / s;
        let acl = self.a + self.b * &k;
        if spectral_radius(&acl).ok()? >= 1.0 {
            return None;
        }
        let q = &self.ctc - k.transpose() * &k;
        stein(&acl, &q).map(|x| symmetrize(&x))
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solves `X = A^T X A + Q` through `(I - A^T kron A^T) vec X = vec Q`.
pub fn stein(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let lhs = DMatrix::identity(n * n, n * n) - at.kronecker(&at);
    let rhs = DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let x = lhs.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

fn pick_r0(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    gamma: f64,
    norm: f64,
    rho: f64,
    search: &R0Search,
) -> Result<(f64, f64)> {
    let g = |r: f64| gain_on_circle(a, b, c, r, search.circle_points, 1e-12);
    let target = if gamma == 0.0 {
        f64::INFINITY
    } else if norm < (1.0 - search.slack) / gamma {
        (1.0 - search.slack) / gamma
    } else {
        0.5 * (norm + 1.0 / gamma)
    };
    let lo = rho + search.eta_fraction * (1.0 - rho);
    let g_lo = g(lo)?;
    if g_lo <= target {
        return Ok((lo, g_lo));
    }
    // g(lo) > target >= g(1): bisect for the crossing, keep the feasible end
    let (mut lo, mut hi) = (lo, 1.0);
    let mut g_hi = norm;
    for _ in 0..search.bisection_steps {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm <= target {
            hi = mid;
            g_hi = gm;
        } else {
            lo = mid;
        }
    }
    Ok((hi, g_hi))
}

/// Picks `r0`, solves the scaled bounded-real equations and reports the
/// residuals. Requires `A` Schur and `gamma ||G|| < 1`.
pub fn dtbr_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    gamma: f64,
    search: &R0Search,
) -> Result<DtbrSolution> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be nonnegative, got {gamma}")));
    }
    if !(search.slack > 0.0 && search.slack < 1.0) {
        return Err(Error::invalid("slack", "must lie in (0,1)"));
    }
    if !(search.eta_fraction > 0.0 && search.eta_fraction < 1.0) {
        return Err(Error::invalid("eta_fraction", "must lie in (0,1)"));
    }
    let norm = hinf_norm_with_grid(a, b, c, 1e-12, DEFAULT_CIRCLE_POINTS)?;
    let product = gamma * norm;
    if product >= 1.0 {
        return Err(Error::NormTooLarge { product });
    }
    let n = a.nrows();
    let rho = spectral_radius(a)?;
    let (r0, gain_at_r0) = pick_r0(a, b, c, gamma, norm, rho, search)?;

    let a_hat = a / r0;
    let c_hat = c * (gamma / r0);
    let sys = Scaled { a: &a_hat, b, ctc: c_hat.transpose() * &c_hat };

    let mut p = DMatrix::zeros(n, n);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let stop = 1e-15;
    while iterations < search.max_iterations {
        let Some(next) = sys.riccati(&p) else { break };
        let step = (&next - &p).norm();
        p = next;
        iterations += 1;
        if trace.len() < 64 || iterations % 1000 == 0 {
            trace.push(step);
        }
        if step <= stop * (1.0 + p.norm()) {
            break;
        }
    }
    for _ in 0..8 {
        let before = sys.residual(&p);
        if before <= 1e-16 * (1.0 + p.norm()) {
            break;
        }
        match sys.newton(&p) {
            Some(q) if sys.residual(&q) < before => p = q,
            _ => break,
        }
    }

    let (s, bpa) = sys.gain_terms(&p);
    if !(s > 0.0) {
        trace.push(sys.residual(&p));
        return Err(Error::NoConvergence { iterations, residual: f64::INFINITY, trace });
    }
    let w_val = s.sqrt();
    let l = -bpa / w_val;
    let w = DMatrix::from_element(1, 1, w_val);

    let r2 = r0 * r0;
    let res_a =
        (a.transpose() * &p * a + c.transpose() * c * (gamma * gamma) + l.transpose() * &l * r2 - &p * r2).norm();
    let res_b = ((b.transpose() * &p * b)[(0, 0)] + w_val * w_val - 1.0).abs();
    let res_c = (a.transpose() * &p * b + l.transpose() * &w * r0).norm();
    let residuals = [res_a, res_b, res_c];
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if !(worst <= search.tolerance * (1.0 + p.norm())) {
        trace.push(sys.residual(&p));
        return Err(Error::NoConvergence { iterations, residual: worst, trace });
    }
    let positive_definite = n > 0 && p.clone().symmetric_eigen().eigenvalues.min() > 0.0;
    Ok(DtbrSolution {
        r0,
        mu: r2,
        gamma,
        hinf_norm: norm,
        gain_at_r0,
        p,
        l,
        w,
        residuals,
        iterations,
        positive_definite,
    })
}
