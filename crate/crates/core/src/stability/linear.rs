//! Linear-block checks: Schur stability, controllability/observability rank
//! tests and the H-infinity norm of `G(z) = C (zI - A)^{-1} B`.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;
pub const DEFAULT_CIRCLE_POINTS: usize = 4096;
const SCHUR_TOL: f64 = 1e-12;
const REFINE_CANDIDATES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurCheck {
    pub rho: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCheck {
    pub rank: usize,
    pub pass: bool,
}

pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `rho = max |eig(A)|`; passes when `rho < 1` (with a `1e-12` guard band).
pub fn schur_check(a: &DMatrix<f64>) -> Result<SchurCheck> {
    let rho = spectral_radius(a)?;
    Ok(SchurCheck { rho, pass: rho < 1.0 - SCHUR_TOL })
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if b.shape() != (n, 1) {
        return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
    }
    if c.shape() != (1, n) {
        return Err(Error::DimensionMismatch { expected: n, got: c.ncols() });
    }
    Ok(n)
}

/// Rank of `[B, AB, ..., A^{n-1} B]`.
pub fn controllability_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<RankCheck> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
    }
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = a * cur;
    }
    let k = b.ncols();
    let ctrb = DMatrix::from_fn(n, n * k, |i, j| blocks[j / k][(i, j % k)]);
    let rank = numerical_rank(&ctrb);
    Ok(RankCheck { rank, pass: rank == n })
}

/// Rank of `[C; CA; ...; CA^{n-1}]`.
pub fn observability_check(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<RankCheck> {
    controllability_check(&a.transpose(), &c.transpose())
}

type CMat = DMatrix<Complex<f64>>;

struct Transfer {
    a: CMat,
    b: CMat,
    c: CMat,
}

impl Transfer {
    fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Self {
        let lift = |m: &DMatrix<f64>| m.map(|v| Complex::new(v, 0.0));
        Self { a: lift(a), b: lift(b), c: lift(c) }
    }

    /// `|G(r e^{i theta})|`.
    fn gain(&self, r: f64, theta: f64) -> f64 {
        let n = self.a.nrows();
        let z = Complex::from_polar(r, theta);
        let m = CMat::from_diagonal_element(n, n, z) - &self.a;
        match m.lu().solve(&self.b) {
            Some(x) => (&self.c * x)[(0, 0)].norm(),
            None => f64::INFINITY,
        }
    }

    fn sup_on_circle(&self, r: f64, points: usize, tol: f64) -> f64 {
        if self.a.nrows() == 0 {
            return 0.0;
        }
        // real data: |G(conj z)| = |G(z)|, so the upper half circle suffices
        let h = std::f64::consts::PI / points as f64;
        let vals: Vec<f64> = (0..=points).map(|i| self.gain(r, i as f64 * h)).collect();
        let mut order: Vec<usize> = (0..=points)
            .filter(|&i| {
                let left = if i == 0 { f64::NEG_INFINITY } else { vals[i - 1] };
                let right = if i == points { f64::NEG_INFINITY } else { vals[i + 1] };
                vals[i] >= left && vals[i] >= right
            })
            .collect();
        order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
        let mut best = vals.iter().copied().fold(0.0, f64::max);
        for &i in order.iter().take(REFINE_CANDIDATES) {
            let lo = (i as f64 - 1.0).max(0.0) * h;
            let hi = (i as f64 + 1.0).min(points as f64) * h;
            best = best.max(self.golden_max(r, lo, hi, tol));
        }
        best
    }

    fn golden_max(&self, r: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let (mut f1, mut f2) = (self.gain(r, x1), self.gain(r, x2));
        let mut best = f1.max(f2);
        for _ in 0..200 {
            if hi - lo <= tol {
                break;
            }
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = self.gain(r, x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = self.gain(r, x2);
            }
            best = best.max(f1).max(f2);
        }
        best
    }
}

/// `g(r) = sup_theta |G(r e^{i theta})|` for `r > rho(A)`, by a circle grid
/// with golden-section refinement of the largest local maxima.
pub fn gain_on_circle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: f64,
    points: usize,
    tol: f64,
) -> Result<f64> {
    check_dims(a, b, c)?;
    let rho = spectral_radius(a)?;
    if !(r > rho) {
        return Err(Error::invalid("r", format!("radius {r} must exceed rho(A) = {rho}")));
    }
    if points < 2 {
        return Err(Error::invalid("points", "need at least two grid points"));
    }
    Ok(Transfer::new(a, b, c).sup_on_circle(r, points, tol))
}

/// `||G||_inf` on the unit circle, using a grid of `points` angles.
pub fn hinf_norm_with_grid(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    tol: f64,
    points: usize,
) -> Result<f64> {
    check_dims(a, b, c)?;
    let s = schur_check(a)?;
    if !s.pass {
        return Err(Error::UnstableA { rho: s.rho });
    }
    gain_on_circle(a, b, c, 1.0, points, tol)
}

pub fn hinf_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> Result<f64> {
    hinf_norm_with_grid(a, b, c, tol, DEFAULT_CIRCLE_POINTS)
}
