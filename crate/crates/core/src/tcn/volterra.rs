//! Finite Volterra series (polynomials in the window variables) and the
//! parameter-count comparison against TCNs on the ReLU filter family.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::filter::{truncation_bound, ExpFilter};
use super::fit::{windows, TrainSpec};
use crate::error::{Error, Result};
use crate::iomap::{finite_functional, IoMap};

const TAG_TRAIN: u64 = 0x91;
const TAG_HOLDOUT: u64 = 0x92;
/// Singular values below this fraction of the largest are dropped.
const RCOND: f64 = 1e-12;

/// `C(m + 1 + d, d)`, the number of monomials of total degree `<= d` in
/// `m + 1` variables; `None` on overflow.
pub fn term_count(m: usize, degree: usize) -> Option<u64> {
    let n = (m + 1 + degree) as u128;
    let k = degree.min(m + 1) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul(n - k + i)? / i;
    }
    u64::try_from(acc).ok()
}

fn multi_indices(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    fn go(vars: usize, left: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == vars {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e as u32);
            go(vars, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(vars, degree, &mut Vec::with_capacity(vars), &mut out);
    out
}

/// `T_0(x), ..., T_d(x)`.
fn chebyshev(x: f64, d: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if d >= 1 {
        out.push(x);
    }
    for k in 2..=d {
        out.push(2.0 * x * out[k - 1] - out[k - 2]);
    }
}

/// Degree-`d` polynomial in `(u_{t-m}, ..., u_t)`, stored in the scaled
/// Chebyshev product basis `prod_j T_{e_j}(x_j / scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraModel {
    pub m: usize,
    pub degree: usize,
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    pub scale: f64,
}

impl VolterraModel {
    pub fn term_count(&self) -> usize {
        self.exponents.len()
    }

    fn features(&self, x: &[f64], cache: &mut Vec<Vec<f64>>, out: &mut Vec<f64>) {
        cache.resize(self.m + 1, Vec::new());
        for (j, c) in cache.iter_mut().enumerate() {
            chebyshev(x.get(j).copied().unwrap_or(0.0) / self.scale, self.degree, c);
        }
        out.clear();
        out.extend(
            self.exponents.iter().map(|e| e.iter().zip(cache.iter()).map(|(&k, c)| c[k as usize]).product::<f64>()),
        );
    }

    /// Value of the polynomial on a window (oldest first).
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut cache = Vec::new();
        let mut row = Vec::new();
        self.features(x, &mut cache, &mut row);
        row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraReport {
    pub m: usize,
    pub degree: usize,
    pub terms: usize,
    pub train_sup_error: f64,
    pub holdout_sup_error: f64,
    /// Ratio of extreme singular values of the design matrix.
    pub condition: f64,
    /// Whether small singular values were truncated.
    pub regularized: bool,
    pub train_samples: usize,
}

/// Least-squares SVD solve that drops singular values below `RCOND * max`.
/// Returns the solution, the condition number and whether anything was
/// dropped.
fn lstsq(design: DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64, bool)> {
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !(smax > 0.0 && smax.is_finite()) {
        return Err(Error::IllConditioned { condition });
    }
    let regularized = !(condition < 1.0 / RCOND);
    let x = svd.solve(rhs, smax * RCOND).map_err(|_| Error::IllConditioned { condition })?;
    Ok((x, condition, regularized))
}

/// Fits a degree-`d` polynomial to `x -> F~_m(x)` on `[-R, R]^{m+1}`.
/// Ill-conditioned designs are solved by truncated SVD and flagged in the
/// report rather than rejected.
pub fn volterra_fit(
    map: &dyn IoMap,
    m: usize,
    degree: usize,
    r: f64,
    spec: &TrainSpec,
    seed: u64,
) -> Result<(VolterraModel, VolterraReport)> {
    if degree == 0 {
        return Err(Error::invalid("degree", "must be at least 1"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("R", format!("must be positive, got {r}")));
    }
    let terms = term_count(m, degree)
        .filter(|&t| t <= 20_000)
        .ok_or_else(|| Error::invalid("degree", format!("too many terms for m={m}, d={degree}")))?
        as usize;
    let exponents = multi_indices(m + 1, degree);
    debug_assert_eq!(exponents.len(), terms);
    let mut model = VolterraModel { m, degree, exponents, coefficients: vec![0.0; terms], scale: r };

    let n = spec.train_samples.max(2 * terms);
    let xs = windows(m, r, n, true, seed, TAG_TRAIN);
    let ys: Vec<f64> = xs.iter().map(|x| finite_functional(map, x)).collect::<Result<_>>()?;
    let mut design = DMatrix::zeros(xs.len(), terms);
    let (mut cache, mut row) = (Vec::new(), Vec::new());
    for (i, x) in xs.iter().enumerate() {
        model.features(x, &mut cache, &mut row);
        for (k, v) in row.iter().enumerate() {
            design[(i, k)] = *v;
        }
    }
    let (coef, condition, regularized) = lstsq(design, &DVector::from_vec(ys.clone()))?;
    model.coefficients = coef.iter().copied().collect();

    let sup =
        |xs: &[Vec<f64>], ys: &[f64]| xs.iter().zip(ys).map(|(x, y)| (model.eval(x) - y).abs()).fold(0.0, f64::max);
    let hx = windows(m, r, spec.holdout_samples, false, seed, TAG_HOLDOUT);
    let hy: Vec<f64> = hx.iter().map(|x| finite_functional(map, x)).collect::<Result<_>>()?;
    let report = VolterraReport {
        m,
        degree,
        terms,
        train_sup_error: sup(&xs, &ys),
        holdout_sup_error: sup(&hx, &hy),
        condition,
        regularized,
        train_samples: xs.len(),
    };
    Ok((model, report))
}

/// Sup error of the least-squares degree-`d` fit of `ReLU` on
/// `[-radius, radius]`, for each requested degree. The fit uses
/// `grid_points` Chebyshev nodes, where the Chebyshev basis is discretely
/// orthogonal: the least-squares coefficients are the discrete Chebyshev
/// coefficients, and the degree-`d` fit is their truncation. The error is
/// measured on a uniform grid four times as dense that includes both
/// endpoints and the kink.
pub fn relu_polynomial_errors(radius: f64, degrees: &[usize], grid_points: usize) -> Result<Vec<(usize, f64)>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius", "must be positive"));
    }
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    if grid_points <= max_degree {
        return Err(Error::invalid("grid_points", "must exceed the largest degree"));
    }
    let n = grid_points as f64;
    let mut coef = vec![0.0; max_degree + 1];
    let mut t = Vec::new();
    for i in 0..grid_points {
        let x = (std::f64::consts::PI * (i as f64 + 0.5) / n).cos();
        chebyshev(x, max_degree, &mut t);
        let f = radius * x.max(0.0);
        for (c, tk) in coef.iter_mut().zip(&t) {
            *c += 2.0 * f * tk / n;
        }
    }
    coef[0] /= 2.0;

    let eval_points = 4 * grid_points;
    let dense: Vec<f64> = (0..=eval_points).map(|i| -1.0 + 2.0 * i as f64 / eval_points as f64).collect();
    let basis: Vec<Vec<f64>> = dense
        .iter()
        .map(|&x| {
            let mut row = Vec::new();
            chebyshev(x, max_degree, &mut row);
            row
        })
        .collect();
    Ok(degrees
        .iter()
        .map(|&d| {
            let err = dense
                .iter()
                .zip(&basis)
                .map(|(&x, row)| {
                    let p: f64 = row[..=d].iter().zip(&coef).map(|(a, b)| a * b).sum();
                    (p - radius * x.max(0.0)).abs()
                })
                .fold(0.0, f64::max);
            (d, err)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsimonyRow {
    pub eps: f64,
    /// Context length whose truncated filter meets `eps` (0 when `eps >=
    /// sup|F|`, where the zero map already suffices).
    pub tcn_m: usize,
    /// Parameters of the single affine layer, `m + 2` (0 for the zero map).
    pub tcn_affine_params: usize,
    /// Smallest degree whose collapsed 1-D fit meets `eps`; `None` past the
    /// sweep.
    pub volterra_degree: Option<usize>,
    /// `C(m + 1 + d, d)` at the TCN's context length.
    pub volterra_terms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsimonyReport {
    pub c: f64,
    pub lambda: f64,
    pub r: f64,
    /// `R C / (1 - lambda)`, the sup of `|F|` over `M(R)`.
    pub sup_output: f64,
    /// Least-squares sup error of the collapsed problem per degree.
    pub degree_errors: Vec<(usize, f64)>,
    /// `min_d d * error(d)` over degrees `>= 1`: a positive value is the
    /// constant of the `error >= c / d` trend.
    pub trend_constant: f64,
    pub rows: Vec<ParsimonyRow>,
}

/// TCN versus Volterra size for the ReLU filter `h_s = C lambda^s`.
///
/// The Volterra degree uses the one-variable collapse: along the line
/// `u_{t-s} = sign(h_s) x` the filter output is `ReLU(x sum |h_s|)`, so a
/// window polynomial of degree `d` is no better than a 1-D polynomial
/// approximating `ReLU` on `[-S, S]` with `S = R C / (1 - lambda)`.
pub fn compare_parsimony(c: f64, lambda: f64, r: f64, eps_grid: &[f64], d_max: usize) -> Result<ParsimonyReport> {
    let filter = ExpFilter::geometric(c, lambda, 1)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("R", format!("must be positive, got {r}")));
    }
    if let Some(&e) = eps_grid.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::invalid("eps", format!("must be positive, got {e}")));
    }
    let sup_output = r * c / (1.0 - lambda);
    let degrees: Vec<usize> = (1..=d_max).collect();
    let degree_errors = relu_polynomial_errors(sup_output, &degrees, (8 * d_max).max(1024))?;
    let trend_constant = degree_errors.iter().map(|&(d, e)| d as f64 * e).fold(f64::INFINITY, f64::min);

    let rows = eps_grid
        .iter()
        .map(|&eps| {
            if eps >= sup_output {
                return ParsimonyRow {
                    eps,
                    tcn_m: 0,
                    tcn_affine_params: 0,
                    volterra_degree: Some(0),
                    volterra_terms: Some(1),
                };
            }
            let tcn_m = (0..).find(|&m| truncation_bound(&filter, m, r) <= eps).unwrap_or(0);
            let volterra_degree = degree_errors.iter().find(|(_, e)| *e <= eps).map(|&(d, _)| d);
            ParsimonyRow {
                eps,
                tcn_m,
                tcn_affine_params: tcn_m + 2,
                volterra_degree,
                volterra_terms: volterra_degree.and_then(|d| term_count(tcn_m, d)),
            }
        })
        .collect();
    Ok(ParsimonyReport { c, lambda, r, sup_output, degree_errors, trend_constant, rows })
}
