//! Fitting a TCN to the window functional of an i/o map.
//!
//! Training windows are the corners of `[-R, R]^{m+1}` (all of them up to
//! `m + 1 = 10`, a random quarter of the samples beyond) plus uniform draws.
//! Adam minimizes the mean squared error plus a penalty on the worst
//! residual; a Levenberg-Marquardt stage on the squared residuals then
//! polishes the fit.
//! The output bias is finally shifted so that `net(0) = 0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Layer, ReluNet, TcnModel};
use crate::error::{Error, Result};
use crate::iomap::{finite_functional, IoMap, SAMPLED_LOWER_BOUND};
use crate::rng;

const TAG_TRAIN: u64 = 0x81;
const TAG_HOLDOUT: u64 = 0x82;
const TAG_INIT: u64 = 0x83;
const MAX_ALL_CORNERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Hidden units per layer.
    pub width: usize,
    /// Number of affine maps (1 is a purely affine net).
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub adam_steps: usize,
    pub learning_rate: f64,
    /// Weight of the squared worst residual added to the mean squared error.
    pub worst_weight: f64,
    pub lm_iterations: usize,
    /// Independent initializations; the one with the smallest training sup
    /// error is kept.
    pub restarts: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            train_samples: 1500,
            holdout_samples: 2000,
            adam_steps: 3000,
            learning_rate: 0.01,
            worst_weight: 0.1,
            lm_iterations: 100,
            restarts: 4,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_samples == 0 || self.holdout_samples == 0 {
            return Err(Error::invalid("train_samples", "sample counts must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(self.worst_weight >= 0.0) {
            return Err(Error::invalid("worst_weight", "must be nonnegative"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "need at least one"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub label: String,
    pub m: usize,
    pub architecture: Architecture,
    pub params: usize,
    pub train_sup_error: f64,
    pub train_mse: f64,
    /// Sup error over the held-out windows, after the zero-at-zero shift.
    pub holdout_sup_error: f64,
    pub holdout_mse: f64,
    /// `net(0)` before the bias shift; the shift changes the sup error by at
    /// most this much.
    pub zero_shift: f64,
    pub best_restart: usize,
    pub lm_iterations_used: usize,
    pub train_samples: usize,
    pub holdout_samples: usize,
}

/// Sample windows in `[-R, R]^{m+1}`. Training sets (`training = true`)
/// start with the origin and every corner when there are at most
/// `2^MAX_ALL_CORNERS`; otherwise, and for held-out sets, a quarter of the
/// windows are random corners. The rest are uniform.
pub(super) fn windows(m: usize, r: f64, count: usize, training: bool, seed: u64, tag: u64) -> Vec<Vec<f64>> {
    let d = m + 1;
    let mut g = rng::tagged(seed, tag, 0);
    let mut out = Vec::with_capacity(count);
    if training {
        out.push(vec![0.0; d]);
    }
    if training && d <= MAX_ALL_CORNERS {
        for mask in 0..(1usize << d) {
            out.push((0..d).map(|i| if mask >> i & 1 == 1 { r } else { -r }).collect());
        }
    } else {
        for _ in 0..count / 4 {
            out.push((0..d).map(|_| if g.gen_bool(0.5) { r } else { -r }).collect());
        }
    }
    while out.len() < count {
        out.push((0..d).map(|_| g.gen_range(-r..=r)).collect());
    }
    out
}

/// Flat parameter layout: for each layer, weights (row-major) then bias.
struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    fn new(input: usize, arch: Architecture) -> Self {
        let mut dims = vec![input];
        for _ in 1..arch.depth {
            dims.push(arch.width);
        }
        dims.push(1);
        Self { dims }
    }

    fn count(&self) -> usize {
        self.dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    fn to_net(&self, theta: &[f64]) -> Result<ReluNet> {
        let mut off = 0;
        let mut layers = Vec::new();
        for w in self.dims.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let weights = theta[off..off + rows * cols].to_vec();
            off += rows * cols;
            let bias = theta[off..off + rows].to_vec();
            off += rows;
            layers.push(Layer::new(rows, cols, weights, bias)?);
        }
        ReluNet::new(layers)
    }

    fn init(&self, g: &mut rng::Rng) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.count());
        for w in self.dims.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let a = (6.0 / cols as f64).sqrt();
            theta.extend((0..rows * cols).map(|_| g.gen_range(-a..=a)));
            theta.extend((0..rows).map(|_| g.gen_range(-0.1..=0.1)));
        }
        theta
    }
}

/// Forward pass and gradient of the output with respect to all parameters.
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(shape: &Shape) -> Self {
        Self {
            acts: shape.dims.iter().map(|&d| vec![0.0; d]).collect(),
            delta: shape.dims.iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    fn forward(&mut self, shape: &Shape, theta: &[f64], x: &[f64]) -> f64 {
        self.acts[0].copy_from_slice(x);
        let k = shape.dims.len() - 1;
        let mut off = 0;
        for l in 0..k {
            let (cols, rows) = (shape.dims[l], shape.dims[l + 1]);
            let (w, b) = (&theta[off..off + rows * cols], &theta[off + rows * cols..off + rows * cols + rows]);
            off += rows * cols + rows;
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let input = &head[l];
            for i in 0..rows {
                let z = b[i] + w[i * cols..(i + 1) * cols].iter().zip(input).map(|(a, v)| a * v).sum::<f64>();
                tail[0][i] = if l + 1 < k { z.max(0.0) } else { z };
            }
        }
        self.acts[k][0]
    }

    /// Adds `scale * d out / d theta` into `grad`; requires a prior `forward`.
    fn backward(&mut self, shape: &Shape, theta: &[f64], scale: f64, grad: &mut [f64]) {
        let k = shape.dims.len() - 1;
        let offsets: Vec<usize> = std::iter::once(0)
            .chain(shape.dims.windows(2).scan(0, |acc, w| {
                *acc += w[0] * w[1] + w[1];
                Some(*acc)
            }))
            .collect();
        self.delta[k][0] = scale;
        for l in (0..k).rev() {
            let (cols, rows) = (shape.dims[l], shape.dims[l + 1]);
            let off = offsets[l];
            let w = &theta[off..off + rows * cols];
            let (gw, rest) = grad[off..off + rows * cols + rows].split_at_mut(rows * cols);
            for i in 0..rows {
                let d = self.delta[l + 1][i];
                if d == 0.0 {
                    continue;
                }
                rest[i] += d;
                for j in 0..cols {
                    gw[i * cols + j] += d * self.acts[l][j];
                }
            }
            if l > 0 {
                for j in 0..cols {
                    let active = self.acts[l][j] > 0.0;
                    self.delta[l][j] =
                        if active { (0..rows).map(|i| w[i * cols + j] * self.delta[l + 1][i]).sum() } else { 0.0 };
                }
            }
        }
    }
}

struct Problem<'a> {
    shape: &'a Shape,
    xs: &'a [Vec<f64>],
    ys: &'a [f64],
}

impl Problem<'_> {
    fn residuals(&self, ws: &mut Workspace, theta: &[f64]) -> Vec<f64> {
        self.xs.iter().zip(self.ys).map(|(x, y)| ws.forward(self.shape, theta, x) - y).collect()
    }

    fn adam(&self, theta: &mut [f64], spec: &TrainSpec) -> Result<()> {
        let p = theta.len();
        let n = self.xs.len() as f64;
        let (b1, b2, eps) = (0.9, 0.999, 1e-12);
        let mut m1 = vec![0.0; p];
        let mut m2 = vec![0.0; p];
        let mut grad = vec![0.0; p];
        let mut ws = Workspace::new(self.shape);
        for step in 0..spec.adam_steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut worst = (0.0_f64, 0usize);
            let mut loss = 0.0;
            for (i, (x, y)) in self.xs.iter().zip(self.ys).enumerate() {
                let r = ws.forward(self.shape, theta, x) - y;
                loss += r * r / n;
                if r.abs() > worst.0.abs() {
                    worst = (r, i);
                }
                ws.backward(self.shape, theta, 2.0 * r / n, &mut grad);
            }
            if spec.worst_weight > 0.0 {
                let (r, i) = worst;
                ws.forward(self.shape, theta, &self.xs[i]);
                ws.backward(self.shape, theta, 2.0 * spec.worst_weight * r, &mut grad);
                loss += spec.worst_weight * r * r;
            }
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { step });
            }
            // decays the step size by 100x over the run
            let lr = spec.learning_rate * 0.01f64.powf(step as f64 / spec.adam_steps.max(1) as f64);
            let t = step as i32 + 1;
            for k in 0..p {
                m1[k] = b1 * m1[k] + (1.0 - b1) * grad[k];
                m2[k] = b2 * m2[k] + (1.0 - b2) * grad[k] * grad[k];
                let mh = m1[k] / (1.0 - b1.powi(t));
                let vh = m2[k] / (1.0 - b2.powi(t));
                theta[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Levenberg-Marquardt on the sum of squared residuals; returns the
    /// number of accepted steps.
    fn levenberg_marquardt(&self, theta: &mut Vec<f64>, iterations: usize) -> usize {
        let p = theta.len();
        let n = self.xs.len();
        let mut ws = Workspace::new(self.shape);
        let sse = |ws: &mut Workspace, th: &[f64]| self.residuals(ws, th).iter().map(|r| r * r).sum::<f64>();
        let mut current = sse(&mut ws, theta);
        let mut damping = 1e-3;
        let mut accepted = 0;
        let mut row = vec![0.0; p];
        for _ in 0..iterations {
            if current < 1e-28 {
                break;
            }
            let mut jac = DMatrix::zeros(n, p);
            let mut res = DVector::zeros(n);
            for (i, (x, y)) in self.xs.iter().zip(self.ys).enumerate() {
                res[i] = ws.forward(self.shape, theta, x) - y;
                row.iter_mut().for_each(|v| *v = 0.0);
                ws.backward(self.shape, theta, 1.0, &mut row);
                for (k, v) in row.iter().enumerate() {
                    jac[(i, k)] = *v;
                }
            }
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &res;
            let mut improved = false;
            for _ in 0..12 {
                let mut a = jtj.clone();
                for k in 0..p {
                    a[(k, k)] += damping * (jtj[(k, k)] + 1e-12);
                }
                let Some(chol) = a.cholesky() else {
                    damping *= 10.0;
                    continue;
                };
                let step = chol.solve(&jtr);
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t - s).collect();
                let value = sse(&mut ws, &trial);
                if value.is_finite() && value < current {
                    *theta = trial;
                    current = value;
                    damping = (damping / 3.0).max(1e-15);
                    improved = true;
                    accepted += 1;
                    break;
                }
                damping *= 4.0;
            }
            if !improved {
                break;
            }
        }
        accepted
    }
}

fn sup_and_mse(net: &ReluNet, xs: &[Vec<f64>], ys: &[f64]) -> (f64, f64) {
    let errs: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (net.eval_unchecked(x) - y).abs()).collect();
    let sup = errs.iter().copied().fold(0.0, f64::max);
    let mse = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
    (sup, mse)
}

fn targets(map: &dyn IoMap, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    xs.par_iter().map(|x| finite_functional(map, x)).collect()
}

/// Trains a ReLU net of the given architecture on `x -> F~_m(x)` over
/// `[-R, R]^{m+1}` and returns the zero-at-zero TCN with its fit report.
pub fn fit_tcn(
    map: &dyn IoMap,
    m: usize,
    r: f64,
    arch: Architecture,
    spec: &TrainSpec,
    seed: u64,
) -> Result<(TcnModel, FitReport)> {
    spec.validate()?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("R", format!("must be positive, got {r}")));
    }
    if arch.depth == 0 || (arch.depth > 1 && arch.width == 0) {
        return Err(Error::invalid("arch", "depth must be >= 1 and hidden width >= 1"));
    }
    let shape = Shape::new(m + 1, arch);
    let xs = windows(m, r, spec.train_samples, true, seed, TAG_TRAIN);
    let ys = targets(map, &xs)?;
    let hx = windows(m, r, spec.holdout_samples, false, seed, TAG_HOLDOUT);
    let hy = targets(map, &hx)?;
    let problem = Problem { shape: &shape, xs: &xs, ys: &ys };

    let runs = (0..spec.restarts)
        .into_par_iter()
        .map(|k| -> Result<(f64, Vec<f64>, usize)> {
            let mut g = rng::tagged(seed, TAG_INIT, k as u64);
            let mut theta = shape.init(&mut g);
            problem.adam(&mut theta, spec)?;
            let lm = problem.levenberg_marquardt(&mut theta, spec.lm_iterations);
            let net = shape.to_net(&theta)?;
            Ok((sup_and_mse(&net, &xs, &ys).0, theta, lm))
        })
        .collect::<Result<Vec<_>>>()?;
    let (best_restart, (_, theta, lm_iterations_used)) = runs
        .into_iter()
        .enumerate()
        .fold(None::<(usize, (f64, Vec<f64>, usize))>, |best, (i, run)| match best {
            Some(b) if b.1 .0 <= run.0 => Some(b),
            _ => Some((i, run)),
        })
        .expect("at least one restart");

    let mut net = shape.to_net(&theta)?;
    let zero_shift = net.center_at_zero();
    let (train_sup_error, train_mse) = sup_and_mse(&net, &xs, &ys);
    let (holdout_sup_error, holdout_mse) = sup_and_mse(&net, &hx, &hy);
    let params = net.param_count();
    let model = TcnModel::new(m, net)?;
    Ok((
        model,
        FitReport {
            label: SAMPLED_LOWER_BOUND.to_string(),
            m,
            architecture: arch,
            params,
            train_sup_error,
            train_mse,
            holdout_sup_error,
            holdout_mse,
            zero_shift,
            best_restart,
            lm_iterations_used,
            train_samples: xs.len(),
            holdout_samples: hx.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iomap::check_time_invariance;
    use crate::seqcore::{InputBall, Sequence};

    #[test]
    fn backprop_matches_finite_differences() {
        let shape = Shape::new(3, Architecture { width: 5, depth: 3 });
        let mut g = rng::stream(1, 0);
        let theta = shape.init(&mut g);
        let x = [0.3, -0.7, 0.2];
        let mut ws = Workspace::new(&shape);
        ws.forward(&shape, &theta, &x);
        let mut grad = vec![0.0; theta.len()];
        ws.backward(&shape, &theta, 1.0, &mut grad);
        for k in 0..theta.len() {
            let h = 1e-6;
            let mut plus = theta.clone();
            plus[k] += h;
            let mut minus = theta.clone();
            minus[k] -= h;
            let fd = (ws.forward(&shape, &plus, &x) - ws.forward(&shape, &minus, &x)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6, "param {k}: {fd} vs {}", grad[k]);
        }
        let net = shape.to_net(&theta).unwrap();
        assert!((net.eval(&x).unwrap() - ws.forward(&shape, &theta, &x)).abs() < 1e-15);
    }

    #[test]
    fn window_sampler_includes_corners() {
        let w = windows(2, 1.5, 20, true, 0, TAG_TRAIN);
        assert_eq!(w.len(), 20);
        assert_eq!(w[0], vec![0.0; 3]);
        assert!(w[1..9].iter().all(|x| x.iter().all(|v| v.abs() == 1.5)));
    }

    #[test]
    fn fits_affine_target_exactly() {
        let target =
            TcnModel::new(2, ReluNet::new(vec![Layer::new(1, 3, vec![0.5, -1.0, 0.25], vec![0.0]).unwrap()]).unwrap())
                .unwrap();
        let spec = TrainSpec { adam_steps: 300, restarts: 1, train_samples: 200, ..TrainSpec::default() };
        let (model, report) = fit_tcn(&target, 2, 1.0, Architecture { width: 0, depth: 1 }, &spec, 0).unwrap();
        assert!(report.holdout_sup_error < 1e-10, "{report:?}");
        assert!(model.zero_at_zero);
        let ball = InputBall::new(1.0).unwrap();
        assert!(check_time_invariance(&model, ball, 100, 5, 10, 0).unwrap().passed);
        let u = Sequence::new(vec![0.1, 0.2, -0.3]).unwrap();
        assert!((model.eval(&u, 2).unwrap() - target.eval(&u, 2).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_specs() {
        let target = crate::iomap::test_maps::identity();
        let bad = TrainSpec { restarts: 0, ..TrainSpec::default() };
        assert!(fit_tcn(&target, 1, 1.0, Architecture { width: 2, depth: 2 }, &bad, 0).is_err());
        assert!(fit_tcn(&target, 1, 1.0, Architecture { width: 0, depth: 2 }, &TrainSpec::default(), 0).is_err());
    }
}
