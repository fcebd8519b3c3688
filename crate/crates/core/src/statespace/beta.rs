//! Incremental-stability functions `beta(C, t)`.

use nalgebra::DVector;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Domain, StateSpaceSystem};
use crate::error::{Error, Result};
use crate::rng;
use crate::seqcore::{InputBall, Sequence};

const TAG_BETA: u64 = 0x41;
const BETA_LEVELS: usize = 8;

/// A class-KL bound `|phi_{s,t}(xi) - phi_{s,t}(xi')| <= beta(|xi - xi'|, t - s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum BetaFunction {
    /// `beta(C, t) = scale * C * rate^t`; from a Demidovich certificate,
    /// `scale = sqrt(kappa(P))` and `rate = sqrt(mu)`.
    Exponential {
        scale: f64,
        rate: f64,
    },
    /// `beta(C, t) = C * t^-alpha` for `t >= 1`, with `beta(C, 0) = C`.
    Power {
        alpha: f64,
    },
    Tabulated(BetaTable),
}

/// Sampled `beta^(C_k, tau)` on a grid of separations, with a geometric
/// majorant of rate `tail_rate` past the last tabulated lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaTable {
    pub c_grid: Vec<f64>,
    /// `values[k][tau]` for separation `c_grid[k]`.
    pub values: Vec<Vec<f64>>,
    pub tail_rate: f64,
    pub label: String,
}

impl BetaTable {
    fn last_lag(&self) -> usize {
        self.values.first().map_or(0, |v| v.len().saturating_sub(1))
    }

    fn at_lag(&self, c: f64, tau: usize) -> f64 {
        if c <= 0.0 || self.c_grid.is_empty() {
            return 0.0;
        }
        let col = |k: usize| self.values[k][tau];
        // piecewise linear in C through (0, 0); proportional past the last level
        let mut prev = (0.0, 0.0);
        for (k, &ck) in self.c_grid.iter().enumerate() {
            if c <= ck {
                let frac = (c - prev.0) / (ck - prev.0);
                return prev.1 + frac * (col(k) - prev.1);
            }
            prev = (ck, col(k));
        }
        prev.1 * c / prev.0
    }

    fn eval(&self, c: f64, t: usize) -> f64 {
        let last = self.last_lag();
        if t <= last {
            self.at_lag(c, t)
        } else {
            self.at_lag(c, last) * self.tail_rate.powi((t - last) as i32)
        }
    }
}

impl BetaFunction {
    pub fn exponential(scale: f64, rate: f64) -> Result<Self> {
        if !(scale >= 1.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", format!("must be >= 1, got {scale}")));
        }
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::invalid("rate", format!("must lie in (0,1), got {rate}")));
        }
        Ok(BetaFunction::Exponential { scale, rate })
    }

    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
        }
        Ok(BetaFunction::Power { alpha })
    }

    pub fn eval(&self, c: f64, t: usize) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        match self {
            BetaFunction::Exponential { scale, rate } => scale * c * rate.powi(t as i32),
            BetaFunction::Power { alpha } => {
                if t == 0 {
                    c
                } else {
                    c * (t as f64).powf(-alpha)
                }
            }
            BetaFunction::Tabulated(table) => table.eval(c, t),
        }
    }

    pub fn is_summable(&self) -> bool {
        match self {
            BetaFunction::Exponential { rate, .. } => *rate < 1.0,
            BetaFunction::Power { alpha } => *alpha > 1.0,
            BetaFunction::Tabulated(t) => t.tail_rate < 1.0,
        }
    }

    /// Upper bound on `sum_{k >= m} beta(c, k)`; `None` when not summable.
    ///
    /// Exact for the exponential form. The power form uses the integral bound
    /// `sum_{k >= m} k^-alpha <= m^-alpha + m^{1-alpha} / (alpha - 1)`. The
    /// tabulated form sums the table and adds the geometric remainder.
    pub fn tail_sum(&self, c: f64, m: usize) -> Option<f64> {
        if !self.is_summable() {
            return None;
        }
        if c <= 0.0 {
            return Some(0.0);
        }
        Some(match self {
            BetaFunction::Exponential { scale, rate } => scale * c * rate.powi(m as i32) / (1.0 - rate),
            BetaFunction::Power { alpha } => {
                let from_one = |k: f64| k.powf(-alpha) + k.powf(1.0 - alpha) / (alpha - 1.0);
                if m == 0 {
                    c * (1.0 + from_one(1.0))
                } else {
                    c * from_one(m as f64)
                }
            }
            BetaFunction::Tabulated(table) => {
                let last = table.last_lag();
                let r = table.tail_rate;
                if m <= last {
                    let head: f64 = (m..=last).map(|k| table.eval(c, k)).sum();
                    head + table.eval(c, last) * r / (1.0 - r)
                } else {
                    table.eval(c, m) / (1.0 - r)
                }
            }
        })
    }
}

fn random_unit(g: &mut rng::Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| g.gen_range(-1.0..=1.0));
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            return v / norm;
        }
    }
}

/// Tabulates `beta^(C, tau)` as the max over sampled `(u, xi, xi')` with
/// `|xi - xi'| = C` of `|phi^u_{0,tau}(xi) - phi^u_{0,tau}(xi')|`, on eight
/// separation levels spanning the diameter of the declared domain (radius 1
/// when the domain is all of `R^n`).
pub fn estimate_beta(
    sys: &StateSpaceSystem,
    ball: InputBall,
    t_max: usize,
    pairs: usize,
    seed: u64,
) -> Result<BetaFunction> {
    if pairs == 0 {
        return Err(Error::invalid("pairs", "need at least one pair"));
    }
    let n = sys.dim();
    if n == 0 {
        return Err(Error::invalid("sys", "zero-dimensional state"));
    }
    let radius = match sys.domain() {
        Domain::Ball { radius } => radius,
        Domain::Everywhere => 1.0,
    };
    let c_grid: Vec<f64> = (1..=BETA_LEVELS).map(|k| 2.0 * radius * k as f64 / BETA_LEVELS as f64).collect();
    let r = ball.radius();

    let values = c_grid
        .iter()
        .enumerate()
        .map(|(k, &c)| -> Result<Vec<f64>> {
            let runs = (0..pairs)
                .into_par_iter()
                .map(|p| -> Result<Vec<f64>> {
                    let mut g = rng::tagged(seed, TAG_BETA, ((k as u64) << 32) | p as u64);
                    let dir = random_unit(&mut g, n);
                    // keep both endpoints inside the domain ball
                    let room = (radius - c / 2.0).max(0.0);
                    let center = random_unit(&mut g, n) * (room * g.gen_range(0.0..=1.0f64));
                    let xi = &center - &dir * (c / 2.0);
                    let xi2 = &center + &dir * (c / 2.0);
                    let u = Sequence::new((0..t_max).map(|_| g.gen_range(-r..=r)).collect())?;
                    let a = sys.trajectory(&xi, &u, t_max)?;
                    let b = sys.trajectory(&xi2, &u, t_max)?;
                    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            let mut best = vec![0.0_f64; t_max + 1];
            for run in runs {
                for (b, v) in best.iter_mut().zip(run) {
                    *b = b.max(v);
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;

    // declared decay past the table: the worst one-step ratio over the last half
    let start = (t_max / 2).max(1);
    let tail_rate = values
        .iter()
        .flat_map(|row| {
            (start..=t_max).filter(move |&tau| row[tau - 1] > 1e-300).map(move |tau| row[tau] / row[tau - 1])
        })
        .fold(0.0_f64, f64::max);

    Ok(BetaFunction::Tabulated(BetaTable {
        c_grid,
        values,
        tail_rate,
        label: crate::iomap::SAMPLED_LOWER_BOUND.to_string(),
    }))
}
