//! Randomized tests of causality and time invariance.
//!
//! Violations are data: both checks return a report listing every failing
//! trial rather than an error.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::IoMap;
use crate::error::{Error, Result};
use crate::rng;
use crate::seqcore::{InputBall, Sequence};

const TAG_CAUSAL: u64 = 0x21;
const TAG_SHIFT: u64 = 0x22;
const MAX_LISTED: usize = 100;

/// Relative tolerance used when comparing outputs.
pub const CHECK_TOL: f64 = 1e-12;

/// Which side of the time-invariance case split a violation falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `t >= k`: `(F R^k u)_t` must equal `(F u)_{t-k}`.
    ShiftedSupport,
    /// `t < k`: `(F R^k u)_t` must be zero.
    BeforeSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub t: usize,
    pub shift: Option<usize>,
    pub branch: Option<Branch>,
    pub expected: f64,
    pub got: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub trials: usize,
    pub seed: u64,
    pub passed: bool,
    pub violation_count: usize,
    pub shifted_support_violations: usize,
    pub before_support_violations: usize,
    /// The first violations found (capped).
    pub violations: Vec<Violation>,
}

impl CheckReport {
    fn from_violations(check: &str, trials: usize, seed: u64, all: Vec<Violation>) -> Self {
        let count_branch = |b: Branch| all.iter().filter(|v| v.branch == Some(b)).count();
        Self {
            check: check.to_string(),
            trials,
            seed,
            passed: all.is_empty(),
            violation_count: all.len(),
            shifted_support_violations: count_branch(Branch::ShiftedSupport),
            before_support_violations: count_branch(Branch::BeforeSupport),
            violations: all.into_iter().take(MAX_LISTED).collect(),
        }
    }
}

fn differs(a: f64, b: f64) -> bool {
    (a - b).abs() > CHECK_TOL * (1.0 + a.abs().max(b.abs()))
}

fn uniform_input(g: &mut rng::Rng, r: f64, len: usize) -> Vec<f64> {
    (0..len).map(|_| g.gen_range(-r..=r)).collect()
}

/// Draws `u`, `v` agreeing on a random prefix `[0, t]` and differing after it,
/// and asserts `(F u)_t = (F v)_t`.
pub fn check_causality(
    map: &dyn IoMap,
    ball: InputBall,
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon", "need a horizon of at least 1"));
    }
    let r = ball.radius();
    let found = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Option<Violation>> {
            let mut g = rng::tagged(seed, TAG_CAUSAL, trial as u64);
            let t = g.gen_range(0..horizon);
            let u = uniform_input(&mut g, r, horizon + 1);
            let mut v = u.clone();
            for s in (t + 1)..=horizon {
                // keep drawing until the tail really differs
                let mut x = g.gen_range(-r..=r);
                while x == u[s] {
                    x = g.gen_range(-r..=r);
                }
                v[s] = x;
            }
            let yu = map.eval(&Sequence::new(u)?, t)?;
            let yv = map.eval(&Sequence::new(v)?, t)?;
            Ok(differs(yu, yv).then_some(Violation { trial, t, shift: None, branch: None, expected: yu, got: yv }))
        })
        .collect::<Result<Vec<_>>>()?;
    let all = found.into_iter().flatten().collect();
    Ok(CheckReport::from_violations("causality", trials, seed, all))
}

/// Draws random `u` and shifts `k in [0, max_shift]` and checks
/// `(F R^k u)_t = (F u)_{t-k}` for `t >= k` and `= 0` for `t < k`, at every
/// `t` of the shifted horizon.
pub fn check_time_invariance(
    map: &dyn IoMap,
    ball: InputBall,
    trials: usize,
    max_shift: usize,
    horizon: usize,
    seed: u64,
) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    let r = ball.radius();
    let found = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<Violation>> {
            let mut g = rng::tagged(seed, TAG_SHIFT, trial as u64);
            let k = g.gen_range(0..=max_shift);
            let u = Sequence::new(uniform_input(&mut g, r, horizon + 1))?;
            let shifted = u.right_shift(k);
            let base = map.eval_all(&u, horizon)?;
            let moved = map.eval_all(&shifted, horizon + k)?;
            let mut out = Vec::new();
            for (t, &got) in moved.iter().enumerate() {
                let (expected, branch) =
                    if t >= k { (base[t - k], Branch::ShiftedSupport) } else { (0.0, Branch::BeforeSupport) };
                if differs(expected, got) {
                    out.push(Violation { trial, t, shift: Some(k), branch: Some(branch), expected, got });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let all = found.into_iter().flatten().collect();
    Ok(CheckReport::from_violations("time_invariance", trials, seed, all))
}
