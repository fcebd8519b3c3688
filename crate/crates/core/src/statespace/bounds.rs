//! Bound calculators: the trajectory-deviation estimate, the memory and
//! modulus bounds for incrementally stable systems, their closed form under an
//! exponential certificate, and the invariant ball.

use nalgebra::DVector;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beta::BetaFunction;
use super::{State, StateSpaceSystem};
use crate::error::{Error, Result};
use crate::rng;
use crate::seqcore::Sequence;
use crate::stability::DemidovichCertificate;

const TAG_BALL: u64 = 0x51;

/// Both sides of the trajectory-deviation estimate
/// `|phi^u_{0,t}(xi) - phi^u~_{0,t}(xi)| <= sum_s beta(|f(x~_s,u_s) - f(x~_s,u~_s)|, t-s-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop2Check {
    pub lhs: f64,
    pub rhs: f64,
}

impl Prop2Check {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel_tol) + rel_tol
    }
}

pub fn prop2_check(
    sys: &StateSpaceSystem,
    beta: &BetaFunction,
    u: &Sequence,
    u_tilde: &Sequence,
    xi: &State,
    t: usize,
) -> Result<Prop2Check> {
    let x = sys.flow(xi, u, 0, t)?;
    let tilde = sys.trajectory(xi, u_tilde, t)?;
    let lhs = (&x - &tilde[t]).norm();
    let rhs = (0..t)
        .map(|s| {
            let kick = (sys.step(&tilde[s], u.at(s)) - sys.step(&tilde[s], u_tilde.at(s))).norm();
            beta.eval(kick, t - s - 1)
        })
        .sum();
    Ok(Prop2Check { lhs, rhs })
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
    }
    Ok(())
}

/// `min { m : sum_{k >= m} beta(diam_S, k) < eps / L_g }`.
pub fn thm3_memory_bound(beta: &BetaFunction, diam_s: f64, l_g: f64, eps: f64, m_max: usize) -> Result<usize> {
    check_eps(eps)?;
    if !(diam_s >= 0.0 && l_g >= 0.0) {
        return Err(Error::invalid("diam_s", "diameter and L_g must be nonnegative"));
    }
    if l_g == 0.0 {
        return Ok(0);
    }
    if !beta.is_summable() {
        return Err(Error::NotResolved("beta is not summable".into()));
    }
    let level = eps / l_g;
    (0..=m_max)
        .find(|&m| beta.tail_sum(diam_s, m).is_some_and(|tail| tail < level))
        .ok_or_else(|| Error::NotResolved(format!("tail sum stays above {level:e} up to m = {m_max}")))
}

/// `L_g * sum_{s=0}^{t-1} beta(L_f delta, s)`.
pub fn thm3_modulus_bound(beta: &BetaFunction, l_f: f64, l_g: f64, delta: f64, t: usize) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::invalid("delta", format!("must be nonnegative, got {delta}")));
    }
    Ok(l_g * (0..t).map(|s| beta.eval(l_f * delta, s)).sum::<f64>())
}

/// Closed-form memory and modulus bounds under an exponential certificate
/// with zero initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thm4Bounds {
    /// `2 log(2 kappa L_f L_g R / ((1 - sqrt mu)^2 eps)) / log(1 / mu)`.
    pub m_star_bound: f64,
    /// `max(0, ceil(m_star_bound))`.
    pub m_star_ceil: u64,
    /// `sqrt(kappa) L_f L_g delta / (1 - sqrt mu)`.
    pub omega_bound: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn thm4_bounds(kappa: f64, mu: f64, l_f: f64, l_g: f64, r: f64, eps: f64, delta: f64) -> Result<Thm4Bounds> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidCertificate(format!("mu must lie in (0,1), got {mu}")));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidCertificate(format!("kappa must be >= 1, got {kappa}")));
    }
    check_eps(eps)?;
    if !(delta >= 0.0) {
        return Err(Error::invalid("delta", format!("must be nonnegative, got {delta}")));
    }
    let gap = 1.0 - mu.sqrt();
    let m_star_bound = 2.0 * (2.0 * kappa * l_f * l_g * r / (gap * gap * eps)).ln() / (1.0 / mu).ln();
    let m_star_ceil = if m_star_bound <= 0.0 { 0 } else { m_star_bound.ceil() as u64 };
    let omega_bound = kappa.sqrt() * l_f * l_g * delta / gap;
    Ok(Thm4Bounds { m_star_bound, m_star_ceil, omega_bound })
}

/// Ball centred at the origin that contains every reachable state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantBall {
    pub radius: f64,
}

impl InvariantBall {
    pub fn diam(&self) -> f64 {
        2.0 * self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallCheck {
    pub ball: InvariantBall,
    /// Largest state norm seen over the simulated trajectories.
    pub max_state_norm: f64,
    pub trajectories: usize,
    pub horizon: usize,
}

/// `radius = sqrt(kappa) (|xi| + L_f R / (1 - sqrt mu))`, checked by simulating
/// `trajectories` inputs in `M(R)` (constants `+-R` first, then uniform draws).
pub fn compute_invariant_ball(
    sys: &StateSpaceSystem,
    cert: &DemidovichCertificate,
    r: f64,
    trajectories: usize,
    horizon: usize,
    seed: u64,
) -> Result<BallCheck> {
    if !(r >= 0.0) {
        return Err(Error::invalid("R", format!("must be nonnegative, got {r}")));
    }
    let n = sys.dim();
    let origin = DVector::zeros(n);
    if sys.step(&origin, 0.0).norm() > 1e-12 {
        return Err(Error::invalid("sys", "invariant ball needs f(0, 0) = 0"));
    }
    let radius = cert.kappa.sqrt() * (sys.xi().norm() + sys.lipschitz().l_f * r / (1.0 - cert.mu.sqrt()));
    let ball = InvariantBall { radius };

    let norms = (0..trajectories)
        .into_par_iter()
        .map(|i| -> Result<(f64, usize)> {
            let values: Vec<f64> = match i {
                0 => vec![r; horizon],
                1 => vec![-r; horizon],
                _ => {
                    let mut g = rng::tagged(seed, TAG_BALL, i as u64);
                    (0..horizon).map(|_| if r > 0.0 { g.gen_range(-r..=r) } else { 0.0 }).collect()
                }
            };
            let u = Sequence::new(values)?;
            let traj = sys.trajectory(sys.xi(), &u, horizon)?;
            Ok(traj.iter().enumerate().map(|(t, x)| (x.norm(), t)).fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a }))
        })
        .collect::<Result<Vec<_>>>()?;
    let (max_state_norm, t) = norms.into_iter().fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    if max_state_norm > radius * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::ContainmentViolated { norm: max_state_norm, radius, t });
    }
    Ok(BallCheck { ball, max_state_norm, trajectories, horizon })
}
