//! Context length, width and depth budget for approximating an AFM map to
//! accuracy `eps` with a TCN, split by a parameter `gamma in (0, 1)` between
//! the memory error (`gamma eps`) and the approximation error of the net
//! (`(1 - gamma) eps`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Plan {
    pub eps: f64,
    pub gamma: f64,
    pub m: usize,
    /// Always `m + 2`.
    pub width: usize,
    /// `(c R / delta)^{m+2}` with `delta = inv_mod(m, (1 - gamma) eps)`;
    /// `None` when it overflows or `delta = 0`.
    pub depth_bound: Option<f64>,
    pub log10_depth_bound: f64,
    pub delta: f64,
    /// The unspecified constant in the depth bound (not derivable; a knob).
    pub depth_constant: f64,
}

/// Plans for a single `gamma`. `m_star(e)` is the memory horizon at level `e`
/// and `inv_mod(m, e)` the inverse modulus of the window functional.
pub fn theorem1_plan(
    eps: f64,
    gamma: f64,
    r: f64,
    m_star: &dyn Fn(f64) -> Result<usize>,
    inv_mod: &dyn Fn(usize, f64) -> Result<f64>,
    depth_constant: f64,
) -> Result<Theorem1Plan> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("gamma", format!("must lie in (0,1), got {gamma}")));
    }
    if !(r > 0.0 && depth_constant > 0.0) {
        return Err(Error::invalid("R", "radius and depth constant must be positive"));
    }
    let m = m_star(gamma * eps)?;
    let delta = inv_mod(m, (1.0 - gamma) * eps)?;
    if !(delta >= 0.0) {
        return Err(Error::invalid("delta", format!("inverse modulus must be nonnegative, got {delta}")));
    }
    let exponent = (m + 2) as f64;
    let log10_depth_bound = if delta > 0.0 { exponent * (depth_constant * r / delta).log10() } else { f64::INFINITY };
    let depth_bound = Some(10f64.powf(log10_depth_bound)).filter(|d| d.is_finite());
    Ok(Theorem1Plan { eps, gamma, m, width: m + 2, depth_bound, log10_depth_bound, delta, depth_constant })
}

/// One plan per `gamma` in the grid: smaller `gamma` lengthens the context,
/// larger `gamma` deepens the net.
pub fn tradeoff_table(
    eps: f64,
    gammas: &[f64],
    r: f64,
    m_star: &dyn Fn(f64) -> Result<usize>,
    inv_mod: &dyn Fn(usize, f64) -> Result<f64>,
    depth_constant: f64,
) -> Result<Vec<Theorem1Plan>> {
    gammas.iter().map(|&g| theorem1_plan(eps, g, r, m_star, inv_mod, depth_constant)).collect()
}
