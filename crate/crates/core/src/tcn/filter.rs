//! ReLU of an exponentially decaying linear filter,
//! `(F u)_t = ReLU(sum_s h_s u_{t-s})` with `|h_s| <= C lambda^s`, and its
//! truncation to a TCN.

use serde::{Deserialize, Serialize};

use super::{Layer, ReluNet, TcnModel};
use crate::error::{Error, Result};
use crate::iomap::IoMap;
use crate::seqcore::Sequence;

/// Coefficient prefix `h_0, ..., h_{len-1}`; terms past the prefix are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFilter {
    pub c: f64,
    pub lambda: f64,
    pub coefficients: Vec<f64>,
}

fn check_params(c: f64, lambda: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("C", format!("must be positive, got {c}")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid("lambda", format!("must lie in (0,1), got {lambda}")));
    }
    Ok(())
}

impl ExpFilter {
    /// `h_s = C lambda^s` for `s < len`.
    pub fn geometric(c: f64, lambda: f64, len: usize) -> Result<Self> {
        check_params(c, lambda)?;
        let coefficients = (0..len).map(|s| c * lambda.powi(s as i32)).collect();
        Ok(Self { c, lambda, coefficients })
    }

    /// Custom coefficients, each checked against `C lambda^s`.
    pub fn custom(c: f64, lambda: f64, coefficients: Vec<f64>) -> Result<Self> {
        check_params(c, lambda)?;
        for (index, &value) in coefficients.iter().enumerate() {
            let bound = c * lambda.powi(index as i32);
            if !value.is_finite() || value.abs() > bound * (1.0 + 1e-12) {
                return Err(Error::DecayViolated { index, value, bound });
            }
        }
        Ok(Self { c, lambda, coefficients })
    }

    /// `sum_s h_s u_{t-s}` over the stored prefix.
    pub fn preactivation(&self, u: &Sequence, t: usize) -> f64 {
        self.coefficients.iter().take(t + 1).enumerate().map(|(s, h)| h * u.at(t - s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluFilterMap {
    pub filter: ExpFilter,
}

impl IoMap for ReluFilterMap {
    fn eval(&self, u: &Sequence, t: usize) -> Result<f64> {
        Ok(self.filter.preactivation(u, t).max(0.0))
    }

    fn eval_all(&self, u: &Sequence, horizon: usize) -> Result<Vec<f64>> {
        Ok((0..=horizon).map(|t| self.filter.preactivation(u, t).max(0.0)).collect())
    }

    fn describe(&self) -> String {
        format!(
            "relu_filter(C={}, lambda={}, len={})",
            self.filter.c,
            self.filter.lambda,
            self.filter.coefficients.len()
        )
    }
}

/// The map with default coefficients `h_s = C lambda^s`, `s = 0..=horizon`.
pub fn relu_filter_map(c: f64, lambda: f64, horizon: usize) -> Result<ReluFilterMap> {
    Ok(ReluFilterMap { filter: ExpFilter::geometric(c, lambda, horizon + 1)? })
}

/// `R C lambda^{m+1} / (1 - lambda)`: the sup error over `M(R)` from
/// dropping every coefficient past `h_m` (ReLU is 1-Lipschitz).
pub fn truncation_bound(filter: &ExpFilter, m: usize, r: f64) -> f64 {
    r * filter.c * filter.lambda.powi(m as i32 + 1) / (1.0 - filter.lambda)
}

/// TCN `ReLU(h_0 u_t + ... + h_m u_{t-m})`, together with
/// [`truncation_bound`] at `R = 1` (scale linearly for other radii).
pub fn truncate_filter(filter: &ExpFilter, m: usize) -> Result<(TcnModel, f64)> {
    // the window runs oldest first, so position j carries h_{m-j}
    let weights = (0..=m).map(|j| filter.coefficients.get(m - j).copied().unwrap_or(0.0)).collect();
    let net = ReluNet::new(vec![Layer::new(1, m + 1, weights, vec![0.0])?, Layer::new(1, 1, vec![1.0], vec![0.0])?])?;
    Ok((TcnModel::new(m, net)?, truncation_bound(filter, m, 1.0)))
}
