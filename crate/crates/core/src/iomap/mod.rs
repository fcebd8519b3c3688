//! The i/o map abstraction and its sampled metrology.
//!
//! An [`IoMap`] evaluates `(F u)_t` for a finite-horizon input. Causality and
//! time invariance are declared, and can be tested with [`check_causality`] and
//! [`check_time_invariance`]. The estimators in [`memory`] and [`modulus`]
//! approximate suprema over infinite input sets by sampling; their results are
//! lower bounds of the true quantities and their reports say so.

pub mod checks;
pub mod memory;
pub mod modulus;
pub mod sampler;
pub mod weighting;

use std::sync::Arc;

use crate::error::Result;
use crate::seqcore::Sequence;

pub use checks::{check_causality, check_time_invariance, Branch, CheckReport, Violation};
pub use memory::{estimate_memory_horizon, memory_deviation, MemoryEstimate, MemoryWitness};
pub use modulus::{
    afm_to_fading_bound, estimate_fading_modulus, estimate_modulus, fading_to_afm_bound, inverse_modulus, ModulusKind,
    ModulusReport, ModulusTable, PairWitness,
};
pub use sampler::{InputFamily, SamplerSpec};
pub use weighting::WeightingSequence;

/// Label attached to every sampled supremum.
pub const SAMPLED_LOWER_BOUND: &str = "sampled lower bound";

/// A (nonlinear) operator on sequences, evaluated pointwise in time.
///
/// Implementations must be pure functions of `(u, t)`; estimators evaluate many
/// pairs concurrently.
pub trait IoMap: Send + Sync {
    /// `(F u)_t`.
    fn eval(&self, u: &Sequence, t: usize) -> Result<f64>;

    /// `((F u)_0, ..., (F u)_horizon)`. Recurrent maps override this with a
    /// single pass over the trajectory.
    fn eval_all(&self, u: &Sequence, horizon: usize) -> Result<Vec<f64>> {
        (0..=horizon).map(|t| self.eval(u, t)).collect()
    }

    fn declared_causal(&self) -> bool {
        true
    }

    fn declared_time_invariant(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        "io map".to_string()
    }
}

impl<T: IoMap + ?Sized> IoMap for &T {
    fn eval(&self, u: &Sequence, t: usize) -> Result<f64> {
        (**self).eval(u, t)
    }
    fn eval_all(&self, u: &Sequence, horizon: usize) -> Result<Vec<f64>> {
        (**self).eval_all(u, horizon)
    }
    fn declared_causal(&self) -> bool {
        (**self).declared_causal()
    }
    fn declared_time_invariant(&self) -> bool {
        (**self).declared_time_invariant()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: IoMap + ?Sized> IoMap for Box<T> {
    fn eval(&self, u: &Sequence, t: usize) -> Result<f64> {
        (**self).eval(u, t)
    }
    fn eval_all(&self, u: &Sequence, horizon: usize) -> Result<Vec<f64>> {
        (**self).eval_all(u, horizon)
    }
    fn declared_causal(&self) -> bool {
        (**self).declared_causal()
    }
    fn declared_time_invariant(&self) -> bool {
        (**self).declared_time_invariant()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: IoMap + ?Sized> IoMap for Arc<T> {
    fn eval(&self, u: &Sequence, t: usize) -> Result<f64> {
        (**self).eval(u, t)
    }
    fn eval_all(&self, u: &Sequence, horizon: usize) -> Result<Vec<f64>> {
        (**self).eval_all(u, horizon)
    }
    fn declared_causal(&self) -> bool {
        (**self).declared_causal()
    }
    fn declared_time_invariant(&self) -> bool {
        (**self).declared_time_invariant()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// An i/o map backed by a closure.
pub struct FnMap<F> {
    name: String,
    f: F,
    causal: bool,
    time_invariant: bool,
}

impl<F> FnMap<F>
where
    F: Fn(&Sequence, usize) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f, causal: true, time_invariant: true }
    }

    pub fn declared(mut self, causal: bool, time_invariant: bool) -> Self {
        self.causal = causal;
        self.time_invariant = time_invariant;
        self
    }
}

impl<F> IoMap for FnMap<F>
where
    F: Fn(&Sequence, usize) -> f64 + Send + Sync,
{
    fn eval(&self, u: &Sequence, t: usize) -> Result<f64> {
        Ok((self.f)(u, t))
    }
    fn declared_causal(&self) -> bool {
        self.causal
    }
    fn declared_time_invariant(&self) -> bool {
        self.time_invariant
    }
    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// `F~_t(x) = (F u)_t` for any `u` agreeing with `x` on `[0, t]`, `t = len(x) - 1`.
pub fn finite_functional(map: &dyn IoMap, x: &[f64]) -> Result<f64> {
    let u = Sequence::embed_vector(x)?;
    map.eval(&u, x.len() - 1)
}

#[cfg(test)]
pub(crate) mod test_maps {
    use super::*;

    pub fn identity() -> impl IoMap {
        FnMap::new("identity", |u: &Sequence, t| u.at(t))
    }

    pub fn running_sum() -> impl IoMap {
        FnMap::new("running sum", |u: &Sequence, t| (0..=t).map(|s| u.at(s)).sum())
    }

    /// `y_t = x_t` with `x_{t+1} = 0.5 x_t + 0.5 u_t`, `x_0 = 0`, in closed form.
    pub fn half_linear() -> impl IoMap {
        FnMap::new("linear(0.5,0.5,1)", |u: &Sequence, t| (0..t).map(|s| 0.5f64.powi((t - s) as i32) * u.at(s)).sum())
    }
}
