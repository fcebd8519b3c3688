//! Sampled estimation of the memory horizon `m*_F(eps)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{InputFamily, SamplerSpec};
use super::{IoMap, SAMPLED_LOWER_BOUND};
use crate::error::{Error, Result};
use crate::seqcore::{InputBall, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// The worst deviation was attained by a constant or sign input.
    Extremal,
    /// The worst deviation came from an i.i.d. uniform draw.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryWitness {
    pub family: InputFamily,
    pub t: usize,
    pub input: Sequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEstimate {
    pub epsilon: f64,
    pub m_hat: usize,
    /// Worst sampled `|(F u)_t - (F W_{t,m} u)_t|` at `m = m_hat`.
    pub worst_deviation: f64,
    pub method: EstimateMethod,
    pub witness: MemoryWitness,
    /// Worst deviation for every `m` tried, `0..=m_hat`.
    pub deviations: Vec<f64>,
    pub label: String,
    pub seed: u64,
    pub samples: usize,
}

/// Worst windowing deviation at context length `m` over one input, with the
/// time index attaining it.
fn worst_for_input(map: &dyn IoMap, u: &Sequence, outputs: &[f64], m: usize) -> Result<(f64, usize)> {
    let mut best = (0.0_f64, 0_usize);
    // for t <= m the window keeps the whole prefix
    for (t, &y) in outputs.iter().enumerate().skip(m + 1) {
        let d = (y - map.eval(&u.window(t, m), t)?).abs();
        if d > best.0 {
            best = (d, t);
        }
    }
    Ok(best)
}

/// Smallest `m <= t_max` whose sampled worst deviation
/// `sup_{u,t} |(F u)_t - (F W_{t,m} u)_t|` is at most `eps`.
///
/// Inputs come from `sampler`; ties between inputs resolve to the earliest one
/// in sampler order, so the constant `+R` input is the preferred witness.
pub fn estimate_memory_horizon(
    map: &dyn IoMap,
    eps: f64,
    ball: InputBall,
    t_max: usize,
    sampler: &SamplerSpec,
    seed: u64,
) -> Result<MemoryEstimate> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
    }
    let inputs = sampler.draw(ball, seed);
    if inputs.is_empty() {
        return Err(Error::invalid("sampler", "draws no inputs"));
    }
    let outputs = inputs.par_iter().map(|(_, u)| map.eval_all(u, sampler.horizon)).collect::<Result<Vec<_>>>()?;

    let mut deviations = Vec::new();
    for m in 0..=t_max {
        let per_input = inputs
            .par_iter()
            .zip(outputs.par_iter())
            .map(|((_, u), y)| worst_for_input(map, u, y, m))
            .collect::<Result<Vec<_>>>()?;
        let (idx, &(worst, t)) = per_input
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &(f64, usize))>, (i, cur)| match acc {
                Some((_, best)) if best.0 >= cur.0 => acc,
                _ => Some((i, cur)),
            })
            .expect("non-empty");
        deviations.push(worst);
        if worst <= eps {
            let (family, input) = inputs[idx].clone();
            return Ok(MemoryEstimate {
                epsilon: eps,
                m_hat: m,
                worst_deviation: worst,
                method: if family.is_extremal() { EstimateMethod::Extremal } else { EstimateMethod::Sampled },
                witness: MemoryWitness { family, t, input },
                deviations,
                label: SAMPLED_LOWER_BOUND.to_string(),
                seed,
                samples: inputs.len(),
            });
        }
    }
    Err(Error::NotResolved(format!(
        "windowing deviation {:.3e} still exceeds eps = {eps} at m = t_max = {t_max}",
        deviations.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Sampled worst windowing deviation at a fixed context length `m`, with the
/// input and time attaining it.
pub fn memory_deviation(
    map: &dyn IoMap,
    m: usize,
    ball: InputBall,
    sampler: &SamplerSpec,
    seed: u64,
) -> Result<(f64, MemoryWitness)> {
    let inputs = sampler.draw(ball, seed);
    if inputs.is_empty() {
        return Err(Error::invalid("sampler", "draws no inputs"));
    }
    let per_input = inputs
        .par_iter()
        .map(|(_, u)| {
            let y = map.eval_all(u, sampler.horizon)?;
            worst_for_input(map, u, &y, m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, cur) in per_input.iter().enumerate() {
        if cur.0 > per_input[best].0 {
            best = i;
        }
    }
    let (family, input) = inputs[best].clone();
    Ok((per_input[best].0, MemoryWitness { family, t: per_input[best].1, input }))
}
