//! Moduli of continuity: the forward modulus `omega_{t,F}` of the finite
//! functional, the `w`-weighted fading modulus `alpha_{w,F}`, their
//! conservative inverses, and the two conversions between approximately finite
//! memory and fading memory.

use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::weighting::WeightingSequence;
use super::{finite_functional, IoMap, SAMPLED_LOWER_BOUND};
use crate::error::{Error, Result};
use crate::rng;
use crate::seqcore::{InputBall, Sequence};

const TAG_MODULUS: u64 = 0x31;
const TAG_FADING: u64 = 0x32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusKind {
    /// `omega_{t,F}`: sup-norm perturbations of the window `[0, t]`.
    Forward,
    /// `alpha_{w,F}`: perturbations measured by `max_s w_{t-s} |u_s - v_s|`.
    Fading,
}

impl ModulusKind {
    fn column(self) -> &'static str {
        match self {
            ModulusKind::Forward => "omega",
            ModulusKind::Fading => "alpha",
        }
    }
}

/// Tabulated modulus `(delta, value)`, nondecreasing, always containing `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusTable {
    kind: ModulusKind,
    points: Vec<(f64, f64)>,
}

impl ModulusTable {
    /// Builds a table from grid points; `(0, 0)` is added when missing.
    pub fn new(kind: ModulusKind, mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|&(d, v)| !(d >= 0.0 && v >= 0.0 && d.is_finite() && v.is_finite())) {
            return Err(Error::invalid("table", "entries must be finite and nonnegative"));
        }
        if points.first().map(|p| p.0) != Some(0.0) {
            points.insert(0, (0.0, 0.0));
        }
        if points[0].1 != 0.0 {
            return Err(Error::invalid("table", "modulus at delta = 0 must be 0"));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid("table", "delta grid must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::invalid("table", "modulus must be nondecreasing in delta"));
            }
        }
        Ok(Self { kind, points })
    }

    pub fn kind(&self) -> ModulusKind {
        self.kind
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Tabulated value at an exact grid point.
    pub fn value_at(&self, delta: f64) -> Option<f64> {
        self.points.iter().find(|p| p.0 == delta).map(|p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("delta,{}\n", self.kind.column());
        for (d, v) in &self.points {
            let _ = writeln!(out, "{d},{v}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty modulus table".into()))?;
        let kind = match header {
            "delta,omega" => ModulusKind::Forward,
            "delta,alpha" => ModulusKind::Fading,
            other => return Err(Error::Parse(format!("unknown modulus header `{other}`"))),
        };
        let points = lines
            .enumerate()
            .map(|(i, line)| {
                let (d, v) =
                    line.split_once(',').ok_or_else(|| Error::Parse(format!("row {}: expected two columns", i + 1)))?;
                let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)));
                Ok((parse(d)?, parse(v)?))
            })
            .collect::<Result<Vec<_>>>()?;
        ModulusTable::new(kind, points)
    }
}

/// A perturbation pair attaining a sampled modulus value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub t: usize,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub gap: f64,
}

/// JSON report of a sampled modulus: `{quantity, grid, values, witnesses, seed, samples}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub quantity: String,
    pub kind: ModulusKind,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub witnesses: Vec<Option<PairWitness>>,
    pub seed: u64,
    pub samples: usize,
    pub label: String,
}

impl ModulusReport {
    pub fn table(&self) -> ModulusTable {
        ModulusTable::new(self.kind, self.grid.iter().copied().zip(self.values.iter().copied()).collect())
            .expect("estimators produce monotone tables")
    }
}

fn validate_grid(grid: &[f64], ball: InputBall) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("delta_grid", "empty grid"));
    }
    let two_r = 2.0 * ball.radius();
    if grid.iter().any(|&d| !(d > 0.0 && d <= two_r)) {
        return Err(Error::invalid("delta_grid", format!("entries must lie in (0, {two_r}]")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("delta_grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Running max over the grid: a pair admissible for `delta` is admissible for
/// every larger `delta`, so the sampled modulus is made monotone.
fn monotone_report(
    quantity: &str,
    kind: ModulusKind,
    grid: &[f64],
    raw: Vec<(f64, Option<PairWitness>)>,
    seed: u64,
    samples: usize,
) -> ModulusReport {
    let mut values = Vec::with_capacity(raw.len());
    let mut witnesses = Vec::with_capacity(raw.len());
    let mut best: (f64, Option<PairWitness>) = (0.0, None);
    for (v, w) in raw {
        if v > best.0 {
            best = (v, w);
        }
        values.push(best.0);
        witnesses.push(best.1.clone());
    }
    ModulusReport {
        quantity: quantity.to_string(),
        kind,
        grid: grid.to_vec(),
        values,
        witnesses,
        seed,
        samples,
        label: SAMPLED_LOWER_BOUND.to_string(),
    }
}

fn best_of(found: Vec<PairWitness>) -> (f64, Option<PairWitness>) {
    found.into_iter().fold((0.0, None), |acc, w| if w.gap > acc.0 { (w.gap, Some(w)) } else { acc })
}

/// Forward pairs for the sup-norm modulus at `delta`: three constant extremal
/// pairs, then alternately sign-pattern pairs and uniform pairs.
fn forward_pair(j: usize, delta: f64, r: f64, len: usize, g: &mut rng::Rng) -> (Vec<f64>, Vec<f64>) {
    let half = delta / 2.0;
    match j {
        0 => (vec![-half; len], vec![half; len]),
        1 => (vec![-r; len], vec![-r + delta; len]),
        2 => (vec![r - delta; len], vec![r; len]),
        _ if j % 2 == 1 => {
            let c = if r - half > 0.0 { g.gen_range(-(r - half)..=(r - half)) } else { 0.0 };
            let s: Vec<f64> = (0..len).map(|_| if g.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            (s.iter().map(|si| c - half * si).collect(), s.iter().map(|si| c + half * si).collect())
        }
        _ => {
            let x: Vec<f64> = (0..len).map(|_| g.gen_range(-r..=r)).collect();
            let xp = x.iter().map(|xi| (xi + delta * g.gen_range(-1.0..=1.0)).clamp(-r, r)).collect();
            (x, xp)
        }
    }
}

const EXTREMAL_PAIRS: usize = 3;

/// Sampled `omega^_{t,F}(delta)` over pairs `x, x'` in `[-R, R]^{t+1}` with
/// `|x - x'|_inf <= delta`. Three extremal pairs are always evaluated in
/// addition to `samples` random pairs.
pub fn estimate_modulus(
    map: &dyn IoMap,
    t: usize,
    delta_grid: &[f64],
    ball: InputBall,
    samples: usize,
    seed: u64,
) -> Result<ModulusReport> {
    validate_grid(delta_grid, ball)?;
    let r = ball.radius();
    let len = t + 1;
    let raw = delta_grid
        .iter()
        .enumerate()
        .map(|(i, &delta)| -> Result<(f64, Option<PairWitness>)> {
            let found = (0..EXTREMAL_PAIRS + samples)
                .into_par_iter()
                .map(|j| -> Result<PairWitness> {
                    let mut g = rng::tagged(seed, TAG_MODULUS, ((i as u64) << 32) | j as u64);
                    let (x, xp) = forward_pair(j, delta, r, len, &mut g);
                    let gap = (finite_functional(map, &x)? - finite_functional(map, &xp)?).abs();
                    Ok(PairWitness { t, x, x_prime: xp, gap })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(best_of(found))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(monotone_report(
        &format!("omega_t(delta), t = {t}"),
        ModulusKind::Forward,
        delta_grid,
        raw,
        seed,
        EXTREMAL_PAIRS + samples,
    ))
}

/// Conservative inverse: the largest grid `delta` with `omega(delta) <= eps`,
/// or 0 when only the origin qualifies.
pub fn inverse_modulus(table: &ModulusTable, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
    }
    Ok(table.points().iter().filter(|p| p.1 <= eps).map(|p| p.0).fold(0.0, f64::max))
}

/// Sampled `alpha^_{w,F}(delta)` over `(t, u, v)` with `t <= t_max` and
/// `max_{s <= t} w_{t-s} |u_s - v_s| <= delta`. Perturbations at lag `t - s`
/// are scaled by `1 / w_{t-s}` and clipped to `[-R, R]`.
pub fn estimate_fading_modulus(
    map: &dyn IoMap,
    w: &WeightingSequence,
    delta_grid: &[f64],
    ball: InputBall,
    t_max: usize,
    samples: usize,
    seed: u64,
) -> Result<ModulusReport> {
    validate_grid(delta_grid, ball)?;
    w.validate()?;
    if let Some(n) = w.prefix_len() {
        if t_max >= n {
            return Err(Error::invalid("t_max", format!("weighting prefix has only {n} terms")));
        }
    }
    let r = ball.radius();
    let weights: Vec<f64> = (0..=t_max).map(|k| w.at(k).expect("checked prefix")).collect();
    let raw = delta_grid
        .iter()
        .enumerate()
        .map(|(i, &delta)| -> Result<(f64, Option<PairWitness>)> {
            let found = (0..2 + samples)
                .into_par_iter()
                .map(|j| -> Result<PairWitness> {
                    let mut g = rng::tagged(seed, TAG_FADING, ((i as u64) << 32) | j as u64);
                    let t = if j < 2 { t_max } else { g.gen_range(0..=t_max) };
                    let lag_room = |s: usize| delta / weights[t - s];
                    let (u, v): (Vec<f64>, Vec<f64>) = match j {
                        0 => (0..=t)
                            .map(|s| {
                                let a = r.min(lag_room(s) / 2.0);
                                (-a, a)
                            })
                            .unzip(),
                        1 => (0..=t).map(|s| (-r, (-r + lag_room(s)).min(r))).unzip(),
                        _ if j % 2 == 1 => (0..=t)
                            .map(|s| {
                                let a = r.min(lag_room(s) / 2.0);
                                if g.gen::<bool>() {
                                    (-a, a)
                                } else {
                                    (a, -a)
                                }
                            })
                            .unzip(),
                        _ => (0..=t)
                            .map(|s| {
                                let us = g.gen_range(-r..=r);
                                let vs = (us + lag_room(s) * g.gen_range(-1.0..=1.0)).clamp(-r, r);
                                (us, vs)
                            })
                            .unzip(),
                    };
                    // `u_s + room` rounds to a few ulps of R, not of room
                    debug_assert!((0..=t).all(|s| {
                        weights[t - s] * ((u[s] - v[s]).abs() - 4.0 * f64::EPSILON * r) <= delta * (1.0 + 1e-12)
                    }));
                    let yu = map.eval(&Sequence::new(u.clone())?, t)?;
                    let yv = map.eval(&Sequence::new(v.clone())?, t)?;
                    Ok(PairWitness { t, x: u, x_prime: v, gap: (yu - yv).abs() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(best_of(found))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(monotone_report("alpha_w(delta)", ModulusKind::Fading, delta_grid, raw, seed, 2 + samples))
}

/// Lower bound on `alpha^{-1}_{w,F}(eps)` from the AFM data at `eps / 3`:
/// `w_{m*} * omega^{-1}_{m*,F}(eps / 3)`.
pub fn afm_to_fading_bound(m_star_third: usize, inv_mod_third: f64, w: &WeightingSequence, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
    }
    if !(inv_mod_third >= 0.0) {
        return Err(Error::invalid("inv_mod_third", "must be nonnegative"));
    }
    let wm = w.at(m_star_third).ok_or_else(|| Error::invalid("w", format!("weighting undefined at {m_star_third}")))?;
    Ok(wm * inv_mod_third)
}

/// Upper bound on `m*_F(eps; R)`: the smallest `m <= max_m` with
/// `w_m <= alpha^{-1}(eps) / R`.
pub fn fading_to_afm_bound(
    alpha_table: &ModulusTable,
    w: &WeightingSequence,
    ball: InputBall,
    eps: f64,
    max_m: usize,
) -> Result<usize> {
    let inv = inverse_modulus(alpha_table, eps)?;
    if inv <= 0.0 {
        return Err(Error::NotResolved(format!("sampled alpha^-1({eps}) is 0; no weight can fall below it")));
    }
    let level = inv / ball.radius();
    let limit = w.prefix_len().map_or(max_m, |n| max_m.min(n.saturating_sub(1)));
    (0..=limit)
        .find(|&m| w.at(m).is_some_and(|wm| wm <= level))
        .ok_or_else(|| Error::NotResolved(format!("no m <= {limit} has w_m <= {level:e}")))
}

#[cfg(test)]
mod tests {
    use super::super::test_maps::*;
    use super::*;

    fn ball() -> InputBall {
        InputBall::new(1.0).unwrap()
    }

    #[test]
    fn identity_modulus_is_delta() {
        let grid = [0.05, 0.1, 0.5, 1.0, 2.0];
        let rep = estimate_modulus(&identity(), 4, &grid, ball(), 16, 1).unwrap();
        for (d, v) in grid.iter().zip(&rep.values) {
            assert!((d - v).abs() < 1e-15, "{d} vs {v}");
        }
        assert_eq!(rep.label, SAMPLED_LOWER_BOUND);
        assert!(rep.witnesses.iter().all(Option::is_some));
    }

    #[test]
    fn linear_modulus_matches_coefficients() {
        let rep = estimate_modulus(&half_linear(), 20, &[0.1], ball(), 32, 2).unwrap();
        let exact = 0.1 * (1.0 - 2f64.powi(-20));
        assert!(rep.values[0] <= 0.1);
        assert!((rep.values[0] - exact).abs() < 1e-14);
    }

    #[test]
    fn lipschitz_map_below_l_delta() {
        let f = super::super::FnMap::new("3x", |u: &Sequence, t| 3.0 * u.at(t).sin());
        let grid = [0.01, 0.1, 0.3];
        let rep = estimate_modulus(&f, 3, &grid, ball(), 64, 9).unwrap();
        for (d, v) in grid.iter().zip(&rep.values) {
            assert!(*v <= 3.0 * d + 1e-15);
        }
    }

    #[test]
    fn more_samples_never_lower() {
        let grid = [0.1, 0.4];
        let f = super::super::FnMap::new("sq", |u: &Sequence, t| u.at(t) * u.at(t.saturating_sub(1)));
        let small = estimate_modulus(&f, 3, &grid, ball(), 8, 4).unwrap();
        let large = estimate_modulus(&f, 3, &grid, ball(), 64, 4).unwrap();
        for (a, b) in small.values.iter().zip(&large.values) {
            assert!(b >= a);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(estimate_modulus(&identity(), 2, &[0.2, 0.1], ball(), 4, 0).is_err());
        assert!(estimate_modulus(&identity(), 2, &[2.5], ball(), 4, 0).is_err());
        assert!(estimate_modulus(&identity(), 2, &[], ball(), 4, 0).is_err());
    }

    #[test]
    fn inverse_modulus_examples() {
        let table = ModulusTable::new(ModulusKind::Forward, vec![(0.1, 0.05), (0.2, 0.15)]).unwrap();
        assert_eq!(inverse_modulus(&table, 0.1).unwrap(), 0.1);
        assert_eq!(inverse_modulus(&table, 10.0).unwrap(), 0.2);
        assert_eq!(inverse_modulus(&table, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn inverse_then_forward_stays_below_eps() {
        let grid: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05).collect();
        let rep = estimate_modulus(&half_linear(), 10, &grid, ball(), 16, 3).unwrap();
        let table = rep.table();
        for eps in [0.01, 0.1, 0.33, 1.0] {
            let d = inverse_modulus(&table, eps).unwrap();
            if d > 0.0 {
                let again = estimate_modulus(&half_linear(), 10, &[d], ball(), 16, 3).unwrap();
                assert!(again.values[0] <= eps);
            }
        }
    }

    #[test]
    fn table_validation_and_csv() {
        assert!(ModulusTable::new(ModulusKind::Forward, vec![(0.1, 0.2), (0.2, 0.1)]).is_err());
        let t = ModulusTable::new(ModulusKind::Fading, vec![(0.1, 0.2), (0.3, 0.25)]).unwrap();
        assert_eq!(t.points()[0], (0.0, 0.0));
        assert_eq!(ModulusTable::from_csv(&t.to_csv()).unwrap(), t);
        assert!(ModulusTable::from_csv("d,x\n").is_err());
    }

    #[test]
    fn fading_modulus_identity_and_dominance() {
        let w = WeightingSequence::geometric(0.5).unwrap();
        let grid = [0.05, 0.2, 1.0];
        let fading = estimate_fading_modulus(&identity(), &w, &grid, ball(), 10, 16, 1).unwrap();
        for (d, v) in grid.iter().zip(&fading.values) {
            assert!((d - v).abs() < 1e-15);
        }
        // a sup-norm ball is inside the weighted one, so alpha^ >= omega^ on shared pairs
        let lin_a = estimate_fading_modulus(&half_linear(), &w, &grid, ball(), 10, 16, 1).unwrap();
        let lin_o = estimate_modulus(&half_linear(), 10, &grid, ball(), 16, 1).unwrap();
        for (a, o) in lin_a.values.iter().zip(&lin_o.values) {
            assert!(a >= o, "{a} < {o}");
        }
    }

    #[test]
    fn afm_to_fading_examples() {
        let one = WeightingSequence::geometric(0.999).unwrap();
        assert_eq!(afm_to_fading_bound(0, 0.5, &one, 0.1).unwrap(), 0.5);
        let w = WeightingSequence::geometric(0.9).unwrap();
        let d = afm_to_fading_bound(7, 0.01, &w, 0.1).unwrap();
        assert!((d - 0.004_782_969).abs() < 1e-9);
        assert_eq!(afm_to_fading_bound(3, 0.0, &w, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn fading_to_afm_examples() {
        let w = WeightingSequence::geometric(0.5).unwrap();
        let b = ball();
        let big = ModulusTable::new(ModulusKind::Fading, vec![(1.0, 0.01)]).unwrap();
        assert_eq!(fading_to_afm_bound(&big, &w, b, 0.05, 100).unwrap(), 0);
        let t = ModulusTable::new(ModulusKind::Fading, vec![(0.01, 0.05), (0.02, 0.2)]).unwrap();
        assert_eq!(fading_to_afm_bound(&t, &w, b, 0.1, 100).unwrap(), 7);
        assert!(matches!(fading_to_afm_bound(&t, &w, b, 0.01, 100), Err(Error::NotResolved(_))));
    }
}
