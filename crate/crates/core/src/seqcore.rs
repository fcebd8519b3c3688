//! Finite-horizon real sequences and the shift/window operator algebra.
//!
//! A [`Sequence`] stores `u_0, ..., u_T` and is implicitly zero for every index
//! outside `[0, T]`. All operators work on indices through [`Sequence::get`], so
//! they never depend on how much storage a sequence happens to carry.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Sequence {
    values: Vec<f64>,
}

impl Sequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sequence entry {i} = {}", values[i])));
        }
        Ok(Self { values })
    }

    /// The empty sequence (identically zero, no stored horizon).
    pub fn empty() -> Self {
        Self { values: Vec::new() }
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn constant(value: f64, len: usize) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Number of stored entries, `T + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last stored index `T`, or `None` for the empty sequence.
    pub fn horizon(&self) -> Option<usize> {
        self.values.len().checked_sub(1)
    }

    /// Value at a (possibly negative or out-of-range) index, zero outside the
    /// stored horizon.
    pub fn get(&self, t: i64) -> f64 {
        if t < 0 {
            return 0.0;
        }
        self.values.get(t as usize).copied().unwrap_or(0.0)
    }

    pub fn at(&self, t: usize) -> f64 {
        self.values.get(t).copied().unwrap_or(0.0)
    }

    /// `max_t |u_t|` over the stored horizon (0 for the empty sequence).
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `(R^k u)_t = u_{t-k} 1{t >= k}`; the horizon grows by `k`.
    pub fn right_shift(&self, k: usize) -> Sequence {
        if self.values.is_empty() {
            return Sequence::empty();
        }
        let mut values = vec![0.0; k];
        values.extend_from_slice(&self.values);
        Sequence { values }
    }

    /// `(L^k u)_t = u_{t+k}`; the horizon shrinks by `k`.
    pub fn left_shift(&self, k: usize) -> Sequence {
        let values = self.values.get(k..).map(<[f64]>::to_vec).unwrap_or_default();
        Sequence { values }
    }

    /// `(W_{t,m} u)_tau = u_tau 1{max(t-m,0) <= tau <= t}`, stored on `[0, t]`.
    pub fn window(&self, t: usize, m: usize) -> Sequence {
        let start = t.saturating_sub(m);
        let values = (0..=t).map(|tau| if tau >= start { self.at(tau) } else { 0.0 }).collect();
        Sequence { values }
    }

    /// The slice `(u_{t-m}, ..., u_t)` with zeros for negative indices.
    pub fn window_slice(&self, t: usize, m: usize) -> Vec<f64> {
        let t = t as i64;
        (t - m as i64..=t).map(|s| self.get(s)).collect()
    }

    /// Embed `x in R^{t+1}` as `u_s = x_s` on `[0, t]`.
    pub fn embed_vector(x: &[f64]) -> Result<Sequence> {
        if x.is_empty() {
            return Err(Error::invalid("x", "cannot embed an empty vector"));
        }
        Sequence::new(x.to_vec())
    }

    /// One value per line, index implicit.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 12);
        for v in &self.values {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Sequence> {
        let values = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| l.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Sequence::new(values)
    }
}

impl TryFrom<Vec<f64>> for Sequence {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Sequence::new(values)
    }
}

impl From<Sequence> for Vec<f64> {
    fn from(s: Sequence) -> Self {
        s.values
    }
}

/// The amplitude ball `M(R) = { u : |u|_inf <= R }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBall {
    radius: f64,
}

impl InputBall {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("R", format!("radius must be positive, got {radius}")));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, u: &Sequence) -> bool {
        u.sup_norm() <= self.radius
    }

    /// `len` i.i.d. uniform draws from `[-R, R]`.
    pub fn sample(&self, len: usize, rng: &mut crate::rng::Rng) -> Sequence {
        use rand::Rng as _;
        let r = self.radius;
        Sequence { values: (0..len).map(|_| rng.gen_range(-r..=r)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(v: &[f64]) -> Sequence {
        Sequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn right_shift_examples() {
        assert_eq!(seq(&[1., 2., 3.]).right_shift(1), seq(&[0., 1., 2., 3.]));
        assert_eq!(seq(&[1., 2., 3.]).right_shift(0), seq(&[1., 2., 3.]));
        assert_eq!(seq(&[5.]).right_shift(3), seq(&[0., 0., 0., 5.]));
    }

    #[test]
    fn left_shift_examples() {
        assert_eq!(seq(&[1., 2., 3.]).left_shift(1), seq(&[2., 3.]));
        assert_eq!(seq(&[1., 2., 3.]).left_shift(0), seq(&[1., 2., 3.]));
        assert!(seq(&[1., 2., 3.]).left_shift(4).is_empty());
    }

    #[test]
    fn window_examples() {
        let u = seq(&[1., 2., 3., 4., 5., 6.]);
        assert_eq!(u.window(5, 2), seq(&[0., 0., 0., 4., 5., 6.]));
        assert_eq!(seq(&[1., 2., 3.]).window(2, 10), seq(&[1., 2., 3.]));
        assert_eq!(seq(&[1., 2., 3.]).window(1, 0), seq(&[0., 2.]));
        // past the stored horizon the window is zero-filled
        assert_eq!(seq(&[1., 2.]).window(3, 1), seq(&[0., 0., 0., 0.]));
    }

    #[test]
    fn window_slice_pads_left() {
        let u = seq(&[1., 2., 3.]);
        assert_eq!(u.window_slice(1, 3), vec![0., 0., 1., 2.]);
        assert_eq!(u.window_slice(2, 1), vec![2., 3.]);
    }

    #[test]
    fn embed_examples() {
        assert_eq!(Sequence::embed_vector(&[0.5, -0.5]).unwrap(), seq(&[0.5, -0.5]));
        assert!(Sequence::embed_vector(&[]).is_err());
        assert_eq!(Sequence::embed_vector(&[-2., 1.]).unwrap().sup_norm(), 2.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(Sequence::new(vec![1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(serde_json::from_str::<Sequence>("[1.0, 2.0]").is_ok());
    }

    #[test]
    fn input_ball() {
        assert!(InputBall::new(0.0).is_err());
        let b = InputBall::new(1.0).unwrap();
        assert!(b.contains(&seq(&[1., -1.])));
        assert!(!b.contains(&seq(&[1.5])));
    }

    fn arb_seq() -> impl Strategy<Value = Sequence> {
        prop::collection::vec(-10.0..10.0f64, 1..40).prop_map(|v| Sequence::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn right_shift_entrywise(u in arb_seq(), k in 0usize..20) {
            let r = u.right_shift(k);
            for t in 0..(u.len() + k + 3) {
                let expect = if t >= k { u.at(t - k) } else { 0.0 };
                prop_assert_eq!(r.at(t), expect);
            }
        }

        #[test]
        fn left_inverts_right(u in arb_seq(), k in 0usize..20) {
            prop_assert_eq!(u.right_shift(k).left_shift(k), u);
        }

        #[test]
        fn window_laws(u in arb_seq(), t in 0usize..50, m in 0usize..50) {
            let w = u.window(t, m);
            prop_assert_eq!(w.window(t, m), w.clone());
            prop_assert!(w.sup_norm() <= u.sup_norm());
            if m >= t {
                let restricted: Vec<f64> = (0..=t).map(|s| u.at(s)).collect();
                prop_assert_eq!(w.values(), restricted.as_slice());
            }
        }

        #[test]
        fn csv_and_json_roundtrip(u in arb_seq()) {
            prop_assert_eq!(Sequence::from_csv(&u.to_csv()).unwrap(), u.clone());
            let json = serde_json::to_string(&u).unwrap();
            prop_assert_eq!(serde_json::from_str::<Sequence>(&json).unwrap(), u);
        }
    }
}
