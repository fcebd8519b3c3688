use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::seqcore::{InputBall, Sequence};

const TAG_INPUTS: u64 = 0x11;

/// Which family an input was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFamily {
    /// `u = +R` or `u = -R` on the whole horizon.
    Constant,
    /// `u_t = +-R` with random signs.
    Sign,
    /// i.i.d. uniform on `[-R, R]`.
    Uniform,
}

impl InputFamily {
    pub fn is_extremal(self) -> bool {
        !matches!(self, InputFamily::Uniform)
    }
}

/// Input sampler for sup-estimators: the constant inputs `+-R`, `signs` random
/// sign sequences and `uniform` i.i.d. uniform draws, all of length
/// `horizon + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSpec {
    pub horizon: usize,
    pub constants: bool,
    pub signs: usize,
    pub uniform: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self { horizon: 64, constants: true, signs: 32, uniform: 64 }
    }
}

impl SamplerSpec {
    pub fn count(&self) -> usize {
        usize::from(self.constants) * 2 + self.signs + self.uniform
    }

    /// Draw the inputs in a fixed order: constants, signs, uniform.
    pub fn draw(&self, ball: InputBall, seed: u64) -> Vec<(InputFamily, Sequence)> {
        let r = ball.radius();
        let len = self.horizon + 1;
        let mut out = Vec::with_capacity(self.count());
        if self.constants {
            out.push((InputFamily::Constant, Sequence::constant(r, len).expect("finite")));
            out.push((InputFamily::Constant, Sequence::constant(-r, len).expect("finite")));
        }
        for i in 0..self.signs {
            let mut g = rng::tagged(seed, TAG_INPUTS, i as u64);
            let v = (0..len).map(|_| if g.gen::<bool>() { r } else { -r }).collect();
            out.push((InputFamily::Sign, Sequence::new(v).expect("finite")));
        }
        for i in 0..self.uniform {
            let mut g = rng::tagged(seed, TAG_INPUTS, (1 << 32) + i as u64);
            let v = (0..len).map(|_| g.gen_range(-r..=r)).collect();
            out.push((InputFamily::Uniform, Sequence::new(v).expect("finite")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_reproducible_and_bounded() {
        let spec = SamplerSpec { horizon: 10, constants: true, signs: 3, uniform: 5 };
        let ball = InputBall::new(2.0).unwrap();
        let a = spec.draw(ball, 7);
        let b = spec.draw(ball, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), spec.count());
        assert!(a.iter().all(|(_, u)| ball.contains(u) && u.len() == 11));
        assert_eq!(a[0].1.values()[0], 2.0);
        assert_ne!(spec.draw(ball, 8), a);
    }
}
