use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A weighting sequence `w` with `w_t in (0, 1]`, nonincreasing, `w_t -> 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightingSequence {
    /// `w_t = rho^t`.
    Geometric { rho: f64 },
    /// Explicit prefix `w_0, ..., w_{n-1}`; undefined beyond it.
    Tabulated { values: Vec<f64> },
}

impl WeightingSequence {
    pub fn geometric(rho: f64) -> Result<Self> {
        let w = WeightingSequence::Geometric { rho };
        w.validate()?;
        Ok(w)
    }

    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        let w = WeightingSequence::Tabulated { values };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightingSequence::Geometric { rho } => {
                if !(*rho > 0.0 && *rho < 1.0) {
                    return Err(Error::invalid("rho", format!("decay must lie in (0,1), got {rho}")));
                }
            }
            WeightingSequence::Tabulated { values } => {
                if values.is_empty() {
                    return Err(Error::invalid("w", "empty weighting prefix"));
                }
                if values.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                    return Err(Error::invalid("w", "entries must lie in (0,1]"));
                }
                if values.windows(2).any(|p| p[1] > p[0]) {
                    return Err(Error::invalid("w", "weights must be nonincreasing"));
                }
            }
        }
        Ok(())
    }

    /// `w_t`, or `None` past a tabulated prefix.
    pub fn at(&self, t: usize) -> Option<f64> {
        match self {
            WeightingSequence::Geometric { rho } => Some(rho.powf(t as f64)),
            WeightingSequence::Tabulated { values } => values.get(t).copied(),
        }
    }

    /// Number of evaluable terms, `None` when unbounded.
    pub fn prefix_len(&self) -> Option<usize> {
        match self {
            WeightingSequence::Geometric { .. } => None,
            WeightingSequence::Tabulated { values } => Some(values.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_weights() {
        let w = WeightingSequence::geometric(0.5).unwrap();
        assert_eq!(w.at(0), Some(1.0));
        assert_eq!(w.at(3), Some(0.125));
        assert!(WeightingSequence::geometric(1.0).is_err());
        assert!(WeightingSequence::geometric(0.0).is_err());
    }

    #[test]
    fn tabulated_validation() {
        assert!(WeightingSequence::tabulated(vec![1.0, 0.5, 0.6]).is_err());
        assert!(WeightingSequence::tabulated(vec![1.0, 0.0]).is_err());
        let w = WeightingSequence::tabulated(vec![1.0, 0.5]).unwrap();
        assert_eq!(w.at(2), None);
    }
}
