//! Builtin systems addressable by name, e.g. `linear(0.5,0.5,1)`.
//!
//! A [`SystemSpec`] is written either as a call-like string or as a JSON
//! object tagged by `kind`:
//!
//! ```text
//! "linear(a,b,c)"                      x+ = a x + b u,          y = c x
//! "contractive_tanh(a,b)"              x+ = tanh(a x + b u),    y = x
//! "lure(a,b,c,psi,gamma)"              scalar Lur'e block; psi is tanh:k, linear:k or zero
//! "tapped_delay(C,lambda,m)"           shift register feeding ReLU(sum_{s<=m} C lambda^s u_{t-s})
//! {"kind": "lure", "a": [[..]], "b": [..], "c": [..], "psi": {..}, "gamma": g}
//! {"kind": "tcn_realization", "model": {..}}
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{tapped_delay_realization, BetaFunction, Domain, State, StateSpaceSystem};
use crate::error::{Error, Result};
use crate::stability::{LureSystem, Psi};
use crate::tcn::TcnModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Linear { a: f64, b: f64, c: f64 },
    ContractiveTanh { a: f64, b: f64 },
    Lure { a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>, psi: Psi, gamma: f64 },
    TappedDelay { c: f64, lambda: f64, m: usize },
    TcnRealization { model: TcnModel },
}

fn parse_psi(s: &str) -> Result<Psi> {
    let s = s.trim();
    if s == "zero" {
        return Ok(Psi::Zero);
    }
    let (kind, k) = s
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("nonlinearity `{s}`: expected tanh:k, linear:k or zero")))?;
    let k: f64 = k.trim().parse().map_err(|_| Error::Parse(format!("bad number in `{s}`")))?;
    match kind.trim() {
        "tanh" => Ok(Psi::Tanh { scale: k }),
        "linear" => Ok(Psi::Linear { slope: k }),
        other => Err(Error::Parse(format!("unknown nonlinearity `{other}`"))),
    }
}

impl FromStr for SystemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once('(').ok_or_else(|| Error::Parse(format!("`{s}`: expected name(args)")))?;
        let body = rest.strip_suffix(')').ok_or_else(|| Error::Parse(format!("`{s}`: missing closing parenthesis")))?;
        let args: Vec<&str> = body.split(',').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            args.get(i)
                .ok_or_else(|| Error::Parse(format!("`{s}`: missing argument {}", i + 1)))?
                .parse()
                .map_err(|_| Error::Parse(format!("`{s}`: argument {} is not a number", i + 1)))
        };
        let arity = |k: usize| -> Result<()> {
            if args.len() != k {
                return Err(Error::Parse(format!("`{s}`: expected {k} arguments, got {}", args.len())));
            }
            Ok(())
        };
        let spec = match name.trim() {
            "linear" => {
                arity(3)?;
                SystemSpec::Linear { a: num(0)?, b: num(1)?, c: num(2)? }
            }
            "contractive_tanh" => {
                arity(2)?;
                SystemSpec::ContractiveTanh { a: num(0)?, b: num(1)? }
            }
            "lure" => {
                arity(5)?;
                SystemSpec::Lure {
                    a: vec![vec![num(0)?]],
                    b: vec![num(1)?],
                    c: vec![num(2)?],
                    psi: parse_psi(args[3])?,
                    gamma: num(4)?,
                }
            }
            "tapped_delay" => {
                arity(3)?;
                let m = num(2)?;
                if m < 0.0 || m.fract() != 0.0 {
                    return Err(Error::Parse(format!("`{s}`: m must be a nonnegative integer")));
                }
                SystemSpec::TappedDelay { c: num(0)?, lambda: num(1)?, m: m as usize }
            }
            other => return Err(Error::Parse(format!("unknown system `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemSpec::Linear { a, b, c } => write!(f, "linear({a},{b},{c})"),
            SystemSpec::ContractiveTanh { a, b } => write!(f, "contractive_tanh({a},{b})"),
            SystemSpec::Lure { a, .. } => write!(f, "lure(n={})", a.len()),
            SystemSpec::TappedDelay { c, lambda, m } => write!(f, "tapped_delay({c},{lambda},{m})"),
            SystemSpec::TcnRealization { model } => write!(f, "tcn_realization(m={})", model.m),
        }
    }
}

impl SystemSpec {
    /// Accepts either the string form or a tagged JSON object.
    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => s.parse(),
            other => {
                let spec: SystemSpec = serde_json::from_value(other).map_err(|e| Error::Parse(e.to_string()))?;
                spec.validate()?;
                Ok(spec)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be finite"))
            }
        };
        match self {
            SystemSpec::Linear { a, b, c } => {
                finite("a", *a)?;
                finite("b", *b)?;
                finite("c", *c)
            }
            SystemSpec::ContractiveTanh { a, b } => {
                finite("a", *a)?;
                finite("b", *b)
            }
            SystemSpec::Lure { .. } => self.lure_system().map(|_| ()),
            SystemSpec::TappedDelay { c, lambda, .. } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid("c", "filter scale must be positive"));
                }
                if !(*lambda > 0.0 && *lambda < 1.0) {
                    return Err(Error::invalid("lambda", "must lie in (0,1)"));
                }
                Ok(())
            }
            SystemSpec::TcnRealization { model } => model.net.validate(),
        }
    }

    pub fn lure_system(&self) -> Result<LureSystem> {
        let SystemSpec::Lure { a, b, c, psi, gamma } = self else {
            return Err(Error::invalid("system", "not a Lur'e system"));
        };
        let n = a.len();
        if a.iter().any(|row| row.len() != n) {
            return Err(Error::invalid("a", "A must be square"));
        }
        let a = DMatrix::from_fn(n, n, |i, j| a[i][j]);
        crate::stability::lure_from_vectors(a, b, c, *psi, *gamma)
    }

    /// Builds the system. Linear and contractive builtins carry their exact
    /// incremental-stability function when they contract.
    pub fn build(&self) -> Result<StateSpaceSystem> {
        self.validate()?;
        let name = self.to_string();
        Ok(match *self {
            SystemSpec::Linear { a, b, c } => {
                let sys = StateSpaceSystem::new(
                    name,
                    1,
                    move |x: &State, u| DVector::from_element(1, a * x[0] + b * u),
                    move |x: &State, _| c * x[0],
                )
                .with_jacobian(move |_, _| DMatrix::from_element(1, 1, a))
                .with_lipschitz(b.abs(), c.abs());
                if a.abs() < 1.0 {
                    sys.with_exact_beta(BetaFunction::Exponential { scale: 1.0, rate: a.abs() })
                } else {
                    sys
                }
            }
            SystemSpec::ContractiveTanh { a, b } => {
                let sys = StateSpaceSystem::new(
                    name,
                    1,
                    move |x: &State, u| DVector::from_element(1, (a * x[0] + b * u).tanh()),
                    |x: &State, _| x[0],
                )
                .with_jacobian(move |x: &State, u| {
                    let t = (a * x[0] + b * u).tanh();
                    DMatrix::from_element(1, 1, a * (1.0 - t * t))
                })
                .with_lipschitz(b.abs(), 1.0)
                .with_domain(Domain::Ball { radius: 1.0 });
                if a.abs() < 1.0 {
                    sys.with_exact_beta(BetaFunction::Exponential { scale: 1.0, rate: a.abs() })
                } else {
                    sys
                }
            }
            SystemSpec::Lure { .. } => {
                let mut sys = self.lure_system()?.to_state_space();
                sys = sys.renamed(name);
                sys
            }
            SystemSpec::TappedDelay { c, lambda, m } => {
                let h: Vec<f64> = (0..=m).map(|s| c * lambda.powi(s as i32)).collect();
                // window is (u_{t-m}, ..., u_t); h_s multiplies u_{t-s}
                let sys = tapped_delay_realization(
                    move |w: &[f64]| {
                        let z: f64 = w.iter().rev().zip(&h).map(|(u, hs)| u * hs).sum();
                        z.max(0.0)
                    },
                    m,
                );
                let l_g = c * lambda * (1.0 - lambda.powi(m as i32)) / (1.0 - lambda);
                sys.renamed(name).with_lipschitz(1.0, l_g)
            }
            SystemSpec::TcnRealization { ref model } => {
                let model = model.clone();
                let m = model.m;
                tapped_delay_realization(move |w: &[f64]| model.net.eval_unchecked(w), m).renamed(name)
            }
        })
    }

    /// A `(P, mu)` pair expected to satisfy the Jacobian criterion, for the
    /// builtins where one is known in closed form. Lur'e systems go through
    /// the bounded-real pipeline instead.
    pub fn candidate_certificate(&self, mu_shift: f64) -> Option<(DMatrix<f64>, f64)> {
        match *self {
            SystemSpec::Linear { a, .. } | SystemSpec::ContractiveTanh { a, .. } if a != 0.0 && a.abs() < 1.0 => {
                Some((DMatrix::identity(1, 1), a * a))
            }
            SystemSpec::TappedDelay { m, .. } if m > 0 => {
                // J is the nilpotent shift; P = diag(mu^{m-1}, ..., mu, 1)
                let mu = mu_shift;
                Some((DMatrix::from_fn(m, m, |i, j| if i == j { mu.powi((m - 1 - i) as i32) } else { 0.0 }), mu))
            }
            SystemSpec::TcnRealization { ref model } if model.m > 0 => {
                let (m, mu) = (model.m, mu_shift);
                Some((DMatrix::from_fn(m, m, |i, j| if i == j { mu.powi((m - 1 - i) as i32) } else { 0.0 }), mu))
            }
            _ => None,
        }
    }
}
