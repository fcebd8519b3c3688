//! Recurrent realizations `x_{t+1} = f(x_t, u_t)`, `y_t = g(x_t)`.
//!
//! A [`StateSpaceSystem`] bundles the transition and output maps with the
//! metadata the bound calculators need: Lipschitz constants, an optional state
//! Jacobian, the declared positively invariant domain, and (for builtin
//! systems) an exact incremental-stability function.

pub mod beta;
pub mod bounds;
pub mod registry;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iomap::IoMap;
use crate::seqcore::Sequence;

pub use beta::{estimate_beta, BetaFunction, BetaTable};
pub use bounds::{
    compute_invariant_ball, prop2_check, thm3_memory_bound, thm3_modulus_bound, thm4_bounds, BallCheck, InvariantBall,
    Prop2Check, Thm4Bounds,
};
pub use registry::SystemSpec;

pub type State = DVector<f64>;
pub type TransitionFn = Arc<dyn Fn(&State, f64) -> State + Send + Sync>;
/// Output map; receives `u_t` so that tapped-delay realizations can use a
/// direct feedthrough. Systems without feedthrough ignore it.
pub type OutputFn = Arc<dyn Fn(&State, f64) -> f64 + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&State, f64) -> DMatrix<f64> + Send + Sync>;

/// Lipschitz data: `f` is `l_f`-Lipschitz in `u`, `g` is `l_g`-Lipschitz in `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lipschitz {
    pub l_f: f64,
    pub l_g: f64,
}

/// Declared positively invariant set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Everywhere,
    Ball { radius: f64 },
}

#[derive(Clone)]
pub struct StateSpaceSystem {
    name: String,
    n: usize,
    f: TransitionFn,
    g: OutputFn,
    xi: State,
    jacobian: Option<JacobianFn>,
    lipschitz: Lipschitz,
    domain: Domain,
    feedthrough: bool,
    exact_beta: Option<BetaFunction>,
}

impl fmt::Debug for StateSpaceSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateSpaceSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("xi", &self.xi.as_slice())
            .field("lipschitz", &self.lipschitz)
            .field("domain", &self.domain)
            .field("feedthrough", &self.feedthrough)
            .field("exact_beta", &self.exact_beta)
            .finish_non_exhaustive()
    }
}

impl StateSpaceSystem {
    /// A system with zero initial state, unit Lipschitz placeholders and domain
    /// `R^n`; refine with the builder methods.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        f: impl Fn(&State, f64) -> State + Send + Sync + 'static,
        g: impl Fn(&State, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            f: Arc::new(f),
            g: Arc::new(g),
            xi: DVector::zeros(n),
            jacobian: None,
            lipschitz: Lipschitz { l_f: 1.0, l_g: 1.0 },
            domain: Domain::Everywhere,
            feedthrough: false,
            exact_beta: None,
        }
    }

    pub fn with_initial_state(mut self, xi: State) -> Result<Self> {
        if xi.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: xi.len() });
        }
        self.xi = xi;
        Ok(self)
    }

    pub fn with_jacobian(mut self, j: impl Fn(&State, f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_lipschitz(mut self, l_f: f64, l_g: f64) -> Self {
        self.lipschitz = Lipschitz { l_f, l_g };
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_feedthrough(mut self, feedthrough: bool) -> Self {
        self.feedthrough = feedthrough;
        self
    }

    pub fn with_exact_beta(mut self, beta: BetaFunction) -> Self {
        self.exact_beta = Some(beta);
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn xi(&self) -> &State {
        &self.xi
    }

    pub fn lipschitz(&self) -> Lipschitz {
        self.lipschitz
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn has_feedthrough(&self) -> bool {
        self.feedthrough
    }

    pub fn exact_beta(&self) -> Option<&BetaFunction> {
        self.exact_beta.as_ref()
    }

    pub fn step(&self, x: &State, u: f64) -> State {
        (self.f)(x, u)
    }

    pub fn output(&self, x: &State, u: f64) -> f64 {
        (self.g)(x, u)
    }

    pub fn jacobian_x(&self, x: &State, u: f64) -> Result<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x, u)).ok_or(Error::MissingJacobian)
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// `f(xi, 0) = xi` and `g(xi) = 0`, up to `tol`.
    pub fn is_time_invariant(&self, tol: f64) -> bool {
        let moved = self.step(&self.xi, 0.0);
        (moved - &self.xi).norm() <= tol && self.output(&self.xi, 0.0).abs() <= tol
    }

    /// `phi^u_{s,t}(xi)`: iterate `x_{k+1} = f(x_k, u_k)` from `x_s = xi`.
    pub fn flow(&self, xi: &State, u: &Sequence, s: usize, t: usize) -> Result<State> {
        if s > t {
            return Err(Error::invalid("s", format!("flow needs s <= t, got s={s}, t={t}")));
        }
        let mut x = xi.clone();
        for k in s..t {
            x = self.step(&x, u.at(k));
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("state of `{}` at time {}", self.name, k + 1)));
            }
        }
        Ok(x)
    }

    /// States `x_0 = xi, ..., x_horizon`.
    pub fn trajectory(&self, xi: &State, u: &Sequence, horizon: usize) -> Result<Vec<State>> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(xi.clone());
        for k in 0..horizon {
            let next = self.step(&out[k], u.at(k));
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("state of `{}` at time {}", self.name, k + 1)));
            }
            out.push(next);
        }
        Ok(out)
    }

    /// The i/o map `y = F u` realized from the initial state `xi`.
    pub fn io_map(self: &Arc<Self>) -> SystemMap {
        SystemMap { sys: Arc::clone(self) }
    }
}

/// The i/o map of a state-space system.
#[derive(Clone, Debug)]
pub struct SystemMap {
    sys: Arc<StateSpaceSystem>,
}

/// `eval(u, t) = g(phi^u_{0,t}(xi))`.
pub fn io_map_of(sys: StateSpaceSystem) -> SystemMap {
    SystemMap { sys: Arc::new(sys) }
}

impl SystemMap {
    pub fn system(&self) -> &StateSpaceSystem {
        &self.sys
    }
}

impl IoMap for SystemMap {
    fn eval(&self, u: &Sequence, t: usize) -> Result<f64> {
        let x = self.sys.flow(&self.sys.xi, u, 0, t)?;
        Ok(self.sys.output(&x, u.at(t)))
    }

    fn eval_all(&self, u: &Sequence, horizon: usize) -> Result<Vec<f64>> {
        let traj = self.sys.trajectory(&self.sys.xi, u, horizon)?;
        Ok(traj.iter().enumerate().map(|(t, x)| self.sys.output(x, u.at(t))).collect())
    }

    fn declared_time_invariant(&self) -> bool {
        self.sys.is_time_invariant(1e-12)
    }

    fn describe(&self) -> String {
        self.sys.name.clone()
    }
}

/// Shift-register realization of a finite-memory map with context `m`:
/// `x^i_{t+1} = x^{i+1}_t`, `x^m_{t+1} = u_t`,
/// `y_t = f(x^1_t, ..., x^m_t, u_t)`, zero initial state.
pub fn tapped_delay_realization(
    functional: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    m: usize,
) -> StateSpaceSystem {
    let shift = move |x: &State, u: f64| {
        let mut next = State::zeros(m);
        for i in 1..m {
            next[i - 1] = x[i];
        }
        if m > 0 {
            next[m - 1] = u;
        }
        next
    };
    let output = move |x: &State, u: f64| {
        let mut window = Vec::with_capacity(m + 1);
        window.extend(x.iter().copied());
        window.push(u);
        functional(&window)
    };
    let jac = move |_: &State, _: f64| {
        let mut j = DMatrix::zeros(m, m);
        for i in 1..m {
            j[(i - 1, i)] = 1.0;
        }
        j
    };
    StateSpaceSystem::new(format!("tapped_delay(m={m})"), m, shift, output)
        .with_jacobian(jac)
        .with_lipschitz(1.0, f64::INFINITY)
        .with_feedthrough(true)
}
