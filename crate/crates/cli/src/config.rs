//! The experiment config: one JSON document, unknown fields rejected.

use std::path::PathBuf;

use afm_core::iomap::{SamplerSpec, WeightingSequence};
use afm_core::stability::{DemidovichCertificate, GridSpec, R0Search};
use afm_core::statespace::SystemSpec;
use afm_core::tcn::{Architecture, TrainSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    Memory,
    Modulus,
    Certify,
    Bounds,
    FitTcn,
    Compare,
    Check,
    Pipeline,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Memory => "memory",
            Task::Modulus => "modulus",
            Task::Certify => "certify",
            Task::Bounds => "bounds",
            Task::FitTcn => "fit-tcn",
            Task::Compare => "compare",
            Task::Check => "check",
            Task::Pipeline => "pipeline",
        }
    }

    fn needs_system(self) -> bool {
        self != Task::Compare
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    /// `u_t = value` for every `t`.
    Constant {
        value: f64,
    },
    /// i.i.d. uniform on `[-R, R]`, keyed by the run seed.
    Uniform,
    Values {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub input: InputSpec,
    pub horizon: usize,
    /// Initial state; the system's own when absent.
    pub xi: Option<Vec<f64>>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { input: InputSpec::Uniform, horizon: 50, xi: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulusSection {
    /// Window index `t` of the forward modulus.
    pub t: usize,
    pub deltas: Vec<f64>,
    pub samples: usize,
    /// Enables the fading-memory modulus and the two conversions.
    pub weighting: Option<WeightingSequence>,
    pub fading_t_max: usize,
    pub max_m: usize,
}

impl Default for ModulusSection {
    fn default() -> Self {
        Self {
            t: 10,
            deltas: vec![1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            samples: 2000,
            weighting: None,
            fading_t_max: 30,
            max_m: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    /// Explicit `(P, mu)` to verify instead of the builtin candidate.
    pub certificate: Option<DemidovichCertificate>,
    /// Contraction rate used for the tapped-delay candidates.
    pub mu: f64,
    pub grid: GridSpec,
    pub search: R0Search,
    pub lyapunov_samples: usize,
    pub trajectory_trials: usize,
    pub trajectory_horizon: usize,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self {
            certificate: None,
            mu: 0.5,
            grid: GridSpec::default(),
            search: R0Search::default(),
            lyapunov_samples: 10_000,
            trajectory_trials: 50,
            trajectory_horizon: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    /// Perturbation size for the modulus bound.
    pub delta: f64,
    pub ball_trajectories: usize,
    pub ball_horizon: usize,
    pub m_max: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self { delta: 0.01, ball_trajectories: 64, ball_horizon: 100, m_max: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Context length; the empirical horizon at `gamma * eps` when absent.
    pub m: Option<usize>,
    pub architecture: Architecture,
    pub train: TrainSpec,
    /// The unspecified constant of the depth bound.
    pub depth_constant: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            m: None,
            architecture: Architecture { width: 4, depth: 2 },
            train: TrainSpec::default(),
            depth_constant: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub c: f64,
    pub lambda: f64,
    pub d_max: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { c: 1.0, lambda: 0.5, d_max: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub trials: usize,
    pub max_shift: usize,
    pub horizon: usize,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { trials: 500, max_shift: 10, horizon: 30 }
    }
}

fn default_radius() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.5
}
fn default_gamma_grid() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}
fn default_t_max() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Builtin string such as `"linear(0.5,0.5,1)"` or the JSON form.
    #[serde(default)]
    pub system: Option<serde_json::Value>,
    #[serde(rename = "R", default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub modulus: ModulusSection,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub check: CheckSection,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn invalid(path: &str, reason: impl Into<String>) -> CliError {
    CliError::ConfigInvalid { path: path.to_string(), reason: reason.into() }
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive and finite, got {v}")))
    }
}

fn unit_open(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must lie in (0,1), got {v}")))
    }
}

fn nonzero(path: &str, v: usize) -> Result<(), CliError> {
    if v > 0 {
        Ok(())
    } else {
        Err(invalid(path, "must be at least 1"))
    }
}

impl ExperimentConfig {
    /// Parses a config document, reporting the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(if path == "." { "<root>" } else { &path }, e.into_inner().to_string())
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    /// The parsed system, if one is configured.
    pub fn system_spec(&self) -> Result<Option<SystemSpec>, CliError> {
        self.system
            .clone()
            .map(|v| SystemSpec::from_json_value(v).map_err(|e| invalid("system", e.to_string())))
            .transpose()
    }

    pub fn require_system(&self) -> Result<SystemSpec, CliError> {
        self.system_spec()?.ok_or_else(|| invalid("system", "required for this task"))
    }

    pub fn require_eps(&self) -> Result<f64, CliError> {
        self.eps.ok_or_else(|| invalid("eps", "required for this task"))
    }

    /// `eps_grid` when given, else `[eps]`.
    pub fn eps_values(&self) -> Result<Vec<f64>, CliError> {
        match (&self.eps_grid, self.eps) {
            (Some(g), _) => Ok(g.clone()),
            (None, Some(e)) => Ok(vec![e]),
            (None, None) => Err(invalid("eps", "either `eps` or `eps_grid` is required")),
        }
    }

    /// Range checks for every numeric field, plus the fields `task` needs.
    pub fn validate(&self, task: Task) -> Result<(), CliError> {
        if let Some(t) = self.task {
            if t != task {
                return Err(invalid("task", format!("config says `{}` but `{}` was requested", t.name(), task.name())));
            }
        }
        if self.seed.is_none() {
            return Err(invalid("seed", "a seed is mandatory (config field or --seed)"));
        }
        positive("R", self.radius)?;
        if let Some(e) = self.eps {
            positive("eps", e)?;
        }
        if let Some(g) = &self.eps_grid {
            if g.is_empty() {
                return Err(invalid("eps_grid", "must not be empty"));
            }
            for (i, &e) in g.iter().enumerate() {
                positive(&format!("eps_grid[{i}]"), e)?;
            }
        }
        unit_open("gamma", self.gamma)?;
        for (i, &g) in self.gamma_grid.iter().enumerate() {
            unit_open(&format!("gamma_grid[{i}]"), g)?;
        }
        nonzero("t_max", self.t_max)?;
        nonzero("sampler.horizon", self.sampler.horizon)?;
        if self.sampler.count() == 0 {
            return Err(invalid("sampler", "draws no inputs"));
        }

        let s = &self.simulate;
        nonzero("simulate.horizon", s.horizon)?;
        if let InputSpec::Values { values } = &s.input {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("simulate.input.values", "entries must be finite"));
            }
        }
        if let InputSpec::Constant { value } = s.input {
            if !value.is_finite() {
                return Err(invalid("simulate.input.value", "must be finite"));
            }
        }

        let m = &self.modulus;
        nonzero("modulus.samples", m.samples)?;
        nonzero("modulus.fading_t_max", m.fading_t_max)?;
        if m.deltas.is_empty() {
            return Err(invalid("modulus.deltas", "must not be empty"));
        }
        for (i, &d) in m.deltas.iter().enumerate() {
            positive(&format!("modulus.deltas[{i}]"), d)?;
            if d > 2.0 * self.radius {
                return Err(invalid(&format!("modulus.deltas[{i}]"), "exceeds the diameter 2R"));
            }
        }
        if m.deltas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("modulus.deltas", "must be strictly increasing"));
        }
        if let Some(w) = &m.weighting {
            w.validate().map_err(|e| invalid("modulus.weighting", e.to_string()))?;
        }

        let c = &self.certify;
        unit_open("certify.mu", c.mu)?;
        c.grid.validate().map_err(|e| invalid("certify.grid", e.to_string()))?;
        nonzero("certify.lyapunov_samples", c.lyapunov_samples)?;
        nonzero("certify.trajectory_trials", c.trajectory_trials)?;
        nonzero("certify.trajectory_horizon", c.trajectory_horizon)?;
        positive("certify.search.tolerance", c.search.tolerance)?;

        let b = &self.bounds;
        if !(b.delta >= 0.0 && b.delta.is_finite()) {
            return Err(invalid("bounds.delta", "must be nonnegative and finite"));
        }
        nonzero("bounds.ball_trajectories", b.ball_trajectories)?;
        nonzero("bounds.ball_horizon", b.ball_horizon)?;
        nonzero("bounds.m_max", b.m_max)?;

        let f = &self.fit;
        nonzero("fit.architecture.depth", f.architecture.depth)?;
        if f.architecture.depth > 1 {
            nonzero("fit.architecture.width", f.architecture.width)?;
        }
        f.train.validate().map_err(|e| invalid("fit.train", e.to_string()))?;
        positive("fit.depth_constant", f.depth_constant)?;

        let cmp = &self.compare;
        positive("compare.c", cmp.c)?;
        unit_open("compare.lambda", cmp.lambda)?;
        nonzero("compare.d_max", cmp.d_max)?;

        let ch = &self.check;
        nonzero("check.trials", ch.trials)?;
        nonzero("check.horizon", ch.horizon)?;

        if task.needs_system() {
            let spec = self.require_system()?;
            spec.validate().map_err(|e| invalid("system", e.to_string()))?;
        }
        match task {
            Task::Memory | Task::Bounds => {
                self.eps_values()?;
            }
            Task::Pipeline => {
                self.require_eps()?;
            }
            Task::FitTcn if f.m.is_none() => {
                self.require_eps()?;
            }
            Task::Compare => {
                self.eps_values()?;
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::from_json(text)
    }

    #[test]
    fn minimal_config() {
        let cfg = parse(r#"{"seed": 1, "system": "linear(0.5,0.5,1)", "eps": 0.01}"#).unwrap();
        cfg.validate(Task::Memory).unwrap();
        assert_eq!(cfg.radius, 1.0);
        assert_eq!(cfg.require_system().unwrap().to_string(), "linear(0.5,0.5,1)");
    }

    #[test]
    fn unknown_fields_name_their_path() {
        let err = parse(r#"{"seed": 1, "certify": {"grid": {"points": 3}}}"#).unwrap_err();
        match err {
            CliError::ConfigInvalid { path, .. } => assert_eq!(path, "certify.grid.points"),
            other => panic!("{other:?}"),
        }
        assert!(parse(r#"{"seed": 1, "epsilon": 0.1}"#).is_err());
    }

    #[test]
    fn range_checks() {
        let bad = |text: &str, task: Task| match parse(text).and_then(|c| c.validate(task)) {
            Err(CliError::ConfigInvalid { path, .. }) => path,
            other => panic!("{other:?}"),
        };
        assert_eq!(bad(r#"{"system": "linear(0.5,0.5,1)", "eps": 0.1}"#, Task::Memory), "seed");
        assert_eq!(bad(r#"{"seed": 0, "system": "linear(0.5,0.5,1)", "eps": -1}"#, Task::Memory), "eps");
        assert_eq!(bad(r#"{"seed": 0, "system": "linear(0.5,0.5,1)"}"#, Task::Memory), "eps");
        assert_eq!(bad(r#"{"seed": 0, "gamma": 1.5, "eps": 0.1}"#, Task::Compare), "gamma");
        assert_eq!(bad(r#"{"seed": 0, "system": "linear(0.5,0.5)"}"#, Task::Check), "system");
        assert_eq!(bad(r#"{"seed": 0, "task": "memory", "eps": 0.1}"#, Task::Compare), "task");
        assert_eq!(
            bad(r#"{"seed": 0, "system": "linear(0.5,0.5,1)", "modulus": {"deltas": [0.1, 0.05]}}"#, Task::Modulus),
            "modulus.deltas"
        );
    }
}
