//! One function per task. Each returns JSON results, witness inputs and
//! CSV tables; all randomness is keyed by the config seed.

use afm_core::iomap::{
    afm_to_fading_bound, check_causality, check_time_invariance, estimate_fading_modulus, estimate_memory_horizon,
    estimate_modulus, fading_to_afm_bound, inverse_modulus, memory_deviation, IoMap, MemoryEstimate,
};
use afm_core::rng;
use afm_core::stability::{
    lure_certify, lyapunov_decrease_check, lyapunov_trajectory_check, verify_demidovich, DemidovichCertificate,
    LureCertification, LyapunovReport,
};
use afm_core::statespace::{
    compute_invariant_ball, io_map_of, thm3_memory_bound, thm4_bounds, State, StateSpaceSystem, SystemMap, SystemSpec,
};
use afm_core::tcn::{compare_parsimony, fit_tcn, theorem1_plan, tradeoff_table, FitReport, TcnModel};
use afm_core::{Error, InputBall, Sequence};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, InputSpec, Task};
use crate::error::CliError;
use crate::report::{Cell, Table, TaskOutput};

const TAG_SIMULATE: u64 = 0xa1;

type TaskResult = Result<TaskOutput, CliError>;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn ball(cfg: &ExperimentConfig) -> Result<InputBall, CliError> {
    Ok(InputBall::new(cfg.radius)?)
}

fn system_map(spec: &SystemSpec) -> Result<SystemMap, CliError> {
    Ok(io_map_of(spec.build()?))
}

pub fn run_task(task: Task, cfg: &ExperimentConfig) -> TaskResult {
    match task {
        Task::Simulate => simulate(cfg),
        Task::Memory => memory(cfg),
        Task::Modulus => modulus(cfg),
        Task::Certify => certify_task(cfg),
        Task::Bounds => bounds(cfg),
        Task::FitTcn => fit(cfg),
        Task::Compare => compare(cfg),
        Task::Check => check(cfg),
        Task::Pipeline => pipeline(cfg),
    }
}

fn simulate(cfg: &ExperimentConfig) -> TaskResult {
    let spec = cfg.require_system()?;
    let s = &cfg.simulate;
    let mut sys = spec.build()?;
    if let Some(xi) = &s.xi {
        sys = sys.with_initial_state(State::from_vec(xi.clone()))?;
    }
    let len = s.horizon + 1;
    let u = match &s.input {
        InputSpec::Constant { value } => Sequence::constant(*value, len)?,
        InputSpec::Uniform => ball(cfg)?.sample(len, &mut rng::tagged(cfg.seed(), TAG_SIMULATE, 0)),
        InputSpec::Values { values } => Sequence::new(values.clone())?,
    };
    let states = sys.trajectory(sys.xi(), &u, s.horizon)?;
    let map = io_map_of(sys);
    let y = map.eval_all(&u, s.horizon)?;
    let n = map.system().dim();

    let mut columns = vec!["t".to_string(), "u".into(), "y".into()];
    columns.extend((0..n).map(|i| format!("x{i}")));
    let mut table = Table { name: "trajectory".into(), columns, rows: Vec::new() };
    for t in 0..=s.horizon {
        let mut row = vec![t.cell(), u.at(t).cell(), y[t].cell()];
        row.extend(states[t].iter().map(|v| v.cell()));
        table.push(row);
    }
    let results = json!({
        "system": spec.to_string(),
        "horizon": s.horizon,
        "y": y,
        "final_state": states[s.horizon].iter().collect::<Vec<_>>(),
        "sup_output": y.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
    });
    Ok(TaskOutput { results, witnesses: json!({ "input": u }), tables: vec![table] })
}

fn memory_estimates(cfg: &ExperimentConfig, map: &dyn IoMap, eps: &[f64]) -> Result<Vec<MemoryEstimate>, CliError> {
    let b = ball(cfg)?;
    eps.iter().map(|&e| Ok(estimate_memory_horizon(map, e, b, cfg.t_max, &cfg.sampler, cfg.seed())?)).collect()
}

/// Least-squares slope of `m_hat` against `ln(1 / eps)`.
fn log_slope(points: &[(f64, usize)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| (1.0 / p.0).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1 as f64).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn memory(cfg: &ExperimentConfig) -> TaskResult {
    let spec = cfg.require_system()?;
    let map = system_map(&spec)?;
    let eps = cfg.eps_values()?;
    let estimates = memory_estimates(cfg, &map, &eps)?;
    let mut table = Table::new("memory", &["eps", "m_hat", "worst_deviation", "witness_family", "witness_t"]);
    let mut rows = Vec::new();
    let mut witnesses = Vec::new();
    for est in &estimates {
        table.push(vec![
            est.epsilon.cell(),
            est.m_hat.cell(),
            est.worst_deviation.cell(),
            to_value(&est.witness.family).as_str().unwrap_or_default().cell(),
            est.witness.t.cell(),
        ]);
        rows.push(json!({
            "eps": est.epsilon,
            "m_hat": est.m_hat,
            "worst_deviation": est.worst_deviation,
            "method": est.method,
            "deviations": est.deviations,
            "samples": est.samples,
            "label": est.label,
        }));
        witnesses.push(json!({ "eps": est.epsilon, "witness": est.witness }));
    }
    let slope = log_slope(&estimates.iter().map(|e| (e.epsilon, e.m_hat)).collect::<Vec<_>>());
    let results = json!({
        "system": spec.to_string(),
        "estimates": rows,
        "m_hat_vs_log_inv_eps_slope": slope,
    });
    Ok(TaskOutput { results, witnesses: Value::Array(witnesses), tables: vec![table] })
}

fn modulus(cfg: &ExperimentConfig) -> TaskResult {
    let spec = cfg.require_system()?;
    let map = system_map(&spec)?;
    let b = ball(cfg)?;
    let m = &cfg.modulus;
    let forward = estimate_modulus(&map, m.t, &m.deltas, b, m.samples, cfg.seed())?;
    let mut table = Table::new("modulus", &["delta", "omega", "alpha"]);
    let mut results = json!({ "system": spec.to_string(), "forward": forward });
    if let Some(eps) = cfg.eps {
        results["forward_inverse_at_eps"] = json!(inverse_modulus(&forward.table(), eps)?);
    }
    let fading = match &m.weighting {
        Some(w) => {
            let rep = estimate_fading_modulus(&map, w, &m.deltas, b, m.fading_t_max, m.samples, cfg.seed())?;
            if let Some(eps) = cfg.eps {
                let third = memory_estimates(cfg, &map, &[eps / 3.0])?.remove(0);
                let at_third = estimate_modulus(&map, third.m_hat, &m.deltas, b, m.samples, cfg.seed())?;
                let inv_third = inverse_modulus(&at_third.table(), eps / 3.0)?;
                let delta = afm_to_fading_bound(third.m_hat, inv_third, w, eps)?;
                let m_hat = memory_estimates(cfg, &map, &[eps])?.remove(0).m_hat;
                let m_bound = fading_to_afm_bound(&rep.table(), w, b, eps, m.max_m).ok();
                results["conversions"] = json!({
                    "eps": eps,
                    "m_star_third": third.m_hat,
                    "inverse_modulus_third": inv_third,
                    "fading_delta_lower_bound": delta,
                    "m_upper_bound": m_bound,
                    "m_hat": m_hat,
                });
            }
            results["fading"] = to_value(&rep);
            Some(rep)
        }
        None => None,
    };
    for (i, d) in m.deltas.iter().enumerate() {
        let alpha = fading.as_ref().map(|f| f.values[i]);
        table.push(vec![d.cell(), forward.values[i].cell(), alpha.cell()]);
    }
    let witnesses = json!({
        "forward": forward.witnesses,
        "fading": fading.as_ref().map(|f| &f.witnesses),
    });
    Ok(TaskOutput { results, witnesses, tables: vec![table] })
}

#[derive(Debug, Clone, Serialize)]
pub struct Certification {
    pub method: &'static str,
    pub certificate: DemidovichCertificate,
    pub lure: Option<LureCertification>,
    pub lyapunov: LyapunovReport,
    pub trajectory: LyapunovReport,
}

/// Obtains and verifies a Demidovich certificate: the configured one, the
/// bounded-real pipeline for Lur'e systems, or the builtin closed form.
/// The Lyapunov decrease checks must agree with the verification.
pub fn certify(cfg: &ExperimentConfig, spec: &SystemSpec, sys: &StateSpaceSystem) -> Result<Certification, CliError> {
    let c = &cfg.certify;
    let (method, certificate, lure) = if let Some(explicit) = &c.certificate {
        ("explicit", verify_demidovich(sys, &explicit.p, explicit.mu, &c.grid)?, None)
    } else if let SystemSpec::Lure { .. } = spec {
        let lc = lure_certify(&spec.lure_system()?, &c.grid, &c.search)?;
        ("bounded_real", lc.certificate.clone(), Some(lc))
    } else if let Some((p, mu)) = spec.candidate_certificate(c.mu) {
        ("closed_form", verify_demidovich(sys, &p, mu, &c.grid)?, None)
    } else {
        return Err(Error::AssumptionFailed {
            assumption: "contraction",
            detail: format!("no certificate candidate for `{spec}`; supply certify.certificate"),
        }
        .into());
    };
    let lyapunov = lyapunov_decrease_check(sys, &certificate, &c.grid, c.lyapunov_samples, cfg.seed())?;
    let trajectory =
        lyapunov_trajectory_check(sys, &certificate, &c.grid, c.trajectory_trials, c.trajectory_horizon, cfg.seed())?;
    if !lyapunov.passed() || !trajectory.passed() {
        return Err(Error::CrossCheckFailed(format!(
            "certificate verified but {} one-step and {} trajectory Lyapunov violations",
            lyapunov.violations, trajectory.violations
        ))
        .into());
    }
    Ok(Certification { method, certificate, lure, lyapunov, trajectory })
}

fn certify_task(cfg: &ExperimentConfig) -> TaskResult {
    let spec = cfg.require_system()?;
    let sys = spec.build()?;
    let cert = certify(cfg, &spec, &sys)?;
    let c = &cert.certificate;
    let mut table = Table::new("certificate", &["method", "mu", "kappa", "margin", "lyapunov_worst_ratio"]);
    table.push(vec![
        cert.method.cell(),
        c.mu.cell(),
        c.kappa.cell(),
        c.margin.cell(),
        cert.lyapunov.worst_ratio.cell(),
    ]);
    let witnesses = json!({ "lyapunov_worst_point": cert.lyapunov.worst_point });
    let results = json!({ "system": spec.to_string(), "certification": cert });
    Ok(TaskOutput { results, witnesses, tables: vec![table] })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn bounds(cfg: &ExperimentConfig) -> TaskResult {
    let spec = cfg.require_system()?;
    let sys = spec.build()?;
    let cert = certify(cfg, &spec, &sys)?;
    let c = &cert.certificate;
    let b = &cfg.bounds;
    let lip = sys.lipschitz();
    let ball_check = compute_invariant_ball(&sys, c, cfg.radius, b.ball_trajectories, b.ball_horizon, cfg.seed())?;
    let beta = sys.exact_beta().cloned().unwrap_or_else(|| c.beta());
    let eps = cfg.eps_values()?;
    let map = io_map_of(sys);
    let estimates = memory_estimates(cfg, &map, &eps)?;

    let mut table =
        Table::new("bounds", &["eps", "m_hat", "thm3_m", "thm4_m_star", "thm4_m_ceil", "thm4_omega", "thm4_dominates"]);
    let mut rows = Vec::new();
    for est in &estimates {
        let e = est.epsilon;
        let thm4 = thm4_bounds(c.kappa, c.mu, lip.l_f, lip.l_g, cfg.radius, e, b.delta)
            .ok()
            .filter(|t| t.m_star_bound.is_finite());
        let thm3 = thm3_memory_bound(&beta, ball_check.ball.diam(), lip.l_g, e, b.m_max).ok();
        let dominates = thm4.map(|t| t.m_star_ceil >= est.m_hat as u64);
        table.push(vec![
            e.cell(),
            est.m_hat.cell(),
            thm3.cell(),
            thm4.map(|t| t.m_star_bound).cell(),
            thm4.map(|t| t.m_star_ceil).cell(),
            thm4.and_then(|t| finite(t.omega_bound)).cell(),
            dominates.cell(),
        ]);
        rows.push(json!({
            "eps": e,
            "m_hat": est.m_hat,
            "thm3_m": thm3,
            "thm4": thm4,
            "thm4_dominates": dominates,
        }));
    }
    let results = json!({
        "system": spec.to_string(),
        "certificate": cert.certificate,
        "certificate_method": cert.method,
        "lipschitz": { "l_f": finite(lip.l_f), "l_g": finite(lip.l_g) },
        "invariant_ball": ball_check,
        "beta": beta,
        "rows": rows,
    });
    let witnesses = Value::Array(estimates.iter().map(|e| json!({ "eps": e.epsilon, "witness": e.witness })).collect());
    Ok(TaskOutput { results, witnesses, tables: vec![table] })
}

/// Sup over the sampler's inputs of `|(F u)_t - (F^ u)_t|`.
fn end_to_end_error(cfg: &ExperimentConfig, map: &dyn IoMap, model: &TcnModel) -> Result<f64, CliError> {
    let h = cfg.sampler.horizon;
    let mut worst = 0.0_f64;
    for (_, u) in cfg.sampler.draw(ball(cfg)?, cfg.seed()) {
        let y = map.eval_all(&u, h)?;
        let y_hat = model.eval_all(&u, h)?;
        worst = y.iter().zip(&y_hat).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
struct FitOutcome {
    m: usize,
    report: FitReport,
    memory_tail: f64,
    end_to_end_error: f64,
    /// `end_to_end <= holdout + tail`, up to round-off.
    triangle_inequality_holds: bool,
    model: TcnModel,
}

fn fit_at(cfg: &ExperimentConfig, map: &dyn IoMap, m: usize) -> Result<FitOutcome, CliError> {
    let f = &cfg.fit;
    let (model, report) = fit_tcn(map, m, cfg.radius, f.architecture, &f.train, cfg.seed())?;
    let (memory_tail, _) = memory_deviation(map, m, ball(cfg)?, &cfg.sampler, cfg.seed())?;
    let end_to_end_error = end_to_end_error(cfg, map, &model)?;
    let triangle_inequality_holds = end_to_end_error <= report.holdout_sup_error + memory_tail + 1e-9;
    Ok(FitOutcome { m, report, memory_tail, end_to_end_error, triangle_inequality_holds, model })
}

fn fit(cfg: &ExperimentConfig) -> TaskResult {
    let spec = cfg.require_system()?;
    let map = system_map(&spec)?;
    let m = match cfg.fit.m {
        Some(m) => m,
        None => memory_estimates(cfg, &map, &[cfg.gamma * cfg.require_eps()?])?[0].m_hat,
    };
    let out = fit_at(cfg, &map, m)?;
    let mut table = Table::new(
        "fit",
        &["m", "width", "depth", "params", "train_sup_error", "holdout_sup_error", "memory_tail", "end_to_end_error"],
    );
    let r = &out.report;
    table.push(vec![
        m.cell(),
        r.architecture.width.cell(),
        r.architecture.depth.cell(),
        r.params.cell(),
        r.train_sup_error.cell(),
        r.holdout_sup_error.cell(),
        out.memory_tail.cell(),
        out.end_to_end_error.cell(),
    ]);
    let results = json!({ "system": spec.to_string(), "fit": out });
    Ok(TaskOutput { results, witnesses: Value::Null, tables: vec![table] })
}

fn compare(cfg: &ExperimentConfig) -> TaskResult {
    let c = &cfg.compare;
    let eps = cfg.eps_values()?;
    let report = compare_parsimony(c.c, c.lambda, cfg.radius, &eps, c.d_max)?;
    let mut rows = Table::new("parsimony", &["eps", "tcn_m", "tcn_affine_params", "volterra_degree", "volterra_terms"]);
    for r in &report.rows {
        rows.push(vec![
            r.eps.cell(),
            r.tcn_m.cell(),
            r.tcn_affine_params.cell(),
            r.volterra_degree.cell(),
            r.volterra_terms.cell(),
        ]);
    }
    let mut degrees = Table::new("volterra_degree_errors", &["degree", "sup_error", "degree_times_error"]);
    for &(d, e) in &report.degree_errors {
        degrees.push(vec![d.cell(), e.cell(), (d as f64 * e).cell()]);
    }
    Ok(TaskOutput { results: to_value(&report), witnesses: Value::Null, tables: vec![rows, degrees] })
}

fn check(cfg: &ExperimentConfig) -> TaskResult {
    let spec = cfg.require_system()?;
    let map = system_map(&spec)?;
    let b = ball(cfg)?;
    let ch = &cfg.check;
    let causality = check_causality(&map, b, ch.trials, ch.horizon, cfg.seed())?;
    let invariance = check_time_invariance(&map, b, ch.trials, ch.max_shift, ch.horizon, cfg.seed())?;
    let mut table = Table::new("checks", &["property", "declared", "passed", "violations"]);
    table.push(vec![
        "causal".cell(),
        map.declared_causal().cell(),
        causality.passed.cell(),
        causality.violations.len().cell(),
    ]);
    table.push(vec![
        "time_invariant".cell(),
        map.declared_time_invariant().cell(),
        invariance.passed.cell(),
        invariance.violations.len().cell(),
    ]);
    let witnesses = json!({
        "causality": causality.violations.first(),
        "time_invariance": invariance.violations.first(),
    });
    let results = json!({
        "system": spec.to_string(),
        "causality": causality,
        "time_invariance": invariance,
        "declared_causal": map.declared_causal(),
        "declared_time_invariant": map.declared_time_invariant(),
    });
    Ok(TaskOutput { results, witnesses, tables: vec![table] })
}

/// certify, then the bound for `m*`, the context/depth plan, the empirical
/// horizon and a fitted TCN, summarized in one row.
fn pipeline(cfg: &ExperimentConfig) -> TaskResult {
    let spec = cfg.require_system()?;
    let eps = cfg.require_eps()?;
    let sys = spec.build()?;
    let cert = certify(cfg, &spec, &sys)?;
    let c = &cert.certificate;
    let lip = sys.lipschitz();
    let thm4 = thm4_bounds(c.kappa, c.mu, lip.l_f, lip.l_g, cfg.radius, eps, cfg.bounds.delta)?;
    let map = io_map_of(sys);
    let b = ball(cfg)?;

    let m_star = |e: f64| -> afm_core::Result<usize> {
        estimate_memory_horizon(&map, e, b, cfg.t_max, &cfg.sampler, cfg.seed()).map(|est| est.m_hat)
    };
    let md = &cfg.modulus;
    let inv_mod = |m: usize, e: f64| -> afm_core::Result<f64> {
        let rep = estimate_modulus(&map, m, &md.deltas, b, md.samples, cfg.seed())?;
        inverse_modulus(&rep.table(), e)
    };
    let dc = cfg.fit.depth_constant;
    let plan = theorem1_plan(eps, cfg.gamma, cfg.radius, &m_star, &inv_mod, dc)?;
    let tradeoff = tradeoff_table(eps, &cfg.gamma_grid, cfg.radius, &m_star, &inv_mod, dc)?;
    let m_hat = m_star(eps)?;
    let fitted = fit_at(cfg, &map, plan.m)?;

    let mut row = Table::new(
        "pipeline",
        &[
            "eps",
            "thm4_m_star",
            "thm4_m_ceil",
            "m_hat",
            "plan_m",
            "plan_width",
            "plan_log10_depth",
            "fit_width",
            "fit_depth",
            "holdout_sup_error",
            "end_to_end_error",
            "within_eps",
        ],
    );
    let within_eps = fitted.end_to_end_error <= eps;
    row.push(vec![
        eps.cell(),
        finite(thm4.m_star_bound).cell(),
        thm4.m_star_ceil.cell(),
        m_hat.cell(),
        plan.m.cell(),
        plan.width.cell(),
        finite(plan.log10_depth_bound).cell(),
        fitted.report.architecture.width.cell(),
        fitted.report.architecture.depth.cell(),
        fitted.report.holdout_sup_error.cell(),
        fitted.end_to_end_error.cell(),
        within_eps.cell(),
    ]);
    let mut trade = Table::new("tradeoff", &["gamma", "m", "width", "delta", "log10_depth_bound"]);
    for p in &tradeoff {
        trade.push(vec![
            p.gamma.cell(),
            p.m.cell(),
            p.width.cell(),
            p.delta.cell(),
            finite(p.log10_depth_bound).cell(),
        ]);
    }
    let results = json!({
        "system": spec.to_string(),
        "eps": eps,
        "certificate": cert.certificate,
        "certificate_method": cert.method,
        "thm4": thm4,
        "plan": plan,
        "tradeoff": tradeoff,
        "m_hat": m_hat,
        "fit": fitted,
        "within_eps": within_eps,
    });
    Ok(TaskOutput {
        results,
        witnesses: json!({ "lyapunov_worst_point": cert.lyapunov.worst_point }),
        tables: vec![row, trade],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_geometric_horizon() {
        let pts = [(0.1, 4), (0.01, 7), (0.001, 10)];
        let s = log_slope(&pts).unwrap();
        assert!((s - 3.0 / 10f64.ln()).abs() < 1e-12);
        assert_eq!(log_slope(&pts[..1]), None);
    }
}
