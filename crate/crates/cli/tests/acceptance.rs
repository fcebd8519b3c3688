//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use afm_core::iomap::{
    afm_to_fading_bound, check_time_invariance, estimate_fading_modulus, estimate_memory_horizon, estimate_modulus,
    fading_to_afm_bound, inverse_modulus, Branch, InputFamily, IoMap, SamplerSpec, WeightingSequence,
};
use afm_core::rng;
use afm_core::stability::{
    dtbr_solve, hinf_norm, lure_certify, lyapunov_decrease_check, verify_demidovich, GridSpec, R0Search,
};
use afm_core::statespace::{io_map_of, prop2_check, thm4_bounds, SystemSpec};
use afm_core::tcn::{
    compare_parsimony, fit_tcn, relu_filter_map, relu_polynomial_errors, truncate_filter, Architecture, ExpFilter,
    Layer, ReluNet, TcnModel, TrainSpec,
};
use afm_core::{Error, InputBall, Sequence};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: afm_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ball() -> InputBall {
    InputBall::new(1.0).unwrap()
}

fn linear_spec() -> SystemSpec {
    "linear(0.5,0.5,1)".parse().unwrap()
}

/// `y_t` of `x+ = a x + b u, y = c x` from `x_0 = 0`, unrolled by hand.
fn linear_output(a: f64, b: f64, c: f64, u: &[f64], t: usize) -> f64 {
    let mut x = 0.0;
    for &us in &u[..t] {
        x = a * x + b * us;
    }
    c * x
}

fn memory_oracle() -> Outcome {
    let map = io_map_of(core(linear_spec().build())?);
    let sampler = SamplerSpec::default();
    let est = core(estimate_memory_horizon(&map, 0.01, ball(), 200, &sampler, 1))?;
    ensure(est.m_hat == 7, || format!("m_hat = {}, expected 7", est.m_hat))?;
    ensure(est.witness.family == InputFamily::Constant, || format!("witness family {:?}", est.witness.family))?;
    ensure(est.witness.input.values().iter().all(|&v| v == 1.0), || "witness is not the all-ones input".into())?;
    // geometric tail: with all ones the windowed output drops the lags past m
    let n = sampler.horizon;
    let ones = vec![1.0; n + 1];
    for (m, &dev) in est.deviations.iter().enumerate() {
        let mut windowed = ones.clone();
        windowed[..n - m].iter_mut().for_each(|v| *v = 0.0);
        let exact = linear_output(0.5, 0.5, 1.0, &ones, n) - linear_output(0.5, 0.5, 1.0, &windowed, n);
        ensure((dev - exact).abs() < 1e-12, || format!("deviation at m = {m}: {dev} vs {exact}"))?;
        ensure((dev - 0.5f64.powi(m as i32)).abs() < 1e-12, || format!("m = {m}: {dev} is not 2^-{m}"))?;
    }
    Ok(format!("m_hat = 7, worst deviation {:.6e} = 2^-7 on the all-ones input", est.worst_deviation))
}

fn memory_bound_dominance() -> Outcome {
    let formula = 2.0 * (800.0f64).ln() / 4.0f64.ln();
    let b = core(thm4_bounds(1.0, 0.25, 1.0, 1.0, 1.0, 0.01, 0.0))?;
    ensure((b.m_star_bound - formula).abs() < 1e-6, || format!("{} vs {formula}", b.m_star_bound))?;
    ensure((b.m_star_bound - 9.64).abs() < 5e-3, || format!("bound {} is not about 9.64", b.m_star_bound))?;
    ensure(b.m_star_ceil == 10, || format!("ceil = {}", b.m_star_ceil))?;

    let sys = core(linear_spec().build())?;
    let lip = sys.lipschitz();
    let map = io_map_of(sys);
    let mut rows = Vec::new();
    for k in 1..=4 {
        let eps = 10f64.powi(-k);
        let m_hat = core(estimate_memory_horizon(&map, eps, ball(), 200, &SamplerSpec::default(), 1))?.m_hat;
        for l_f in [1.0, lip.l_f] {
            let bound = core(thm4_bounds(1.0, 0.25, l_f, lip.l_g, 1.0, eps, 0.0))?;
            ensure(bound.m_star_ceil as usize >= m_hat, || {
                format!("eps = {eps}, L_f = {l_f}: bound {} below m_hat {m_hat}", bound.m_star_bound)
            })?;
        }
        rows.push(format!("{eps:e}:{m_hat}"));
    }
    Ok(format!("bound {:.6} (ceil 10) >= m_hat on eps grid [{}]", b.m_star_bound, rows.join(", ")))
}

fn incremental_bound_inequality() -> Outcome {
    let sys = core(linear_spec().build())?;
    let beta = sys.exact_beta().cloned().ok_or("linear builtin has no exact beta")?;
    let mut worst_ratio = 0.0_f64;
    for i in 0..1000u64 {
        let mut g = rng::tagged(42, 0xacc3, i);
        let t = g.gen_range(1..=50);
        let u = Sequence::new((0..=t).map(|_| g.gen_range(-1.0..=1.0)).collect()).unwrap();
        let ut = Sequence::new((0..=t).map(|_| g.gen_range(-1.0..=1.0)).collect()).unwrap();
        let xi = DVector::from_element(1, g.gen_range(-2.0..=2.0));
        let c = core(prop2_check(&sys, &beta, &u, &ut, &xi, t))?;
        ensure(c.lhs <= c.rhs * (1.0 + 1e-12) + 1e-15, || format!("triple {i}: lhs {} > rhs {}", c.lhs, c.rhs))?;
        if c.rhs > 0.0 {
            worst_ratio = worst_ratio.max(c.lhs / c.rhs);
        }
    }
    // equality case: u = 1, u~ = 0, t = 3 from the origin
    let ones = Sequence::constant(1.0, 4).unwrap();
    let zeros = Sequence::zeros(4);
    let c = core(prop2_check(&sys, &beta, &ones, &zeros, &DVector::zeros(1), 3))?;
    let lhs_oracle = linear_output(0.5, 0.5, 1.0, ones.values(), 3);
    let rhs_oracle: f64 = (0..3).map(|s| 0.5 * 0.5f64.powi(2 - s)).sum();
    ensure((lhs_oracle - 0.875).abs() < 1e-15 && (rhs_oracle - 0.875).abs() < 1e-15, || "oracle mismatch".into())?;
    ensure((c.lhs - 0.875).abs() < 1e-12 && (c.rhs - 0.875).abs() < 1e-12, || {
        format!("equality case gave lhs {} rhs {}", c.lhs, c.rhs)
    })?;
    Ok(format!("0 violations in 1000 triples (max lhs/rhs {worst_ratio:.4}); equality case 0.875 = 0.875"))
}

fn demidovich_consistency() -> Outcome {
    let grid = GridSpec::default();
    let mut checked = Vec::new();
    for name in ["linear(0.5,0.5,1)", "contractive_tanh(0.5,1)", "tapped_delay(1,0.5,5)", "lure(0.5,1,1,tanh:0.2,0.25)"]
    {
        let spec: SystemSpec = name.parse().map_err(|e: Error| e.to_string())?;
        let sys = core(spec.build())?;
        let cert = match spec.candidate_certificate(0.5) {
            Some((p, mu)) => core(verify_demidovich(&sys, &p, mu, &grid))?,
            None => core(lure_certify(&core(spec.lure_system())?, &grid, &R0Search::default()))?.certificate,
        };
        let lyap = core(lyapunov_decrease_check(&sys, &cert, &grid, 10_000, 7))?;
        ensure(lyap.passed(), || format!("{name}: {} Lyapunov violations", lyap.violations))?;
        checked.push(format!("{name} (mu {:.3})", cert.mu));
    }
    let unstable = core("linear(1.1,1,1)".parse::<SystemSpec>().and_then(|s| s.build()))?;
    match verify_demidovich(&unstable, &DMatrix::identity(1, 1), 0.99, &grid) {
        Err(Error::CriterionViolated { margin, .. }) => {
            let expected = 1.1 * 1.1 - 0.99;
            ensure((margin - expected).abs() < 1e-12, || format!("margin {margin}, expected {expected}"))?;
            Ok(format!("{}; a = 1.1 rejected with margin {margin:.4}", checked.join(", ")))
        }
        other => Err(format!("unstable system was not rejected: {other:?}")),
    }
}

/// Smallest root of `p^2 - (1 - a^2 + c^2) p + c^2 = 0`: the scalar
/// bounded-real solution for the scaled system with `B = 1`.
fn scalar_bounded_real(a_hat: f64, c_hat: f64) -> f64 {
    let s = 1.0 - a_hat * a_hat + c_hat * c_hat;
    (s - (s * s - 4.0 * c_hat * c_hat).sqrt()) / 2.0
}

struct BoundedReal<'a> {
    r0: f64,
    p: &'a DMatrix<f64>,
    l: &'a DMatrix<f64>,
    w: &'a DMatrix<f64>,
}

/// Largest entry of the three bounded-real equation residuals, evaluated
/// directly from `(P, L, W)`.
fn bounded_real_residuals(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    gamma: f64,
    BoundedReal { r0, p, l, w }: BoundedReal,
) -> f64 {
    let r2 = r0 * r0;
    let e1 = a.transpose() * p * a + c.transpose() * c * (gamma * gamma) + l.transpose() * l * r2 - p * r2;
    let e2 = b.transpose() * p * b + w.transpose() * w - DMatrix::identity(1, 1);
    let e3 = a.transpose() * p * b + l.transpose() * w * r0;
    e1.amax().max(e2.amax()).max(e3.amax())
}

fn lure_pipeline() -> Outcome {
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let (a, b, c) = (one(0.5), one(1.0), one(1.0));
    let h = core(hinf_norm(&a, &b, &c, 1e-12))?;
    // refine a uniform angle grid until the maximum settles
    let mut grid_max = 0.0;
    for k in 8..=18 {
        let n = 1usize << k;
        grid_max = (0..n)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / n as f64;
                1.0 / ((th.cos() - 0.5).powi(2) + th.sin().powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
    }
    ensure((h - 2.0).abs() < 1e-6 && (h - grid_max).abs() < 1e-6, || format!("hinf {h}, grid {grid_max}"))?;

    let sol = core(dtbr_solve(&a, &b, &c, 0.25, &R0Search::default()))?;
    let p_oracle = scalar_bounded_real(0.5 / sol.r0, 0.25 / sol.r0);
    ensure((sol.p[(0, 0)] - p_oracle).abs() < 1e-10, || format!("P {} vs closed form {p_oracle}", sol.p[(0, 0)]))?;
    let w_oracle = (1.0 - p_oracle).sqrt();
    let l_oracle = -0.5 * p_oracle / (sol.r0 * w_oracle);
    let scalar_res = bounded_real_residuals(
        &a,
        &b,
        &c,
        0.25,
        BoundedReal { r0: sol.r0, p: &one(p_oracle), l: &one(l_oracle), w: &one(w_oracle) },
    );
    let res = bounded_real_residuals(&a, &b, &c, 0.25, BoundedReal { r0: sol.r0, p: &sol.p, l: &sol.l, w: &sol.w });
    ensure(res < 1e-10 && scalar_res < 1e-10, || format!("scalar residual {res} (oracle {scalar_res})"))?;

    let a2 = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]);
    let b2 = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
    let c2 = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let sol2 = core(dtbr_solve(&a2, &b2, &c2, 0.25, &R0Search::default()))?;
    let res2 =
        bounded_real_residuals(&a2, &b2, &c2, 0.25, BoundedReal { r0: sol2.r0, p: &sol2.p, l: &sol2.l, w: &sol2.w });
    ensure(res2 < 1e-6, || format!("2-state residual {res2}"))?;

    let spec: SystemSpec = "lure(0.5,1,1,tanh:0.2,0.25)".parse().map_err(|e: Error| e.to_string())?;
    let out = core(lure_certify(&core(spec.lure_system())?, &GridSpec::default(), &R0Search::default()))?;
    ensure(out.certificate.mu > 0.25, || format!("mu = {}", out.certificate.mu))?;
    Ok(format!(
        "hinf {h:.9}, scalar residual {res:.1e}, 2-state residual {res2:.1e}, mu {:.4} > 0.25",
        out.certificate.mu
    ))
}

fn realizable_target() -> TcnModel {
    let mut net = ReluNet::new(vec![
        Layer::new(3, 3, vec![0.8, -0.5, 0.3, -0.4, 0.9, 0.2, 0.5, 0.5, -0.7], vec![0.1, -0.2, 0.05]).unwrap(),
        Layer::new(1, 3, vec![1.0, -0.6, 0.8], vec![0.0]).unwrap(),
    ])
    .unwrap();
    net.center_at_zero();
    TcnModel::new(2, net).unwrap()
}

fn tcn_guarantees() -> Outcome {
    let horizon = 80;
    let filter = core(ExpFilter::geometric(1.0, 0.5, horizon + 1))?;
    let (model, bound) = core(truncate_filter(&filter, 10))?;
    ensure((bound - 2f64.powi(-10)).abs() < 1e-15, || format!("bound {bound}"))?;
    let target = core(relu_filter_map(1.0, 0.5, horizon))?;
    let sup_gap = |u: &Sequence| -> Result<f64, String> {
        let y = core(target.eval_all(u, horizon))?;
        let y_hat = core(model.eval_all(u, horizon))?;
        Ok(y.iter().zip(&y_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    };
    let mut random_worst = 0.0_f64;
    for i in 0..1000 {
        let mut g = rng::tagged(9, 0xacc6, i);
        random_worst = random_worst.max(sup_gap(&ball().sample(horizon + 1, &mut g))?);
    }
    let extremal = sup_gap(&Sequence::constant(1.0, horizon + 1).unwrap())?;
    ensure(random_worst <= bound + 1e-12, || format!("random inputs reach {random_worst}"))?;
    ensure((extremal - bound).abs() <= 1e-12, || format!("all-ones gap {extremal} vs {bound}"))?;

    let (_, report) =
        core(fit_tcn(&realizable_target(), 2, 1.0, Architecture { width: 3, depth: 2 }, &TrainSpec::default(), 7))?;
    ensure(report.holdout_sup_error < 1e-6, || format!("held-out sup error {}", report.holdout_sup_error))?;
    Ok(format!(
        "truncation gap {extremal:.6e} = 2^-10 (random max {random_worst:.3e}); realizable fit held-out {:.2e}",
        report.holdout_sup_error
    ))
}

fn random_centered_tcn(m: usize, width: usize, seed: u64) -> TcnModel {
    let mut g = rng::tagged(seed, 0xacc7, 0);
    let mut draw = |n: usize| (0..n).map(|_| g.gen_range(-1.0..=1.0)).collect::<Vec<f64>>();
    let mut net = ReluNet::new(vec![
        Layer::new(width, m + 1, draw(width * (m + 1)), draw(width)).unwrap(),
        Layer::new(width, width, draw(width * width), draw(width)).unwrap(),
        Layer::new(1, width, draw(width), draw(1)).unwrap(),
    ])
    .unwrap();
    net.center_at_zero();
    TcnModel::new(m, net).unwrap()
}

fn time_invariance_contract() -> Outcome {
    let filter = core(ExpFilter::geometric(1.0, 0.5, 11))?;
    let (truncated, _) = core(truncate_filter(&filter, 10))?;
    let mut models = vec![truncated.clone(), realizable_target()];
    models.extend((0..3).map(|s| random_centered_tcn(4, 5, s)));
    for (i, model) in models.iter().enumerate() {
        ensure(model.zero_at_zero, || format!("model {i} is not centred"))?;
        let rep = core(check_time_invariance(model, ball(), 500, 10, 30, 11))?;
        ensure(rep.passed, || format!("model {i}: {} violations", rep.violation_count))?;
    }

    let mut net = truncated.net.clone();
    let last = net.layers().len() - 1;
    net.layers_mut()[last].bias[0] = 0.1;
    let offset = core(TcnModel::new(10, net))?;
    ensure(!offset.zero_at_zero && (offset.net.eval_unchecked(&[0.0; 11]) - 0.1).abs() < 1e-15, || {
        "offset model does not output 0.1 at the origin".into()
    })?;
    let rep = core(check_time_invariance(&offset, ball(), 500, 10, 30, 11))?;
    ensure(!rep.passed, || "offset model passed".into())?;
    ensure(rep.shifted_support_violations == 0, || {
        format!("{} violations on the t >= k branch", rep.shifted_support_violations)
    })?;
    ensure(rep.before_support_violations == rep.violation_count, || "violations outside t < k".into())?;
    for v in &rep.violations {
        let k = v.shift.unwrap_or(0);
        ensure(v.branch == Some(Branch::BeforeSupport) && v.t < k && v.expected == 0.0, || format!("{v:?}"))?;
        ensure((v.got - 0.1).abs() < 1e-12, || format!("violation value {}", v.got))?;
    }
    Ok(format!("{} centred TCNs pass; offset model fails {} times, all with t < k", models.len(), rep.violation_count))
}

/// Sup error of the least-squares degree-`d` fit to ReLU on a dense uniform
/// grid of `[-r, r]`, in the Legendre basis, solved by QR.
fn dense_lsq_relu_error(r: f64, d: usize, points: usize) -> f64 {
    let xs: Vec<f64> = (0..points).map(|i| -r + 2.0 * r * i as f64 / (points - 1) as f64).collect();
    let basis = DMatrix::from_fn(points, d + 1, |i, k| {
        let s = xs[i] / r;
        let (mut p0, mut p1) = (1.0, s);
        match k {
            0 => p0,
            1 => p1,
            _ => {
                for n in 1..k {
                    let n = n as f64;
                    let p2 = ((2.0 * n + 1.0) * s * p1 - n * p0) / (n + 1.0);
                    p0 = p1;
                    p1 = p2;
                }
                p1
            }
        }
    });
    let y = DVector::from_iterator(points, xs.iter().map(|x| x.max(0.0)));
    let qr = basis.clone().qr();
    let qty = qr.q().transpose() * &y;
    let coef = qr.r().solve_upper_triangular(&qty).expect("full column rank");
    (basis * coef - y).amax()
}

fn volterra_comparison() -> Outcome {
    let degrees: Vec<usize> = (2..=20).collect();
    let library = core(relu_polynomial_errors(2.0, &degrees, 4096))?;
    let mut min_scaled = f64::INFINITY;
    for (&d, &(ld, lib_err)) in degrees.iter().zip(&library) {
        let oracle = dense_lsq_relu_error(2.0, d, 8001);
        ensure(ld == d, || "degree order".into())?;
        ensure(oracle > 0.3 / d as f64, || format!("oracle error {oracle} at d = {d}"))?;
        ensure(lib_err > 0.3 / d as f64, || format!("library error {lib_err} at d = {d}"))?;
        min_scaled = min_scaled.min(oracle * d as f64);
    }
    let rep = core(compare_parsimony(1.0, 0.5, 1.0, &[0.01], 200))?;
    let row = &rep.rows[0];
    // smallest m with 2^-m <= 0.01
    let m_oracle = (0..).find(|&m| 0.5f64.powi(m) <= 0.01).unwrap() as usize;
    ensure(row.tcn_m == m_oracle && row.tcn_affine_params == m_oracle + 2, || {
        format!("tcn m {} params {}", row.tcn_m, row.tcn_affine_params)
    })?;
    ensure(row.tcn_affine_params == 9, || format!("params {}", row.tcn_affine_params))?;
    Ok(format!(
        "min d * err over d = 2..20 is {min_scaled:.3} > 0.3; TCN at eps 0.01 uses m = {} and {} parameters, Volterra degree {:?}",
        row.tcn_m, row.tcn_affine_params, row.volterra_degree
    ))
}

fn fading_memory_cross_check() -> Outcome {
    let map = io_map_of(core(linear_spec().build())?);
    let w = core(WeightingSequence::geometric(0.5))?;
    let deltas: Vec<f64> = (0..=60).map(|i| 2.0 * 10f64.powf(-6.0 * (1.0 - i as f64 / 60.0))).collect();
    let t_max = 30;
    let alpha = core(estimate_fading_modulus(&map, &w, &deltas, ball(), t_max, 400, 3))?.table();
    let sampler = SamplerSpec::default();
    let mut rows = Vec::new();
    for eps in [0.1, 0.05, 0.01, 0.001] {
        let m_hat = core(estimate_memory_horizon(&map, eps, ball(), 200, &sampler, 1))?.m_hat;
        let m_bound = core(fading_to_afm_bound(&alpha, &w, ball(), eps, 200))?;
        ensure(m_bound >= m_hat, || format!("eps {eps}: bound {m_bound} < m_hat {m_hat}"))?;

        let m_third = core(estimate_memory_horizon(&map, eps / 3.0, ball(), 200, &sampler, 1))?.m_hat;
        let omega = core(estimate_modulus(&map, m_third, &deltas, ball(), 400, 5))?.table();
        let inv = core(inverse_modulus(&omega, eps / 3.0))?;
        let delta = core(afm_to_fading_bound(m_third, inv, &w, eps))?;
        ensure(delta > 0.0, || format!("eps {eps}: zero delta"))?;
        let replay = core(estimate_fading_modulus(&map, &w, &[delta], ball(), t_max, 400, 4))?;
        let a = replay.values[0];
        ensure(a <= 1.1 * eps, || format!("eps {eps}: alpha({delta:e}) = {a} > eps"))?;
        rows.push(format!("eps {eps}: m {m_bound} >= {m_hat}, alpha({delta:.2e}) = {a:.2e}"));
    }
    Ok(rows.join("; "))
}

fn run_afm(config: &Path, task: &str, out: &Path, threads: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_afm"))
        .arg(task)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("AFM_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!("afm {task} exited {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr))
    })
}

/// Everything in a run directory that must not depend on the run: the
/// results and witnesses of report.json and every CSV table.
fn numerics(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut out =
        vec![("results".to_string(), v["results"].to_string()), ("witnesses".to_string(), v["witnesses"].to_string())];
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    for n in names {
        out.push((n.clone(), std::fs::read_to_string(dir.join(&n)).map_err(|e| e.to_string())?));
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = serde_json::json!({
        "seed": 2024,
        "system": "linear(0.5,0.5,1)",
        "eps": 0.01,
        "eps_grid": [0.1, 0.01],
        "modulus": { "t": 5, "samples": 200, "fading_t_max": 10,
                     "weighting": { "kind": "geometric", "rho": 0.5 } },
        "certify": { "lyapunov_samples": 2000 },
        "fit": { "m": 4, "architecture": { "width": 3, "depth": 2 },
                 "train": { "train_samples": 300, "holdout_samples": 300, "adam_steps": 300,
                            "lm_iterations": 20, "restarts": 3 } },
        "compare": { "d_max": 40 },
        "check": { "trials": 100 }
    });
    let path = tmp.path().join("config.json");
    std::fs::write(&path, config.to_string()).map_err(|e| e.to_string())?;
    let tasks = ["memory", "modulus", "certify", "bounds", "fit-tcn", "compare", "check", "simulate"];
    for task in tasks {
        let mut runs = Vec::new();
        for (i, threads) in [1, 4, 4].into_iter().enumerate() {
            let out = tmp.path().join(format!("{task}-{i}"));
            run_afm(&path, task, &out, threads)?;
            runs.push(numerics(&out)?);
        }
        for other in &runs[1..] {
            ensure(other.len() == runs[0].len(), || format!("{task}: different table sets"))?;
            for (a, b) in runs[0].iter().zip(other) {
                ensure(a == b, || format!("{task}: {} differs between runs", a.0))?;
            }
        }
    }
    Ok(format!("{} tasks reproduce byte-identical numerics with AFM_THREADS = 1, 4, 4", tasks.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("memory-horizon oracle", memory_oracle, Some(Duration::from_secs(5))),
        ("memory bound dominance", memory_bound_dominance, None),
        ("incremental bound inequality", incremental_bound_inequality, None),
        ("Demidovich/Lyapunov consistency", demidovich_consistency, None),
        ("Lur'e pipeline", lure_pipeline, Some(Duration::from_secs(10))),
        ("TCN guarantees", tcn_guarantees, None),
        ("time-invariance contract", time_invariance_contract, None),
        ("Volterra comparison", volterra_comparison, None),
        ("fading memory cross-check", fading_memory_cross_check, None),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut outcome = check();
        let took = start.elapsed();
        if let (Ok(_), Some(limit)) = (&outcome, limit) {
            if took > limit {
                outcome = Err(format!("took {took:.2?}, limit {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
