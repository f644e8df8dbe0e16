//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{bias_only_config, compare_planted, hover_loop, planted_problem, planted_xi, random_problem, HoverArm};
use gustbench::control::{estimate_disturbance, rls_update, AdaptationParams, AdaptationState};
use gustbench::harness::{collect, evaluate, identify, ControllerKind, ExperimentConfig, WindConfig};
use gustbench::metrics::compute_stats;
use gustbench::rng::GaussianSource;
use gustbench::sim::{step, ControlCommand, VehicleParams, VehicleState};
use gustbench::sindy::{solve_sr3, solve_stlsq, EqualityConstraints, Regularizer, Sr3Settings};
use gustbench::trajectory::TrajectoryKind;
use gustbench::wind::{burst_indicator, ou_step, OUParams, WindCompositionParams, WindPreset, WindState};
use nalgebra::{DMatrix, DVector, Vector3};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Outcome {
    let secs = elapsed.as_secs_f64();
    if secs < limit_s {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {secs:.1} s, limit {limit_s} s"))
    }
}

fn c1_planted_recovery() -> Outcome {
    let start = Instant::now();
    let xi = planted_xi();
    let data = planted_problem(&xi, 20_000, 1e-3, 2024);
    let sr3 = solve_sr3(&data, &Sr3Settings::default()).map_err(|e| e.to_string())?;
    let stlsq = solve_stlsq(&data, 1e-3, 20).map_err(|e| e.to_string())?;
    let (s_ok, s_err) = compare_planted(&xi, &sr3.model.xi);
    let (t_ok, t_err) = compare_planted(&xi, &stlsq.model.xi);
    let detail = format!(
        "sr3 support {s_ok} max rel err {s_err:.2e}; stlsq support {t_ok} max rel err {t_err:.2e}"
    );
    let ok = s_ok && t_ok && s_err < 0.01 && t_err < 0.01;
    check(ok, detail.clone())?;
    within(start.elapsed(), 10.0, detail)
}

fn random_constraints(n_terms: usize, rng: &mut GaussianSource) -> EqualityConstraints {
    let k = 2;
    let c = DMatrix::from_fn(k, 3 * n_terms, |_, _| rng.standard_normal());
    let d = DVector::from_fn(k, |_, _| 0.01 * rng.standard_normal());
    EqualityConstraints { c, d }
}

fn c2_sr3_monotone() -> Outcome {
    let mut rng = GaussianSource::new(77);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_resid = 0.0f64;
    let mut runs = 0;
    for p in 0..20 {
        let data = random_problem(120 + 10 * p, 500 + p as u64);
        let n = data.library.len();
        let settings = [
            Sr3Settings {
                lambda: 0.5,
                ..Sr3Settings::default()
            },
            Sr3Settings {
                lambda: 0.5,
                regularizer: Regularizer::L1,
                ..Sr3Settings::default()
            },
            Sr3Settings {
                lambda: 0.5,
                constraints: Some(EqualityConstraints::zero_entries(n, &[(0, 0), (0, 1), (0, 2)])),
                ..Sr3Settings::default()
            },
            Sr3Settings {
                lambda: 0.5,
                constraints: Some(random_constraints(n, &mut rng)),
                ..Sr3Settings::default()
            },
        ];
        for s in settings {
            let fit = solve_sr3(&data, &s).map_err(|e| format!("problem {p}: {e}"))?;
            runs += 1;
            for w in fit.objective.windows(2) {
                worst_rise = worst_rise.max(w[1] - w[0]);
            }
            if let Some(c) = &s.constraints {
                worst_resid = worst_resid.max(c.residual(&fit.w));
            }
        }
    }
    check(
        worst_rise <= 0.0 && worst_resid <= 1e-8,
        format!("{runs} runs; largest objective step {worst_rise:.2e}; max |Cw - d| {worst_resid:.2e}"),
    )
}

fn c3_ou_statistics() -> Outcome {
    let start = Instant::now();
    let ou = OUParams {
        theta: 1.5,
        sigma: 0.01,
        seed: 3,
        ..OUParams::default()
    };
    let dt = 0.004;
    let n = 1_000_000;
    let mut noise = GaussianSource::new(ou.seed);
    let mut ws = WindState::new(&ou);
    // Start from a stationary draw so every step counts.
    let sd = ou.stationary_variance().sqrt();
    ws.g = Vector3::new(noise.standard_normal(), noise.standard_normal(), noise.standard_normal()) * sd;
    let mut sum = Vector3::zeros();
    let mut sum_sq = Vector3::zeros();
    for _ in 0..n {
        ws = ou_step(&ws, &ou, dt, &mut noise);
        sum += ws.g;
        sum_sq += ws.g.component_mul(&ws.g);
    }
    let target = ou.stationary_variance();
    let mut worst = 0.0f64;
    let mut ratios = Vec::new();
    for a in 0..3 {
        let mean = sum[a] / n as f64;
        let var = sum_sq[a] / n as f64 - mean * mean;
        ratios.push(format!("{:.4}", var / target));
        worst = worst.max((var / target - 1.0).abs());
    }
    let elapsed = start.elapsed();

    let calm = OUParams { sigma: 0.0, ..ou };
    let mut st = WindState::new(&calm);
    st.g = Vector3::new(0.05, -0.02, 0.01);
    let g0 = st.g;
    let bound = 1.1 * calm.theta * dt / (2.0 * std::f64::consts::E) * g0.norm();
    let mut decay_err = 0.0f64;
    for k in 1..=2500 {
        st = ou_step(&st, &calm, dt, &mut noise);
        let exact = g0 * (-calm.theta * k as f64 * dt).exp();
        decay_err = decay_err.max((st.g - exact).norm());
    }
    let detail = format!(
        "variance/target per axis [{}]; zero-sigma decay error {decay_err:.2e} (bound {bound:.2e})",
        ratios.join(", ")
    );
    check(worst < 0.05 && decay_err <= bound, detail.clone())?;
    within(elapsed, 5.0, detail)
}

fn c4_duty_cycle() -> Outcome {
    let comp = WindCompositionParams::default();
    let mut details = Vec::new();
    let mut ok = true;
    for dt in [0.0025, 0.004] {
        let n = (100.0 * comp.cycle() / dt).round() as usize;
        let on: usize = (0..n).map(|k| burst_indicator(k as f64 * dt, &comp) as usize).sum();
        let frac = on as f64 / n as f64;
        let expect = comp.t_on / comp.cycle();
        let quantum = dt / comp.cycle();
        ok &= (frac - expect).abs() <= quantum;
        details.push(format!("dt {dt}: on-fraction {frac:.6} vs {expect:.6}"));
    }
    check(ok, details.join("; "))
}

fn c5_rls_convergence() -> Outcome {
    let params = AdaptationParams {
        lambda_leak: 0.0,
        q: 0.0,
        r: 0.5,
        r_bar: 0.5,
        p0: 1.0,
        ..AdaptationParams::default()
    };
    let dt = 0.0025;
    // Scalar closed form: error ratio (1 + p0 t / R_bar)^(-R_bar / R).
    let horizon = params.r_bar / params.p0 * (50f64.powf(params.r / params.r_bar) - 1.0);
    let f_star = Vector3::new(0.06, -0.04, 0.02);
    let phi = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let mut st = AdaptationState::new(3, &params);
    let mut min_eig = f64::INFINITY;
    let mut sym = 0.0f64;
    let mut worst_after = 0.0f64;
    let n = (1.5 * horizon / dt).ceil() as usize;
    for k in 0..n {
        let f_hat = estimate_disturbance(&phi, &st).map_err(|e| e.to_string())?;
        st = rls_update(&st, &phi, &f_star, &f_hat, &Vector3::zeros(), dt, k as u64).map_err(|e| e.to_string())?;
        min_eig = min_eig.min(st.min_eigenvalue());
        sym = sym.max((&st.p - st.p.transpose()).abs().max());
        if (k + 1) as f64 * dt >= horizon {
            let est = Vector3::new(st.a[(0, 0)], st.a[(0, 1)], st.a[(0, 2)]);
            worst_after = worst_after.max((est - f_star).norm() / f_star.norm());
        }
    }
    check(
        worst_after <= 0.02 && min_eig >= params.p_floor && sym <= 1e-10,
        format!(
            "horizon {horizon:.2} s; worst relative error after horizon {worst_after:.6}; min eig(P) {min_eig:.2e}"
        ),
    )
}

fn c6_step_rejection() -> Outcome {
    let params = VehicleParams::default();
    let f_star = 0.25 * params.hover_thrust();
    let cfg = bias_only_config();
    let offset = f_star / (params.mass * cfg.gains.kp.0.x);
    let adapt = AdaptationState::new(1, &cfg.adaptation);
    let trace = hover_loop(
        HoverArm::Asindy(cfg, adapt),
        |t| if t >= 1.0 { Vector3::new(f_star, 0.0, 0.0) } else { Vector3::zeros() },
        20.0,
        0.0025,
    );
    let steady = trace
        .t
        .iter()
        .zip(&trace.e_p)
        .filter(|(t, _)| **t >= 15.0)
        .map(|(_, e)| e.norm())
        .fold(0.0, f64::max);
    check(
        steady < 0.2 * offset,
        format!("steady |e_p| {steady:.2e} m vs PD offset {offset:.4} m (ratio {:.3})", steady / offset),
    )
}

fn run_paths(out: &Path, m: &gustbench::harness::Manifest) -> Vec<PathBuf> {
    m.runs.iter().filter(|r| !r.crashed).map(|r| out.join(&r.file)).collect()
}

/// Collect on circle and lemniscate, identify, evaluate on all trajectories.
fn campaign(cfg: &ExperimentConfig, out: &Path) -> Result<gustbench::harness::Evaluation, String> {
    let mut logs = Vec::new();
    for kind in [TrajectoryKind::Circle, TrajectoryKind::Lemniscate] {
        let mut c = cfg.clone();
        c.trajectory = c.trajectory.with_kind(kind);
        let dir = out.join("collect").join(kind.name());
        let m = collect(&c, &dir).map_err(|e| e.to_string())?;
        logs.extend(run_paths(&dir, &m));
    }
    let model_path = out.join("model.txt");
    let model = identify(&logs, cfg, &model_path).map_err(|e| e.to_string())?;
    evaluate(cfg, &model, &TrajectoryKind::ALL, &out.join("evaluate")).map_err(|e| e.to_string())
}

fn c7_trend(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let ev = campaign(&cfg, &tmp.join("c7"))?;
    let elapsed = start.elapsed();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in TrajectoryKind::ALL {
        let a = ev.row(kind, ControllerKind::Asindy).and_then(|r| r.stats);
        let p = ev.row(kind, ControllerKind::Pid).and_then(|r| r.stats);
        match (a, p) {
            (Some(a), Some(p)) => {
                ok &= a.rmse_xy.mean < p.rmse_xy.mean && a.p95_xy.mean < p.p95_xy.mean;
                parts.push(format!(
                    "{}: rmse {:.4}/{:.4} p95 {:.4}/{:.4}",
                    kind.name(),
                    a.rmse_xy.mean,
                    p.rmse_xy.mean,
                    a.p95_xy.mean,
                    p.p95_xy.mean
                ));
            }
            _ => {
                ok = false;
                parts.push(format!("{}: no surviving runs", kind.name()));
            }
        }
    }
    let detail = format!("asindy/pid {} over {} seeds", parts.join("; "), cfg.runs);
    check(ok && cfg.runs == 10, detail.clone())?;
    within(elapsed, 300.0, detail)
}

fn c8_crash_ordering(tmp: &Path) -> Outcome {
    let cfg = ExperimentConfig {
        wind: WindConfig::from_preset(WindPreset::Strong),
        ..ExperimentConfig::default()
    };
    let cap_frac = cfg.wind.composition.f_cap / cfg.vehicle.hover_thrust();
    let ev = campaign(&cfg, &tmp.join("c8"))?;
    let count = |arm| {
        ev.table
            .iter()
            .filter(|r| r.controller == ControllerKind::name(arm))
            .map(|r| r.crashes)
            .sum::<usize>()
    };
    let (a, p) = (count(ControllerKind::Asindy), count(ControllerKind::Pid));
    check(
        p >= a && (cap_frac - 0.6).abs() < 1e-12,
        format!("force cap {:.0}% of hover thrust; crashes pid {p} asindy {a} over {} runs per arm", cap_frac * 100.0, 3 * cfg.runs),
    )
}

fn c9_metrics_oracle() -> Outcome {
    let mut rng = GaussianSource::new(99);
    let mut worst = 0.0f64;
    let mut ordered = true;
    for _ in 0..100 {
        let n = 1 + (rng.uniform() * 1500.0) as usize;
        let xs: Vec<f64> = (0..n).map(|_| rng.standard_normal().abs() * 0.1).collect();
        let s = compute_stats(&xs).map_err(|e| e.to_string())?;
        // Independent brute force: selection by counting for order statistics.
        let kth = |k: usize| {
            *xs.iter()
                .find(|&&x| {
                    let below = xs.iter().filter(|&&y| y < x).count();
                    let equal = xs.iter().filter(|&&y| y == x).count();
                    below <= k && k < below + equal
                })
                .unwrap()
        };
        let rank = 0.95 * (n - 1) as f64;
        let lo = rank.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let p95 = kth(lo) + (rank - lo as f64) * (kth(hi) - kth(lo));
        let mae = xs.iter().fold(0.0, |a, x| a + x) / n as f64;
        let rmse = (xs.iter().fold(0.0, |a, x| a + x * x) / n as f64).sqrt();
        let max = xs.iter().cloned().fold(f64::MIN, f64::max);
        for (g, w) in [(s.rmse_xy, rmse), (s.mae_xy, mae), (s.p95_xy, p95), (s.max_xy, max)] {
            worst = worst.max((g - w).abs());
        }
        ordered &= s.mae_xy <= s.rmse_xy && s.rmse_xy <= s.max_xy && s.p95_xy <= s.max_xy;
    }
    check(
        worst <= 1e-12 && ordered,
        format!("100 series; max deviation {worst:.2e}; ordering holds: {ordered}"),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable output dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = fs::read(&p).expect("readable output file");
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), bytes);
            }
        }
    }
    out
}

fn c10_determinism(tmp: &Path) -> Outcome {
    let cfg = ExperimentConfig::default();
    campaign(&cfg, &tmp.join("c10a"))?;
    campaign(&cfg, &tmp.join("c10b"))?;
    let a = snapshot(&tmp.join("c10a"));
    let b = snapshot(&tmp.join("c10b"));
    let csvs = a.keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    check(
        differing.is_empty() && a.len() == b.len() && csvs > 0,
        format!("{} files ({csvs} CSVs) compared; {} differ", a.len(), differing.len()),
    )
}

fn c11_rk4_order() -> Outcome {
    let params = VehicleParams::default();
    let cmd = ControlCommand::hover(&params);
    let mut s0 = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
    s0.eta = Vector3::new(0.08, -0.05, 0.02);
    s0.v = Vector3::new(0.1, -0.05, 0.02);
    let run = |dt: f64| -> Result<VehicleState, String> {
        let mut s = s0;
        for _ in 0..(1.0 / dt).round() as usize {
            s = step(&s, &cmd, &Vector3::zeros(), &params, dt).map_err(|e| e.to_string())?;
        }
        Ok(s)
    };
    let err = |a: &VehicleState, b: &VehicleState| {
        ((a.p - b.p).norm_squared() + (a.v - b.v).norm_squared() + (a.eta - b.eta).norm_squared()).sqrt()
    };
    let reference = run(0.04 / 64.0)?;
    let e1 = err(&run(0.04)?, &reference);
    let e2 = err(&run(0.02)?, &reference);
    let ratio = e1 / e2;
    check(
        ratio >= 8.0,
        format!("error {e1:.3e} at dt 0.04, {e2:.3e} at dt 0.02, ratio {ratio:.2}"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        ("planted model recovery (SR3 and STLSQ)", Box::new(c1_planted_recovery)),
        ("SR3 objective monotonicity and constraints", Box::new(c2_sr3_monotone)),
        ("OU stationary statistics", Box::new(c3_ou_statistics)),
        ("burst duty cycle", Box::new(c4_duty_cycle)),
        ("RLS convergence", Box::new(c5_rls_convergence)),
        ("constant-step rejection", Box::new(c6_step_rejection)),
        ("adaptive beats PID under default wind", Box::new({
            let r = root.clone();
            move || c7_trend(&r)
        })),
        ("crash ordering under strong wind", Box::new({
            let r = root.clone();
            move || c8_crash_ordering(&r)
        })),
        ("metrics oracle", Box::new(c9_metrics_oracle)),
        ("campaign determinism", Box::new({
            let r = root.clone();
            move || c10_determinism(&r)
        })),
        ("RK4 step-halving order", Box::new(c11_rk4_order)),
    ];

    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.2} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
