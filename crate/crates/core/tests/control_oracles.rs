mod common;

use common::{bias_only_config, hover_loop, HoverArm};
use gustbench::control::{
    control_step, desired_force, estimate_disturbance, force_to_attitude_thrust, pd_command,
    residual_proxy, rls_update, AdaptationParams, AdaptationState, AsindyConfig, ControllerGains,
    Diag3, ForceMapping, MeasurementMemory, PidGains,
};
use gustbench::harness::{
    simulate, simulate_with, Controller, ControllerKind, ExperimentConfig, RunSetup, WindConfig,
};
use gustbench::rng::GaussianSource;
use gustbench::sim::{ControlCommand, VehicleParams, VehicleState};
use gustbench::sindy::{LibrarySpec, ModelMeta, SindyModel};
use gustbench::trajectory::ReferenceSample;
use gustbench::wind::{WindModel, WindPreset};
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;

const DT: f64 = 0.0025;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-range..range).prop_map(Vector3::from)
}

fn reference(p_d: Vector3<f64>, v_d: Vector3<f64>, a_d: Vector3<f64>) -> ReferenceSample {
    ReferenceSample { t: 0.0, p_d, v_d, a_d }
}

proptest! {
    #[test]
    fn pd_matches_recoding(
        p in vec3(2.0), v in vec3(2.0), pd in vec3(2.0), vd in vec3(2.0), ad in vec3(2.0),
        kp in prop::array::uniform3(0.1f64..10.0), kv in prop::array::uniform3(0.1f64..10.0),
    ) {
        let mut s = VehicleState::at_rest(p);
        s.v = v;
        let got = pd_command(&s, &reference(pd, vd, ad), &Diag3(kp.into()), &Diag3(kv.into()));
        for i in 0..3 {
            let expect = ad[i] - kp[i] * (p[i] - pd[i]) - kv[i] * (v[i] - vd[i]);
            prop_assert!((got[i] - expect).abs() <= 1e-15 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn estimate_matches_matrix_product(
        phi in prop::collection::vec(-2.0f64..2.0, 7),
        a in prop::collection::vec(-1.0f64..1.0, 21),
    ) {
        let mut st = AdaptationState::new(7, &AdaptationParams::default());
        st.a = DMatrix::from_row_slice(7, 3, &a);
        let f = estimate_disturbance(&DVector::from_vec(phi.clone()), &st).unwrap();
        for axis in 0..3 {
            let mut acc = 0.0;
            for k in 0..7 {
                acc += phi[k] * a[3 * k + axis];
            }
            prop_assert!((f[axis] - acc).abs() <= 1e-15 * 8.0);
        }
    }

    #[test]
    fn desired_force_matches_recoding(a_cmd in vec3(5.0), f_hat in vec3(0.2)) {
        let params = VehicleParams::default();
        let got = desired_force(&a_cmd, &f_hat, &params);
        let g = 9.81;
        let expect = Vector3::new(
            params.mass * a_cmd.x - f_hat.x,
            params.mass * a_cmd.y - f_hat.y,
            params.mass * a_cmd.z + params.mass * g - f_hat.z,
        );
        prop_assert!((got - expect).abs().max() <= 1e-15);
    }

    #[test]
    fn proxy_inverts_force_balance(f_star in vec3(0.1), thrust_dir in vec3(0.3)) {
        let params = VehicleParams::default();
        let u = Vector3::new(thrust_dir.x, thrust_dir.y, params.hover_thrust() + thrust_dir.z);
        let a = (u + f_star) / params.mass + params.gravity();
        let f = residual_proxy(&a, &u, &params);
        prop_assert!((f - f_star).norm() < 1e-14);
    }

    #[test]
    fn covariance_stays_spd(
        phis in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 7), 1..60),
        resid in vec3(1.0),
        s in vec3(1.0),
        leak in 0.0f64..2.0,
    ) {
        let params = AdaptationParams { lambda_leak: leak, ..AdaptationParams::default() };
        let mut st = AdaptationState::new(7, &params);
        for (k, phi) in phis.iter().enumerate() {
            let phi = DVector::from_vec(phi.clone());
            st = rls_update(&st, &phi, &resid, &Vector3::zeros(), &s, 0.01, k as u64).unwrap();
            prop_assert!((&st.p - st.p.transpose()).abs().max() <= 1e-10);
            prop_assert!(st.min_eigenvalue() >= params.p_floor * (1.0 - 1e-9));
            prop_assert!(st.a.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn control_step_is_pure(p in vec3(0.2), v in vec3(0.5), eta in vec3(0.2)) {
        let params = VehicleParams::default();
        let cfg = AsindyConfig {
            gains: ControllerGains::default(),
            adaptation: AdaptationParams::default(),
            mapping: ForceMapping::default(),
            features: LibrarySpec::default(),
        };
        let mut s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0) + p);
        s.v = v;
        s.eta = eta;
        let mut adapt = AdaptationState::new(7, &cfg.adaptation);
        adapt.a[(0, 0)] = 0.01;
        let mem = MeasurementMemory::new(&VehicleState::at_rest(Vector3::zeros()), &params);
        let r = reference(Vector3::new(0.0, 0.0, 1.0), Vector3::zeros(), Vector3::zeros());
        let a = control_step(&s, &r, &cfg, &adapt, &mem, &params, DT).unwrap();
        let b = control_step(&s, &r, &cfg, &adapt, &mem, &params, DT).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn control_step_equals_hand_composition() {
    let params = VehicleParams::default();
    let cfg = AsindyConfig {
        gains: ControllerGains::default(),
        adaptation: AdaptationParams::default(),
        mapping: ForceMapping::default(),
        features: LibrarySpec::default(),
    };
    let mut rng = GaussianSource::new(4);
    let mut r3 = |scale: f64| {
        Vector3::new(rng.standard_normal(), rng.standard_normal(), rng.standard_normal()) * scale
    };
    let mut s = VehicleState::at_rest(Vector3::new(0.1, -0.2, 1.0));
    s.v = r3(0.3);
    s.eta = r3(0.1);
    let r = reference(r3(0.1) + Vector3::z(), r3(0.2), r3(0.5));
    let mut adapt = AdaptationState::new(7, &cfg.adaptation);
    adapt.a = DMatrix::from_fn(7, 3, |i, j| 0.001 * (i as f64 - 2.0 * j as f64));
    let mem = MeasurementMemory {
        v_prev: s.v - r3(0.01),
        thrust_prev: 0.36,
        a_filt: r3(0.2),
        step: 17,
    };

    let (cmd, next, next_mem, dbg) = control_step(&s, &r, &cfg, &adapt, &mem, &params, DT).unwrap();

    let e_p = s.p - r.p_d;
    let e_v = s.v - r.v_d;
    let a_cmd = r.a_d - cfg.gains.kp.apply(&e_p) - cfg.gains.kv.apply(&e_v);
    let tau = 1.0 / (2.0 * std::f64::consts::PI * cfg.adaptation.accel_cutoff_hz);
    let alpha = DT / (DT + tau);
    let a_meas = mem.a_filt + alpha * ((s.v - mem.v_prev) / DT - mem.a_filt);
    let u_prev = s.rotation() * Vector3::new(0.0, 0.0, mem.thrust_prev);
    let f_dist = residual_proxy(&a_meas, &u_prev, &params);
    let phi = cfg.features.eval_angles(s.roll(), s.pitch(), mem.thrust_prev);
    let f_hat = estimate_disturbance(&phi, &adapt).unwrap();
    let sl = e_v + cfg.gains.lambda.apply(&e_p);
    let adapt2 = rls_update(&adapt, &phi, &f_dist, &f_hat, &sl, DT, mem.step).unwrap();
    let f_d = desired_force(&a_cmd, &f_hat, &params);
    let (cmd2, fallback) = force_to_attitude_thrust(&f_d, &params, &cfg.mapping);

    assert_eq!(cmd, cmd2);
    assert_eq!(next, adapt2);
    assert_eq!(dbg.f_dist, f_dist);
    assert_eq!(dbg.f_hat, f_hat);
    assert_eq!(dbg.s, sl);
    assert_eq!(dbg.f_d, f_d);
    assert_eq!(dbg.fallback, fallback);
    assert_eq!(next_mem.thrust_prev, cmd.thrust);
    assert_eq!(next_mem.step, 18);
}

#[test]
fn perfect_tracking_without_adaptation_is_pd() {
    let params = VehicleParams::default();
    let cfg = bias_only_config();
    let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
    let r = reference(s.p, Vector3::zeros(), Vector3::new(0.3, -0.1, 0.0));
    let adapt = AdaptationState::new(1, &cfg.adaptation);
    let mem = MeasurementMemory::new(&s, &params);
    let (cmd, ..) = control_step(&s, &r, &cfg, &adapt, &mem, &params, DT).unwrap();
    let f = desired_force(&r.a_d, &Vector3::zeros(), &params);
    let (expect, _) = force_to_attitude_thrust(&f, &params, &cfg.mapping);
    assert_eq!(cmd, expect);
}

/// Time after which the constant-regressor error falls to `frac` of its
/// initial value, for `lambda = 0` and `Q = 0`.
fn rls_horizon(p0: f64, r: f64, r_bar: f64, frac: f64) -> f64 {
    r_bar / p0 * ((1.0 / frac).powf(r / r_bar) - 1.0)
}

#[test]
fn rls_converges_on_constant_regressor() {
    let params = AdaptationParams {
        lambda_leak: 0.0,
        q: 0.0,
        r: 0.5,
        r_bar: 0.5,
        ..AdaptationParams::default()
    };
    let f_star = Vector3::new(0.05, -0.03, 0.02);
    let mut st = AdaptationState::new(3, &params);
    let phi = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let horizon = rls_horizon(params.p0, params.r, params.r_bar, 0.02);
    let n = (2.0 * horizon / DT).ceil() as usize;
    for k in 0..n {
        let f_hat = estimate_disturbance(&phi, &st).unwrap();
        st = rls_update(&st, &phi, &f_star, &f_hat, &Vector3::zeros(), DT, k as u64).unwrap();
        assert!(st.min_eigenvalue() >= params.p_floor);
        if (k + 1) as f64 * DT >= horizon {
            let est = Vector3::new(st.a[(0, 0)], st.a[(0, 1)], st.a[(0, 2)]);
            assert!((est - f_star).norm() <= 0.02 * f_star.norm(), "t={}", (k + 1) as f64 * DT);
        }
    }
}

#[test]
fn zero_innovation_leaves_a_unchanged() {
    let params = AdaptationParams {
        lambda_leak: 0.0,
        q: 0.0,
        ..AdaptationParams::default()
    };
    let mut st = AdaptationState::new(3, &params);
    st.a = DMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 * 0.01);
    let phi = DVector::from_vec(vec![1.0, 0.5, -0.2]);
    let f = estimate_disturbance(&phi, &st).unwrap();
    let next = rls_update(&st, &phi, &f, &f, &Vector3::zeros(), DT, 0).unwrap();
    assert_eq!(next.a, st.a);
    let pphi = &st.p * &phi;
    let expect = &st.p - DT * (&pphi * pphi.transpose()) / params.r_bar;
    assert!((next.p - expect).abs().max() < 1e-15);
}

#[test]
fn leakage_decays_exponentially() {
    let params = AdaptationParams {
        lambda_leak: 0.3,
        ..AdaptationParams::default()
    };
    let mut st = AdaptationState::new(2, &params);
    st.a = DMatrix::from_element(2, 3, 0.1);
    let a0 = st.a.norm();
    let phi = DVector::from_vec(vec![0.0, 0.0]);
    for k in 1..=4000 {
        st = rls_update(&st, &phi, &Vector3::zeros(), &Vector3::zeros(), &Vector3::zeros(), DT, k).unwrap();
        let t = k as f64 * DT;
        let exact = a0 * (-params.lambda_leak * t).exp();
        let bound = a0 * params.lambda_leak * DT / (2.0 * std::f64::consts::E) * 1.1;
        assert!((st.a.norm() - exact).abs() <= bound);
    }
}

fn pid_only() -> PidGains {
    PidGains {
        ki: Diag3::uniform(0.0),
        ..PidGains::default()
    }
}

#[test]
fn pd_offset_matches_closed_form() {
    let params = VehicleParams::default();
    let f_star = 0.25 * params.hover_thrust();
    let trace = hover_loop(
        HoverArm::Pid(pid_only(), ForceMapping::default()),
        |_| Vector3::new(f_star, 0.0, 0.0),
        15.0,
        DT,
    );
    let offset = f_star / (params.mass * pid_only().kp.0.x);
    let final_x = trace.e_p.last().unwrap().x;
    assert!((final_x - offset).abs() <= 0.05 * offset, "{final_x} vs {offset}");
}

#[test]
fn adaptation_removes_step_offset() {
    let params = VehicleParams::default();
    let f_star = 0.25 * params.hover_thrust();
    let step = move |t: f64| if t >= 1.0 { Vector3::new(f_star, 0.0, 0.0) } else { Vector3::zeros() };
    let cfg = bias_only_config();
    let adapt = AdaptationState::new(1, &cfg.adaptation);
    let trace = hover_loop(HoverArm::Asindy(cfg.clone(), adapt), step, 20.0, DT);
    let offset = f_star / (params.mass * cfg.gains.kp.0.x);
    let tail = trace
        .t
        .iter()
        .zip(&trace.e_p)
        .filter(|(t, _)| **t >= 15.0)
        .map(|(_, e)| e.norm())
        .fold(0.0, f64::max);
    assert!(tail < 0.2 * offset, "tail {tail} vs offset {offset}");
    assert!(trace.min_eig.iter().all(|l| *l >= cfg.adaptation.p_floor));
}

#[test]
fn proxy_mean_matches_injected_wind() {
    let f_star = Vector3::new(0.02, -0.015, 0.01);
    let cfg = bias_only_config();
    let adapt = AdaptationState::new(1, &cfg.adaptation);
    let trace = hover_loop(HoverArm::Asindy(cfg, adapt), |_| f_star, 20.0, DT);
    let tail: Vec<_> = trace
        .t
        .iter()
        .zip(&trace.debug)
        .filter(|(t, _)| **t >= 10.0)
        .map(|(_, d)| d.f_dist)
        .collect();
    let mean = tail.iter().sum::<Vector3<f64>>() / tail.len() as f64;
    assert!((mean - f_star).norm() < 0.05 * f_star.norm(), "{mean:?}");
}

fn dense_model() -> SindyModel {
    let lib = LibrarySpec::default();
    SindyModel {
        xi: DMatrix::from_element(lib.len(), 3, 0.01),
        library: lib,
        meta: ModelMeta {
            threshold: 1e-3,
            ..Default::default()
        },
    }
}

fn calm() -> ExperimentConfig {
    ExperimentConfig {
        wind: WindConfig::from_preset(WindPreset::Calm),
        ..ExperimentConfig::default()
    }
}

#[test]
fn zero_wind_estimate_stays_small() {
    let cfg = calm();
    let limit = 0.01 * cfg.vehicle.hover_thrust();
    for model in [None, Some(dense_model())] {
        for traj in gustbench::trajectory::TrajectoryKind::ALL {
            let mut c = cfg.clone();
            c.trajectory = c.trajectory.with_kind(traj);
            let log = simulate(&c, ControllerKind::Asindy, model.as_ref(), 1).unwrap();
            assert!(log.crash().is_none());
            let peak = log.rows.iter().map(|r| r.debug.f_hat.norm()).fold(0.0, f64::max);
            assert!(peak < limit, "{traj:?} dense={}: {peak} >= {limit}", model.is_some());
        }
    }
}

#[test]
fn adaptation_stays_below_ceiling_in_default_wind() {
    let cfg = ExperimentConfig::default();
    let model = dense_model();
    let setup = RunSetup::from_config(&cfg).unwrap();
    for seed in cfg.seed_list() {
        let initial = setup.initial_state().unwrap();
        let mut controller = Controller::from_config(&cfg, ControllerKind::Asindy, Some(&model), &initial);
        let mut ou = cfg.wind.ou;
        ou.seed = seed;
        let mut wind = WindModel::new(ou, cfg.wind.composition, cfg.dt).unwrap();
        let log = gustbench::harness::run_closed_loop(&setup, &mut controller, &mut wind).unwrap();
        assert!(log.crash().is_none(), "seed {seed}");
        let a = controller.adaptation().unwrap();
        assert!(a.a.norm() < cfg.asindy.adaptation.a_norm_ceiling);
    }
}

#[test]
fn adaptation_beats_pd_under_step_for_all_seeds() {
    let params = VehicleParams::default();
    let f_star = 0.25 * params.hover_thrust();
    let on = ExperimentConfig::default();
    let mut off = on.clone();
    off.asindy.adaptation.enabled = false;
    let setup = RunSetup::from_config(&on).unwrap();
    let half = on.trajectory.duration / 2.0;
    for seed in on.seed_list() {
        let mut cost = [0.0; 2];
        for (i, cfg) in [&on, &off].into_iter().enumerate() {
            let mut ou = cfg.wind.ou;
            ou.seed = seed;
            let mut wind = WindModel::new(ou, cfg.wind.composition, cfg.dt).unwrap();
            let mut dist = |s: &VehicleState, _: &ControlCommand| {
                let w = wind.next_force();
                if s.t >= 5.0 {
                    w + Vector3::new(f_star, 0.0, 0.0)
                } else {
                    w
                }
            };
            let log = simulate_with(cfg, ControllerKind::Asindy, None, &setup, &mut dist).unwrap();
            assert!(log.crash().is_none());
            cost[i] = log
                .rows
                .iter()
                .filter(|r| r.t() >= half)
                .map(|r| (r.state.p - r.reference.p_d).norm())
                .sum();
        }
        assert!(cost[0] < cost[1], "seed {seed}: on {} off {}", cost[0], cost[1]);
    }
}

#[test]
fn gains_reject_nonpositive_entries() {
    let g = ControllerGains {
        kp: Diag3(Vector3::new(1.0, 0.0, 1.0)),
        ..ControllerGains::default()
    };
    assert!(g.validate().is_err());
}

#[test]
fn adaptive_without_model_uses_constant_feature() {
    let cfg = ExperimentConfig::default();
    let s = VehicleState::at_rest(Vector3::z());
    let c = Controller::from_config(&cfg, ControllerKind::Asindy, None, &s);
    assert_eq!(c.adaptation().unwrap().n_terms(), 1);
}
