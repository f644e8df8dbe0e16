#![allow(dead_code)]

use gustbench::control::{
    control_step, pid_step, AdaptationState, AsindyConfig, ControlDebug, ForceMapping,
    MeasurementMemory, PidGains, PidState,
};
use gustbench::rng::GaussianSource;
use gustbench::sim::{step, VehicleParams, VehicleState};
use gustbench::sindy::{LibrarySpec, LibraryTerm, TrainingSet};
use gustbench::trajectory::ReferenceSample;
use nalgebra::{DMatrix, Vector3};

/// Two active terms per axis, every coefficient at least 10x the default threshold.
pub fn planted_xi() -> DMatrix<f64> {
    use LibraryTerm::*;
    let lib = LibrarySpec::default();
    let mut xi = DMatrix::zeros(lib.len(), 3);
    let mut set = |term, axis, c| xi[(lib.position(term).unwrap(), axis)] = c;
    set(Constant, 0, 0.04);
    set(ThrustSinPitch, 0, 0.5);
    set(Roll, 1, -0.06);
    set(ThrustSinRoll, 1, -0.45);
    set(Pitch, 2, 0.03);
    set(ThrustCosRoll, 2, -0.15);
    xi
}

/// Random attitude/thrust samples, targets `rows * xi` plus Gaussian noise.
pub fn planted_problem(xi: &DMatrix<f64>, n: usize, noise: f64, seed: u64) -> TrainingSet {
    let lib = LibrarySpec::default();
    let mut rng = GaussianSource::new(seed);
    let mut rows = DMatrix::zeros(n, lib.len());
    for i in 0..n {
        let roll = 1.6 * rng.uniform() - 0.8;
        let pitch = 1.6 * rng.uniform() - 0.8;
        let thrust = 0.15 + 0.4 * rng.uniform();
        rows.set_row(i, &lib.eval_angles(roll, pitch, thrust).transpose());
    }
    let mut targets = &rows * xi;
    for y in targets.iter_mut() {
        *y += noise * rng.standard_normal();
    }
    TrainingSet {
        library: lib,
        rows,
        targets,
        sample_dt: 0.025,
    }
}

/// Dense random regression problem of the given width.
pub fn random_problem(n: usize, seed: u64) -> TrainingSet {
    let lib = LibrarySpec::default();
    let mut rng = GaussianSource::new(seed);
    let rows = DMatrix::from_fn(n, lib.len(), |_, _| rng.standard_normal());
    let targets = DMatrix::from_fn(n, 3, |_, _| 0.1 * rng.standard_normal());
    TrainingSet {
        library: lib,
        rows,
        targets,
        sample_dt: 0.025,
    }
}

/// Ordinary least squares via the normal equations on each axis, in `f64`.
pub fn ols(data: &TrainingSet) -> DMatrix<f64> {
    let g = data.rows.tr_mul(&data.rows);
    let c = data.rows.tr_mul(&data.targets);
    g.cholesky().expect("full rank").solve(&c)
}

/// Relative error of each planted nonzero, and whether the support matches.
pub fn compare_planted(xi_true: &DMatrix<f64>, xi: &DMatrix<f64>) -> (bool, f64) {
    let mut support_ok = true;
    let mut worst = 0.0f64;
    for (t, e) in xi_true.iter().zip(xi.iter()) {
        if (*t != 0.0) != (*e != 0.0) {
            support_ok = false;
        }
        if *t != 0.0 {
            worst = worst.max(((e - t) / t).abs());
        }
    }
    (support_ok, worst)
}

#[allow(clippy::large_enum_variant)]
pub enum HoverArm {
    Pid(PidGains, ForceMapping),
    Asindy(AsindyConfig, AdaptationState),
}

pub struct HoverTrace {
    pub t: Vec<f64>,
    pub e_p: Vec<Vector3<f64>>,
    /// Adaptive arm only.
    pub debug: Vec<ControlDebug>,
    pub min_eig: Vec<f64>,
    pub final_adapt: Option<AdaptationState>,
}

/// Hold a fixed setpoint under `force(t)`, starting on the setpoint.
pub fn hover_loop(arm: HoverArm, force: impl Fn(f64) -> Vector3<f64>, t_end: f64, dt: f64) -> HoverTrace {
    let params = VehicleParams::default();
    let p_d = Vector3::new(0.0, 0.0, 1.0);
    let mut state = VehicleState::at_rest(p_d);
    let mut memory = MeasurementMemory::new(&state, &params);
    let mut pid_state = PidState::default();
    let mut trace = HoverTrace {
        t: Vec::new(),
        e_p: Vec::new(),
        debug: Vec::new(),
        min_eig: Vec::new(),
        final_adapt: None,
    };
    let mut arm = arm;
    let n = (t_end / dt).round() as usize;
    for k in 0..n {
        let t = k as f64 * dt;
        let reference = ReferenceSample {
            t,
            p_d,
            v_d: Vector3::zeros(),
            a_d: Vector3::zeros(),
        };
        let cmd = match &mut arm {
            HoverArm::Asindy(cfg, adapt) => {
                let (cmd, next, mem, dbg) =
                    control_step(&state, &reference, cfg, adapt, &memory, &params, dt).unwrap();
                memory = mem;
                trace.debug.push(dbg);
                trace.min_eig.push(next.min_eigenvalue());
                *adapt = next;
                cmd
            }
            HoverArm::Pid(gains, mapping) => {
                let (cmd, next, _) =
                    pid_step(&state, &reference, gains, &pid_state, &params, mapping, dt).unwrap();
                pid_state = next;
                cmd
            }
        };
        trace.t.push(t);
        trace.e_p.push(state.p - p_d);
        state = step(&state, &cmd, &force(t), &params, dt).unwrap();
    }
    if let HoverArm::Asindy(_, adapt) = arm {
        trace.final_adapt = Some(adapt);
    }
    trace
}

/// Adaptive configuration with a constant-only feature set.
pub fn bias_only_config() -> AsindyConfig {
    AsindyConfig {
        gains: Default::default(),
        adaptation: Default::default(),
        mapping: ForceMapping::default(),
        features: LibrarySpec::new(vec![LibraryTerm::Constant]).unwrap(),
    }
}
