//! Adaptive residual-force compensation.
//!
//! Each control step:
//! 1. PD acceleration command from the tracking errors.
//! 2. Measured acceleration by backward difference of velocity, low-passed.
//! 3. Residual-force proxy `f_dist = m a_meas - m g_vec - u_prev`.
//! 4. Features `phi` from the identified model's active library terms,
//!    estimate `f_hat = phi A`.
//! 5. Sliding error `s = e_v + Lambda e_p`, then one Euler step of the
//!    leaky RLS law for `A` and `P`.
//! 6. Desired force `m a_cmd - m g_vec - f_hat`, mapped to thrust/attitude.
//!
//! `A` is `n x 3` (one column per force axis) and `phi` is a row, so
//! `f_hat = phi A` is a row 3-vector.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::{desired_force, force_to_attitude_thrust, pd_command, tracking_errors, Diag3, ForceMapping};
use crate::error::{Error, Result};
use crate::sim::{ControlCommand, VehicleParams, VehicleState};
use crate::sindy::{LibrarySpec, LibraryTerm, SindyModel};
use crate::trajectory::ReferenceSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    /// 1/s^2
    pub kp: Diag3,
    /// 1/s
    pub kv: Diag3,
    /// Sliding-surface gain, 1/s.
    pub lambda: Diag3,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: Diag3::uniform(6.0),
            kv: Diag3::uniform(4.0),
            lambda: Diag3::uniform(1.5),
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        if self.kp.is_positive() && self.kv.is_positive() && self.lambda.is_positive() {
            Ok(())
        } else {
            Err(Error::Config(format!("controller gains must be positive: {self:?}")))
        }
    }
}

/// Hyperparameters of the adaptation law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationParams {
    pub enabled: bool,
    /// Start `A` at the identified coefficients instead of zero.
    pub init_from_model: bool,
    /// Leakage rate, 1/s.
    pub lambda_leak: f64,
    /// `Q = q I`
    pub q: f64,
    pub r: f64,
    pub r_bar: f64,
    /// `P(0) = p0 I`
    pub p0: f64,
    pub p_floor: f64,
    /// Cutoff of the first-order filter on measured acceleration, Hz. Zero disables it.
    pub accel_cutoff_hz: f64,
    /// Frobenius-norm bound on `A`; exceeding it aborts the run.
    pub a_norm_ceiling: f64,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            enabled: true,
            init_from_model: false,
            lambda_leak: 0.3,
            q: 1.0,
            r: 0.05,
            r_bar: 0.5,
            p0: 1.0,
            p_floor: 1e-6,
            accel_cutoff_hz: 15.0,
            a_norm_ceiling: 50.0,
        }
    }
}

impl AdaptationParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_leak >= 0.0
            && self.q >= 0.0
            && self.r > 0.0
            && self.r_bar > 0.0
            && self.p0 > 0.0
            && self.p_floor > 0.0
            && self.p_floor <= self.p0
            && self.accel_cutoff_hz >= 0.0
            && self.a_norm_ceiling > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid adaptation parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationState {
    /// `n x 3`
    pub a: DMatrix<f64>,
    /// `n x n`, symmetric positive definite.
    pub p: DMatrix<f64>,
    pub lambda_leak: f64,
    pub q: DMatrix<f64>,
    pub r: f64,
    pub r_bar: f64,
    pub p_floor: f64,
}

impl AdaptationState {
    pub fn new(n_terms: usize, params: &AdaptationParams) -> Self {
        Self {
            a: DMatrix::zeros(n_terms, 3),
            p: DMatrix::identity(n_terms, n_terms) * params.p0,
            lambda_leak: params.lambda_leak,
            q: DMatrix::identity(n_terms, n_terms) * params.q,
            r: params.r,
            r_bar: params.r_bar,
            p_floor: params.p_floor,
        }
    }

    pub fn n_terms(&self) -> usize {
        self.a.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.p.clone()).eigenvalues.min()
    }
}

/// The terms the controller evaluates: the model's active set, or the
/// constant alone when the model is empty.
pub fn feature_library(model: &SindyModel) -> LibrarySpec {
    let active = model.active_terms();
    let terms: Vec<LibraryTerm> = if active.is_empty() {
        vec![LibraryTerm::Constant]
    } else {
        active.iter().map(|&i| model.library.terms()[i]).collect()
    };
    LibrarySpec::new(terms).expect("active terms are unique and non-empty")
}

/// Initial adaptation state for a model's feature set.
pub fn initial_adaptation(model: &SindyModel, params: &AdaptationParams) -> AdaptationState {
    let features = feature_library(model);
    let mut st = AdaptationState::new(features.len(), params);
    if params.init_from_model {
        for (k, term) in features.terms().iter().enumerate() {
            if let Some(i) = model.library.position(*term) {
                st.a.set_row(k, &model.xi.row(i));
            }
        }
    }
    st
}

/// Previous-step quantities needed for the acceleration estimate and `u_prev`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementMemory {
    pub v_prev: Vector3<f64>,
    pub thrust_prev: f64,
    pub a_filt: Vector3<f64>,
    pub step: u64,
}

impl MeasurementMemory {
    pub fn new(initial: &VehicleState, params: &VehicleParams) -> Self {
        Self {
            v_prev: initial.v,
            thrust_prev: ControlCommand::hover(params).thrust,
            a_filt: Vector3::zeros(),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlDebug {
    pub e_p: Vector3<f64>,
    pub e_v: Vector3<f64>,
    pub a_cmd: Vector3<f64>,
    pub a_meas: Vector3<f64>,
    pub u_prev: Vector3<f64>,
    pub f_dist: Vector3<f64>,
    pub f_hat: Vector3<f64>,
    pub s: Vector3<f64>,
    pub f_d: Vector3<f64>,
    pub fallback: bool,
}

impl ControlDebug {
    pub fn is_finite(&self) -> bool {
        [
            self.e_p, self.e_v, self.a_cmd, self.a_meas, self.u_prev, self.f_dist, self.f_hat,
            self.s, self.f_d,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// `m a_meas - m g_vec - u_prev`; zero at hover.
pub fn residual_proxy(a_meas: &Vector3<f64>, u_prev: &Vector3<f64>, params: &VehicleParams) -> Vector3<f64> {
    params.mass * a_meas + params.weight_support() - u_prev
}

/// `phi A` as a 3-vector.
pub fn estimate_disturbance(phi: &DVector<f64>, adapt: &AdaptationState) -> Result<Vector3<f64>> {
    if phi.len() != adapt.n_terms() {
        return Err(Error::Contract(format!(
            "feature row has {} entries, adaptation matrix has {} rows",
            phi.len(),
            adapt.n_terms()
        )));
    }
    let f = adapt.a.tr_mul(phi);
    Ok(Vector3::new(f[0], f[1], f[2]))
}

/// Symmetrize and raise every eigenvalue to at least `floor`.
fn condition_covariance(p: &mut DMatrix<f64>, floor: f64) {
    let sym = (&*p + p.transpose()) * 0.5;
    let n = sym.nrows();
    let shifted = &sym - DMatrix::identity(n, n) * floor;
    if Cholesky::new(shifted).is_some() {
        *p = sym;
        return;
    }
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&vals) * v.transpose();
    *p = (&rebuilt + rebuilt.transpose()) * 0.5;
}

/// One explicit-Euler step of
/// `A' = -lambda A - P phi^T (f_hat - f_dist)/R + P phi^T s` and
/// `P' = -2 lambda P + Q - (P phi^T)(phi P)/R_bar`.
pub fn rls_update(
    adapt: &AdaptationState,
    phi: &DVector<f64>,
    f_dist: &Vector3<f64>,
    f_hat: &Vector3<f64>,
    s: &Vector3<f64>,
    dt: f64,
    step: u64,
) -> Result<AdaptationState> {
    if phi.len() != adapt.n_terms() {
        return Err(Error::Contract(format!(
            "feature row has {} entries, adaptation matrix has {} rows",
            phi.len(),
            adapt.n_terms()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("adaptation step {dt} must be positive")));
    }
    let p_phi = &adapt.p * phi;
    let innovation = (f_hat - f_dist) / adapt.r - s;
    let a_dot = -adapt.lambda_leak * &adapt.a - &p_phi * innovation.transpose();
    let p_dot = -2.0 * adapt.lambda_leak * &adapt.p + &adapt.q
        - (&p_phi * p_phi.transpose()) / adapt.r_bar;

    let mut next = adapt.clone();
    next.a += dt * a_dot;
    next.p += dt * p_dot;
    if next.a.iter().chain(next.p.iter()).any(|x| !x.is_finite()) {
        return Err(Error::AdaptationDiverged { step });
    }
    condition_covariance(&mut next.p, adapt.p_floor);
    Ok(next)
}

/// Static configuration of the adaptive controller.
#[derive(Debug, Clone, PartialEq)]
pub struct AsindyConfig {
    pub gains: ControllerGains,
    pub adaptation: AdaptationParams,
    pub mapping: ForceMapping,
    /// Terms evaluated for `phi`, in the row order of `A`.
    pub features: LibrarySpec,
}

/// One control update. Pure: identical inputs give identical outputs.
pub fn control_step(
    state: &VehicleState,
    reference: &ReferenceSample,
    config: &AsindyConfig,
    adapt: &AdaptationState,
    memory: &MeasurementMemory,
    params: &VehicleParams,
    dt: f64,
) -> Result<(ControlCommand, AdaptationState, MeasurementMemory, ControlDebug)> {
    let (e_p, e_v) = tracking_errors(state, reference);
    let a_cmd = pd_command(state, reference, &config.gains.kp, &config.gains.kv);

    let a_raw = (state.v - memory.v_prev) / dt;
    let a_meas = if config.adaptation.accel_cutoff_hz > 0.0 {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * config.adaptation.accel_cutoff_hz);
        let alpha = dt / (dt + tau);
        memory.a_filt + alpha * (a_raw - memory.a_filt)
    } else {
        a_raw
    };
    let u_prev = ControlCommand {
        thrust: memory.thrust_prev,
        att_des: state.eta,
    }
    .thrust_world(&state.eta);
    let f_dist = residual_proxy(&a_meas, &u_prev, params);

    let phi = config
        .features
        .eval_angles(state.roll(), state.pitch(), memory.thrust_prev);
    let f_hat = estimate_disturbance(&phi, adapt)?;
    let s = e_v + config.gains.lambda.apply(&e_p);

    let next_adapt = if config.adaptation.enabled {
        let next = rls_update(adapt, &phi, &f_dist, &f_hat, &s, dt, memory.step)?;
        if next.a.norm() > config.adaptation.a_norm_ceiling {
            return Err(Error::AdaptationDiverged { step: memory.step });
        }
        next
    } else {
        adapt.clone()
    };

    let f_d = desired_force(&a_cmd, &f_hat, params);
    let (cmd, fallback) = force_to_attitude_thrust(&f_d, params, &config.mapping);

    let debug = ControlDebug {
        e_p,
        e_v,
        a_cmd,
        a_meas,
        u_prev,
        f_dist,
        f_hat,
        s,
        f_d,
        fallback,
    };
    if !debug.is_finite() {
        return Err(Error::AdaptationDiverged { step: memory.step });
    }
    let next_memory = MeasurementMemory {
        v_prev: state.v,
        thrust_prev: cmd.thrust,
        a_filt: a_meas,
        step: memory.step + 1,
    };
    Ok((cmd, next_adapt, next_memory, debug))
}
