//! Fixed-step translational quadrotor plant.
//!
//! The vehicle is a point mass driven by a collective thrust along its body
//! z axis. Attitude is not torque-driven: it follows the commanded Euler
//! angles through a first-order lag with time constant `tau_att`, which
//! stands in for the onboard attitude loop. Body rates are slaved to the
//! attitude motion through the ZYX Euler-rate kinematics.
//!
//! Wind enters only through the external force port of [`step`];
//! [`known_dynamics`] has no wind parameter.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;
pub const MAX_DT: f64 = 0.05;

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub t: f64,
    /// Position, world ENU, m.
    pub p: Vector3<f64>,
    /// Velocity, world frame, m/s.
    pub v: Vector3<f64>,
    /// Roll, pitch, yaw (ZYX), rad.
    pub eta: Vector3<f64>,
    /// Body angular rates, rad/s.
    pub omega: Vector3<f64>,
}

impl VehicleState {
    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self {
            t: 0.0,
            p,
            v: Vector3::zeros(),
            eta: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }

    pub fn roll(&self) -> f64 {
        self.eta.x
    }

    pub fn pitch(&self) -> f64 {
        self.eta.y
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && finite3(&self.p)
            && finite3(&self.v)
            && finite3(&self.eta)
            && finite3(&self.omega)
    }

    /// Body-to-world rotation for the current attitude.
    pub fn rotation(&self) -> Rotation3<f64> {
        rotation(&self.eta)
    }
}

pub(crate) fn finite3(v: &Vector3<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// ZYX body-to-world rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rotation(eta: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::from_euler_angles(eta.x, eta.y, eta.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Gravity acceleration in the world frame; points down, `(0, 0, -g)`.
    pub g_vec: [f64; 3],
    /// Attitude-loop time constant, s.
    pub tau_att: f64,
    /// N
    pub thrust_max: f64,
    /// N
    pub thrust_min: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 0.034,
            g_vec: [0.0, 0.0, -STANDARD_GRAVITY],
            tau_att: 0.08,
            thrust_max: 0.6,
            thrust_min: 0.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && self.tau_att > 0.0
            && self.thrust_min >= 0.0
            && self.thrust_min < self.thrust_max
            && self.g_vec.iter().all(|g| g.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid vehicle parameters: {self:?}")))
        }
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.g_vec)
    }

    /// Force the rotors must supply to cancel gravity, `-m * g_vec`.
    pub fn weight_support(&self) -> Vector3<f64> {
        -self.mass * self.gravity()
    }

    pub fn hover_thrust(&self) -> f64 {
        self.weight_support().norm()
    }

    pub fn clamp_thrust(&self, thrust: f64) -> f64 {
        thrust.clamp(self.thrust_min, self.thrust_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    /// Collective thrust magnitude, N.
    pub thrust: f64,
    /// Desired roll, pitch, yaw, rad.
    pub att_des: Vector3<f64>,
}

impl ControlCommand {
    pub fn hover(params: &VehicleParams) -> Self {
        Self {
            thrust: params.clamp_thrust(params.hover_thrust()),
            att_des: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.thrust.is_finite() && finite3(&self.att_des)
    }

    /// Thrust vector in the world frame for a given attitude.
    pub fn thrust_world(&self, eta: &Vector3<f64>) -> Vector3<f64> {
        rotation(eta) * Vector3::new(0.0, 0.0, self.thrust)
    }
}

/// Time derivative of the 12-component state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub p_dot: Vector3<f64>,
    pub v_dot: Vector3<f64>,
    pub eta_dot: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
}

impl StateDerivative {
    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..3 {
            out[i] = self.p_dot[i];
            out[3 + i] = self.v_dot[i];
            out[6 + i] = self.eta_dot[i];
            out[9 + i] = self.omega_dot[i];
        }
        out
    }
}

/// Euler-rate to body-rate matrix for ZYX angles.
pub fn euler_rate_matrix(eta: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = eta.x.sin_cos();
    let (sp, cp) = eta.y.sin_cos();
    Matrix3::new(
        1.0, 0.0, -sp, //
        0.0, cr, sr * cp, //
        0.0, -sr, cr * cp,
    )
}

fn euler_rate_matrix_dot(eta: &Vector3<f64>, eta_dot: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = eta.x.sin_cos();
    let (sp, cp) = eta.y.sin_cos();
    let (dr, dp) = (eta_dot.x, eta_dot.y);
    Matrix3::new(
        0.0,
        0.0,
        -cp * dp,
        0.0,
        -sr * dr,
        cr * cp * dr - sr * sp * dp,
        0.0,
        -cr * dr,
        -sr * cp * dr - cr * sp * dp,
    )
}

fn attitude_rate(eta: &Vector3<f64>, att_des: &Vector3<f64>, tau: f64) -> Vector3<f64> {
    (att_des - eta).map(wrap_angle) / tau
}

fn translational_accel(eta: &Vector3<f64>, thrust: f64, params: &VehicleParams) -> Vector3<f64> {
    rotation(eta) * Vector3::new(0.0, 0.0, thrust) / params.mass + params.gravity()
}

/// Body rates implied by the attitude lag at attitude `eta`.
pub fn slaved_body_rates(
    eta: &Vector3<f64>,
    att_des: &Vector3<f64>,
    params: &VehicleParams,
) -> Vector3<f64> {
    euler_rate_matrix(eta) * attitude_rate(eta, att_des, params.tau_att)
}

/// The wind-free model `f(x, u)`.
pub fn known_dynamics(
    state: &VehicleState,
    cmd: &ControlCommand,
    params: &VehicleParams,
) -> Result<StateDerivative> {
    if !state.is_finite() || !cmd.is_finite() {
        return Err(Error::Domain("non-finite state or command".into()));
    }
    // Tolerate round-off at the saturation bounds.
    let slack = 1e-12 * params.thrust_max.max(1.0);
    if cmd.thrust < params.thrust_min - slack || cmd.thrust > params.thrust_max + slack {
        return Err(Error::Domain(format!(
            "thrust {} outside [{}, {}]",
            cmd.thrust, params.thrust_min, params.thrust_max
        )));
    }
    let eta_dot = attitude_rate(&state.eta, &cmd.att_des, params.tau_att);
    // Commanded attitude is constant between control updates, so the
    // second derivative of the lag is -eta_dot / tau.
    let eta_ddot = -eta_dot / params.tau_att;
    let omega_dot = euler_rate_matrix_dot(&state.eta, &eta_dot) * eta_dot
        + euler_rate_matrix(&state.eta) * eta_ddot;
    Ok(StateDerivative {
        p_dot: state.v,
        v_dot: translational_accel(&state.eta, cmd.thrust, params),
        eta_dot,
        omega_dot,
    })
}

pub fn validate_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "time step {dt} outside (0, {MAX_DT}]"
        )))
    }
}

/// Advance one RK4 step with `f_ext` (world frame, N) held over the step.
pub fn step(
    state: &VehicleState,
    cmd: &ControlCommand,
    f_ext: &Vector3<f64>,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    validate_dt(dt)?;
    // Validates inputs as a side effect.
    known_dynamics(state, cmd, params)?;
    if !finite3(f_ext) {
        return Err(Error::Domain("non-finite external force".into()));
    }

    let ext_accel = f_ext / params.mass;
    let deriv = |v: &Vector3<f64>, eta: &Vector3<f64>| {
        (
            *v,
            translational_accel(eta, cmd.thrust, params) + ext_accel,
            attitude_rate(eta, &cmd.att_des, params.tau_att),
        )
    };

    let (p0, v0, e0) = (state.p, state.v, state.eta);
    let k1 = deriv(&v0, &e0);
    let k2 = deriv(&(v0 + 0.5 * dt * k1.1), &(e0 + 0.5 * dt * k1.2));
    let k3 = deriv(&(v0 + 0.5 * dt * k2.1), &(e0 + 0.5 * dt * k2.2));
    let k4 = deriv(&(v0 + dt * k3.1), &(e0 + dt * k3.2));

    let sixth = dt / 6.0;
    let p = p0 + sixth * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    let v = v0 + sixth * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    let eta = (e0 + sixth * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2)).map(wrap_angle);
    let omega = slaved_body_rates(&eta, &cmd.att_des, params);

    let next = VehicleState {
        t: state.t + dt,
        p,
        v,
        eta,
        omega,
    };
    if !next.is_finite() {
        return Err(Error::SimulationDiverged {
            step: (state.t / dt).round() as u64,
        });
    }
    Ok(next)
}
