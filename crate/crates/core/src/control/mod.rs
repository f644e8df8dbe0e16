//! Position-loop controllers and the shared force-to-command mapping.

pub mod adaptive;
pub mod pid;

pub use adaptive::{
    control_step, estimate_disturbance, residual_proxy, rls_update, AdaptationParams,
    AdaptationState, AsindyConfig, ControlDebug, ControllerGains, MeasurementMemory,
};
pub use pid::{pid_step, PidGains, PidState};

use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sim::{ControlCommand, VehicleParams, VehicleState};
use crate::trajectory::ReferenceSample;

/// Diagonal 3x3 gain. Written in config files as a scalar or a 3-array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diag3(pub Vector3<f64>);

impl Diag3 {
    pub fn uniform(k: f64) -> Self {
        Diag3(Vector3::repeat(k))
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.0.component_mul(x)
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|k| *k > 0.0 && k.is_finite())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|k| *k >= 0.0 && k.is_finite())
    }
}

impl Serialize for Diag3 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.x, self.0.y, self.0.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Diag3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Scalar(f64),
            Axes([f64; 3]),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Scalar(k) => Diag3::uniform(k),
            Repr::Axes(a) => Diag3(Vector3::from(a)),
        })
    }
}

/// Tracking errors `(p - p_d, v - v_d)`.
pub fn tracking_errors(state: &VehicleState, reference: &ReferenceSample) -> (Vector3<f64>, Vector3<f64>) {
    (state.p - reference.p_d, state.v - reference.v_d)
}

/// `a_d - Kp e_p - Kv e_v`
pub fn pd_command(
    state: &VehicleState,
    reference: &ReferenceSample,
    kp: &Diag3,
    kv: &Diag3,
) -> Vector3<f64> {
    let (e_p, e_v) = tracking_errors(state, reference);
    reference.a_d - kp.apply(&e_p) - kv.apply(&e_v)
}

/// Force the rotors must supply: `m a_cmd - m g_vec - f_hat`.
pub fn desired_force(a_cmd: &Vector3<f64>, f_hat: &Vector3<f64>, params: &VehicleParams) -> Vector3<f64> {
    params.mass * a_cmd + params.weight_support() - f_hat
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceMapping {
    /// Tilt limit, degrees.
    pub max_tilt_deg: f64,
    /// Below this fraction of `m g` the demanded force is treated as degenerate.
    pub min_force_frac: f64,
}

impl Default for ForceMapping {
    fn default() -> Self {
        Self {
            max_tilt_deg: 35.0,
            min_force_frac: 0.05,
        }
    }
}

impl ForceMapping {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_tilt_deg > 0.0 && self.max_tilt_deg < 90.0) {
            return Err(Error::Config(format!(
                "max_tilt_deg must be in (0, 90), got {}",
                self.max_tilt_deg
            )));
        }
        if !(self.min_force_frac > 0.0) {
            return Err(Error::Config("min_force_frac must be positive".into()));
        }
        Ok(())
    }
}

/// Thrust and level-yaw attitude that point body z along `f_support`.
///
/// Returns the command and whether the safe hover fallback was used.
pub fn force_to_attitude_thrust(
    f_support: &Vector3<f64>,
    params: &VehicleParams,
    mapping: &ForceMapping,
) -> (ControlCommand, bool) {
    let norm = f_support.norm();
    if !norm.is_finite() || norm < mapping.min_force_frac * params.hover_thrust() {
        return (ControlCommand::hover(params), true);
    }
    let mut b3 = f_support / norm;
    let max_tilt = mapping.max_tilt_deg.to_radians();
    let horiz = b3.xy().norm();
    let tilt = horiz.atan2(b3.z);
    if tilt > max_tilt {
        let (s, c) = max_tilt.sin_cos();
        let dir = if horiz > 0.0 { b3.xy() / horiz } else { b3.xy() };
        b3 = Vector3::new(s * dir.x, s * dir.y, c);
    }
    // yaw = 0: b3 = (cos(roll) sin(pitch), -sin(roll), cos(roll) cos(pitch))
    let roll = (-b3.y).clamp(-1.0, 1.0).asin();
    let pitch = b3.x.atan2(b3.z);
    let thrust = params.clamp_thrust(f_support.dot(&b3));
    (
        ControlCommand {
            thrust,
            att_des: Vector3::new(roll, pitch, 0.0),
        },
        false,
    )
}
