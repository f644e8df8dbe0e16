use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{desired_force, force_to_attitude_thrust, tracking_errors, Diag3, ForceMapping};
use crate::error::{Error, Result};
use crate::sim::{ControlCommand, VehicleParams, VehicleState};
use crate::trajectory::ReferenceSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp: Diag3,
    pub ki: Diag3,
    pub kd: Diag3,
    /// Per-axis clamp on the position-error integral, m s.
    pub i_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: Diag3::uniform(6.0),
            ki: Diag3::uniform(0.5),
            kd: Diag3::uniform(4.0),
            i_limit: 0.5,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        if self.kp.is_nonnegative()
            && self.ki.is_nonnegative()
            && self.kd.is_nonnegative()
            && self.i_limit > 0.0
        {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid PID gains: {self:?}")))
        }
    }
}

/// Integral of the position error, m s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: Vector3<f64>,
}

/// Returns the command, the updated integrator, and whether the hover
/// fallback was used. The integrator is advanced before it is applied.
pub fn pid_step(
    state: &VehicleState,
    reference: &ReferenceSample,
    gains: &PidGains,
    integ: &PidState,
    params: &VehicleParams,
    mapping: &ForceMapping,
    dt: f64,
) -> Result<(ControlCommand, PidState, bool)> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("control step {dt} must be positive")));
    }
    let (e_p, e_v) = tracking_errors(state, reference);
    let lim = gains.i_limit;
    let integral = (integ.integral + dt * e_p).map(|x| x.clamp(-lim, lim));
    let a_cmd = reference.a_d - gains.kp.apply(&e_p) - gains.kd.apply(&e_v) - gains.ki.apply(&integral);
    let f_d = desired_force(&a_cmd, &Vector3::zeros(), params);
    let (cmd, fallback) = force_to_attitude_thrust(&f_d, params, mapping);
    Ok((cmd, PidState { integral }, fallback))
}
