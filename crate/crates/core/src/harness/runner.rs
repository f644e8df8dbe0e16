use nalgebra::Vector3;

use crate::control::adaptive::{feature_library, initial_adaptation};
use crate::control::{
    control_step, pid_step, tracking_errors, AdaptationState, AsindyConfig, ForceMapping,
    MeasurementMemory, PidGains, PidState,
};
use crate::error::{Error, ErrorCategory, Result};
use crate::runlog::{DebugColumns, RunEvent, RunLog, RunRow};
use crate::sim::{self, ControlCommand, VehicleParams, VehicleState};
use crate::sindy::{LibrarySpec, LibraryTerm, SindyModel};
use crate::trajectory::{ReferenceSample, TrajectorySpec};
use crate::wind::{wind_accel, WindModel};

use super::config::{ControllerKind, CrashLimits, ExperimentConfig};

/// External force on the vehicle, world frame, N. Called once per physics step.
pub trait Disturbance {
    fn force(&mut self, state: &VehicleState, cmd: &ControlCommand) -> Vector3<f64>;
}

impl Disturbance for WindModel {
    fn force(&mut self, _: &VehicleState, _: &ControlCommand) -> Vector3<f64> {
        self.next_force()
    }
}

impl<F> Disturbance for F
where
    F: FnMut(&VehicleState, &ControlCommand) -> Vector3<f64>,
{
    fn force(&mut self, state: &VehicleState, cmd: &ControlCommand) -> Vector3<f64> {
        self(state, cmd)
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Controller {
    Pid {
        gains: PidGains,
        mapping: ForceMapping,
        state: PidState,
    },
    Asindy {
        config: AsindyConfig,
        adapt: AdaptationState,
        memory: MeasurementMemory,
    },
}

impl Controller {
    pub fn pid(gains: PidGains, mapping: ForceMapping) -> Self {
        Controller::Pid {
            gains,
            mapping,
            state: PidState::default(),
        }
    }

    pub fn asindy(
        config: AsindyConfig,
        adapt: AdaptationState,
        initial: &VehicleState,
        params: &VehicleParams,
    ) -> Self {
        Controller::Asindy {
            config,
            adapt,
            memory: MeasurementMemory::new(initial, params),
        }
    }

    /// Adaptive controller from an experiment configuration. Without a
    /// model the feature set is the constant term alone.
    pub fn from_config(
        cfg: &ExperimentConfig,
        kind: ControllerKind,
        model: Option<&SindyModel>,
        initial: &VehicleState,
    ) -> Self {
        match kind {
            ControllerKind::Pid => Controller::pid(cfg.pid, cfg.mapping),
            ControllerKind::Asindy => {
                let params = &cfg.asindy.adaptation;
                let (features, adapt) = match model {
                    Some(m) => (feature_library(m), initial_adaptation(m, params)),
                    None => {
                        let lib = LibrarySpec::new(vec![LibraryTerm::Constant]).expect("one term");
                        (lib, AdaptationState::new(1, params))
                    }
                };
                let config = AsindyConfig {
                    gains: cfg.asindy.gains,
                    adaptation: *params,
                    mapping: cfg.mapping,
                    features,
                };
                Controller::asindy(config, adapt, initial, &cfg.vehicle)
            }
        }
    }

    pub fn adaptation(&self) -> Option<&AdaptationState> {
        match self {
            Controller::Asindy { adapt, .. } => Some(adapt),
            Controller::Pid { .. } => None,
        }
    }

    fn step(
        &mut self,
        state: &VehicleState,
        reference: &ReferenceSample,
        params: &VehicleParams,
        dt: f64,
    ) -> Result<(ControlCommand, DebugColumns, bool)> {
        match self {
            Controller::Pid {
                gains,
                mapping,
                state: integ,
            } => {
                let (cmd, next, fallback) = pid_step(state, reference, gains, integ, params, mapping, dt)?;
                *integ = next;
                let (e_p, e_v) = tracking_errors(state, reference);
                let debug = DebugColumns {
                    e_p,
                    e_v,
                    ..Default::default()
                };
                Ok((cmd, debug, fallback))
            }
            Controller::Asindy {
                config,
                adapt,
                memory,
            } => {
                let (cmd, next_adapt, next_mem, d) =
                    control_step(state, reference, config, adapt, memory, params, dt)?;
                *adapt = next_adapt;
                *memory = next_mem;
                let debug = DebugColumns {
                    f_dist: d.f_dist,
                    f_hat: d.f_hat,
                    s: d.s,
                    e_p: d.e_p,
                    e_v: d.e_v,
                };
                Ok((cmd, debug, d.fallback))
            }
        }
    }
}

/// Fixed settings of one closed-loop run.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub params: VehicleParams,
    pub trajectory: TrajectorySpec,
    pub dt: f64,
    /// Physics steps per logged row.
    pub decimation: usize,
    pub crash: CrashLimits,
}

impl RunSetup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            params: cfg.vehicle,
            trajectory: cfg.trajectory,
            dt: cfg.dt,
            decimation: cfg.decimation()?,
            crash: cfg.crash,
        })
    }

    pub fn initial_state(&self) -> Result<VehicleState> {
        let r = self.trajectory.sample(0.0)?;
        let mut s = VehicleState::at_rest(r.p_d);
        s.v = r.v_d;
        Ok(s)
    }
}

fn crash_reason(state: &VehicleState, limits: &CrashLimits) -> Option<String> {
    if !state.is_finite() {
        Some("non-finite state".into())
    } else if state.p.norm() > limits.max_position {
        Some(format!("position {:.3} m beyond {} m", state.p.norm(), limits.max_position))
    } else if state.v.norm() > limits.max_speed {
        Some(format!("speed {:.3} m/s beyond {} m/s", state.v.norm(), limits.max_speed))
    } else {
        None
    }
}

/// Configuration and contract errors abort; anything else ends the run as a crash.
fn as_crash(e: Error) -> Result<String> {
    match e.category() {
        ErrorCategory::Config | ErrorCategory::Contract => Err(e),
        _ => Ok(e.to_string()),
    }
}

/// Lock-step physics and control from `t = 0` to the trajectory duration,
/// logging every `decimation` steps.
pub fn run_closed_loop(
    setup: &RunSetup,
    controller: &mut Controller,
    disturbance: &mut dyn Disturbance,
) -> Result<RunLog> {
    sim::validate_dt(setup.dt)?;
    setup.params.validate()?;
    let n_steps = (setup.trajectory.duration / setup.dt).round() as u64;
    let decim = setup.decimation.max(1) as u64;
    let mut state = setup.initial_state()?;
    let mut log = RunLog::default();
    let mut crash: Option<String> = None;

    for k in 0..=n_steps {
        let t = k as f64 * setup.dt;
        state.t = t;
        let reference = setup.trajectory.sample(t.min(setup.trajectory.duration))?;
        let (cmd, debug, fallback) = match controller.step(&state, &reference, &setup.params, setup.dt) {
            Ok(x) => x,
            Err(e) => {
                crash = Some(as_crash(e)?);
                if log.is_empty() {
                    log.rows.push(RunRow {
                        reference,
                        state,
                        command: ControlCommand::hover(&setup.params),
                        f_wind: Vector3::zeros(),
                        a_wind: Vector3::zeros(),
                        debug: DebugColumns::default(),
                        event: RunEvent::None,
                    });
                }
                break;
            }
        };
        let f_wind = disturbance.force(&state, &cmd);
        if k % decim == 0 {
            log.rows.push(RunRow {
                reference,
                state,
                command: cmd,
                f_wind,
                a_wind: wind_accel(&f_wind, setup.params.mass),
                debug,
                event: if fallback { RunEvent::Fallback } else { RunEvent::None },
            });
        }
        if k == n_steps {
            break;
        }
        match sim::step(&state, &cmd, &f_wind, &setup.params, setup.dt) {
            Ok(next) => state = next,
            Err(e) => {
                crash = Some(as_crash(e)?);
                break;
            }
        }
        if let Some(why) = crash_reason(&state, &setup.crash) {
            crash = Some(why);
            break;
        }
    }

    if let (Some(why), Some(last)) = (crash, log.rows.last_mut()) {
        last.event = RunEvent::Crash(why);
    }
    Ok(log)
}
