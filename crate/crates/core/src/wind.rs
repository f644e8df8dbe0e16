//! Gust force generator.
//!
//! The applied force is built in three stages each step:
//!
//! 1. an Ornstein-Uhlenbeck gust `g(t)` advanced by Euler-Maruyama,
//! 2. a raw force: per-axis mean, a slow sinusoid on x/y, plus the gust,
//!    with everything except the mean fading out exponentially while the
//!    burst schedule is off,
//! 3. a magnitude clamp followed by a rate clamp against the previously
//!    applied force.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{Error, Result};
use crate::rng::GaussianSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OUParams {
    /// Drift target, N.
    pub mu: [f64; 3],
    /// Mean-reversion rate, 1/s.
    pub theta: f64,
    /// Gust intensity, N/sqrt(s).
    pub sigma: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for OUParams {
    fn default() -> Self {
        Self {
            mu: [0.0; 3],
            theta: 1.5,
            sigma: 0.01,
            seed: 0,
        }
    }
}

impl OUParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta > 0.0 && self.sigma >= 0.0 && self.mu.iter().all(|m| m.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid OU parameters: {self:?}")))
        }
    }

    /// Closed-form stationary variance per axis of the continuous process.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindCompositionParams {
    /// Mean force per axis, N.
    pub f_mean: [f64; 3],
    /// Sinusoid amplitude on x and y, N.
    pub f_amp: [f64; 2],
    /// Sinusoid frequency, Hz.
    pub freq: f64,
    /// Phase offset of the y sinusoid, rad.
    pub phi0: f64,
    /// Burst on duration, s.
    pub t_on: f64,
    /// Burst off duration, s.
    pub t_off: f64,
    /// Maximum applied force magnitude, N.
    pub f_cap: f64,
    /// Maximum applied force rate, N/s.
    pub rate_cap: f64,
    /// Time constant of the fade toward the mean while the burst is off, s.
    pub tau_decay: f64,
}

impl Default for WindCompositionParams {
    fn default() -> Self {
        Self {
            f_mean: [0.02, 0.01, 0.0],
            f_amp: [0.015, 0.015],
            freq: 0.1,
            phi0: FRAC_PI_2,
            t_on: 4.0,
            t_off: 2.0,
            f_cap: 0.08,
            rate_cap: 0.5,
            tau_decay: 0.3,
        }
    }
}

impl WindCompositionParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_on >= 0.0
            && self.t_off >= 0.0
            && self.t_on + self.t_off > 0.0
            && self.f_cap > 0.0
            && self.rate_cap > 0.0
            && self.tau_decay > 0.0
            && self.freq.is_finite()
            && self.f_mean.iter().chain(self.f_amp.iter()).all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid wind parameters: {self:?}")))
        }
    }

    pub fn cycle(&self) -> f64 {
        self.t_on + self.t_off
    }
}

/// Named wind configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindPreset {
    Calm,
    Default,
    Strong,
}

impl WindPreset {
    pub fn params(self) -> (OUParams, WindCompositionParams) {
        match self {
            WindPreset::Calm => (
                OUParams {
                    sigma: 0.0,
                    ..OUParams::default()
                },
                WindCompositionParams {
                    f_mean: [0.0; 3],
                    f_amp: [0.0; 2],
                    ..WindCompositionParams::default()
                },
            ),
            WindPreset::Default => (OUParams::default(), WindCompositionParams::default()),
            // Cap at 60% of the default airframe's hover thrust; mean,
            // sinusoid and gust intensity scaled so the cap is reached.
            WindPreset::Strong => (
                OUParams {
                    sigma: 0.04,
                    ..OUParams::default()
                },
                WindCompositionParams {
                    f_mean: [0.08, 0.04, 0.0],
                    f_amp: [0.06, 0.06],
                    f_cap: 0.6 * 0.034 * crate::sim::STANDARD_GRAVITY,
                    rate_cap: 2.0,
                    ..WindCompositionParams::default()
                },
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindState {
    /// OU gust value, N.
    pub g: Vector3<f64>,
    /// Last applied force after limiting, N.
    pub f_applied: Vector3<f64>,
    pub t: f64,
}

impl WindState {
    pub fn new(ou: &OUParams) -> Self {
        Self {
            g: Vector3::from(ou.mu),
            f_applied: Vector3::zeros(),
            t: 0.0,
        }
    }
}

/// 1 while the gust is active, 0 otherwise.
pub fn burst_indicator(t: f64, comp: &WindCompositionParams) -> u8 {
    u8::from(t.rem_euclid(comp.cycle()) < comp.t_on)
}

/// Fade factor applied to the non-mean part of the raw force.
fn burst_envelope(t: f64, comp: &WindCompositionParams) -> f64 {
    let phase = t.rem_euclid(comp.cycle());
    if phase < comp.t_on {
        1.0
    } else {
        (-(phase - comp.t_on) / comp.tau_decay).exp()
    }
}

/// One Euler-Maruyama step of the gust process.
pub fn ou_step(ws: &WindState, ou: &OUParams, dt: f64, noise: &mut GaussianSource) -> WindState {
    let mu = Vector3::from(ou.mu);
    let scale = ou.sigma * dt.sqrt();
    let xi = Vector3::new(
        noise.standard_normal(),
        noise.standard_normal(),
        noise.standard_normal(),
    );
    WindState {
        g: ws.g + ou.theta * (mu - ws.g) * dt + scale * xi,
        f_applied: ws.f_applied,
        t: ws.t + dt,
    }
}

/// Raw, unlimited force at time `t`.
pub fn compose_force(t: f64, ws: &WindState, comp: &WindCompositionParams) -> Vector3<f64> {
    let mean = Vector3::from(comp.f_mean);
    let arg = TAU * comp.freq * t;
    let varying = Vector3::new(
        comp.f_amp[0] * arg.sin() + ws.g.x,
        comp.f_amp[1] * (arg + comp.phi0).sin() + ws.g.y,
        ws.g.z,
    );
    mean + burst_envelope(t, comp) * varying
}

/// Magnitude clamp to `f_cap`, then rate clamp relative to `f_prev`.
pub fn limit_force(
    f_raw: &Vector3<f64>,
    f_prev: &Vector3<f64>,
    comp: &WindCompositionParams,
    dt: f64,
) -> Vector3<f64> {
    let mut f = *f_raw;
    let mag = f.norm();
    if mag > comp.f_cap {
        f *= comp.f_cap / mag;
    }
    let delta = f - f_prev;
    let max_step = comp.rate_cap * dt;
    let step = delta.norm();
    if step > max_step {
        f = f_prev + delta * (max_step / step);
    }
    f
}

/// Equivalent acceleration of a wind force on a body of mass `m`.
pub fn wind_accel(f_wind: &Vector3<f64>, m: f64) -> Vector3<f64> {
    f_wind / m
}

/// Stateful generator driving one run.
#[derive(Debug, Clone)]
pub struct WindModel {
    ou: OUParams,
    comp: WindCompositionParams,
    state: WindState,
    noise: GaussianSource,
    dt: f64,
    k: u64,
}

impl WindModel {
    pub fn new(ou: OUParams, comp: WindCompositionParams, dt: f64) -> Result<Self> {
        ou.validate()?;
        comp.validate()?;
        crate::sim::validate_dt(dt)?;
        Ok(Self {
            state: WindState::new(&ou),
            noise: GaussianSource::new(ou.seed),
            ou,
            comp,
            dt,
            k: 0,
        })
    }

    pub fn state(&self) -> &WindState {
        &self.state
    }

    pub fn composition(&self) -> &WindCompositionParams {
        &self.comp
    }

    /// Force to apply over the next step; advances the gust process.
    pub fn next_force(&mut self) -> Vector3<f64> {
        let t = self.k as f64 * self.dt;
        self.state.t = t;
        let raw = compose_force(t, &self.state, &self.comp);
        let applied = limit_force(&raw, &self.state.f_applied, &self.comp, self.dt);
        self.state.f_applied = applied;
        self.state = ou_step(&self.state, &self.ou, self.dt, &mut self.noise);
        self.k += 1;
        applied
    }
}
