//! Planar reference paths at constant altitude.
//!
//! Each path is a curve `c(psi)` in its phase angle. The phase advances as
//! `psi = omega * s(t)`, where `s` is a time warp whose rate rises from 0 to
//! 1 along a quintic (minimum-jerk) profile over `ramp_time`, so the
//! reference starts at rest with zero acceleration. Velocity and
//! acceleration are the analytic chain-rule derivatives.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Circle,
    /// Gerono figure-eight.
    Lemniscate,
    /// Archimedean spiral with radius growing linearly in phase.
    Spiral,
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 3] = [
        TrajectoryKind::Circle,
        TrajectoryKind::Lemniscate,
        TrajectoryKind::Spiral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::Circle => "circle",
            TrajectoryKind::Lemniscate => "lemniscate",
            TrajectoryKind::Spiral => "spiral",
        }
    }
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(TrajectoryKind::Circle),
            "lemniscate" | "infinity" => Ok(TrajectoryKind::Lemniscate),
            "spiral" => Ok(TrajectoryKind::Spiral),
            other => Err(Error::Config(format!("unknown trajectory kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// m
    pub radius: f64,
    /// rad/s
    pub omega: f64,
    /// m
    pub altitude: f64,
    /// Spiral radius growth, m per rad of phase.
    pub spiral_growth: f64,
    /// s
    pub duration: f64,
    /// s
    pub ramp_time: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Circle,
            radius: 0.6,
            omega: 0.8,
            altitude: 0.8,
            spiral_growth: 0.05,
            duration: 40.0,
            ramp_time: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub t: f64,
    pub p_d: Vector3<f64>,
    pub v_d: Vector3<f64>,
    pub a_d: Vector3<f64>,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.radius > 0.0
            && self.omega > 0.0
            && self.duration > 0.0
            && self.ramp_time >= 0.0
            && self.altitude.is_finite()
            && self.spiral_growth.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid trajectory: {self:?}")))
        }
    }

    pub fn with_kind(mut self, kind: TrajectoryKind) -> Self {
        self.kind = kind;
        self
    }

    /// Time warp `s(t)` and its first two derivatives.
    fn warp(&self, t: f64) -> (f64, f64, f64) {
        let tr = self.ramp_time;
        if tr <= 0.0 || t >= tr {
            return (t - 0.5 * tr, 1.0, 0.0);
        }
        let x = t / tr;
        let (x2, x3) = (x * x, x * x * x);
        let s = tr * x3 * x * (2.5 - 3.0 * x + x2);
        let rate = x3 * (10.0 - 15.0 * x + 6.0 * x2);
        let accel = 30.0 * x2 * (1.0 - x) * (1.0 - x) / tr;
        (s, rate, accel)
    }

    /// Curve position and its first two derivatives with respect to phase.
    fn curve(&self, psi: f64) -> [Vector3<f64>; 3] {
        let r = self.radius;
        let (s, c) = psi.sin_cos();
        let h = self.altitude;
        match self.kind {
            TrajectoryKind::Circle => [
                Vector3::new(r * c, r * s, h),
                Vector3::new(-r * s, r * c, 0.0),
                Vector3::new(-r * c, -r * s, 0.0),
            ],
            TrajectoryKind::Lemniscate => {
                let (s2, c2) = (2.0 * psi).sin_cos();
                [
                    Vector3::new(r * s, r * s * c, h),
                    Vector3::new(r * c, r * c2, 0.0),
                    Vector3::new(-r * s, -2.0 * r * s2, 0.0),
                ]
            }
            TrajectoryKind::Spiral => {
                let g = self.spiral_growth;
                let rho = r + g * psi;
                [
                    Vector3::new(rho * c, rho * s, h),
                    Vector3::new(g * c - rho * s, g * s + rho * c, 0.0),
                    Vector3::new(-2.0 * g * s - rho * c, 2.0 * g * c - rho * s, 0.0),
                ]
            }
        }
    }

    pub fn sample(&self, t: f64) -> Result<ReferenceSample> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.duration
            )));
        }
        let (s, rate, accel) = self.warp(t);
        let w = self.omega;
        let [p, dp, ddp] = self.curve(w * s);
        let psi_dot = w * rate;
        let psi_ddot = w * accel;
        Ok(ReferenceSample {
            t,
            p_d: p,
            v_d: dp * psi_dot,
            a_d: ddp * psi_dot * psi_dot + dp * psi_ddot,
        })
    }

    /// Period of the closed paths once the ramp has finished.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega
    }
}
