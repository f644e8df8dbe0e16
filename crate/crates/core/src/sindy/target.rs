use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::{eval_library, LibrarySpec, TrainingSet};
use crate::error::{Error, Result};
use crate::runlog::RunLog;
use crate::sim::{known_dynamics, VehicleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSettings {
    /// Centered running-mean width, samples (odd).
    pub smooth_window: usize,
    /// Samples dropped from each end after differencing and smoothing.
    pub trim: usize,
    pub min_samples: usize,
    /// Allowed relative deviation of the sample spacing.
    pub max_jitter: f64,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        Self {
            smooth_window: 5,
            trim: 10,
            min_samples: 200,
            max_jitter: 0.2,
        }
    }
}

impl PreprocessSettings {
    pub fn validate(&self) -> Result<()> {
        if self.smooth_window == 0 || self.smooth_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "smooth_window must be odd and positive, got {}",
                self.smooth_window
            )));
        }
        if !(self.max_jitter > 0.0) {
            return Err(Error::Config("max_jitter must be positive".into()));
        }
        Ok(())
    }
}

/// Central differences inside, one-sided at both ends.
pub(crate) fn differentiate(t: &[f64], x: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (x[b] - x[a]) / (t[b] - t[a])
        })
        .collect()
}

/// Centered running mean; the window shrinks symmetrically near the ends.
pub(crate) fn running_mean(x: &[Vector3<f64>], window: usize) -> Vec<Vector3<f64>> {
    let n = x.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let sl = &x[i - h..=i + h];
            sl.iter().sum::<Vector3<f64>>() / sl.len() as f64
        })
        .collect()
}

/// Residual-force training data from one run log.
pub fn build_target(
    log: &RunLog,
    params: &VehicleParams,
    library: &LibrarySpec,
    settings: &PreprocessSettings,
) -> Result<TrainingSet> {
    settings.validate()?;
    params.validate()?;
    let n = log.len();
    let needed = settings.min_samples.max(2 * settings.trim + 2);
    if n < needed {
        return Err(Error::Data(format!(
            "run log has {n} samples, at least {needed} required"
        )));
    }
    let dt = log.check_uniform(settings.max_jitter)?;

    let t: Vec<f64> = log.times().collect();
    let v: Vec<Vector3<f64>> = log.rows.iter().map(|r| r.state.v).collect();
    let accel = differentiate(&t, &v);
    let known: Vec<Vector3<f64>> = log
        .rows
        .iter()
        .map(|r| known_dynamics(&r.state, &r.command, params).map(|d| d.v_dot))
        .collect::<Result<_>>()?;

    let accel = running_mean(&accel, settings.smooth_window);
    let known = running_mean(&known, settings.smooth_window);

    let keep = settings.trim..n - settings.trim;
    let m = keep.len();
    let mut rows = DMatrix::zeros(m, library.len());
    let mut targets = DMatrix::zeros(m, 3);
    for (k, i) in keep.enumerate() {
        let r = &log.rows[i];
        rows.set_row(k, &eval_library(&r.state, r.command.thrust, library).transpose());
        let y = params.mass * (accel[i] - known[i]);
        targets.set_row(k, &y.transpose());
    }
    let set = TrainingSet {
        library: library.clone(),
        rows,
        targets,
        sample_dt: dt,
    };
    set.validate()?;
    Ok(set)
}
