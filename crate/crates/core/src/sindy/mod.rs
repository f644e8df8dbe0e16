//! Sparse identification of the residual force.
//!
//! The target is the force the known model cannot explain,
//! `m * (measured acceleration - known acceleration)`, regressed onto a small
//! attitude/thrust library. Each of the three force axes is one column of
//! the coefficient matrix `xi` (`n_terms x 3`).

mod io;
mod library;
mod sr3;
mod stlsq;
mod target;

pub use io::{load_model, model_from_str, model_to_string, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use library::{eval_library, LibrarySpec, LibraryTerm};
pub use sr3::{solve_sr3, EqualityConstraints, Regularizer, Sr3Fit, Sr3Settings};
pub use stlsq::{solve_stlsq, StlsqFit};
pub use target::{build_target, PreprocessSettings};

use nalgebra::{DMatrix, DVector, Vector3};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::VehicleState;

/// Library evaluations and matching residual-force targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub library: LibrarySpec,
    /// `n_samples x n_terms`
    pub rows: DMatrix<f64>,
    /// `n_samples x 3`, N
    pub targets: DMatrix<f64>,
    pub sample_dt: f64,
}

impl TrainingSet {
    pub fn n_samples(&self) -> usize {
        self.rows.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n_terms = self.library.len();
        if self.rows.ncols() != n_terms || self.targets.ncols() != 3 {
            return Err(Error::Contract(format!(
                "training set shape {}x{} / {}x{} does not match {} terms x 3 axes",
                self.rows.nrows(),
                self.rows.ncols(),
                self.targets.nrows(),
                self.targets.ncols(),
                n_terms
            )));
        }
        if self.rows.nrows() != self.targets.nrows() {
            return Err(Error::Contract("row/target sample counts differ".into()));
        }
        if self.n_samples() < 10 * n_terms {
            return Err(Error::Data(format!(
                "{} samples is fewer than 10 x {} terms",
                self.n_samples(),
                n_terms
            )));
        }
        if self.rows.iter().chain(self.targets.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Data("training set contains non-finite values".into()));
        }
        Ok(())
    }

    /// Stack several sets that share a library.
    pub fn concat(sets: &[TrainingSet]) -> Result<TrainingSet> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Data("no training sets to concatenate".into()))?;
        if sets.iter().any(|s| s.library != first.library) {
            return Err(Error::Data("training sets use different libraries".into()));
        }
        let n: usize = sets.iter().map(|s| s.n_samples()).sum();
        let mut rows = DMatrix::zeros(n, first.library.len());
        let mut targets = DMatrix::zeros(n, 3);
        let mut at = 0;
        for s in sets {
            let k = s.n_samples();
            rows.rows_mut(at, k).copy_from(&s.rows);
            targets.rows_mut(at, k).copy_from(&s.targets);
            at += k;
        }
        Ok(TrainingSet {
            library: first.library.clone(),
            rows,
            targets,
            sample_dt: first.sample_dt,
        })
    }

    /// SHA-256 over shape and little-endian values of rows and targets.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows.nrows() as u64).to_le_bytes());
        h.update((self.rows.ncols() as u64).to_le_bytes());
        for x in self.rows.iter().chain(self.targets.iter()) {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMeta {
    pub solver: String,
    /// Solver settings as `key -> value` text, in a stable order.
    pub settings: BTreeMap<String, String>,
    pub threshold: f64,
    pub training_digest: String,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SindyModel {
    pub library: LibrarySpec,
    /// `n_terms x 3`, N per unit feature.
    pub xi: DMatrix<f64>,
    pub meta: ModelMeta,
}

impl SindyModel {
    pub fn validate(&self) -> Result<()> {
        if self.xi.nrows() != self.library.len() || self.xi.ncols() != 3 {
            return Err(Error::Contract(format!(
                "coefficient matrix is {}x{}, library has {} terms",
                self.xi.nrows(),
                self.xi.ncols(),
                self.library.len()
            )));
        }
        let thr = self.meta.threshold;
        if let Some(bad) = self.xi.iter().find(|c| **c != 0.0 && c.abs() < thr) {
            return Err(Error::Contract(format!(
                "coefficient {bad} is nonzero but below the threshold {thr}"
            )));
        }
        Ok(())
    }

    /// Library indices with a nonzero coefficient on any axis.
    pub fn active_terms(&self) -> Vec<usize> {
        (0..self.library.len())
            .filter(|&i| self.xi.row(i).iter().any(|c| *c != 0.0))
            .collect()
    }

    pub fn support(&self) -> Vec<Vec<usize>> {
        (0..3)
            .map(|a| {
                (0..self.library.len())
                    .filter(|&i| self.xi[(i, a)] != 0.0)
                    .collect()
            })
            .collect()
    }

    pub fn predict(&self, state: &VehicleState, thrust: f64) -> Vector3<f64> {
        let phi = eval_library(state, thrust, &self.library);
        let f = self.xi.tr_mul(&phi);
        Vector3::new(f[0], f[1], f[2])
    }

    /// Identified equations, one line per axis, nonzero terms only.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (a, axis) in ["f_x", "f_y", "f_z"].iter().enumerate() {
            let _ = write!(out, "{axis} =");
            let mut any = false;
            for (i, term) in self.library.terms().iter().enumerate() {
                let c = self.xi[(i, a)];
                if c != 0.0 {
                    let sign = if c < 0.0 { '-' } else { '+' };
                    let _ = write!(out, " {sign} {:.6} {}", c.abs(), term.name());
                    any = true;
                }
            }
            if !any {
                out.push_str(" 0");
            }
            out.push('\n');
        }
        out
    }
}

/// Column RMS scaling; zero columns are reported by name.
pub(crate) fn column_scales(rows: &DMatrix<f64>, library: &LibrarySpec) -> Result<DVector<f64>> {
    let n = rows.nrows().max(1) as f64;
    let scales = DVector::from_iterator(
        rows.ncols(),
        rows.column_iter().map(|c| (c.norm_squared() / n).sqrt()),
    );
    let dead: Vec<String> = scales
        .iter()
        .enumerate()
        .filter(|(_, s)| !(**s > 0.0))
        .map(|(i, _)| library.terms()[i].name().to_string())
        .collect();
    if dead.is_empty() {
        Ok(scales)
    } else {
        Err(Error::RankDeficient { columns: dead })
    }
}

pub(crate) fn scale_columns(rows: &DMatrix<f64>, scales: &DVector<f64>) -> DMatrix<f64> {
    let mut out = rows.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col /= scales[j];
    }
    out
}

/// Columns (by name) that are numerically in the span of earlier columns.
pub(crate) fn dependent_columns(
    mat: &DMatrix<f64>,
    columns: &[usize],
    library: &LibrarySpec,
) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for &j in columns {
        let col = mat.column(j).clone_owned();
        let norm0 = col.norm();
        let mut r = col;
        // Two passes of modified Gram-Schmidt for stability.
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
        }
        let rn = r.norm();
        if norm0 == 0.0 || rn <= 1e-10 * norm0 {
            dependent.push(library.terms()[j].name().to_string());
        } else {
            basis.push(r / rn);
        }
    }
    dependent
}

/// Zero coefficients strictly below `threshold` in magnitude.
pub(crate) fn apply_threshold(xi: &mut DMatrix<f64>, threshold: f64) {
    for c in xi.iter_mut() {
        if c.abs() < threshold {
            *c = 0.0;
        }
    }
}
