//! Sparse relaxed regularized regression.
//!
//! Minimizes, over fitting coefficients `w` and sparse auxiliaries `u`,
//!
//! ```text
//! 1/2 |Y - Theta w|^2 + lambda R(u) + 1/(2 nu) |w - u|^2    s.t.  C w = d
//! ```
//!
//! by exact alternating minimization. The `w` step is a ridge-like linear
//! solve (a KKT system when constraints are present); the `u` step is the
//! proximal map of `lambda R`. Library columns are scaled to unit RMS before
//! solving, so `lambda` and `nu` act on scaled coefficients; constraints and
//! the reported coefficients are in physical units.
//!
//! Coefficients are stacked axis-major: entry `axis * n_terms + term`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{apply_threshold, column_scales, scale_columns, ModelMeta, SindyModel, TrainingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// Counts nonzeros; prox is a hard threshold at `sqrt(2 lambda nu)`.
    #[default]
    L0,
    /// Sum of magnitudes; prox is a soft threshold at `lambda nu`.
    L1,
}

/// `C w = d` on the stacked physical coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityConstraints {
    /// `k x (3 n_terms)`
    pub c: DMatrix<f64>,
    /// length `k`
    pub d: DVector<f64>,
}

impl EqualityConstraints {
    /// Pin the given `(term, axis)` coefficients to zero.
    pub fn zero_entries(n_terms: usize, entries: &[(usize, usize)]) -> Self {
        let mut c = DMatrix::zeros(entries.len(), 3 * n_terms);
        for (row, &(term, axis)) in entries.iter().enumerate() {
            c[(row, axis * n_terms + term)] = 1.0;
        }
        Self {
            d: DVector::zeros(entries.len()),
            c,
        }
    }

    pub fn residual(&self, xi: &DMatrix<f64>) -> f64 {
        (&self.c * stack(xi) - &self.d).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sr3Settings {
    pub lambda: f64,
    pub nu: f64,
    /// Final coefficient cutoff, physical units.
    pub threshold: f64,
    pub max_iter: usize,
    /// Relative objective change that ends the iteration.
    pub tol: f64,
    pub regularizer: Regularizer,
    #[serde(skip)]
    pub constraints: Option<EqualityConstraints>,
}

impl Default for Sr3Settings {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            nu: 1.0,
            threshold: 1e-3,
            max_iter: 100,
            tol: 1e-8,
            regularizer: Regularizer::L0,
            constraints: None,
        }
    }
}

impl Sr3Settings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.nu > 0.0
            && self.max_iter >= 1
            && self.tol > 0.0
            && self.threshold >= 0.0
            && self.lambda.is_finite()
            && self.nu.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid SR3 settings: {self:?}")))
        }
    }

    fn describe(&self) -> BTreeMap<String, String> {
        let reg = match self.regularizer {
            Regularizer::L0 => "l0",
            Regularizer::L1 => "l1",
        };
        BTreeMap::from([
            ("lambda".to_string(), format!("{:e}", self.lambda)),
            ("nu".to_string(), format!("{:e}", self.nu)),
            ("max_iter".to_string(), self.max_iter.to_string()),
            ("tol".to_string(), format!("{:e}", self.tol)),
            ("regularizer".to_string(), reg.to_string()),
            (
                "constraints".to_string(),
                self.constraints
                    .as_ref()
                    .map_or(0, |c| c.c.nrows())
                    .to_string(),
            ),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct Sr3Fit {
    /// Thresholded model.
    pub model: SindyModel,
    /// Final fitting coefficients before thresholding, physical units.
    pub w: DMatrix<f64>,
    /// Final sparse auxiliaries, physical units.
    pub u: DMatrix<f64>,
    /// Objective after every (w, u) update, in the scaled problem.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn stack(xi: &DMatrix<f64>) -> DVector<f64> {
    // Column-major storage of an n x 3 matrix is exactly the axis-major stack.
    DVector::from_column_slice(xi.as_slice())
}

fn unstack(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, 3, v.as_slice())
}

enum WSolver {
    Free(Cholesky<f64, Dyn>),
    Constrained { lu: LU<f64, Dyn, Dyn>, d: DVector<f64> },
}

impl WSolver {
    fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            WSolver::Free(chol) => Ok(chol.solve(rhs)),
            WSolver::Constrained { lu, d } => {
                let n = rhs.nrows();
                let m = 3 * n;
                let mut full = DVector::zeros(m + d.len());
                full.rows_mut(0, m).copy_from(&stack(rhs));
                full.rows_mut(m, d.len()).copy_from(d);
                let sol = lu
                    .solve(&full)
                    .ok_or_else(|| Error::Constraint("singular KKT system".into()))?;
                Ok(unstack(&sol.rows(0, m).clone_owned(), n))
            }
        }
    }
}

/// Project out redundant rows and reject inconsistent systems.
fn reduce_constraints(c: &DMatrix<f64>, d: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let svd = c.clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * c.nrows().max(c.ncols()) as f64;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    if keep.is_empty() {
        return Err(Error::Constraint("constraint matrix is zero".into()));
    }
    let basis = u.select_columns(&keep);
    let d_proj = &basis * (basis.tr_mul(d));
    if (d - &d_proj).norm() > 1e-9 * (1.0 + d.norm()) {
        return Err(Error::Constraint(
            "equality constraints are inconsistent".into(),
        ));
    }
    Ok((basis.tr_mul(c), basis.tr_mul(d)))
}

fn prox(w: &DMatrix<f64>, reg: Regularizer, lambda: f64, nu: f64) -> DMatrix<f64> {
    match reg {
        Regularizer::L0 => {
            let cut = 2.0 * lambda * nu;
            w.map(|x| if x * x > cut { x } else { 0.0 })
        }
        Regularizer::L1 => {
            let cut = lambda * nu;
            w.map(|x| x.signum() * (x.abs() - cut).max(0.0))
        }
    }
}

fn penalty(u: &DMatrix<f64>, reg: Regularizer) -> f64 {
    match reg {
        Regularizer::L0 => u.iter().filter(|x| **x != 0.0).count() as f64,
        Regularizer::L1 => u.iter().map(|x| x.abs()).sum(),
    }
}

pub fn solve_sr3(data: &TrainingSet, settings: &Sr3Settings) -> Result<Sr3Fit> {
    settings.validate()?;
    data.validate()?;
    let n = data.library.len();
    let scales = column_scales(&data.rows, &data.library)?;
    let theta = scale_columns(&data.rows, &scales);
    let y = &data.targets;

    let gram = theta.tr_mul(&theta);
    let cross = theta.tr_mul(y);
    let inv_nu = 1.0 / settings.nu;
    let h = &gram + DMatrix::identity(n, n) * inv_nu;

    let solver = match &settings.constraints {
        None => WSolver::Free(
            Cholesky::new(h)
                .ok_or_else(|| Error::Solver("relaxed normal matrix is not positive definite".into()))?,
        ),
        Some(cons) => {
            if cons.c.ncols() != 3 * n || cons.d.len() != cons.c.nrows() {
                return Err(Error::Contract(format!(
                    "constraints must be k x {} with k-vector d",
                    3 * n
                )));
            }
            // Map physical coefficients to scaled ones: w_phys = w_scaled / scale.
            let mut cs = cons.c.clone();
            for axis in 0..3 {
                for j in 0..n {
                    let mut col = cs.column_mut(axis * n + j);
                    col /= scales[j];
                }
            }
            let (cr, dr) = reduce_constraints(&cs, &cons.d)?;
            let k = cr.nrows();
            let m = 3 * n;
            let mut kkt = DMatrix::zeros(m + k, m + k);
            for axis in 0..3 {
                kkt.view_mut((axis * n, axis * n), (n, n)).copy_from(&h);
            }
            kkt.view_mut((m, 0), (k, m)).copy_from(&cr);
            kkt.view_mut((0, m), (m, k)).copy_from(&cr.transpose());
            WSolver::Constrained {
                lu: LU::new(kkt),
                d: dr,
            }
        }
    };

    let objective = |w: &DMatrix<f64>, u: &DMatrix<f64>| {
        let resid = y - &theta * w;
        0.5 * resid.norm_squared()
            + settings.lambda * penalty(u, settings.regularizer)
            + 0.5 * inv_nu * (w - u).norm_squared()
    };

    let mut u = DMatrix::zeros(n, 3);
    let mut w = DMatrix::zeros(n, 3);
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..settings.max_iter {
        w = solver.solve(&(&cross + &u * inv_nu))?;
        u = prox(&w, settings.regularizer, settings.lambda, settings.nu);
        let f = objective(&w, &u);
        if !f.is_finite() {
            return Err(Error::Solver("objective became non-finite".into()));
        }
        if let Some(&prev) = history.last() {
            if f > prev + 1e-12 * prev.abs() + f64::MIN_POSITIVE {
                return Err(Error::Solver(format!(
                    "objective increased from {prev} to {f} at iteration {}",
                    history.len() + 1
                )));
            }
            history.push(f);
            if (prev - f).abs() <= settings.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        } else {
            history.push(f);
        }
    }

    let unscale = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for (j, mut row) in out.row_iter_mut().enumerate() {
            row /= scales[j];
        }
        out
    };
    let w_phys = unscale(&w);
    let u_phys = unscale(&u);
    let mut xi = w_phys.clone();
    apply_threshold(&mut xi, settings.threshold);

    let model = SindyModel {
        library: data.library.clone(),
        xi,
        meta: ModelMeta {
            solver: "sr3".into(),
            settings: settings.describe(),
            threshold: settings.threshold,
            training_digest: data.digest(),
            n_samples: data.n_samples(),
        },
    };
    Ok(Sr3Fit {
        model,
        w: w_phys,
        u: u_phys,
        iterations: history.len(),
        objective: history,
        converged,
    })
}
