//! Sequentially thresholded least squares.
//!
//! Least squares on the current support, drop coefficients below the
//! threshold, refit, until the support stops changing. Solved on
//! unit-RMS columns like SR3, thresholded in physical units.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use super::{column_scales, dependent_columns, scale_columns, ModelMeta, SindyModel, TrainingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct StlsqFit {
    pub model: SindyModel,
    /// Least-squares passes per axis, including the final confirming pass.
    pub iterations: [usize; 3],
}

fn least_squares(theta: &DMatrix<f64>, y: &DVector<f64>, cols: &[usize]) -> Result<DVector<f64>> {
    let sub = theta.select_columns(cols);
    let qr = sub.clone().qr();
    let rhs = qr.q().tr_mul(y);
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Solver("least-squares factor is singular".into()))
}

pub fn solve_stlsq(data: &TrainingSet, threshold: f64, max_iter: usize) -> Result<StlsqFit> {
    if !(threshold >= 0.0) || max_iter == 0 {
        return Err(Error::Config(format!(
            "invalid STLSQ settings: threshold {threshold}, max_iter {max_iter}"
        )));
    }
    data.validate()?;
    let n = data.library.len();
    let scales = column_scales(&data.rows, &data.library)?;
    let theta = scale_columns(&data.rows, &scales);
    let all: Vec<usize> = (0..n).collect();
    let dependent = dependent_columns(&theta, &all, &data.library);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient { columns: dependent });
    }

    let mut xi = DMatrix::zeros(n, 3);
    let mut iterations = [0usize; 3];
    for (axis, iters) in iterations.iter_mut().enumerate() {
        let y = data.targets.column(axis).clone_owned();
        let mut support = all.clone();
        let mut coef = DVector::zeros(n);
        for pass in 1..=max_iter {
            *iters = pass;
            coef.fill(0.0);
            if !support.is_empty() {
                let sol = least_squares(&theta, &y, &support)?;
                for (k, &j) in support.iter().enumerate() {
                    coef[j] = sol[k] / scales[j];
                }
            }
            let next: Vec<usize> = support
                .iter()
                .copied()
                .filter(|&j| coef[j].abs() >= threshold)
                .collect();
            if next == support {
                break;
            }
            support = next;
            if pass == max_iter {
                // Keep the thresholded coefficients of the last pass.
                for j in 0..n {
                    if !support.contains(&j) {
                        coef[j] = 0.0;
                    }
                }
            }
        }
        xi.set_column(axis, &coef);
    }

    let model = SindyModel {
        library: data.library.clone(),
        xi,
        meta: ModelMeta {
            solver: "stlsq".into(),
            settings: BTreeMap::from([("max_iter".to_string(), max_iter.to_string())]),
            threshold,
            training_digest: data.digest(),
            n_samples: data.n_samples(),
        },
    };
    Ok(StlsqFit { model, iterations })
}
