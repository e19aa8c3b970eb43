use serde::{Deserialize, Serialize};

use super::table::{is_missing, DataTable};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Floor on per-feature standard deviations.
pub const STD_EPS: f64 = 1e-8;

/// Imputation and standardization statistics, fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub median: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Feature had no observed training value; its median fell back to 0.
    pub fallback: Vec<bool>,
    /// Feature was constant on the training rows; it standardizes to 0.
    pub constant: Vec<bool>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn fit_preprocess(table: &DataTable, train: &[usize]) -> Result<PreprocessStats> {
    if train.is_empty() {
        return Err(Error::Empty("training rows for preprocessing".into()));
    }
    let d = table.n_features();
    let mut stats = PreprocessStats {
        median: vec![0.0; d],
        mean: vec![0.0; d],
        std: vec![0.0; d],
        fallback: vec![false; d],
        constant: vec![false; d],
    };
    for j in 0..d {
        let mut observed: Vec<f64> = train
            .iter()
            .map(|&i| table.value(i, j))
            .filter(|v| !is_missing(*v))
            .collect();
        let med = if observed.is_empty() {
            log::warn!("feature `{}` has no observed training values; imputing 0", table.feature_names()[j]);
            stats.fallback[j] = true;
            0.0
        } else {
            median(&mut observed)
        };
        stats.median[j] = med;

        let imputed: Vec<f64> = train
            .iter()
            .map(|&i| {
                let v = table.value(i, j);
                if is_missing(v) {
                    med
                } else {
                    v
                }
            })
            .collect();
        let n = imputed.len() as f64;
        let mean = imputed.iter().sum::<f64>() / n;
        let var = imputed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        stats.mean[j] = mean;
        if std < STD_EPS || imputed.iter().all(|&v| v == imputed[0]) {
            stats.std[j] = std.max(STD_EPS);
            stats.constant[j] = true;
        } else {
            stats.std[j] = std;
        }
    }
    Ok(stats)
}

impl PreprocessStats {
    pub fn n_features(&self) -> usize {
        self.median.len()
    }

    /// Imputes then standardizes one raw row.
    pub fn transform_row(&self, raw: &[f64], out: &mut [f64]) {
        for j in 0..raw.len() {
            out[j] = if self.constant[j] {
                0.0
            } else {
                let v = if is_missing(raw[j]) { self.median[j] } else { raw[j] };
                (v - self.mean[j]) / self.std[j]
            };
        }
    }
}

/// Imputes missing cells with the stored medians, then standardizes.
///
/// Takes the raw table, so the result can never be fed back in; the
/// transform is not idempotent.
pub fn apply_preprocess(stats: &PreprocessStats, table: &DataTable, rows: &[usize]) -> Result<Matrix> {
    let d = table.n_features();
    if d != stats.n_features() {
        return Err(Error::dim("apply_preprocess", stats.n_features(), d));
    }
    let mut out = Matrix::zeros(rows.len(), d);
    for (r, &i) in rows.iter().enumerate() {
        stats.transform_row(table.row(i), out.row_mut(r));
    }
    Ok(out)
}
