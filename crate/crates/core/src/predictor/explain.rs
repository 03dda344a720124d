//! Gain importance and partial dependence.

use serde::{Deserialize, Serialize};

use super::gbdt::GbdtModel;
use super::PredictorError;
use crate::par;

pub const DEFAULT_N_GRID: usize = 20;

/// Total split gain per feature, normalized to sum to 1. A model without any
/// split yields all zeros.
pub fn feature_importance(model: &GbdtModel) -> Vec<f64> {
    let mut acc = vec![0.0; model.n_features];
    for t in &model.trees {
        for (f, _, gain) in t.splits() {
            acc[f] += gain;
        }
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|v| *v /= total);
    }
    acc
}

/// Feature indices by descending importance, ties by index.
pub fn importance_ranking(importance: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..importance.len()).collect();
    idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpCurve {
    pub feature_index: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub n_background: usize,
}

impl PdpCurve {
    pub fn slope(&self) -> f64 {
        ls_slope(&self.grid, &self.values)
    }
}

/// Least-squares slope of `y` on `x`; 0 when `x` has no spread.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx
}

/// Linear-interpolation percentile (`q` in [0, 100]) of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Grid for one feature: `{0, 1}` for indicator columns, otherwise `n_grid`
/// equally spaced points from the 1st to the 99th percentile of the observed
/// (non-missing) background values. Degenerate ranges collapse to one point.
pub fn pdp_grid(background: &[Vec<f64>], feature: usize, binary: bool, n_grid: usize) -> Vec<f64> {
    if binary {
        return vec![0.0, 1.0];
    }
    let mut vals: Vec<f64> = background.iter().map(|r| r[feature]).filter(|v| !v.is_nan()).collect();
    if vals.is_empty() {
        return vec![0.0];
    }
    vals.sort_by(f64::total_cmp);
    let lo = percentile(&vals, 1.0);
    let hi = percentile(&vals, 99.0);
    if hi <= lo || n_grid < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (n_grid - 1) as f64;
    let mut grid: Vec<f64> = (0..n_grid).map(|i| lo + step * i as f64).collect();
    grid[n_grid - 1] = hi;
    grid.dedup();
    grid
}

/// Mean model prediction (original target scale) over the background with
/// the feature clamped to each grid value.
pub fn pdp(
    model: &GbdtModel,
    background: &[Vec<f64>],
    feature: usize,
    binary: bool,
    n_grid: usize,
) -> Result<PdpCurve, PredictorError> {
    if feature >= model.n_features {
        return Err(PredictorError::SchemaMismatch(format!("no feature {feature}")));
    }
    if background.is_empty() {
        return Err(PredictorError::TooFewRows { n: 0, min: 1 });
    }
    if background.iter().any(|r| r.len() != model.n_features) {
        return Err(PredictorError::SchemaMismatch(
            "background width differs from model".into(),
        ));
    }
    let grid = pdp_grid(background, feature, binary, n_grid);
    let values = par::map(&grid, |&g| {
        let mut row_buf = Vec::with_capacity(model.n_features);
        let mut sum = 0.0;
        for row in background {
            row_buf.clear();
            row_buf.extend_from_slice(row);
            row_buf[feature] = g;
            sum += model.target_transform.inverse(model.predict_row(&row_buf));
        }
        sum / background.len() as f64
    });
    Ok(PdpCurve {
        feature_index: feature,
        grid,
        values,
        n_background: background.len(),
    })
}
