//! CPI regression: feature assembly, boosted trees, metrics, explanations.

pub mod explain;
pub mod features;
pub mod gbdt;
pub mod junk;
pub mod metrics;
pub mod plot;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::derive_seed;
use explain::PdpCurve;

pub use explain::{feature_importance, pdp};
pub use features::{assemble_features, FeatureSchema, FeatureVector};
pub use gbdt::{fit_gbdt, predict, GbdtModel, GbdtParams};
pub use metrics::{eval_metrics, Metrics};

#[derive(Debug, Error, PartialEq)]
pub enum PredictorError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unknown asset {0}")]
    UnknownAsset(String),
    #[error("{n} rows, at least {min} required")]
    TooFewRows { n: usize, min: usize },
    #[error("non-finite target at row {0}")]
    NonFiniteTarget(usize),
    #[error("target has zero variance")]
    ZeroVariance,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("empty frame sequence")]
    EmptyFrameSequence,
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for PredictorError {
    fn from(e: std::io::Error) -> Self {
        PredictorError::Io(e.to_string())
    }
}

impl From<csv::Error> for PredictorError {
    fn from(e: csv::Error) -> Self {
        PredictorError::Io(e.to_string())
    }
}

/// Deterministic train/test partition: ids ordered by a seeded hash, the
/// first `floor(test_fraction * n)` go to test. Both halves keep input order.
pub fn train_test_split(ids: &[&str], seed: u64, test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut keyed: Vec<(u64, &str, usize)> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (derive_seed(seed, id.as_bytes()), *id, i))
        .collect();
    keyed.sort();
    let n_test = (test_fraction * ids.len() as f64).floor() as usize;
    let mut test: Vec<usize> = keyed[..n_test].iter().map(|k| k.2).collect();
    let mut train: Vec<usize> = keyed[n_test..].iter().map(|k| k.2).collect();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r2: Option<f64>,
    pub mse: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub train_r2: Option<f64>,
}

pub fn write_importance_csv(path: &Path, names: &[String], importance: &[f64]) -> Result<(), PredictorError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "score"])?;
    for i in explain::importance_ranking(importance) {
        w.write_record([names[i].as_str(), &importance[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_importance_csv(path: &Path) -> Result<Vec<(String, f64)>, PredictorError> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let score = rec[1]
                .parse()
                .map_err(|_| PredictorError::Io(format!("bad score {}", &rec[1])))?;
            Ok((rec[0].to_string(), score))
        })
        .collect()
}

/// File stem for a feature's PDP outputs.
pub fn pdp_file_stem(rank: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{rank:02}_{clean}")
}

pub fn write_pdp(dir: &Path, rank: usize, name: &str, curve: &PdpCurve) -> Result<(), PredictorError> {
    fs::create_dir_all(dir)?;
    let stem = pdp_file_stem(rank, name);
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    w.write_record(["grid", "value"])?;
    for (g, v) in curve.grid.iter().zip(&curve.values) {
        w.write_record([g.to_string(), v.to_string()])?;
    }
    w.flush()?;
    let svg = plot::line_chart_svg(
        &format!("Partial dependence: {name}"),
        name,
        "predicted CPI",
        &curve.grid,
        &curve.values,
    );
    fs::write(dir.join(format!("{stem}.svg")), svg)?;
    Ok(())
}

pub fn read_pdp_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), PredictorError> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut g, mut v) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| PredictorError::Io(format!("bad number {s}")))
        };
        g.push(parse(&rec[0])?);
        v.push(parse(&rec[1])?);
    }
    Ok((g, v))
}
