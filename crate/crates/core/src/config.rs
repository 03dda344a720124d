//! Declarative run configuration (strict JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustic::AcousticConfig;
use crate::harness::SynthConfig;
use crate::ingest::{DecoderConfig, Vertical, DEFAULT_HOOK_SECS};
use crate::mllm::{AsrConfig, BackendConfig};
use crate::predictor::explain::DEFAULT_N_GRID;
use crate::predictor::GbdtParams;
use crate::sampler::SamplerConfig;
use crate::topics::{EmbedConfig, TopicsConfig};

#[derive(Debug, Error, PartialEq)]
#[error("invalid config {path}: {reason}")]
pub struct ConfigInvalid {
    pub path: String,
    pub reason: String,
}

fn default_hook_secs() -> f64 {
    DEFAULT_HOOK_SECS
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_pdp_top_n() -> usize {
    10
}
fn default_pdp_grid() -> usize {
    DEFAULT_N_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    #[serde(default)]
    pub gbdt: GbdtParams,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub log1p_target: bool,
    /// Appends the raw-pixel baseline block to the feature matrix.
    #[serde(default)]
    pub junk_baseline: bool,
    /// Restricts training to one vertical.
    #[serde(default)]
    pub vertical: Option<Vertical>,
    #[serde(default = "default_pdp_top_n")]
    pub pdp_top_n: usize,
    #[serde(default = "default_pdp_grid")]
    pub pdp_grid: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            gbdt: GbdtParams::default(),
            split_seed: 0,
            test_fraction: default_test_fraction(),
            log1p_target: false,
            junk_baseline: false,
            vertical: None,
            pdp_top_n: default_pdp_top_n(),
            pdp_grid: default_pdp_grid(),
        }
    }
}

/// Relative paths resolve against the directory of the config file.
/// `output_dir` and `workers` do not influence artifact contents and are
/// kept out of the echoed `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default = "default_hook_secs")]
    pub hook_secs: f64,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub acoustic: AcousticConfig,
    #[serde(default)]
    pub mllm: BackendConfig,
    #[serde(default)]
    pub asr: AsrConfig,
    #[serde(default)]
    pub topics: TopicsConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    /// Synthetic corpus recipe used by the `synth` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    /// When set, replaces every stage seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[serde(default, skip_serializing)]
    pub workers: usize,
}

impl RunConfig {
    pub fn new(manifest_path: PathBuf, output_dir: PathBuf) -> Self {
        Self {
            manifest_path,
            output_dir,
            decoder: DecoderConfig::default(),
            hook_secs: DEFAULT_HOOK_SECS,
            sampler: SamplerConfig::default(),
            acoustic: AcousticConfig::default(),
            mllm: BackendConfig::default(),
            asr: AsrConfig::default(),
            topics: TopicsConfig::default(),
            predictor: PredictorConfig::default(),
            synth: None,
            seed: None,
            workers: 0,
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigInvalid> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigInvalid {
            path: origin.to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    /// Loads, applies `key=json` overrides (dotted keys), resolves relative
    /// paths against the config's directory and propagates the global seed.
    pub fn load(path: &Path, overrides: &[(String, serde_json::Value)]) -> Result<Self, ConfigInvalid> {
        let origin = path.display().to_string();
        let invalid = |reason: String| ConfigInvalid {
            path: origin.clone(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| invalid(e.to_string()))?;
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        for (key, v) in overrides {
            set_dotted(&mut value, key, v.clone()).map_err(invalid)?;
        }
        let mut cfg = Self::from_json(&value.to_string(), &origin)?;
        let base = std::path::absolute(path.parent().unwrap_or(Path::new(""))).map_err(|e| invalid(e.to_string()))?;
        cfg.resolve_paths(&base);
        cfg.apply_global_seed();
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut self.manifest_path);
        abs(&mut self.output_dir);
        if let Some(p) = self.mllm.corpus_path.as_mut() {
            abs(p);
        }
        if let AsrConfig::Mock { fixtures_path: Some(p) } = &mut self.asr {
            abs(p);
        }
        if let DecoderConfig::Command { work_dir, .. } = &mut self.decoder {
            abs(work_dir);
        }
    }

    pub fn apply_global_seed(&mut self) {
        if let Some(s) = self.seed {
            self.sampler.seed = s;
            self.topics.seed = s;
            if let EmbedConfig::Offline { seed, .. } = &mut self.topics.provider {
                *seed = s;
            }
            self.predictor.gbdt.seed = s;
            self.predictor.split_seed = s;
            if let Some(synth) = self.synth.as_mut() {
                synth.seed = s;
            }
        }
    }

    pub fn validate(&self, origin: &str) -> Result<(), ConfigInvalid> {
        let bad = |reason: &str| {
            Err(ConfigInvalid {
                path: origin.to_string(),
                reason: reason.to_string(),
            })
        };
        if !(self.hook_secs.is_finite() && self.hook_secs > 0.0) {
            return bad("hook_secs must be positive");
        }
        if self.sampler.m == 0 {
            return bad("sampler.m must be at least 1");
        }
        if !(self.sampler.alpha > 0.0 && self.sampler.alpha <= 1.0) {
            return bad("sampler.alpha must lie in (0, 1]");
        }
        if self.topics.k_candidates.is_empty() || self.topics.k_candidates.contains(&0) {
            return bad("topics.k_candidates must be non-empty positive integers");
        }
        if self.topics.d_out == 0 {
            return bad("topics.d_out must be positive");
        }
        if !(self.predictor.test_fraction >= 0.0 && self.predictor.test_fraction < 1.0) {
            return bad("predictor.test_fraction must lie in [0, 1)");
        }
        if self.predictor.pdp_grid == 0 {
            return bad("predictor.pdp_grid must be positive");
        }
        if let Err(e) = self.predictor.gbdt.validate() {
            return bad(&format!("predictor.gbdt: {e}"));
        }
        Ok(())
    }
}

/// Sets `a.b.c` in a JSON object, creating intermediate objects.
pub fn set_dotted(root: &mut serde_json::Value, key: &str, v: serde_json::Value) -> Result<(), String> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| format!("cannot set {key}: parent is not an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), v);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(format!("empty key {key:?}"))
}
