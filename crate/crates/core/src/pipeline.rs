//! Stage orchestration over a persistent run directory.
//!
//! Each stage reads its predecessors' artifacts from the output directory
//! and writes its own. Everything except `manifest.json` is a pure function
//! of the effective configuration and the inputs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::acoustic::{extract_acoustic, AcousticFeatures};
use crate::config::{ConfigInvalid, RunConfig};
use crate::ingest::{decode_asset, extract_hook, load_manifest, HookClip, VideoAsset};
use crate::mllm::{build_asr, build_backend, build_prompt, extract_insight, transcribe, MethodologyInsight};
use crate::par;
use crate::predictor::explain::{feature_importance, importance_ranking, pdp};
use crate::predictor::features::{assemble_row, FeatureSchema};
use crate::predictor::gbdt::{fit_gbdt_with, predict_target, GbdtModel, TargetTransform};
use crate::predictor::junk::junk_baseline_features;
use crate::predictor::{eval_metrics, pdp_file_stem, train_test_split, write_importance_csv, write_pdp, MetricsReport};
use crate::sampler::{sample_hook, FrameSample};
use crate::topics::{fit_topics, TopicModel};

pub const ASSETS: &str = "assets.jsonl";
pub const SAMPLES: &str = "samples.jsonl";
pub const ACOUSTIC: &str = "acoustic.jsonl";
pub const JUNK: &str = "junk.jsonl";
pub const INSIGHTS: &str = "insights.jsonl";
pub const TOPIC_MODEL: &str = "topic_model.json";
pub const TOPICS: &str = "topics.jsonl";
pub const FEATURES: &str = "features.jsonl";
pub const SCHEMA: &str = "feature_schema.json";
pub const MODEL: &str = "model.json";
pub const METRICS: &str = "metrics.json";
pub const IMPORTANCE: &str = "importance.csv";
pub const PDP_DIR: &str = "pdp";
pub const REPORT: &str = "report.json";
pub const FAILURES: &str = "failures.jsonl";
pub const CONFIG_ECHO: &str = "config.json";
pub const RUN_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Extract,
    Insights,
    Topics,
    Train,
    Explain,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Insights,
        Stage::Topics,
        Stage::Train,
        Stage::Explain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Insights => "insights",
            Stage::Topics => "topics",
            Stage::Train => "train",
            Stage::Explain => "explain",
        }
    }

    /// The artifact whose presence marks the stage as done.
    pub fn marker(self) -> &'static str {
        match self {
            Stage::Ingest => ASSETS,
            Stage::Extract => SAMPLES,
            Stage::Insights => INSIGHTS,
            Stage::Topics => TOPICS,
            Stage::Train => MODEL,
            Stage::Explain => REPORT,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    ConfigInvalid(#[from] ConfigInvalid),
    #[error("missing predecessor stage {0:?}")]
    MissingPredecessor(&'static str),
    #[error("stage {stage} failed: {reason}")]
    StageFailed { stage: &'static str, reason: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::StageFailed { .. } => 1,
            PipelineError::ConfigInvalid(_) => 2,
            PipelineError::MissingPredecessor(_) => 3,
        }
    }
}

fn fail(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |reason| PipelineError::StageFailed {
        stage: stage.name(),
        reason,
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it)?;
        out.push(b'\n');
    }
    fs::write(path, out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
        }
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> std::io::Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(std::io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> std::io::Result<T> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(std::io::Error::other)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: String,
    pub asset_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRecord {
    pub asset_id: String,
    pub hook_frames: usize,
    pub hook_audio_samples: usize,
    pub transcript: String,
    pub sample: FrameSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticRecord {
    pub asset_id: String,
    pub features: AcousticFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunkRecord {
    pub asset_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRecord {
    pub asset_id: String,
    pub topic: usize,
    pub methodology: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub asset_id: String,
    pub split: Split,
    pub cpi: f64,
    pub values: Vec<f64>,
    pub missing_mask: Vec<bool>,
    pub schema_id: String,
}

impl FeatureRecord {
    pub fn model_row(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.missing_mask)
            .map(|(&v, &m)| if m { f64::NAN } else { v })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpSummary {
    pub feature: String,
    pub rank: usize,
    pub file_stem: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub k: usize,
    pub top_words: Vec<Vec<String>>,
    pub silhouette_by_k: Vec<(usize, f64)>,
    pub assignments: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metrics: MetricsReport,
    /// Feature name and normalized gain, most important first.
    pub importance: Vec<(String, f64)>,
    pub pdp: Vec<PdpSummary>,
    pub topics: TopicSummary,
    pub n_failures: usize,
}

impl RunReport {
    pub fn load(output_dir: &Path) -> std::io::Result<Self> {
        read_json(&output_dir.join(REPORT))
    }
}

/// A configured run over one output directory.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self, PipelineError> {
        cfg.validate("effective config")?;
        let out = cfg.output_dir.clone();
        Ok(Self { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn io(&self, stage: Stage) -> impl Fn(std::io::Error) -> PipelineError {
        move |e| PipelineError::StageFailed {
            stage: stage.name(),
            reason: e.to_string(),
        }
    }

    fn require(&self, stage: Stage) -> Result<(), PipelineError> {
        for s in Stage::ALL.iter().take_while(|&&s| s < stage) {
            if !self.path(s.marker()).exists() {
                return Err(PipelineError::MissingPredecessor(s.name()));
            }
        }
        Ok(())
    }

    fn manifest_dir(&self) -> PathBuf {
        self.cfg
            .manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }

    /// Replaces this stage's entries in failures.jsonl.
    fn record_failures(&self, stage: Stage, mut new: Vec<FailureRecord>) -> Result<(), PipelineError> {
        let path = self.path(FAILURES);
        let mut all: Vec<FailureRecord> = if path.exists() {
            read_jsonl(&path).map_err(self.io(stage))?
        } else {
            Vec::new()
        };
        all.retain(|f| f.stage != stage.name());
        all.append(&mut new);
        let order = |name: &str| Stage::ALL.iter().position(|s| s.name() == name).unwrap_or(usize::MAX);
        all.sort_by(|a, b| order(&a.stage).cmp(&order(&b.stage)).then_with(|| a.cmp(b)));
        write_jsonl(&path, &all).map_err(self.io(stage))
    }

    fn begin(&self, stage: Stage) -> Result<u64, PipelineError> {
        fs::create_dir_all(&self.out).map_err(self.io(stage))?;
        write_json(&self.path(CONFIG_ECHO), &self.cfg).map_err(self.io(stage))?;
        Ok(now_unix())
    }

    /// The run manifest is the only artifact holding wall-clock data.
    fn finish(&self, stage: Stage, started: u64) -> Result<(), PipelineError> {
        let path = self.path(RUN_MANIFEST);
        let mut m: serde_json::Value = if path.exists() {
            read_json(&path).unwrap_or_else(|_| json!({}))
        } else {
            json!({})
        };
        m["tool"] = json!(env!("CARGO_PKG_NAME"));
        m["version"] = json!(env!("CARGO_PKG_VERSION"));
        m["output_dir"] = json!(self.out.display().to_string());
        m["workers"] = json!(self.cfg.workers);
        if let Some(synth) = &self.cfg.synth {
            m["cpi_formula"] = json!(synth.formula);
        }
        if !m["stages"].is_object() {
            m["stages"] = json!({});
        }
        m["stages"][stage.name()] = json!({ "started_unix": started, "finished_unix": now_unix() });
        write_json(&path, &m).map_err(self.io(stage))
    }

    fn load_assets(&self, stage: Stage) -> Result<Vec<VideoAsset>, PipelineError> {
        read_jsonl(&self.path(ASSETS)).map_err(self.io(stage))
    }

    fn hook_for(&self, asset: &VideoAsset) -> Result<HookClip, String> {
        let (frames, audio) =
            decode_asset(asset, &self.cfg.decoder, &self.manifest_dir()).map_err(|e| e.to_string())?;
        extract_hook(
            &asset.id,
            &frames,
            &audio,
            (&asset.title_text, &asset.body_text),
            self.cfg.hook_secs,
        )
        .map_err(|e| e.to_string())
    }

    pub fn ingest(&self) -> Result<serde_json::Value, PipelineError> {
        let started = self.begin(Stage::Ingest)?;
        let assets = load_manifest(&self.cfg.manifest_path).map_err(|e| fail(Stage::Ingest)(e.to_string()))?;
        write_jsonl(&self.path(ASSETS), &assets).map_err(self.io(Stage::Ingest))?;
        self.record_failures(Stage::Ingest, Vec::new())?;
        self.finish(Stage::Ingest, started)?;
        Ok(json!({ "stage": "ingest", "assets": assets.len() }))
    }

    pub fn extract(&self) -> Result<serde_json::Value, PipelineError> {
        self.require(Stage::Extract)?;
        let started = self.begin(Stage::Extract)?;
        let assets = self.load_assets(Stage::Extract)?;
        let asr = build_asr(&self.cfg.asr, &self.manifest_dir()).map_err(|e| fail(Stage::Extract)(e.to_string()))?;
        let results = par::map(
            &assets,
            |a| -> Result<(ExtractRecord, AcousticRecord, JunkRecord), String> {
                let mut hook = self.hook_for(a)?;
                hook.transcript = transcribe(&hook.audio, asr.as_ref()).unwrap_or_default();
                let sample = sample_hook(&hook, &self.cfg.sampler).map_err(|e| e.to_string())?;
                let features = extract_acoustic(&hook, &self.cfg.acoustic).map_err(|e| e.to_string())?;
                let junk = junk_baseline_features(&hook.frames).map_err(|e| e.to_string())?;
                Ok((
                    ExtractRecord {
                        asset_id: a.id.clone(),
                        hook_frames: hook.frames.len(),
                        hook_audio_samples: hook.audio.samples.len(),
                        transcript: hook.transcript.clone(),
                        sample,
                    },
                    AcousticRecord {
                        asset_id: a.id.clone(),
                        features,
                    },
                    JunkRecord {
                        asset_id: a.id.clone(),
                        values: junk.to_vec(),
                    },
                ))
            },
        );
        let (mut samples, mut acoustic, mut junk, mut failures) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (a, r) in assets.iter().zip(results) {
            match r {
                Ok((s, ac, j)) => {
                    samples.push(s);
                    acoustic.push(ac);
                    junk.push(j);
                }
                Err(error) => failures.push(FailureRecord {
                    stage: "extract".into(),
                    asset_id: a.id.clone(),
                    error,
                }),
            }
        }
        let n_failed = failures.len();
        self.record_failures(Stage::Extract, failures)?;
        if samples.is_empty() && !assets.is_empty() {
            return Err(fail(Stage::Extract)("every asset failed".into()));
        }
        let io = self.io(Stage::Extract);
        write_jsonl(&self.path(ACOUSTIC), &acoustic).map_err(&io)?;
        write_jsonl(&self.path(JUNK), &junk).map_err(&io)?;
        write_jsonl(&self.path(SAMPLES), &samples).map_err(&io)?;
        self.finish(Stage::Extract, started)?;
        Ok(json!({ "stage": "extract", "extracted": samples.len(), "failed": n_failed }))
    }

    pub fn insights(&self) -> Result<serde_json::Value, PipelineError> {
        self.require(Stage::Insights)?;
        let started = self.begin(Stage::Insights)?;
        let assets = self.load_assets(Stage::Insights)?;
        let samples: Vec<ExtractRecord> = read_jsonl(&self.path(SAMPLES)).map_err(self.io(Stage::Insights))?;
        let by_id: HashMap<&str, &VideoAsset> = assets.iter().map(|a| (a.id.as_str(), a)).collect();
        let backend =
            build_backend(&self.cfg.mllm, &self.manifest_dir()).map_err(|e| fail(Stage::Insights)(e.to_string()))?;
        let results = par::map(&samples, |s| -> Result<MethodologyInsight, String> {
            let asset = by_id
                .get(s.asset_id.as_str())
                .ok_or_else(|| format!("asset {} not in {ASSETS}", s.asset_id))?;
            let hook = self.hook_for(asset)?;
            let frames: Vec<_> = s
                .sample
                .indices
                .iter()
                .map(|&i| {
                    hook.frames
                        .get(i)
                        .ok_or_else(|| format!("sample index {i} outside hook"))
                })
                .collect::<Result<_, _>>()?;
            let prompt = build_prompt(&asset.title_text, &asset.body_text);
            extract_insight(backend.as_ref(), &asset.id, &prompt, &frames).map_err(|e| e.to_string())
        });
        let (mut insights, mut failures) = (Vec::new(), Vec::new());
        for (s, r) in samples.iter().zip(results) {
            match r {
                Ok(i) => insights.push(i),
                Err(error) => failures.push(FailureRecord {
                    stage: "insights".into(),
                    asset_id: s.asset_id.clone(),
                    error,
                }),
            }
        }
        let n_failed = failures.len();
        self.record_failures(Stage::Insights, failures)?;
        if insights.is_empty() && !samples.is_empty() {
            return Err(fail(Stage::Insights)("every asset failed".into()));
        }
        write_jsonl(&self.path(INSIGHTS), &insights).map_err(self.io(Stage::Insights))?;
        self.finish(Stage::Insights, started)?;
        Ok(json!({ "stage": "insights", "insights": insights.len(), "failed": n_failed }))
    }

    pub fn topics(&self) -> Result<serde_json::Value, PipelineError> {
        self.require(Stage::Topics)?;
        let started = self.begin(Stage::Topics)?;
        let insights: Vec<MethodologyInsight> = read_jsonl(&self.path(INSIGHTS)).map_err(self.io(Stage::Topics))?;
        let docs: Vec<String> = insights.iter().map(|i| i.rationale.clone()).collect();
        let model = fit_topics(&docs, &self.cfg.topics).map_err(|e| fail(Stage::Topics)(e.to_string()))?;
        let records: Vec<TopicRecord> = insights
            .iter()
            .zip(&model.assignments)
            .map(|(i, &t)| TopicRecord {
                asset_id: i.asset_id.clone(),
                topic: t,
                methodology: i.methodology.clone(),
            })
            .collect();
        write_json(&self.path(TOPIC_MODEL), &model).map_err(self.io(Stage::Topics))?;
        write_jsonl(&self.path(TOPICS), &records).map_err(self.io(Stage::Topics))?;
        self.finish(Stage::Topics, started)?;
        Ok(json!({ "stage": "topics", "k": model.k, "documents": docs.len() }))
    }

    pub fn train(&self) -> Result<serde_json::Value, PipelineError> {
        self.require(Stage::Train)?;
        let started = self.begin(Stage::Train)?;
        let io = self.io(Stage::Train);
        let pc = &self.cfg.predictor;
        let assets = self.load_assets(Stage::Train)?;
        let acoustic: Vec<AcousticRecord> = read_jsonl(&self.path(ACOUSTIC)).map_err(&io)?;
        let junk: Vec<JunkRecord> = read_jsonl(&self.path(JUNK)).map_err(&io)?;
        let topics: Vec<TopicRecord> = read_jsonl(&self.path(TOPICS)).map_err(&io)?;
        let model_meta: TopicModel = read_json(&self.path(TOPIC_MODEL)).map_err(&io)?;

        let acoustic: HashMap<&str, &AcousticFeatures> =
            acoustic.iter().map(|r| (r.asset_id.as_str(), &r.features)).collect();
        let junk: HashMap<&str, &[f64]> = junk
            .iter()
            .map(|r| (r.asset_id.as_str(), r.values.as_slice()))
            .collect();
        let topics: HashMap<&str, usize> = topics.iter().map(|r| (r.asset_id.as_str(), r.topic)).collect();

        let usable: Vec<&VideoAsset> = assets
            .iter()
            .filter(|a| a.cpi.is_some())
            .filter(|a| pc.vertical.is_none_or(|v| a.vertical == v))
            .filter(|a| topics.contains_key(a.id.as_str()) && acoustic.contains_key(a.id.as_str()))
            .collect();
        let ids: Vec<&str> = usable.iter().map(|a| a.id.as_str()).collect();
        let (train_idx, test_idx) = train_test_split(&ids, pc.split_seed, pc.test_fraction);
        let schema = FeatureSchema::from_training(
            model_meta.k,
            train_idx.iter().map(|&i| &usable[i].ad_context),
            pc.junk_baseline,
        );

        let mut split = vec![Split::Train; usable.len()];
        for &i in &test_idx {
            split[i] = Split::Test;
        }
        let mut records = Vec::with_capacity(usable.len());
        for (a, s) in usable.iter().zip(&split) {
            let j = if pc.junk_baseline {
                junk.get(a.id.as_str()).copied()
            } else {
                None
            };
            let fv = assemble_row(
                &schema,
                &a.id,
                topics[a.id.as_str()],
                acoustic[a.id.as_str()],
                &a.ad_context,
                j,
            )
            .map_err(|e| fail(Stage::Train)(e.to_string()))?;
            records.push(FeatureRecord {
                asset_id: a.id.clone(),
                split: *s,
                cpi: a.cpi.unwrap_or(0.0),
                values: fv.values,
                missing_mask: fv.missing_mask,
                schema_id: fv.schema_id,
            });
        }
        let rows = |want: Split| -> (Vec<Vec<f64>>, Vec<f64>) {
            records
                .iter()
                .filter(|r| r.split == want)
                .map(|r| (r.model_row(), r.cpi))
                .unzip()
        };
        let (x_train, y_train) = rows(Split::Train);
        let (x_test, y_test) = rows(Split::Test);
        let transform = if pc.log1p_target {
            TargetTransform::Log1p
        } else {
            TargetTransform::Identity
        };
        let mut model =
            fit_gbdt_with(&x_train, &y_train, &pc.gbdt, transform).map_err(|e| fail(Stage::Train)(e.to_string()))?;
        model.schema_id = schema.schema_id.clone();
        model.feature_names = schema.names.clone();

        let p_train = predict_target(&model, &x_train).map_err(|e| fail(Stage::Train)(e.to_string()))?;
        let p_test = predict_target(&model, &x_test).map_err(|e| fail(Stage::Train)(e.to_string()))?;
        let test_metrics = eval_metrics(&y_test, &p_test).ok();
        let mse = crate::predictor::metrics::mse(&y_test, &p_test).ok();
        let report = MetricsReport {
            r2: test_metrics.map(|m| m.r2),
            mse,
            n_train: x_train.len(),
            n_test: x_test.len(),
            seed: pc.gbdt.seed,
            train_r2: eval_metrics(&y_train, &p_train).ok().map(|m| m.r2),
        };
        write_jsonl(&self.path(FEATURES), &records).map_err(&io)?;
        write_json(&self.path(SCHEMA), &schema).map_err(&io)?;
        write_json(&self.path(METRICS), &report).map_err(&io)?;
        write_json(&self.path(MODEL), &model).map_err(&io)?;
        self.finish(Stage::Train, started)?;
        Ok(json!({
            "stage": "train",
            "n_train": report.n_train,
            "n_test": report.n_test,
            "r2": report.r2,
            "mse": report.mse,
        }))
    }

    pub fn explain(&self) -> Result<serde_json::Value, PipelineError> {
        self.require(Stage::Explain)?;
        let started = self.begin(Stage::Explain)?;
        let io = self.io(Stage::Explain);
        let model: GbdtModel = read_json(&self.path(MODEL)).map_err(&io)?;
        let schema: FeatureSchema = read_json(&self.path(SCHEMA)).map_err(&io)?;
        let metrics: MetricsReport = read_json(&self.path(METRICS)).map_err(&io)?;
        let topic_model: TopicModel = read_json(&self.path(TOPIC_MODEL)).map_err(&io)?;
        let topic_records: Vec<TopicRecord> = read_jsonl(&self.path(TOPICS)).map_err(&io)?;
        let features: Vec<FeatureRecord> = read_jsonl(&self.path(FEATURES)).map_err(&io)?;
        let failures: Vec<FailureRecord> = read_jsonl(&self.path(FAILURES)).unwrap_or_default();
        if schema.schema_id != model.schema_id {
            return Err(fail(Stage::Explain)("feature schema does not match the model".into()));
        }

        let importance = feature_importance(&model);
        write_importance_csv(&self.path(IMPORTANCE), &schema.names, &importance)
            .map_err(|e| fail(Stage::Explain)(e.to_string()))?;
        let background: Vec<Vec<f64>> = features
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(FeatureRecord::model_row)
            .collect();

        let pdp_dir = self.path(PDP_DIR);
        if pdp_dir.exists() {
            fs::remove_dir_all(&pdp_dir).map_err(&io)?;
        }
        fs::create_dir_all(&pdp_dir).map_err(&io)?;
        let ranking = importance_ranking(&importance);
        let mut curves = Vec::new();
        for (rank, &f) in ranking
            .iter()
            .filter(|&&f| importance[f] > 0.0)
            .take(self.cfg.predictor.pdp_top_n)
            .enumerate()
        {
            let name = &schema.names[f];
            let curve = pdp(&model, &background, f, schema.is_binary(f), self.cfg.predictor.pdp_grid)
                .map_err(|e| fail(Stage::Explain)(e.to_string()))?;
            write_pdp(&pdp_dir, rank + 1, name, &curve).map_err(|e| fail(Stage::Explain)(e.to_string()))?;
            curves.push(PdpSummary {
                feature: name.clone(),
                rank: rank + 1,
                file_stem: pdp_file_stem(rank + 1, name),
                slope: curve.slope(),
                grid: curve.grid,
                values: curve.values,
            });
        }
        let report = RunReport {
            metrics,
            importance: ranking
                .iter()
                .map(|&f| (schema.names[f].clone(), importance[f]))
                .collect(),
            pdp: curves,
            topics: TopicSummary {
                k: topic_model.k,
                top_words: topic_model
                    .topic_words
                    .iter()
                    .map(|ws| ws.iter().map(|(w, _)| w.clone()).collect())
                    .collect(),
                silhouette_by_k: topic_model.silhouette_by_k.clone(),
                assignments: topic_records.into_iter().map(|r| (r.asset_id, r.topic)).collect(),
            },
            n_failures: failures.len(),
        };
        write_json(&self.path(REPORT), &report).map_err(&io)?;
        self.finish(Stage::Explain, started)?;
        Ok(
            json!({ "stage": "explain", "pdp_curves": report.pdp.len(), "top_feature": report.importance.first().map(|p| &p.0) }),
        )
    }

    pub fn run_stage(&self, stage: Stage) -> Result<serde_json::Value, PipelineError> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Extract => self.extract(),
            Stage::Insights => self.insights(),
            Stage::Topics => self.topics(),
            Stage::Train => self.train(),
            Stage::Explain => self.explain(),
        }
    }

    /// All stages in order; stops at the first stage error.
    pub fn run_all(&self) -> Result<serde_json::Value, PipelineError> {
        let mut summaries = Vec::new();
        for s in Stage::ALL {
            summaries.push(self.run_stage(s)?);
        }
        Ok(json!({ "stage": "run", "stages": summaries }))
    }
}

pub fn run_stage(cfg: RunConfig, stage: Stage) -> Result<serde_json::Value, PipelineError> {
    let workers = cfg.workers;
    let p = Pipeline::new(cfg)?;
    par::with_workers(workers, || p.run_stage(stage))
}

pub fn run_all(cfg: RunConfig) -> Result<serde_json::Value, PipelineError> {
    let workers = cfg.workers;
    let p = Pipeline::new(cfg)?;
    par::with_workers(workers, || p.run_all())
}
