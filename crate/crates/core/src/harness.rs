//! Synthetic hook corpora with planted feature-to-CPI relationships, and a
//! check that a finished run recovers them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::acoustic::power;
use crate::config::{ConfigInvalid, RunConfig};
use crate::ingest::{
    extract_hook, write_manifest, write_raw_frames, write_wav_pcm16, AudioClip, Frame, Vertical, VideoAsset,
};
use crate::mllm::{build_prompt, request_digest};
use crate::par;
use crate::pipeline::{run_all, PipelineError, RunReport};
use crate::rng::{derive_seed, SeededRng};
use crate::sampler::sample_hook;

pub const LABELS: [&str; 6] = [
    "Interactive content",
    "Humor",
    "Storytelling",
    "Product demonstration",
    "Celebrity endorsement",
    "Limited-time offer",
];

const VOCAB: [[&str; 8]; 6] = [
    ["poll", "tap", "swipe", "quiz", "choose", "participate", "vote", "game"],
    [
        "joke",
        "funny",
        "laugh",
        "comedic",
        "punchline",
        "silly",
        "gag",
        "witty",
    ],
    [
        "narrative",
        "character",
        "journey",
        "plot",
        "story",
        "arc",
        "protagonist",
        "chapter",
    ],
    [
        "demonstrates",
        "closeup",
        "unboxing",
        "tutorial",
        "hands",
        "usage",
        "specs",
        "assembly",
    ],
    [
        "celebrity",
        "famous",
        "star",
        "influencer",
        "athlete",
        "endorses",
        "icon",
        "fans",
    ],
    [
        "discount",
        "deal",
        "sale",
        "coupon",
        "countdown",
        "price",
        "savings",
        "expires",
    ],
];

const DARK: [[u8; 3]; 3] = [[20, 24, 40], [35, 20, 25], [15, 35, 30]];
const BRIGHT: [[u8; 3]; 3] = [[230, 220, 200], [200, 235, 225], [240, 210, 230]];
const RECT: [u8; 3] = [128, 128, 128];
const CLICK_LEN: usize = 160;

pub const AD_CONTEXT: [(&str, &[&str]); 4] = [
    ("gender_mix", &["F", "M", "Mixed"]),
    ("age_bucket", &["18-24", "25-34", "35-44", "45+"]),
    ("advertiser_size", &["small", "medium", "large"]),
    ("region", &["north", "south", "east", "west"]),
];

const VERTICALS: [Vertical; 5] = [
    Vertical::Ecommerce,
    Vertical::Healthcare,
    Vertical::Cpg,
    Vertical::Automobile,
    Vertical::Entertainment,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTerm {
    pub at: f64,
    pub coef: f64,
}

/// `cpi = max(0, intercept + topic_coefs[label] + power_coef * power
///                 + threshold.coef * 1[power > threshold.at] + noise)`.
/// With `pure_noise` only the intercept and noise remain, while the
/// coefficients still name the claimed drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpiFormula {
    #[serde(default = "default_intercept")]
    pub intercept: f64,
    #[serde(default = "default_topic_coefs")]
    pub topic_coefs: BTreeMap<String, f64>,
    #[serde(default = "default_power_coef")]
    pub power_coef: f64,
    #[serde(default)]
    pub power_threshold: Option<ThresholdTerm>,
    #[serde(default)]
    pub pure_noise: bool,
}

fn default_intercept() -> f64 {
    0.2
}
fn default_topic_coefs() -> BTreeMap<String, f64> {
    [(LABELS[0].to_string(), 0.5)].into_iter().collect()
}
fn default_power_coef() -> f64 {
    2.0
}

impl Default for CpiFormula {
    fn default() -> Self {
        Self {
            intercept: default_intercept(),
            topic_coefs: default_topic_coefs(),
            power_coef: default_power_coef(),
            power_threshold: None,
            pure_noise: false,
        }
    }
}

impl CpiFormula {
    pub fn signal(&self, label: &str, power: f64) -> f64 {
        if self.pure_noise {
            return self.intercept;
        }
        let mut v = self.intercept + self.topic_coefs.get(label).copied().unwrap_or(0.0) + self.power_coef * power;
        if let Some(t) = &self.power_threshold {
            if power > t.at {
                v += t.coef;
            }
        }
        v
    }
}

fn default_n_assets() -> usize {
    200
}
fn default_noise_sd() -> f64 {
    0.05
}
fn default_fps() -> f64 {
    30.0
}
fn default_duration() -> f64 {
    3.5
}
fn default_width() -> u32 {
    32
}
fn default_height() -> u32 {
    24
}
fn default_sr() -> u32 {
    16_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_n_assets")]
    pub n_assets: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub formula: CpiFormula,
    /// The last `n_broken` assets get a manifest entry but no media.
    #[serde(default)]
    pub n_broken: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default = "default_sr")]
    pub sample_rate_hz: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AudioRecipe {
    Sine { f0_hz: f64, amp: f64 },
    Clicks { bpm: f64 },
    Noise { amp: f64 },
    Silence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetPlan {
    pub id: String,
    pub label: String,
    pub rationale: String,
    pub title: String,
    pub body: String,
    pub scene_cut_times_s: Vec<f64>,
    pub audio: AudioRecipe,
    pub audio_seed: u64,
    pub palette_offset: usize,
    pub vertical: Vertical,
    pub ad_context: BTreeMap<String, String>,
    pub broken: bool,
    /// Power of the hook-window audio, 0 for silence.
    pub planted_power: f64,
    pub cpi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub config: SynthConfig,
    pub hook_secs: f64,
    pub assets: Vec<AssetPlan>,
}

pub fn synth_audio(recipe: &AudioRecipe, sr: u32, secs: f64, seed: u64) -> AudioClip {
    let n = (secs * f64::from(sr)) as usize;
    let fs = f64::from(sr);
    let samples = match *recipe {
        AudioRecipe::Sine { f0_hz, amp } => (0..n)
            .map(|i| amp * (std::f64::consts::TAU * f0_hz * i as f64 / fs).sin())
            .collect(),
        AudioRecipe::Clicks { bpm } => {
            let mut s = vec![0.0; n];
            let period = 60.0 / bpm;
            let mut beat = 0usize;
            loop {
                let start = (beat as f64 * period * fs) as usize;
                if start >= n {
                    break;
                }
                for i in 0..CLICK_LEN.min(n - start) {
                    let decay = (-(i as f64) / 40.0).exp();
                    s[start + i] = 0.9 * decay * (std::f64::consts::TAU * 1000.0 * i as f64 / fs).sin();
                }
                beat += 1;
            }
            s
        }
        AudioRecipe::Noise { amp } => {
            let mut g = SeededRng::new(seed);
            (0..n).map(|_| g.uniform(-amp, amp)).collect()
        }
        AudioRecipe::Silence => Vec::new(),
    };
    AudioClip {
        sample_rate_hz: sr,
        samples,
    }
}

/// Solid background that alternates between a dark and a bright palette at
/// each cut, plus a grey rectangle sliding 2 px per frame.
pub fn render_frames(plan: &AssetPlan, cfg: &SynthConfig) -> Vec<Frame> {
    let n = (cfg.duration_s * cfg.fps).round() as usize;
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let (rw, rh) = (8usize.min(w), 6usize.min(h));
    (0..n)
        .map(|k| {
            let t = k as f64 / cfg.fps;
            let seg = plan.scene_cut_times_s.iter().filter(|&&c| c <= t).count();
            let bg = if seg % 2 == 0 {
                DARK[(plan.palette_offset + seg / 2) % DARK.len()]
            } else {
                BRIGHT[(plan.palette_offset + seg / 2) % BRIGHT.len()]
            };
            let rx = (2 * k) % (w - rw + 1);
            let ry = (h - rh) / 2;
            let mut px = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                for x in 0..w {
                    let inside = (rx..rx + rw).contains(&x) && (ry..ry + rh).contains(&y);
                    px.extend_from_slice(if inside { &RECT } else { &bg });
                }
            }
            Frame::new(cfg.width, cfg.height, px, t).expect("consistent dimensions")
        })
        .collect()
}

fn pick<'a, T>(g: &mut SeededRng, items: &'a [T]) -> &'a T {
    &items[g.below(items.len() as u64) as usize]
}

fn rationale(g: &mut SeededRng, label_idx: usize) -> String {
    let v = &VOCAB[label_idx];
    let picks = g.sample_indices(v.len(), 4);
    format!(
        "The opening uses {} and {} with {} {} to keep viewers watching.",
        v[picks[0]], v[picks[1]], v[picks[2]], v[picks[3]]
    )
}

fn cut_times(g: &mut SeededRng, duration: f64) -> Vec<f64> {
    let n = g.below(3) as usize;
    let mut cuts: Vec<f64> = Vec::new();
    let mut attempts = 0;
    while cuts.len() < n && attempts < 100 {
        attempts += 1;
        let t = (g.uniform(0.3, duration - 0.3) * 100.0).round() / 100.0;
        if cuts.iter().all(|c| (c - t).abs() >= 0.3) {
            cuts.push(t);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts
}

/// Draws every per-asset planted attribute and the resulting CPI.
pub fn plan_corpus(cfg: &SynthConfig, hook_secs: f64) -> SynthSpec {
    let assets = par::map_range(cfg.n_assets, |i| {
        let mut g = SeededRng::new(derive_seed(cfg.seed, format!("asset-{i}").as_bytes()));
        let label_idx = g.below(LABELS.len() as u64) as usize;
        let rationale = rationale(&mut g, label_idx);
        let cuts = cut_times(&mut g, cfg.duration_s);
        let r = g.unit();
        let audio = if r < 0.6 {
            AudioRecipe::Sine {
                f0_hz: g.uniform(120.0, 600.0),
                amp: g.uniform(0.1, 0.9),
            }
        } else if r < 0.75 {
            AudioRecipe::Clicks {
                bpm: g.uniform(80.0, 160.0),
            }
        } else if r < 0.9 {
            AudioRecipe::Noise {
                amp: g.uniform(0.05, 0.5),
            }
        } else {
            AudioRecipe::Silence
        };
        let audio_seed = g.next_u64();
        let ad_context = AD_CONTEXT
            .iter()
            .map(|(k, levels)| (k.to_string(), pick(&mut g, levels).to_string()))
            .collect();
        let vertical = *pick(&mut g, &VERTICALS);
        let title = format!("{} spot {i}", pick(&mut g, &["Spring", "Launch", "Weekend", "Daily"]));
        let body = pick(&mut g, &["Learn more today", "Available now", "See it in action"]).to_string();
        let palette_offset = g.below(3) as usize;
        let noise = g.normal() * cfg.noise_sd;

        let clip = synth_audio(&audio, cfg.sample_rate_hz, cfg.duration_s, audio_seed);
        let hook_len = ((hook_secs * f64::from(cfg.sample_rate_hz)).floor() as usize).min(clip.samples.len());
        let hook_clip = AudioClip {
            sample_rate_hz: clip.sample_rate_hz,
            samples: clip.samples[..hook_len].to_vec(),
        };
        let planted_power = power(&hook_clip).unwrap_or(0.0);
        let label = LABELS[label_idx].to_string();
        let cpi = (cfg.formula.signal(&label, planted_power) + noise).max(0.0);
        AssetPlan {
            id: format!("ad{i:04}"),
            label,
            rationale,
            title,
            body,
            scene_cut_times_s: cuts,
            audio,
            audio_seed,
            palette_offset,
            vertical,
            ad_context,
            broken: i + cfg.n_broken >= cfg.n_assets,
            planted_power,
            cpi,
        }
    });
    SynthSpec {
        config: cfg.clone(),
        hook_secs,
        assets,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub manifest_path: PathBuf,
    pub fixtures_path: PathBuf,
    pub n_assets: usize,
    pub n_broken: usize,
}

fn synth_err(reason: String) -> PipelineError {
    PipelineError::StageFailed { stage: "synth", reason }
}

/// Writes media, the manifest, the mock-backend fixtures and
/// `synth_spec.json` next to the manifest named in `run_cfg`. Fixture keys
/// replicate the run's hook trimming and frame sampling.
pub fn gen_corpus(spec: &SynthSpec, run_cfg: &RunConfig) -> Result<CorpusSummary, PipelineError> {
    let corpus_dir = run_cfg
        .manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let fixtures_path = run_cfg.mllm.corpus_path.clone().ok_or_else(|| ConfigInvalid {
        path: "mllm.corpus_path".into(),
        reason: "the synthetic corpus needs a mock fixture path".into(),
    })?;
    let cfg = &spec.config;
    fs::create_dir_all(&corpus_dir).map_err(|e| synth_err(e.to_string()))?;

    let results = par::map(&spec.assets, |plan| -> Result<(VideoAsset, String, String), String> {
        let frames = render_frames(plan, cfg);
        let audio = synth_audio(&plan.audio, cfg.sample_rate_hz, cfg.duration_s, plan.audio_seed);
        let rel = format!("assets/{}", plan.id);
        let dir = corpus_dir.join(&rel);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
        }
        if !plan.broken {
            write_raw_frames(&dir, &frames, cfg.fps).map_err(|e| e.to_string())?;
            if !audio.is_empty() {
                write_wav_pcm16(&dir.join("audio.wav"), &audio).map_err(|e| e.to_string())?;
            }
        }
        let hook = extract_hook(&plan.id, &frames, &audio, (&plan.title, &plan.body), spec.hook_secs)
            .map_err(|e| e.to_string())?;
        let sample = sample_hook(&hook, &run_cfg.sampler).map_err(|e| e.to_string())?;
        let refs: Vec<&Frame> = sample.indices.iter().map(|&i| &hook.frames[i]).collect();
        let digest = request_digest(&build_prompt(&plan.title, &plan.body), &refs);
        let response = json!({ "methodology": plan.label, "rationale": plan.rationale }).to_string();
        let asset = VideoAsset {
            id: plan.id.clone(),
            source: rel,
            fps: cfg.fps,
            duration_s: Some(cfg.duration_s),
            title_text: plan.title.clone(),
            body_text: plan.body.clone(),
            vertical: plan.vertical,
            cpi: Some(plan.cpi),
            ad_context: plan.ad_context.clone(),
        };
        Ok((asset, digest, response))
    });

    let mut manifest = Vec::with_capacity(results.len());
    let mut fixtures = BTreeMap::new();
    for r in results {
        let (asset, digest, response) = r.map_err(synth_err)?;
        manifest.push(asset);
        fixtures.insert(digest, response);
    }
    write_manifest(&run_cfg.manifest_path, &manifest).map_err(|e| synth_err(e.to_string()))?;
    let write = |p: &Path, v: serde_json::Value| -> Result<(), PipelineError> {
        let mut s = serde_json::to_string_pretty(&v).map_err(|e| synth_err(e.to_string()))?;
        s.push('\n');
        fs::write(p, s).map_err(|e| synth_err(e.to_string()))
    };
    write(&fixtures_path, json!(fixtures))?;
    write(&corpus_dir.join("synth_spec.json"), json!(spec))?;
    Ok(CorpusSummary {
        manifest_path: run_cfg.manifest_path.clone(),
        fixtures_path,
        n_assets: manifest.len(),
        n_broken: spec.assets.iter().filter(|a| a.broken).count(),
    })
}

/// Run config for a synthetic corpus rooted at `root`: corpus under
/// `root/corpus`, run directory `root/run`, mock insights, and a topic
/// search around the size of the label set.
pub fn synth_run_config(root: &Path, synth: SynthConfig) -> RunConfig {
    let corpus = root.join("corpus");
    let mut cfg = RunConfig::new(corpus.join("manifest.jsonl"), root.join("run"));
    cfg.mllm.corpus_path = Some(corpus.join("mllm_fixtures.json"));
    cfg.topics.k_candidates = vec![4, 5, 6, 7, 8];
    cfg.seed = Some(synth.seed);
    cfg.synth = Some(synth);
    cfg.apply_global_seed();
    cfg
}

/// Plans and writes the corpus described by the config's `synth` section.
pub fn cmd_synth(run_cfg: &RunConfig) -> Result<serde_json::Value, PipelineError> {
    let synth = run_cfg.synth.as_ref().ok_or_else(|| ConfigInvalid {
        path: "synth".into(),
        reason: "config has no synth section".into(),
    })?;
    let spec = par::with_workers(run_cfg.workers, || plan_corpus(synth, run_cfg.hook_secs));
    let summary = par::with_workers(run_cfg.workers, || gen_corpus(&spec, run_cfg))?;
    Ok(json!({
        "stage": "synth",
        "assets": summary.n_assets,
        "broken": summary.n_broken,
        "manifest": summary.manifest_path.display().to_string(),
    }))
}

/// Chains every stage over an already generated corpus.
pub fn run_end_to_end(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    let out = cfg.output_dir.clone();
    run_all(cfg.clone())?;
    RunReport::load(&out).map_err(|e| synth_err(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Driver {
    pub feature: String,
    pub positive: bool,
}

/// Planted drivers as feature names of the run: each planted topic label
/// maps to the discovered topic holding most assets with that label.
pub fn planted_drivers(spec: &SynthSpec, report: &RunReport) -> Vec<Driver> {
    let label_of: BTreeMap<&str, &str> = spec.assets.iter().map(|a| (a.id.as_str(), a.label.as_str())).collect();
    let f = &spec.config.formula;
    let mut drivers = Vec::new();
    for (label, &coef) in &f.topic_coefs {
        if coef == 0.0 {
            continue;
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for (id, &t) in &report.topics.assignments {
            if label_of.get(id.as_str()) == Some(&label.as_str()) {
                *counts.entry(t).or_default() += 1;
            }
        }
        if let Some((&t, _)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
            drivers.push(Driver {
                feature: format!("topic_{t}"),
                positive: coef > 0.0,
            });
        }
    }
    let power_effect = f.power_coef + f.power_threshold.as_ref().map_or(0.0, |t| t.coef);
    if f.power_coef != 0.0 || power_effect != 0.0 {
        drivers.push(Driver {
            feature: "acoustic.power".into(),
            positive: power_effect > 0.0 || (power_effect == 0.0 && f.power_coef > 0.0),
        });
    }
    drivers
}

/// 1-based rank of a feature by importance; `None` when it has no gain.
pub fn importance_rank(report: &RunReport, feature: &str) -> Option<usize> {
    report
        .importance
        .iter()
        .position(|(n, s)| n == feature && *s > 0.0)
        .map(|p| p + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub pass: bool,
    pub recovered: Vec<String>,
    pub diagnostics: Vec<String>,
}

/// Passes iff every planted driver ranks within the top `2 * drivers` by
/// importance and its PDP slope has the planted sign.
pub fn recovery_check(report: &RunReport, spec: &SynthSpec) -> Recovery {
    check_drivers(report, &planted_drivers(spec, report))
}

pub fn check_drivers(report: &RunReport, drivers: &[Driver]) -> Recovery {
    let top = 2 * drivers.len();
    let mut recovered = Vec::new();
    let mut diagnostics = Vec::new();
    for d in drivers {
        let rank = importance_rank(report, &d.feature);
        let slope = report.pdp.iter().find(|p| p.feature == d.feature).map(|p| p.slope);
        let ranked = rank.is_some_and(|r| r <= top);
        let signed = slope.is_some_and(|s| if d.positive { s > 0.0 } else { s < 0.0 });
        if ranked && signed {
            recovered.push(d.feature.clone());
        } else {
            diagnostics.push(format!(
                "driver {} not recovered: rank {}, pdp slope {}",
                d.feature,
                rank.map_or("none".to_string(), |r| r.to_string()),
                slope.map_or("none".to_string(), |s| format!("{s:.6}"))
            ));
        }
    }
    if !drivers.is_empty() && recovered.is_empty() {
        diagnostics.insert(0, "no driver recovered".into());
    }
    Recovery {
        pass: recovered.len() == drivers.len(),
        recovered,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::{tempo_estimate, AcousticConfig};
    use crate::pipeline::{PdpSummary, TopicSummary};
    use crate::predictor::MetricsReport;
    use crate::sampler::{frame_diffs, keyframe_select, SsimParams};

    fn plan_with_cuts(cuts: &[f64]) -> AssetPlan {
        let mut spec = plan_corpus(
            &SynthConfig {
                n_assets: 1,
                ..SynthConfig::default()
            },
            3.0,
        );
        let mut p = spec.assets.remove(0);
        p.scene_cut_times_s = cuts.to_vec();
        p
    }

    #[test]
    fn single_cut_gives_one_spike() {
        let cfg = SynthConfig::default();
        let frames = render_frames(&plan_with_cuts(&[1.5]), &cfg);
        let d = frame_diffs(&frames, &SsimParams::default()).unwrap();
        let argmax = (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        assert_eq!(argmax, 44);
        assert_eq!(d.iter().filter(|&&v| v > 0.5 * d[44]).count(), 1);
    }

    #[test]
    fn planted_cuts_found_by_keyframe_selection() {
        let cfg = SynthConfig::default();
        for cuts in [vec![0.8, 2.1], vec![1.5], vec![0.4, 1.2, 2.9]] {
            let frames = render_frames(&plan_with_cuts(&cuts), &cfg);
            let s = keyframe_select("a", &frames, 0.5, 3, None, &SsimParams::default()).unwrap();
            let expected: Vec<usize> = cuts.iter().map(|c| (c * cfg.fps).ceil() as usize).collect();
            assert_eq!(s.indices.len(), expected.len());
            for (got, want) in s.indices.iter().zip(&expected) {
                assert!(got.abs_diff(*want) <= 1, "{cuts:?}: {:?}", s.indices);
            }
        }
    }

    #[test]
    fn click_recipe_tempo() {
        let clip = synth_audio(&AudioRecipe::Clicks { bpm: 120.0 }, 16_000, 3.0, 0);
        let t = tempo_estimate(&clip, &AcousticConfig::default()).unwrap();
        assert!((t - 120.0).abs() <= 2.0, "{t}");
        assert!(synth_audio(&AudioRecipe::Silence, 16_000, 3.0, 0).is_empty());
    }

    #[test]
    fn plan_is_deterministic_and_clamped() {
        let cfg = SynthConfig {
            n_assets: 60,
            seed: 3,
            noise_sd: 1.0,
            ..SynthConfig::default()
        };
        let a = plan_corpus(&cfg, 3.0);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&plan_corpus(&cfg, 3.0)).unwrap()
        );
        assert!(a.assets.iter().all(|p| p.cpi >= 0.0));
        assert!(a.assets.iter().any(|p| p.cpi == 0.0));
        let silent = a.assets.iter().find(|p| p.audio == AudioRecipe::Silence).unwrap();
        assert_eq!(silent.planted_power, 0.0);
    }

    fn report(importance: &[(&str, f64)], slopes: &[(&str, f64)]) -> RunReport {
        RunReport {
            metrics: MetricsReport {
                r2: None,
                mse: None,
                n_train: 0,
                n_test: 0,
                seed: 0,
                train_r2: None,
            },
            importance: importance.iter().map(|(n, s)| (n.to_string(), *s)).collect(),
            pdp: slopes
                .iter()
                .map(|(n, s)| PdpSummary {
                    feature: n.to_string(),
                    rank: 0,
                    file_stem: String::new(),
                    grid: vec![],
                    values: vec![],
                    slope: *s,
                })
                .collect(),
            topics: TopicSummary {
                k: 0,
                top_words: vec![],
                silhouette_by_k: vec![],
                assignments: BTreeMap::new(),
            },
            n_failures: 0,
        }
    }

    #[test]
    fn recovery_rules() {
        let drivers = vec![
            Driver {
                feature: "topic_2".into(),
                positive: true,
            },
            Driver {
                feature: "acoustic.power".into(),
                positive: true,
            },
        ];
        let imp = [
            ("acoustic.power", 0.5),
            ("x", 0.2),
            ("topic_2", 0.1),
            ("y", 0.1),
            ("z", 0.1),
        ];
        let good = report(&imp, &[("acoustic.power", 1.0), ("topic_2", 0.3)]);
        assert!(check_drivers(&good, &drivers).pass);
        let bad_slope = report(&imp, &[("acoustic.power", 1.0), ("topic_2", -0.3)]);
        let r = check_drivers(&bad_slope, &drivers);
        assert!(!r.pass && r.recovered == vec!["acoustic.power".to_string()]);
        let none = report(
            &[("x", 0.5), ("y", 0.3), ("z", 0.1), ("w", 0.05), ("topic_2", 0.05)],
            &[],
        );
        let r = check_drivers(&none, &drivers);
        assert!(!r.pass);
        assert_eq!(r.diagnostics[0], "no driver recovered");
        assert!(check_drivers(&none, &[]).pass);
    }
}
