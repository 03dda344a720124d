//! Frame sampling over a hook: seeded uniform sampling and SSIM-driven key
//! frame selection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Frame, HookClip};
use crate::par;
use crate::rng::{derive_seed, SeededRng};

/// Frames are shrunk (nearest neighbour) so that neither side exceeds this
/// before SSIM is computed.
pub const SSIM_MAX_DIM: u32 = 256;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("frame {width}x{height} is smaller than the {window}px SSIM window")]
    FrameSmallerThanWindow { width: u32, height: u32, window: u32 },
    #[error("need at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("cannot draw {m} frames from {k}")]
    SampleLargerThanPopulation { m: usize, k: usize },
    #[error("invalid sampler parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: u32,
    pub height: u32,
    pub luma: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, luma: Vec<f64>) -> Self {
        assert_eq!(luma.len(), width as usize * height as usize);
        Self { width, height, luma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimParams {
    pub window: u32,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 8,
            dynamic_range: 255.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (0.01 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (0.03 * self.dynamic_range).powi(2)
    }
}

/// BT.601 luma.
pub fn to_gray(frame: &Frame) -> GrayFrame {
    let luma = frame
        .pixels
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect();
    GrayFrame::new(frame.width, frame.height, luma)
}

/// Nearest-neighbour shrink so that `max(width, height) <= max_dim`.
pub fn downscale(g: &GrayFrame, max_dim: u32) -> GrayFrame {
    let longest = g.width.max(g.height);
    if longest <= max_dim {
        return g.clone();
    }
    let scale = f64::from(max_dim) / f64::from(longest);
    let w = ((f64::from(g.width) * scale).round() as u32).max(1);
    let h = ((f64::from(g.height) * scale).round() as u32).max(1);
    let mut luma = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        let sy = (u64::from(y) * u64::from(g.height) / u64::from(h)) as usize;
        for x in 0..w {
            let sx = (u64::from(x) * u64::from(g.width) / u64::from(w)) as usize;
            luma.push(g.luma[sy * g.width as usize + sx]);
        }
    }
    GrayFrame::new(w, h, luma)
}

/// Mean SSIM over non-overlapping `window x window` blocks; trailing partial
/// blocks are dropped. Block statistics use population (1/N) moments.
pub fn ssim(a: &GrayFrame, b: &GrayFrame, p: &SsimParams) -> Result<f64, SamplerError> {
    if a.width != b.width || a.height != b.height {
        return Err(SamplerError::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    if p.window == 0 || a.width < p.window || a.height < p.window {
        return Err(SamplerError::FrameSmallerThanWindow {
            width: a.width,
            height: a.height,
            window: p.window,
        });
    }
    let (c1, c2) = (p.c1(), p.c2());
    let win = p.window as usize;
    let stride = a.width as usize;
    let bx = a.width as usize / win;
    let by = a.height as usize / win;
    let n = (win * win) as f64;

    let mut total = 0.0;
    for j in 0..by {
        for i in 0..bx {
            let (mut sa, mut sb) = (0.0, 0.0);
            for y in j * win..(j + 1) * win {
                let row = y * stride;
                for x in i * win..(i + 1) * win {
                    sa += a.luma[row + x];
                    sb += b.luma[row + x];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for y in j * win..(j + 1) * win {
                let row = y * stride;
                for x in i * win..(i + 1) * win {
                    let da = a.luma[row + x] - ma;
                    let db = b.luma[row + x] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (bx * by) as f64)
}

/// `D_i = 1 - SSIM(I_i, I_{i+1})` over downscaled luma frames.
pub fn frame_diffs(frames: &[Frame], p: &SsimParams) -> Result<Vec<f64>, SamplerError> {
    if frames.len() < 2 {
        return Err(SamplerError::TooFewFrames(frames.len()));
    }
    let grays = par::map(frames, |f| downscale(&to_gray(f), SSIM_MAX_DIM));
    par::map_range(grays.len() - 1, |i| ssim(&grays[i], &grays[i + 1], p).map(|s| 1.0 - s))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    UniformRandom,
    KeyFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleParams {
    Uniform {
        m: usize,
    },
    KeyFrame {
        alpha: f64,
        delta_t: usize,
        #[serde(default)]
        max_frames: Option<usize>,
    },
}

/// Indices into a hook's frame sequence plus how they were chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub asset_id: String,
    pub strategy: Strategy,
    pub indices: Vec<usize>,
    pub seed: Option<u64>,
    pub params: SampleParams,
}

/// Draws `m` of `frame_count` frame indices without replacement (see
/// [`crate::rng`] for the pinned generator), sorted ascending.
pub fn uniform_random_sample(
    asset_id: &str,
    frame_count: usize,
    m: usize,
    seed: u64,
) -> Result<FrameSample, SamplerError> {
    if m == 0 {
        return Err(SamplerError::InvalidParams("m must be at least 1".into()));
    }
    if m > frame_count {
        return Err(SamplerError::SampleLargerThanPopulation { m, k: frame_count });
    }
    let indices = SeededRng::new(seed).sample_indices(frame_count, m);
    Ok(FrameSample {
        asset_id: asset_id.to_string(),
        strategy: Strategy::UniformRandom,
        indices,
        seed: Some(seed),
        params: SampleParams::Uniform { m },
    })
}

/// Key frame rule on a difference vector. Returns frame indices: a change at
/// `D_i` keeps frame `i + 1`. Falls back to `[0]` when nothing exceeds the
/// threshold (including the all-zero case).
pub fn select_from_diffs(diffs: &[f64], alpha: f64, delta_t: usize, max_frames: Option<usize>) -> Vec<usize> {
    let max_d = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_d > 0.0) {
        return vec![0];
    }
    let tau = alpha * max_d;
    let mut kept: Vec<usize> = Vec::new();
    for (i, _) in diffs.iter().enumerate().filter(|(_, &d)| d > tau) {
        if kept.last().is_none_or(|&last| i - last >= delta_t) {
            kept.push(i);
        }
    }
    if let Some(cap) = max_frames {
        if kept.len() > cap {
            // larger D first, then smaller index
            kept.sort_by(|&a, &b| diffs[b].total_cmp(&diffs[a]).then(a.cmp(&b)));
            kept.truncate(cap.max(1));
            kept.sort_unstable();
        }
    }
    if kept.is_empty() {
        return vec![0];
    }
    kept.into_iter().map(|i| i + 1).collect()
}

fn check_keyframe_params(alpha: f64, delta_t: usize) -> Result<(), SamplerError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SamplerError::InvalidParams(format!("alpha {alpha} not in (0, 1]")));
    }
    if delta_t == 0 {
        return Err(SamplerError::InvalidParams("delta_t must be at least 1".into()));
    }
    Ok(())
}

pub fn keyframe_select(
    asset_id: &str,
    frames: &[Frame],
    alpha: f64,
    delta_t: usize,
    max_frames: Option<usize>,
    ssim_params: &SsimParams,
) -> Result<FrameSample, SamplerError> {
    check_keyframe_params(alpha, delta_t)?;
    let diffs = frame_diffs(frames, ssim_params)?;
    Ok(FrameSample {
        asset_id: asset_id.to_string(),
        strategy: Strategy::KeyFrame,
        indices: select_from_diffs(&diffs, alpha, delta_t, max_frames),
        seed: None,
        params: SampleParams::KeyFrame {
            alpha,
            delta_t,
            max_frames,
        },
    })
}

fn default_m() -> usize {
    8
}
fn default_alpha() -> f64 {
    0.5
}
fn default_delta_t() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "SamplerConfig::default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta_t")]
    pub delta_t: usize,
    #[serde(default)]
    pub max_frames: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ssim: SsimParams,
}

impl SamplerConfig {
    fn default_strategy() -> Strategy {
        Strategy::UniformRandom
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::UniformRandom,
            m: default_m(),
            alpha: default_alpha(),
            delta_t: default_delta_t(),
            max_frames: None,
            seed: 0,
            ssim: SsimParams::default(),
        }
    }
}

/// Pipeline-level sampling of one hook. The uniform seed is derived from the
/// configured seed and the asset id; `m` is capped at the hook's frame count
/// and a single-frame hook yields `[0]` under either strategy.
pub fn sample_hook(hook: &HookClip, cfg: &SamplerConfig) -> Result<FrameSample, SamplerError> {
    let k = hook.frames.len();
    match cfg.strategy {
        Strategy::UniformRandom => {
            let seed = derive_seed(cfg.seed, hook.asset_id.as_bytes());
            uniform_random_sample(&hook.asset_id, k, cfg.m.min(k), seed)
        }
        Strategy::KeyFrame if k < 2 => {
            check_keyframe_params(cfg.alpha, cfg.delta_t)?;
            Ok(FrameSample {
                asset_id: hook.asset_id.clone(),
                strategy: Strategy::KeyFrame,
                indices: vec![0],
                seed: None,
                params: SampleParams::KeyFrame {
                    alpha: cfg.alpha,
                    delta_t: cfg.delta_t,
                    max_frames: cfg.max_frames,
                },
            })
        }
        Strategy::KeyFrame => keyframe_select(
            &hook.asset_id,
            &hook.frames,
            cfg.alpha,
            cfg.delta_t,
            cfg.max_frames,
            &cfg.ssim,
        ),
    }
}
