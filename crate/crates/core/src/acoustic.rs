//! Hook-period acoustic features: loudness, power, peak, pitch statistics,
//! period/amplitude perturbation (jitter, DDP, shimmer) and tempo.
//!
//! Pitch is tracked with a windowed, normalized autocorrelation. Jitter and
//! DDP are computed from the per-frame pitch periods of each voiced run, and
//! shimmer from the per-frame peak amplitudes; no measure ever differences
//! across a run boundary. Tempo comes from the autocorrelation of a
//! spectral-flux onset envelope.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AudioClip, HookClip};

pub const DB_FLOOR: f64 = -100.0;
pub const TEMPO_MIN_BPM: f64 = 40.0;
pub const TEMPO_MAX_BPM: f64 = 240.0;

#[derive(Debug, Error, PartialEq)]
pub enum AcousticError {
    #[error("audio clip has no samples")]
    EmptyAudio,
    #[error("sample rate {sample_rate} Hz is below twice the pitch ceiling {f0_max} Hz")]
    SampleRateTooLow { sample_rate: u32, f0_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcousticConfig {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub pitch_win_s: f64,
    pub pitch_hop_s: f64,
    /// Minimum normalized autocorrelation peak for a voiced window.
    pub voicing_threshold: f64,
    /// Minimum window RMS for a voiced window.
    pub rms_gate: f64,
    /// A candidate pitch lag is accepted if its autocorrelation is at least
    /// this fraction of the band maximum; the shortest such lag wins.
    pub octave_tolerance: f64,
    pub min_run_frames: usize,
    pub tempo_win_s: f64,
    pub tempo_hop_s: f64,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self {
            f0_min_hz: 65.0,
            f0_max_hz: 1000.0,
            pitch_win_s: 0.04,
            pitch_hop_s: 0.01,
            voicing_threshold: 0.5,
            rms_gate: 0.01,
            octave_tolerance: 0.9,
            min_run_frames: 3,
            tempo_win_s: 0.046,
            tempo_hop_s: 0.0116,
        }
    }
}

/// Per-frame pitch track. `f0_hz[i] > 0` exactly when `voiced[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Track {
    pub hop_s: f64,
    pub f0_hz: Vec<f64>,
    pub voiced: Vec<bool>,
    pub frame_peak_amp: Vec<f64>,
}

impl F0Track {
    pub fn voiced_fraction(&self) -> f64 {
        if self.voiced.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.voiced.len() as f64
    }

    /// Maximal runs of consecutive voiced frames as index ranges.
    pub fn voiced_runs(&self) -> Vec<std::ops::Range<usize>> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &v) in self.voiced.iter().enumerate() {
            match (v, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push(s..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push(s..self.voiced.len());
        }
        runs
    }
}

/// Flat feature record; `None` serializes as `null` (missing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticFeatures {
    pub db_mean: Option<f64>,
    pub jitter_local: Option<f64>,
    pub tempo_bpm: Option<f64>,
    pub ddp: Option<f64>,
    pub pitch_max_hz: Option<f64>,
    pub pitch_min_hz: Option<f64>,
    pub pitch_mean_hz: Option<f64>,
    pub power: Option<f64>,
    pub peak: Option<f64>,
    pub shimmer_local: Option<f64>,
    pub has_audio: bool,
    pub voiced_fraction: Option<f64>,
}

/// Column names of [`AcousticFeatures::scalars`], in order.
pub const SCALAR_NAMES: [&str; 11] = [
    "db_mean",
    "jitter_local",
    "tempo_bpm",
    "ddp",
    "pitch_max_hz",
    "pitch_min_hz",
    "pitch_mean_hz",
    "power",
    "peak",
    "shimmer_local",
    "voiced_fraction",
];

impl AcousticFeatures {
    pub fn missing() -> Self {
        Self {
            db_mean: None,
            jitter_local: None,
            tempo_bpm: None,
            ddp: None,
            pitch_max_hz: None,
            pitch_min_hz: None,
            pitch_mean_hz: None,
            power: None,
            peak: None,
            shimmer_local: None,
            has_audio: false,
            voiced_fraction: None,
        }
    }

    pub fn scalars(&self) -> [Option<f64>; 11] {
        [
            self.db_mean,
            self.jitter_local,
            self.tempo_bpm,
            self.ddp,
            self.pitch_max_hz,
            self.pitch_min_hz,
            self.pitch_mean_hz,
            self.power,
            self.peak,
            self.shimmer_local,
            self.voiced_fraction,
        ]
    }
}

fn non_empty(clip: &AudioClip) -> Result<&[f64], AcousticError> {
    if clip.samples.is_empty() {
        Err(AcousticError::EmptyAudio)
    } else {
        Ok(&clip.samples)
    }
}

/// Mean squared amplitude.
pub fn power(clip: &AudioClip) -> Result<f64, AcousticError> {
    let s = non_empty(clip)?;
    Ok(s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64)
}

pub fn peak(clip: &AudioClip) -> Result<f64, AcousticError> {
    Ok(non_empty(clip)?.iter().fold(0.0, |m: f64, x| m.max(x.abs())))
}

/// `20 log10(RMS)` clamped below at [`DB_FLOOR`].
pub fn loudness_db(clip: &AudioClip) -> Result<f64, AcousticError> {
    let rms = power(clip)?.sqrt();
    if rms <= 0.0 {
        return Ok(DB_FLOOR);
    }
    Ok((20.0 * rms.log10()).max(DB_FLOOR))
}

fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let denom = left - 2.0 * centre + right;
    if denom.abs() < f64::EPSILON {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

/// Linear (zero-padded) autocorrelation `r[k] = sum_n x[n] x[n+k]` for
/// `k < x.len()`, via one forward and one inverse FFT of size `fft.len()`.
fn autocorrelation(x: &[f64], fwd: &Arc<dyn Fft<f64>>, inv: &Arc<dyn Fft<f64>>) -> Vec<f64> {
    let m = fwd.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    fwd.process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    buf.iter().take(x.len()).map(|c| c.re / m as f64).collect()
}

/// Normalized-autocorrelation pitch tracker.
pub fn estimate_f0(clip: &AudioClip, cfg: &AcousticConfig) -> Result<F0Track, AcousticError> {
    let sr = f64::from(clip.sample_rate_hz);
    if sr < 2.0 * cfg.f0_max_hz {
        return Err(AcousticError::SampleRateTooLow {
            sample_rate: clip.sample_rate_hz,
            f0_max: cfg.f0_max_hz,
        });
    }
    let win = ((cfg.pitch_win_s * sr).round() as usize).max(4);
    let hop = ((cfg.pitch_hop_s * sr).round() as usize).max(1);
    let samples = &clip.samples;
    let n_frames = if samples.len() >= win {
        (samples.len() - win) / hop + 1
    } else {
        0
    };

    let lag_lo = ((sr / cfg.f0_max_hz).floor() as usize).max(2);
    let lag_hi = ((sr / cfg.f0_min_hz).ceil() as usize).min(win.saturating_sub(2));

    let fft_len = (2 * win).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut track = F0Track {
        hop_s: hop as f64 / sr,
        f0_hz: Vec::with_capacity(n_frames),
        voiced: Vec::with_capacity(n_frames),
        frame_peak_amp: Vec::with_capacity(n_frames),
    };

    for f in 0..n_frames {
        let raw = &samples[f * hop..f * hop + win];
        let peak_amp = raw.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        let rms = (raw.iter().map(|x| x * x).sum::<f64>() / win as f64).sqrt();
        let f0 = if rms > cfg.rms_gate && lag_lo < lag_hi {
            frame_pitch(raw, sr, lag_lo, lag_hi, cfg, &fwd, &inv)
        } else {
            None
        };
        track.f0_hz.push(f0.unwrap_or(0.0));
        track.voiced.push(f0.is_some());
        track.frame_peak_amp.push(peak_amp);
    }
    Ok(track)
}

fn frame_pitch(
    raw: &[f64],
    sr: f64,
    lag_lo: usize,
    lag_hi: usize,
    cfg: &AcousticConfig,
    fwd: &Arc<dyn Fft<f64>>,
    inv: &Arc<dyn Fft<f64>>,
) -> Option<f64> {
    let n = raw.len();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = raw.iter().map(|v| v - mean).collect();
    let ac = autocorrelation(&x, fwd, inv);

    // energy of x[0..n-k] and x[k..n]
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v * v;
    }
    let norm = |k: usize| {
        let head = prefix[n - k];
        let tail = prefix[n] - prefix[k];
        let d = (head * tail).sqrt();
        if d > 0.0 {
            ac[k] / d
        } else {
            0.0
        }
    };
    let r: Vec<f64> = (lag_lo - 1..=lag_hi + 1).map(norm).collect();
    let at = |lag: usize| r[lag - (lag_lo - 1)];

    let best = (lag_lo..=lag_hi).map(at).fold(f64::NEG_INFINITY, f64::max);
    if !(best > cfg.voicing_threshold) {
        return None;
    }
    let accept = cfg.octave_tolerance * best;
    let lag = (lag_lo..=lag_hi).find(|&k| {
        let v = at(k);
        v >= accept && v >= at(k - 1) && v >= at(k + 1)
    })?;
    let refined = lag as f64 + parabolic_offset(at(lag - 1), at(lag), at(lag + 1));
    let f0 = sr / refined;
    (f0 >= cfg.f0_min_hz && f0 <= cfg.f0_max_hz).then_some(f0)
}

/// `(max, min, mean)` over voiced frames; zeros when nothing is voiced.
pub fn pitch_stats(track: &F0Track) -> (f64, f64, f64) {
    let voiced: Vec<f64> = track
        .f0_hz
        .iter()
        .zip(&track.voiced)
        .filter(|(_, &v)| v)
        .map(|(&f, _)| f)
        .collect();
    if voiced.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let max = voiced.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = voiced.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
    (max, min, mean.clamp(min, max))
}

/// Pitch periods (seconds) of each voiced run with at least `min_run` frames.
pub fn periods_from_track(track: &F0Track, min_run: usize) -> Vec<Vec<f64>> {
    track
        .voiced_runs()
        .into_iter()
        .filter(|r| r.len() >= min_run)
        .map(|r| track.f0_hz[r].iter().map(|f| 1.0 / f).collect())
        .collect()
}

fn mean_of_runs(runs: &[Vec<f64>]) -> f64 {
    let count: usize = runs.iter().map(Vec::len).sum();
    runs.iter().flatten().sum::<f64>() / count as f64
}

/// Mean absolute difference of consecutive periods within runs, over the
/// mean period of all runs.
pub fn jitter_local(runs: &[Vec<f64>]) -> f64 {
    let diffs: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.windows(2).map(|w| (w[1] - w[0]).abs()))
        .collect();
    if diffs.is_empty() {
        return 0.0;
    }
    let mean_period = mean_of_runs(runs);
    if mean_period <= 0.0 {
        return 0.0;
    }
    diffs.iter().sum::<f64>() / diffs.len() as f64 / mean_period
}

/// Mean absolute second difference of periods within runs, over the mean
/// period.
pub fn ddp(runs: &[Vec<f64>]) -> f64 {
    let second: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.windows(3).map(|w| ((w[2] - w[1]) - (w[1] - w[0])).abs()))
        .collect();
    if second.is_empty() {
        return 0.0;
    }
    let mean_period = mean_of_runs(runs);
    if mean_period <= 0.0 {
        return 0.0;
    }
    second.iter().sum::<f64>() / second.len() as f64 / mean_period
}

/// Mean absolute difference of consecutive frame peak amplitudes within voiced
/// runs (of at least two frames), over their mean amplitude.
pub fn shimmer_local(track: &F0Track) -> f64 {
    let runs: Vec<&[f64]> = track
        .voiced_runs()
        .into_iter()
        .filter(|r| r.len() >= 2)
        .map(|r| &track.frame_peak_amp[r])
        .collect();
    let diffs: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.windows(2).map(|w| (w[1] - w[0]).abs()))
        .collect();
    if diffs.is_empty() {
        return 0.0;
    }
    let amps: Vec<f64> = runs.iter().flat_map(|r| r.iter().copied()).collect();
    let mean_amp = amps.iter().sum::<f64>() / amps.len() as f64;
    if mean_amp <= 0.0 {
        return 0.0;
    }
    diffs.iter().sum::<f64>() / diffs.len() as f64 / mean_amp
}

/// Half-wave-rectified spectral flux, one value per frame transition.
pub fn onset_envelope(clip: &AudioClip, win_s: f64, hop_s: f64) -> Vec<f64> {
    let sr = f64::from(clip.sample_rate_hz);
    let win = ((win_s * sr).round() as usize).max(2);
    let hop = ((hop_s * sr).round() as usize).max(1);
    let s = &clip.samples;
    if s.len() < win {
        return Vec::new();
    }
    let n_frames = (s.len() - win) / hop + 1;
    let hann: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / win as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(win);
    let bins = win / 2 + 1;
    let mut prev: Option<Vec<f64>> = None;
    let mut env = Vec::with_capacity(n_frames.saturating_sub(1));
    let mut buf = vec![Complex::new(0.0, 0.0); win];
    for f in 0..n_frames {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(s[f * hop + i] * hann[i], 0.0);
        }
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..bins].iter().map(|c| c.norm()).collect();
        if let Some(p) = &prev {
            env.push(mag.iter().zip(p).map(|(m, q)| (m - q).max(0.0)).sum());
        }
        prev = Some(mag);
    }
    env
}

/// Tempo in BPM from the onset-envelope autocorrelation, or `None` for clips
/// under one second or without a periodic peak in 40-240 BPM.
pub fn tempo_estimate(clip: &AudioClip, cfg: &AcousticConfig) -> Option<f64> {
    if clip.duration_s() < 1.0 {
        return None;
    }
    let sr = f64::from(clip.sample_rate_hz);
    let hop = ((cfg.tempo_hop_s * sr).round() as usize).max(1);
    let hop_s = hop as f64 / sr;
    let env = onset_envelope(clip, cfg.tempo_win_s, cfg.tempo_hop_s);
    if env.len() < 4 {
        return None;
    }
    let mean = env.iter().sum::<f64>() / env.len() as f64;
    let e: Vec<f64> = env.iter().map(|v| v - mean).collect();

    let lag_lo = ((60.0 / TEMPO_MAX_BPM) / hop_s).ceil() as usize;
    let lag_hi = (((60.0 / TEMPO_MIN_BPM) / hop_s).floor() as usize).min(e.len().saturating_sub(2));
    if lag_lo < 1 || lag_lo > lag_hi {
        return None;
    }
    let ac = |k: usize| -> f64 { e.iter().zip(&e[k..]).map(|(a, b)| a * b).sum() };
    let values: Vec<f64> = (lag_lo - 1..=lag_hi + 1).map(ac).collect();
    let at = |k: usize| values[k - (lag_lo - 1)];

    let mut best: Option<(usize, f64)> = None;
    for k in lag_lo..=lag_hi {
        let v = at(k);
        if v > 0.0 && v > at(k - 1) && v >= at(k + 1) && best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    let (k, _) = best?;
    let refined = k as f64 + parabolic_offset(at(k - 1), at(k), at(k + 1));
    Some((60.0 / (refined * hop_s)).clamp(TEMPO_MIN_BPM, TEMPO_MAX_BPM))
}

pub fn extract_acoustic(hook: &HookClip, cfg: &AcousticConfig) -> Result<AcousticFeatures, AcousticError> {
    let clip = &hook.audio;
    if clip.is_empty() {
        return Ok(AcousticFeatures::missing());
    }
    let track = estimate_f0(clip, cfg)?;
    let (pmax, pmin, pmean) = pitch_stats(&track);
    let runs = periods_from_track(&track, cfg.min_run_frames);
    Ok(AcousticFeatures {
        db_mean: Some(loudness_db(clip)?),
        jitter_local: Some(jitter_local(&runs)),
        tempo_bpm: tempo_estimate(clip, cfg),
        ddp: Some(ddp(&runs)),
        pitch_max_hz: Some(pmax),
        pitch_min_hz: Some(pmin),
        pitch_mean_hz: Some(pmean),
        power: Some(power(clip)?),
        peak: Some(peak(clip)?),
        shimmer_local: Some(shimmer_local(&track)),
        has_audio: true,
        voiced_fraction: Some(track.voiced_fraction()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    const SR: u32 = 16_000;

    fn sine(f: f64, amp: f64, secs: f64) -> AudioClip {
        let n = (secs * f64::from(SR)) as usize;
        AudioClip {
            sample_rate_hz: SR,
            samples: (0..n)
                .map(|i| amp * (std::f64::consts::TAU * f * i as f64 / f64::from(SR)).sin())
                .collect(),
        }
    }

    fn track(f0: &[f64], amps: &[f64]) -> F0Track {
        F0Track {
            hop_s: 0.01,
            f0_hz: f0.to_vec(),
            voiced: f0.iter().map(|&f| f > 0.0).collect(),
            frame_peak_amp: amps.to_vec(),
        }
    }

    #[test]
    fn loudness_examples() {
        let zeros = AudioClip {
            sample_rate_hz: SR,
            samples: vec![0.0; 100],
        };
        assert_eq!(loudness_db(&zeros).unwrap(), DB_FLOOR);
        let square = AudioClip {
            sample_rate_hz: SR,
            samples: (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        };
        assert!(loudness_db(&square).unwrap().abs() < 1e-12);
        assert!((loudness_db(&sine(440.0, 1.0, 1.0)).unwrap() + 3.0103).abs() < 0.01);
        assert_eq!(loudness_db(&AudioClip::silent()), Err(AcousticError::EmptyAudio));
    }

    #[test]
    fn power_and_peak_examples() {
        let zeros = AudioClip {
            sample_rate_hz: SR,
            samples: vec![0.0; 10],
        };
        assert_eq!((power(&zeros).unwrap(), peak(&zeros).unwrap()), (0.0, 0.0));
        let s = sine(440.0, 1.0, 1.0);
        assert!((power(&s).unwrap() - 0.5).abs() < 1e-3);
        assert!((peak(&s).unwrap() - 1.0).abs() < 1e-6);
        let c = AudioClip {
            sample_rate_hz: SR,
            samples: vec![0.5; 10],
        };
        assert_eq!((power(&c).unwrap(), peak(&c).unwrap()), (0.25, 0.5));
    }

    #[test]
    fn f0_of_pure_sine() {
        let t = estimate_f0(&sine(440.0, 0.8, 3.0), &AcousticConfig::default()).unwrap();
        assert!(!t.voiced.is_empty());
        assert!(t.voiced.iter().all(|&v| v));
        assert!(t.f0_hz.iter().all(|f| (f - 440.0).abs() < 2.0), "{:?}", &t.f0_hz[..5]);
    }

    #[test]
    fn f0_of_noise_and_silence() {
        for seed in 0..3 {
            let mut r = SeededRng::new(seed);
            let noise = AudioClip {
                sample_rate_hz: SR,
                samples: (0..3 * SR as usize).map(|_| 0.3 * r.uniform(-1.0, 1.0)).collect(),
            };
            let t = estimate_f0(&noise, &AcousticConfig::default()).unwrap();
            assert!(t.voiced_fraction() < 0.2, "seed {seed}: {}", t.voiced_fraction());
        }
        let silence = AudioClip {
            sample_rate_hz: SR,
            samples: vec![0.0; SR as usize],
        };
        assert_eq!(
            estimate_f0(&silence, &AcousticConfig::default())
                .unwrap()
                .voiced_fraction(),
            0.0
        );
    }

    #[test]
    fn f0_rejects_low_sample_rate() {
        let clip = AudioClip {
            sample_rate_hz: 1500,
            samples: vec![0.0; 100],
        };
        assert!(matches!(
            estimate_f0(&clip, &AcousticConfig::default()),
            Err(AcousticError::SampleRateTooLow { .. })
        ));
    }

    #[test]
    fn pitch_stats_examples() {
        assert_eq!(pitch_stats(&track(&[0.0, 0.0], &[0.1, 0.1])), (0.0, 0.0, 0.0));
        assert_eq!(pitch_stats(&track(&[440.0; 4], &[0.1; 4])), (440.0, 440.0, 440.0));
        assert_eq!(
            pitch_stats(&track(&[100.0, 0.0, 200.0, 300.0], &[0.1; 4])),
            (300.0, 100.0, 200.0)
        );
    }

    #[test]
    fn periods_respect_runs() {
        let t = track(&[100.0, 100.0, 0.0, 200.0, 250.0, 400.0, 0.0], &[0.1; 7]);
        let runs = periods_from_track(&t, 3);
        assert_eq!(runs, vec![vec![1.0 / 200.0, 1.0 / 250.0, 1.0 / 400.0]]);
        assert!(periods_from_track(&track(&[0.0; 5], &[0.0; 5]), 3).is_empty());
    }

    #[test]
    fn perturbation_hand_arithmetic() {
        let run = vec![vec![0.010, 0.012, 0.010]];
        assert!((jitter_local(&run) - 0.1875).abs() < 1e-9);
        assert!((ddp(&run) - 0.375).abs() < 1e-9);
        assert_eq!(jitter_local(&[vec![0.01; 5]]), 0.0);
        assert_eq!(ddp(&[vec![0.01; 5]]), 0.0);
        let linear = vec![vec![0.010, 0.011, 0.012, 0.013]];
        assert!(ddp(&linear) < 1e-12);
        assert_eq!(jitter_local(&[]), 0.0);

        let t = track(&[100.0, 100.0, 100.0], &[0.5, 1.0, 0.5]);
        assert!((shimmer_local(&t) - 0.75).abs() < 1e-9);
        assert_eq!(shimmer_local(&track(&[0.0, 100.0, 0.0], &[0.2, 0.4, 0.9])), 0.0);
    }

    #[test]
    fn perturbations_do_not_cross_runs() {
        let runs = vec![vec![0.01, 0.01, 0.01], vec![0.02, 0.02, 0.02]];
        assert_eq!(jitter_local(&runs), 0.0);
        assert_eq!(ddp(&runs), 0.0);
        let t = track(&[100.0, 100.0, 0.0, 100.0, 100.0], &[0.2, 0.2, 0.0, 0.8, 0.8]);
        assert_eq!(shimmer_local(&t), 0.0);
    }

    #[test]
    fn sine_perturbation_is_small() {
        let cfg = AcousticConfig::default();
        let t = estimate_f0(&sine(440.0, 0.7, 3.0), &cfg).unwrap();
        assert!(jitter_local(&periods_from_track(&t, 3)) < 0.005);
        assert!(shimmer_local(&t) < 0.01);
    }

    pub(crate) fn clicks(bpm: f64, secs: f64) -> AudioClip {
        let n = (secs * f64::from(SR)) as usize;
        let period = 60.0 / bpm;
        let mut s = vec![0.0; n];
        let mut t = 0.0;
        while t < secs {
            let start = (t * f64::from(SR)) as usize;
            for i in 0..160 {
                if start + i < n {
                    let decay = (-(i as f64) / 40.0).exp();
                    s[start + i] = 0.9 * decay * (std::f64::consts::TAU * 1000.0 * i as f64 / f64::from(SR)).sin();
                }
            }
            t += period;
        }
        AudioClip {
            sample_rate_hz: SR,
            samples: s,
        }
    }

    #[test]
    fn tempo_of_click_trains() {
        let cfg = AcousticConfig::default();
        let t120 = tempo_estimate(&clicks(120.0, 3.0), &cfg).unwrap();
        assert!((t120 - 120.0).abs() <= 2.0, "{t120}");
        let t90 = tempo_estimate(&clicks(90.0, 3.0), &cfg).unwrap();
        assert!((t90 - 90.0).abs() <= 2.0, "{t90}");
        assert_eq!(tempo_estimate(&clicks(120.0, 0.5), &cfg), None);
    }

    #[test]
    fn extract_examples() {
        let hook = |audio: AudioClip| HookClip {
            asset_id: "a".into(),
            frames: vec![],
            audio,
            title_text: String::new(),
            body_text: String::new(),
            transcript: String::new(),
            hook_secs: 3.0,
        };
        let cfg = AcousticConfig::default();
        let none = extract_acoustic(&hook(AudioClip::silent()), &cfg).unwrap();
        assert!(!none.has_audio);
        assert!(none.scalars().iter().all(Option::is_none));

        let f = extract_acoustic(&hook(sine(440.0, 0.6, 3.0)), &cfg).unwrap();
        assert!((f.pitch_mean_hz.unwrap() - 440.0).abs() < 2.0);
        assert!(f.jitter_local.unwrap() < 0.005);
        assert!((f.power.unwrap() - 0.5 * 0.36).abs() < 1e-3);
        let (mn, me, mx) = (
            f.pitch_min_hz.unwrap(),
            f.pitch_mean_hz.unwrap(),
            f.pitch_max_hz.unwrap(),
        );
        assert!(mn <= me && me <= mx);

        let silent = extract_acoustic(
            &hook(AudioClip {
                sample_rate_hz: SR,
                samples: vec![0.0; 3 * SR as usize],
            }),
            &cfg,
        )
        .unwrap();
        assert_eq!(silent.db_mean, Some(DB_FLOOR));
        assert_eq!(silent.peak, Some(0.0));
        assert_eq!(silent.voiced_fraction, Some(0.0));

        let json = serde_json::to_value(&none).unwrap();
        assert!(json["db_mean"].is_null());
        assert_eq!(json["has_audio"], false);
    }

    #[test]
    fn time_reversal_keeps_energy_features() {
        let mut r = SeededRng::new(4);
        let samples: Vec<f64> = (0..8000).map(|_| r.uniform(-0.8, 0.8)).collect();
        let fwd = AudioClip {
            sample_rate_hz: SR,
            samples: samples.clone(),
        };
        let rev = AudioClip {
            sample_rate_hz: SR,
            samples: samples.into_iter().rev().collect(),
        };
        assert!((power(&fwd).unwrap() - power(&rev).unwrap()).abs() < 1e-12);
        assert_eq!(peak(&fwd).unwrap(), peak(&rev).unwrap());
        assert!((loudness_db(&fwd).unwrap() - loudness_db(&rev).unwrap()).abs() < 1e-9);
        assert!(peak(&fwd).unwrap() >= power(&fwd).unwrap().sqrt());
    }
}
