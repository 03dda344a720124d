//! Asset manifests, raw frame/WAV decoding and hook-period trimming.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HOOK_SECS: f64 = 3.0;
/// Sample rate assumed for assets that ship no audio track.
pub const SILENT_SAMPLE_RATE: u32 = 16_000;

const REQUIRED_KEYS: [&str; 3] = ["id", "source", "fps"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed manifest record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate asset id {0:?}")]
    DuplicateId(String),
    #[error("missing required field {name:?} at line {line}")]
    MissingRequiredField { line: usize, name: String },
    #[error("decoder failure: {0}")]
    DecoderFailure(String),
    #[error("inconsistent frame dimensions: {0}")]
    InconsistentFrameDims(String),
    #[error("unsupported wav format: {0}")]
    UnsupportedWav(String),
    #[error("empty frame sequence")]
    EmptyFrameSequence,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vertical {
    Ecommerce,
    Healthcare,
    #[serde(rename = "CPG")]
    Cpg,
    Automobile,
    Entertainment,
    #[default]
    Other,
}

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoAsset {
    pub id: String,
    pub source: String,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub title_text: String,
    #[serde(default)]
    pub body_text: String,
    #[serde(default)]
    pub vertical: Vertical,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpi: Option<f64>,
    /// Categorical ad-context fields (gender_mix, age_bucket, advertiser_size, region, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ad_context: BTreeMap<String, String>,
}

impl VideoAsset {
    fn validate(&self, line: usize) -> Result<(), IngestError> {
        let bad = |reason: &str| IngestError::MalformedRecord {
            line,
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(bad("id must be non-empty"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(bad("fps must be a positive number"));
        }
        if matches!(self.duration_s, Some(d) if !(d.is_finite() && d >= 0.0)) {
            return Err(bad("duration_s must be non-negative"));
        }
        if matches!(self.cpi, Some(c) if !(c.is_finite() && c >= 0.0)) {
            return Err(bad("cpi must be non-negative"));
        }
        Ok(())
    }
}

/// Reads a JSONL manifest. Blank lines are skipped; line numbers are 1-based.
pub fn load_manifest(path: &Path) -> Result<Vec<VideoAsset>, IngestError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut assets = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let asset = parse_record(&line, line_no)?;
        if !seen.insert(asset.id.clone()) {
            return Err(IngestError::DuplicateId(asset.id));
        }
        assets.push(asset);
    }
    Ok(assets)
}

fn parse_record(line: &str, line_no: usize) -> Result<VideoAsset, IngestError> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| IngestError::MalformedRecord {
        line: line_no,
        reason: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| IngestError::MalformedRecord {
        line: line_no,
        reason: "record is not a JSON object".into(),
    })?;
    for key in REQUIRED_KEYS {
        if !obj.contains_key(key) {
            return Err(IngestError::MissingRequiredField {
                line: line_no,
                name: key.to_string(),
            });
        }
    }
    let asset: VideoAsset = serde_json::from_value(value).map_err(|e| IngestError::MalformedRecord {
        line: line_no,
        reason: e.to_string(),
    })?;
    asset.validate(line_no)?;
    Ok(asset)
}

pub fn write_manifest(path: &Path, assets: &[VideoAsset]) -> Result<(), IngestError> {
    let mut out = String::new();
    for a in assets {
        out.push_str(&serde_json::to_string(a).expect("asset serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// An RGB frame, 8 bits per channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub timestamp_s: f64,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, timestamp_s: f64) -> Result<Self, IngestError> {
        if width == 0 || height == 0 || pixels.len() != width as usize * height as usize * 3 {
            return Err(IngestError::InconsistentFrameDims(format!(
                "{}x{} frame with {} bytes",
                width,
                height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp_s,
        })
    }
}

/// Mono audio, samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

impl AudioClip {
    pub fn silent() -> Self {
        Self {
            sample_rate_hz: SILENT_SAMPLE_RATE,
            samples: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

/// A video trimmed to its hooking period.
#[derive(Debug, Clone, PartialEq)]
pub struct HookClip {
    pub asset_id: String,
    pub frames: Vec<Frame>,
    pub audio: AudioClip,
    pub title_text: String,
    pub body_text: String,
    pub transcript: String,
    pub hook_secs: f64,
}

/// How frames and audio are obtained for an asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum DecoderConfig {
    /// `source` already is a directory in the raw frame layout.
    #[default]
    PreDecoded,
    /// `template` is run through `sh -c` after substituting `{source}` and
    /// `{outdir}`; it must leave the raw frame layout in `{outdir}`.
    Command { template: String, work_dir: PathBuf },
}

#[derive(Debug, Deserialize)]
struct RawMeta {
    width: u32,
    height: u32,
    #[serde(default)]
    fps: Option<f64>,
}

/// Resolves an asset source against the manifest directory.
pub fn resolve_source(source: &str, base_dir: &Path) -> PathBuf {
    let p = Path::new(source);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

pub fn decode_asset(
    asset: &VideoAsset,
    decoder: &DecoderConfig,
    base_dir: &Path,
) -> Result<(Vec<Frame>, AudioClip), IngestError> {
    let source = resolve_source(&asset.source, base_dir);
    let dir = match decoder {
        DecoderConfig::PreDecoded => source,
        DecoderConfig::Command { template, work_dir } => {
            let outdir = work_dir.join(&asset.id);
            fs::create_dir_all(&outdir).map_err(io_err(&outdir))?;
            run_decoder_command(template, &source, &outdir)?;
            outdir
        }
    };
    let frames = read_raw_frames(&dir, asset.fps)?;
    let audio = read_wav_if_present(&dir.join("audio.wav"))?;
    Ok((frames, audio))
}

fn run_decoder_command(template: &str, source: &Path, outdir: &Path) -> Result<(), IngestError> {
    let cmd = template
        .replace("{source}", &source.to_string_lossy())
        .replace("{outdir}", &outdir.to_string_lossy());
    let output = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| IngestError::DecoderFailure(format!("could not spawn decoder: {e}")))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        let tail: String = stderr
            .chars()
            .rev()
            .take(400)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        return Err(IngestError::DecoderFailure(format!(
            "decoder exited with {}: {}",
            output.status,
            tail.trim()
        )));
    }
    Ok(())
}

fn frame_number(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".raw")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Reads `frame_%06d.raw` files plus `meta.json`; frame `k` in sorted order
/// gets timestamp `k / fps`.
pub fn read_raw_frames(dir: &Path, fallback_fps: f64) -> Result<Vec<Frame>, IngestError> {
    if !dir.is_dir() {
        return Err(IngestError::DecoderFailure(format!(
            "frame directory {} does not exist",
            dir.display()
        )));
    }
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|e| IngestError::DecoderFailure(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: RawMeta =
        serde_json::from_str(&meta_text).map_err(|e| IngestError::DecoderFailure(format!("bad meta.json: {e}")))?;
    let fps = meta.fps.unwrap_or(fallback_fps);
    if meta.width == 0 || meta.height == 0 || !(fps.is_finite() && fps > 0.0) {
        return Err(IngestError::DecoderFailure(
            "meta.json has non-positive dimensions or fps".into(),
        ));
    }

    let mut numbered = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        if let Some(n) = frame_number(&name.to_string_lossy()) {
            numbered.push((n, entry.path()));
        }
    }
    if numbered.is_empty() {
        return Err(IngestError::DecoderFailure(format!("no frames in {}", dir.display())));
    }
    numbered.sort();

    let expected = meta.width as usize * meta.height as usize * 3;
    numbered
        .iter()
        .enumerate()
        .map(|(k, (_, path))| {
            let pixels = fs::read(path).map_err(io_err(path))?;
            if pixels.len() != expected {
                return Err(IngestError::InconsistentFrameDims(format!(
                    "{} has {} bytes, expected {}",
                    path.display(),
                    pixels.len(),
                    expected
                )));
            }
            Frame::new(meta.width, meta.height, pixels, k as f64 / fps)
        })
        .collect()
}

fn read_wav_if_present(path: &Path) -> Result<AudioClip, IngestError> {
    if !path.exists() {
        return Ok(AudioClip::silent());
    }
    read_wav(path)
}

/// Reads a PCM 16-bit or float 32-bit WAV, downmixing to mono by channel mean.
/// Samples are peak-normalized only if some magnitude exceeds 1.
pub fn read_wav(path: &Path) -> Result<AudioClip, IngestError> {
    let mut reader =
        hound::WavReader::open(path).map_err(|e| IngestError::UnsupportedWav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (fmt, bits) => return Err(IngestError::UnsupportedWav(format!("{fmt:?} {bits}-bit"))),
    }
    .map_err(|e| IngestError::UnsupportedWav(e.to_string()))?;

    let mut samples: Vec<f64> = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        samples.iter_mut().for_each(|s| *s /= peak);
    }
    Ok(AudioClip {
        sample_rate_hz: spec.sample_rate,
        samples,
    })
}

/// Writes a mono 16-bit PCM WAV (values clamped to [-1, 1]).
pub fn write_wav_pcm16(path: &Path, clip: &AudioClip) -> Result<(), IngestError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |e: hound::Error| IngestError::UnsupportedWav(e.to_string());
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

/// Writes frames in the raw layout consumed by [`read_raw_frames`].
pub fn write_raw_frames(dir: &Path, frames: &[Frame], fps: f64) -> Result<(), IngestError> {
    let first = frames.first().ok_or(IngestError::EmptyFrameSequence)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = serde_json::json!({ "width": first.width, "height": first.height, "fps": fps });
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, meta.to_string()).map_err(io_err(&meta_path))?;
    for (k, f) in frames.iter().enumerate() {
        let p = dir.join(format!("frame_{k:06}.raw"));
        let mut file = fs::File::create(&p).map_err(io_err(&p))?;
        file.write_all(&f.pixels).map_err(io_err(&p))?;
    }
    Ok(())
}

/// Keeps frames with `timestamp < hook_secs` and the first
/// `floor(hook_secs * sample_rate)` audio samples.
pub fn extract_hook(
    asset_id: &str,
    frames: &[Frame],
    audio: &AudioClip,
    texts: (&str, &str),
    hook_secs: f64,
) -> Result<HookClip, IngestError> {
    assert!(hook_secs > 0.0, "hook_secs must be positive");
    if frames.is_empty() {
        return Err(IngestError::EmptyFrameSequence);
    }
    let kept: Vec<Frame> = frames
        .iter()
        .take_while(|f| f.timestamp_s < hook_secs)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(IngestError::EmptyFrameSequence);
    }
    let max_samples = (hook_secs * f64::from(audio.sample_rate_hz)).floor() as usize;
    let samples = audio.samples[..audio.samples.len().min(max_samples)].to_vec();
    Ok(HookClip {
        asset_id: asset_id.to_string(),
        frames: kept,
        audio: AudioClip {
            sample_rate_hz: audio.sample_rate_hz,
            samples,
        },
        title_text: texts.0.to_string(),
        body_text: texts.1.to_string(),
        transcript: String::new(),
        hook_secs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frames(n: usize, fps: f64) -> Vec<Frame> {
        (0..n)
            .map(|k| Frame::new(2, 2, vec![k as u8; 12], k as f64 / fps).unwrap())
            .collect()
    }

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn empty_manifest_is_empty_list() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "m.jsonl", "");
        assert!(load_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn single_record_loads() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "m.jsonl", "{\"id\":\"a1\",\"source\":\"x\",\"fps\":30}\n");
        let a = load_manifest(&p).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].fps, 30.0);
        assert_eq!(a[0].vertical, Vertical::Other);
    }

    #[test]
    fn duplicate_id_rejected() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "m.jsonl",
            "{\"id\":\"a1\",\"source\":\"x\",\"fps\":30}\n{\"id\":\"a1\",\"source\":\"y\",\"fps\":25}\n",
        );
        match load_manifest(&p) {
            Err(IngestError::DuplicateId(id)) => assert_eq!(id, "a1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_and_malformed_fields() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "m.jsonl", "{\"id\":\"a1\",\"fps\":30}\n");
        assert!(matches!(
            load_manifest(&p),
            Err(IngestError::MissingRequiredField { line: 1, ref name }) if name == "source"
        ));
        let p = write(d.path(), "m2.jsonl", "\n{\"id\":\"a\",\"source\":\"x\",\"fps\":-1}\n");
        assert!(matches!(
            load_manifest(&p),
            Err(IngestError::MalformedRecord { line: 2, .. })
        ));
        let p = write(d.path(), "m3.jsonl", "not json\n");
        assert!(matches!(
            load_manifest(&p),
            Err(IngestError::MalformedRecord { line: 1, .. })
        ));
        let p = write(
            d.path(),
            "m4.jsonl",
            "{\"id\":\"a\",\"source\":\"x\",\"fps\":30,\"cpi\":-0.5}\n",
        );
        assert!(matches!(load_manifest(&p), Err(IngestError::MalformedRecord { .. })));
    }

    #[test]
    fn predecoded_ninety_frames_at_thirty_fps() {
        let d = tempfile::tempdir().unwrap();
        let dir = d.path().join("a");
        write_raw_frames(&dir, &frames(90, 30.0), 30.0).unwrap();
        let asset: VideoAsset = serde_json::from_str("{\"id\":\"a\",\"source\":\"a\",\"fps\":30}").unwrap();
        let (fr, audio) = decode_asset(&asset, &DecoderConfig::PreDecoded, d.path()).unwrap();
        assert_eq!(fr.len(), 90);
        for (k, f) in fr.iter().enumerate() {
            assert_eq!(f.timestamp_s, k as f64 / 30.0);
        }
        assert!(audio.is_empty());
    }

    #[test]
    fn zero_frames_is_decoder_failure() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("meta.json"), "{\"width\":2,\"height\":2,\"fps\":30}").unwrap();
        assert!(matches!(
            read_raw_frames(d.path(), 30.0),
            Err(IngestError::DecoderFailure(_))
        ));
    }

    #[test]
    fn mismatched_frame_size_rejected() {
        let d = tempfile::tempdir().unwrap();
        write_raw_frames(d.path(), &frames(3, 30.0), 30.0).unwrap();
        fs::write(d.path().join("frame_000001.raw"), [0u8; 5]).unwrap();
        assert!(matches!(
            read_raw_frames(d.path(), 30.0),
            Err(IngestError::InconsistentFrameDims(_))
        ));
    }

    #[test]
    fn stereo_pcm16_downmixes_by_channel_mean() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("audio.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        // frames (L, R): (16384, 0), (-32768, -32768), (8192, -8192), (32767, 16384)
        for s in [16384i16, 0, -32768, -32768, 8192, -8192, 32767, 16384] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let clip = read_wav(&p).unwrap();
        assert_eq!(clip.sample_rate_hz, 8000);
        let expected = [0.25, -1.0, 0.0, (32767.0 + 16384.0) / 2.0 / 32768.0];
        assert_eq!(clip.samples.len(), 4);
        for (a, b) in clip.samples.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(clip.samples.iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn float_wav_over_full_scale_is_peak_normalized() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("audio.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for s in [2.0f32, -1.0, 0.5] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let clip = read_wav(&p).unwrap();
        assert_eq!(clip.samples, vec![1.0, -0.5, 0.25]);
    }

    #[test]
    fn unsupported_wav_depth() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("audio.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(IngestError::UnsupportedWav(_))));
    }

    #[test]
    fn command_decoder_runs_template() {
        let d = tempfile::tempdir().unwrap();
        let src = d.path().join("src");
        write_raw_frames(&src, &frames(4, 10.0), 10.0).unwrap();
        let asset: VideoAsset = serde_json::from_str("{\"id\":\"v\",\"source\":\"src\",\"fps\":10}").unwrap();
        let dec = DecoderConfig::Command {
            template: "cp {source}/* {outdir}/".into(),
            work_dir: d.path().join("work"),
        };
        let (fr, _) = decode_asset(&asset, &dec, d.path()).unwrap();
        assert_eq!(fr.len(), 4);

        let failing = DecoderConfig::Command {
            template: "exit 7".into(),
            work_dir: d.path().join("work"),
        };
        assert!(matches!(
            decode_asset(&asset, &failing, d.path()),
            Err(IngestError::DecoderFailure(_))
        ));
    }

    #[test]
    fn hook_trimming_examples() {
        let audio = AudioClip {
            sample_rate_hz: 100,
            samples: vec![0.1; 1000],
        };
        let h = extract_hook("a", &frames(90, 30.0), &audio, ("t", "b"), 3.0).unwrap();
        assert_eq!(h.frames.len(), 90);
        assert_eq!(h.audio.samples.len(), 300);

        let h = extract_hook("a", &frames(10, 30.0), &audio, ("", ""), 3.0).unwrap();
        assert_eq!(h.frames.len(), 10);

        let h = extract_hook("a", &frames(150, 30.0), &audio, ("", ""), 3.0).unwrap();
        assert_eq!(h.frames.len(), 90);
        assert_eq!(h.frames.last().unwrap().pixels[0], 89);

        assert!(matches!(
            extract_hook("a", &[], &audio, ("", ""), 3.0),
            Err(IngestError::EmptyFrameSequence)
        ));
    }

    #[test]
    fn hook_frame_count_bounded_for_common_rates() {
        for fps in [23.976, 24.0, 25.0, 29.97, 30.0, 60.0] {
            let h = extract_hook("a", &frames(400, fps), &AudioClip::silent(), ("", ""), 3.0).unwrap();
            let bound = (3.0 * fps).ceil() as usize;
            assert!(h.frames.len() <= bound, "fps {fps}: {} > {bound}", h.frames.len());
            assert!(h.frames.iter().all(|f| f.timestamp_s < 3.0));
        }
    }

    proptest! {
        #[test]
        fn extract_hook_idempotent(n in 1usize..200, fps in 5.0f64..60.0, hook in 0.1f64..5.0, sr in 50u32..400, len in 0usize..3000) {
            let audio = AudioClip { sample_rate_hz: sr, samples: (0..len).map(|i| (i as f64 * 0.01).sin()).collect() };
            let once = extract_hook("x", &frames(n, fps), &audio, ("t", "b"), hook).unwrap();
            let twice = extract_hook("x", &once.frames, &once.audio, ("t", "b"), hook).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.audio.samples.len() as f64 <= (hook * f64::from(sr)).ceil());
        }

        #[test]
        fn manifest_round_trip(cpis in proptest::collection::vec(proptest::option::of(0.0f64..60.0), 1..8)) {
            let d = tempfile::tempdir().unwrap();
            let assets: Vec<VideoAsset> = cpis.iter().enumerate().map(|(i, c)| VideoAsset {
                id: format!("a{i}"),
                source: format!("dir/{i}"),
                fps: 24.0 + i as f64,
                duration_s: Some(i as f64 * 1.5),
                title_text: format!("title \"{i}\""),
                body_text: String::new(),
                vertical: if i % 2 == 0 { Vertical::Cpg } else { Vertical::Healthcare },
                cpi: *c,
                ad_context: [("gender_mix".to_string(), "F".to_string())].into_iter().collect(),
            }).collect();
            let p = d.path().join("m.jsonl");
            write_manifest(&p, &assets).unwrap();
            let loaded = load_manifest(&p).unwrap();
            prop_assert_eq!(&loaded, &assets);
            write_manifest(&p, &loaded).unwrap();
            prop_assert_eq!(load_manifest(&p).unwrap(), assets);
        }
    }
}
