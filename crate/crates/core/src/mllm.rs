//! Engagement-methodology extraction with a multimodal LLM.
//!
//! A prompt is rendered from a versioned template, sent together with the
//! sampled hook frames to a backend, and the JSON answer is parsed into a
//! [`MethodologyInsight`]. Two backends exist: a generic HTTP endpoint and a
//! deterministic mock whose answers are looked up by a content digest of the
//! request. ASR providers follow the same pattern.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{AudioClip, Frame};

pub const PROMPT_TEMPLATE_ID: &str = "engagement-methodology-v1";
const PROMPT_TEMPLATE: &str = include_str!("../resources/prompt_engagement_v1.txt");

pub const DEFAULT_API_KEY_ENV: &str = "HOOKLENS_MLLM_API_KEY";
pub const MOCK_FALLBACK_RESPONSE: &str = r#"{"methodology":"unknown","rationale":"no fixture"}"#;

#[derive(Debug, Error, PartialEq)]
pub enum MllmError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("backend timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend rejected credentials (HTTP {0})")]
    AuthFailure(u16),
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("response is missing key {0:?}")]
    MissingKey(String),
    #[error("response key {0:?} is not a non-empty string")]
    NonStringValue(String),
    #[error("no frames to send")]
    NoFrames,
    #[error("ASR provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("cannot load fixtures from {path}: {reason}")]
    Fixtures { path: String, reason: String },
}

/// A rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub template_id: String,
    pub title_text: String,
    pub body_text: String,
    pub rendered: String,
}

/// Renders the engagement-methodology template. Placeholders are substituted
/// in a single left-to-right pass, and `{{`/`}}` unescape to braces, so the
/// substituted texts themselves are never rewritten.
pub fn build_prompt(title: &str, body: &str) -> PromptSpec {
    const TITLE: &str = "{ad title text}";
    const BODY: &str = "{ad body text}";
    let mut out = String::with_capacity(PROMPT_TEMPLATE.len() + title.len() + body.len());
    let mut rest = PROMPT_TEMPLATE;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix(TITLE) {
            out.push_str(title);
            rest = r;
        } else if let Some(r) = rest.strip_prefix(BODY) {
            out.push_str(body);
            rest = r;
        } else if let Some(r) = rest.strip_prefix("{{") {
            out.push('{');
            rest = r;
        } else if let Some(r) = rest.strip_prefix("}}") {
            out.push('}');
            rest = r;
        } else {
            let ch = rest.chars().next().expect("non-empty");
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    PromptSpec {
        template_id: PROMPT_TEMPLATE_ID.to_string(),
        title_text: title.to_string(),
        body_text: body.to_string(),
        rendered: out,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodologyInsight {
    pub asset_id: String,
    pub methodology: String,
    pub rationale: String,
    pub raw_response: String,
    pub backend_id: String,
    pub attempt_count: u32,
}

/// Byte span of the first balanced `{...}` starting at or after `from`,
/// skipping braces inside JSON string literals.
fn balanced_object(raw: &str, from: usize) -> Option<(usize, usize)> {
    let bytes = raw.as_bytes();
    let start = from + raw[from..].find('{')?;
    let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((start, i + 1));
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses a backend answer. Prose or code fences around the object are
/// tolerated; the first balanced `{...}` that is valid JSON is used.
pub fn parse_insight(raw: &str, asset_id: &str) -> Result<MethodologyInsight, MllmError> {
    let mut from = 0;
    let obj = loop {
        let (s, e) = balanced_object(raw, from).ok_or(MllmError::NoJsonFound)?;
        match serde_json::from_str::<serde_json::Value>(&raw[s..e]) {
            Ok(serde_json::Value::Object(map)) => break map,
            _ => from = s + 1,
        }
    };
    let field = |name: &str| -> Result<String, MllmError> {
        match obj.get(name) {
            None => Err(MllmError::MissingKey(name.to_string())),
            Some(serde_json::Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
            Some(_) => Err(MllmError::NonStringValue(name.to_string())),
        }
    };
    Ok(MethodologyInsight {
        asset_id: asset_id.to_string(),
        methodology: field("methodology")?,
        rationale: field("rationale")?,
        raw_response: raw.to_string(),
        backend_id: String::new(),
        attempt_count: 1,
    })
}

pub fn frame_digest(frame: &Frame) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(frame.width.to_le_bytes());
    h.update(frame.height.to_le_bytes());
    h.update(&frame.pixels);
    h.finalize().into()
}

/// Hex SHA-256 over the rendered prompt followed by each frame digest.
pub fn request_digest(prompt: &PromptSpec, frames: &[&Frame]) -> String {
    let mut h = Sha256::new();
    h.update((prompt.rendered.len() as u64).to_le_bytes());
    h.update(prompt.rendered.as_bytes());
    for f in frames {
        h.update(frame_digest(f));
    }
    hex::encode(h.finalize())
}

pub fn audio_digest(clip: &AudioClip) -> String {
    let mut h = Sha256::new();
    h.update(clip.sample_rate_hz.to_le_bytes());
    for s in &clip.samples {
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn encode_png(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, frame.width, frame.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("png header into memory");
        w.write_image_data(&frame.pixels).expect("png data into memory");
    }
    out
}

/// `{prompt, images: [base64 PNG], meta: {asset_id}}`, frames in index order.
pub fn build_envelope(asset_id: &str, prompt: &PromptSpec, frames: &[&Frame]) -> serde_json::Value {
    let images: Vec<String> = frames.iter().map(|f| BASE64.encode(encode_png(f))).collect();
    serde_json::json!({
        "prompt": prompt.rendered,
        "images": images,
        "meta": { "asset_id": asset_id },
    })
}

fn default_max_retries() -> u32 {
    3
}
fn default_timeout_s() -> f64 {
    60.0
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    HttpEndpoint,
    DeterministicMock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Required for `HttpEndpoint`.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Fixture file for `DeterministicMock`: `{request digest: response}`.
    #[serde(default)]
    pub corpus_path: Option<PathBuf>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    /// First retry delay; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::DeterministicMock,
            endpoint: None,
            api_key_env: None,
            corpus_path: None,
            max_retries: default_max_retries(),
            timeout_s: default_timeout_s(),
            backoff_base_ms: default_backoff_ms(),
        }
    }
}

impl BackendConfig {
    pub fn http(endpoint: &str) -> Self {
        Self {
            kind: BackendKind::HttpEndpoint,
            endpoint: Some(endpoint.to_string()),
            ..Self::default()
        }
    }
}

pub trait MllmBackend: Send + Sync {
    fn id(&self) -> String;
    fn query(&self, asset_id: &str, prompt: &PromptSpec, frames: &[&Frame]) -> Result<String, MllmError>;
}

fn load_fixtures(path: &Path) -> Result<BTreeMap<String, String>, MllmError> {
    let err = |reason: String| MllmError::Fixtures {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Canned answers keyed by [`request_digest`].
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: BTreeMap<String, String>,
}

impl MockBackend {
    pub fn new(fixtures: BTreeMap<String, String>) -> Self {
        Self { fixtures }
    }

    pub fn from_file(path: &Path) -> Result<Self, MllmError> {
        Ok(Self::new(load_fixtures(path)?))
    }
}

impl MllmBackend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn query(&self, _asset_id: &str, prompt: &PromptSpec, frames: &[&Frame]) -> Result<String, MllmError> {
        if frames.is_empty() {
            return Err(MllmError::NoFrames);
        }
        let key = request_digest(prompt, frames);
        Ok(self
            .fixtures
            .get(&key)
            .cloned()
            .unwrap_or_else(|| MOCK_FALLBACK_RESPONSE.to_string()))
    }
}

enum AttemptError {
    Transient(String),
    TimedOut,
    Fatal(MllmError),
}

/// Runs `attempt` up to `max_retries + 1` times with exponential backoff.
fn with_retries<F>(max_retries: u32, backoff_base_ms: u64, mut attempt: F) -> Result<String, MllmError>
where
    F: FnMut() -> Result<String, AttemptError>,
{
    let mut last = AttemptError::Transient("no attempt made".into());
    for n in 0..=max_retries {
        if n > 0 {
            let delay = backoff_base_ms.saturating_mul(1u64 << (n - 1).min(16));
            thread::sleep(Duration::from_millis(delay));
        }
        match attempt() {
            Ok(text) => return Ok(text),
            Err(AttemptError::Fatal(e)) => return Err(e),
            Err(e) => last = e,
        }
    }
    let attempts = max_retries + 1;
    Err(match last {
        AttemptError::TimedOut => MllmError::Timeout { attempts },
        AttemptError::Transient(msg) => MllmError::BackendUnavailable { attempts, last: msg },
        AttemptError::Fatal(e) => e,
    })
}

fn http_post(agent: &ureq::Agent, url: &str, api_key: Option<&str>, body: &str) -> Result<String, AttemptError> {
    let mut req = agent.post(url).set("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    match req.send_string(body) {
        Ok(resp) => resp.into_string().map_err(|e| AttemptError::Transient(e.to_string())),
        Err(ureq::Error::Status(code @ (401 | 403), _)) => Err(AttemptError::Fatal(MllmError::AuthFailure(code))),
        Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
            Err(AttemptError::Transient(format!("HTTP {code}")))
        }
        Err(ureq::Error::Status(code, _)) => Err(AttemptError::Fatal(MllmError::BackendUnavailable {
            attempts: 1,
            last: format!("HTTP {code}"),
        })),
        Err(ureq::Error::Transport(t)) => {
            let msg = t.to_string();
            if msg.contains("timed out") || msg.contains("Timeout") {
                Err(AttemptError::TimedOut)
            } else {
                Err(AttemptError::Transient(msg))
            }
        }
    }
}

/// Unwraps `{"text": ...}`/`{"response": ...}`/`{"content": ...}` bodies;
/// anything else is returned verbatim.
fn response_text(body: String) -> String {
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&body) {
        for key in ["text", "response", "content"] {
            if let Some(serde_json::Value::String(s)) = map.get(key) {
                return s.clone();
            }
        }
    }
    body
}

pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff_base_ms: u64,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: &str, api_key: Option<String>, cfg: &BackendConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout_s.max(0.001)))
            .build();
        Self {
            endpoint: endpoint.to_string(),
            api_key,
            max_retries: cfg.max_retries,
            backoff_base_ms: cfg.backoff_base_ms,
            agent,
        }
    }
}

impl MllmBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn query(&self, asset_id: &str, prompt: &PromptSpec, frames: &[&Frame]) -> Result<String, MllmError> {
        if frames.is_empty() {
            return Err(MllmError::NoFrames);
        }
        let body = build_envelope(asset_id, prompt, frames).to_string();
        with_retries(self.max_retries, self.backoff_base_ms, || {
            http_post(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)
        })
        .map(response_text)
    }
}

/// Builds the configured backend; relative mock corpus paths resolve
/// against `base_dir`. Credentials come from the named environment variable.
pub fn build_backend(cfg: &BackendConfig, base_dir: &Path) -> Result<Box<dyn MllmBackend>, MllmError> {
    match cfg.kind {
        BackendKind::DeterministicMock => match &cfg.corpus_path {
            None => Ok(Box::new(MockBackend::default())),
            Some(p) => Ok(Box::new(MockBackend::from_file(&base_dir.join(p))?)),
        },
        BackendKind::HttpEndpoint => {
            let endpoint = cfg.endpoint.as_deref().ok_or_else(|| MllmError::BackendUnavailable {
                attempts: 0,
                last: "no endpoint configured".into(),
            })?;
            let var = cfg.api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV);
            Ok(Box::new(HttpBackend::new(endpoint, std::env::var(var).ok(), cfg)))
        }
    }
}

/// Query, parse, and on a malformed answer re-query exactly once.
pub fn extract_insight(
    backend: &dyn MllmBackend,
    asset_id: &str,
    prompt: &PromptSpec,
    frames: &[&Frame],
) -> Result<MethodologyInsight, MllmError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        let raw = backend.query(asset_id, prompt, frames)?;
        match parse_insight(&raw, asset_id) {
            Ok(mut insight) => {
                insight.backend_id = backend.id();
                insight.attempt_count = attempt;
                return Ok(insight);
            }
            Err(e) if attempt >= 2 => return Err(e),
            Err(_) => {}
        }
    }
}

/// Append-only JSONL insight store, safe for concurrent appends.
pub struct InsightStore {
    file: Mutex<File>,
}

impl InsightStore {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn append(&self, insight: &MethodologyInsight) -> std::io::Result<()> {
        let mut line = serde_json::to_string(insight).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut f = self.file.lock().expect("insight store lock");
        f.write_all(line.as_bytes())
    }
}

pub fn read_insights(path: &Path) -> std::io::Result<Vec<MethodologyInsight>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum AsrConfig {
    #[default]
    Disabled,
    Mock {
        #[serde(default)]
        fixtures_path: Option<PathBuf>,
    },
    HttpEndpoint {
        endpoint: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_s")]
        timeout_s: f64,
    },
}

pub trait AsrProvider: Send + Sync {
    fn transcribe_samples(&self, clip: &AudioClip) -> Result<String, MllmError>;
}

pub struct DisabledAsr;

impl AsrProvider for DisabledAsr {
    fn transcribe_samples(&self, _clip: &AudioClip) -> Result<String, MllmError> {
        Ok(String::new())
    }
}

/// Transcripts keyed by [`audio_digest`]; unknown audio yields "".
#[derive(Debug, Clone, Default)]
pub struct MockAsr {
    fixtures: BTreeMap<String, String>,
}

impl MockAsr {
    pub fn new(fixtures: BTreeMap<String, String>) -> Self {
        Self { fixtures }
    }
}

impl AsrProvider for MockAsr {
    fn transcribe_samples(&self, clip: &AudioClip) -> Result<String, MllmError> {
        Ok(self.fixtures.get(&audio_digest(clip)).cloned().unwrap_or_default())
    }
}

/// Posts `{sample_rate_hz, wav_base64}` and returns the answer text.
pub struct HttpAsr {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpAsr {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout_s: f64) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            api_key,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs_f64(timeout_s.max(0.001)))
                .build(),
        }
    }
}

fn wav_bytes(clip: &AudioClip) -> Vec<u8> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate_hz,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::new(&mut cursor, spec).expect("wav into memory");
        for &s in &clip.samples {
            w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)
                .expect("wav into memory");
        }
        w.finalize().expect("wav into memory");
    }
    cursor.into_inner()
}

impl AsrProvider for HttpAsr {
    fn transcribe_samples(&self, clip: &AudioClip) -> Result<String, MllmError> {
        let body = serde_json::json!({
            "sample_rate_hz": clip.sample_rate_hz,
            "wav_base64": BASE64.encode(wav_bytes(clip)),
        })
        .to_string();
        http_post(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)
            .map(response_text)
            .map_err(|e| match e {
                AttemptError::Fatal(inner) => MllmError::ProviderUnavailable(inner.to_string()),
                AttemptError::TimedOut => MllmError::ProviderUnavailable("timed out".into()),
                AttemptError::Transient(msg) => MllmError::ProviderUnavailable(msg),
            })
    }
}

pub fn build_asr(cfg: &AsrConfig, base_dir: &Path) -> Result<Box<dyn AsrProvider>, MllmError> {
    Ok(match cfg {
        AsrConfig::Disabled => Box::new(DisabledAsr),
        AsrConfig::Mock { fixtures_path: None } => Box::new(MockAsr::default()),
        AsrConfig::Mock { fixtures_path: Some(p) } => Box::new(MockAsr::new(load_fixtures(&base_dir.join(p))?)),
        AsrConfig::HttpEndpoint {
            endpoint,
            api_key_env,
            timeout_s,
        } => {
            let var = api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV);
            Box::new(HttpAsr::new(endpoint, std::env::var(var).ok(), *timeout_s))
        }
    })
}

/// Empty audio short-circuits to an empty transcript.
pub fn transcribe(clip: &AudioClip, provider: &dyn AsrProvider) -> Result<String, MllmError> {
    if clip.is_empty() {
        return Ok(String::new());
    }
    provider.transcribe_samples(clip)
}
