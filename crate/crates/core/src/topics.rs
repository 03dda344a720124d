//! Topic summarization of methodology rationales: embed, reduce with PCA,
//! cluster with k-means, label topics with class-based TF-IDF, and emit
//! one-hot topic indicators.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::Hasher;
use std::sync::OnceLock;
use std::time::Duration;

use fnv::FnvHasher;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::par;
use crate::rng::{derive_seed, SeededRng};

const STOPWORDS: &str = include_str!("../resources/stopwords_en.txt");
pub const TOP_WORDS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum TopicError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("corpus of {n} documents is too small for {d_out} components")]
    CorpusTooSmall { n: usize, d_out: usize },
    #[error("k = {k} exceeds corpus size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("topic {0} has no documents")]
    EmptyTopic(usize),
    #[error("no usable k candidates")]
    NoCandidates,
    #[error("embedding dimensions disagree")]
    InconsistentDimensions,
}

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.split_whitespace().collect())
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(doc: &str) -> Vec<String> {
    doc.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn default_buckets() -> u32 {
    1 << 15
}
fn default_dim() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum EmbedConfig {
    /// Hashed bag of words followed by a seeded sign random projection.
    Offline {
        #[serde(default = "default_buckets")]
        buckets: u32,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// POSTs `{"texts": [...]}`, expects `{"vectors": [[...], ...]}`.
    HttpEndpoint {
        endpoint: String,
        #[serde(default = "default_embed_timeout")]
        timeout_s: f64,
    },
}

fn default_embed_timeout() -> f64 {
    60.0
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig::Offline {
            buckets: default_buckets(),
            dim: default_dim(),
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn provider_id(&self) -> String {
        match self {
            EmbedConfig::Offline { buckets, dim, seed } => format!("offline-hash-{buckets}-{dim}-{seed}"),
            EmbedConfig::HttpEndpoint { endpoint, .. } => format!("http:{endpoint}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
}

pub fn token_bucket(token: &str, buckets: u32) -> u32 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    (h.finish() % u64::from(buckets)) as u32
}

/// Raw token counts per hash bucket.
pub fn hashed_bow(doc: &str, buckets: u32) -> BTreeMap<u32, f64> {
    let mut counts = BTreeMap::new();
    for t in tokenize(doc) {
        *counts.entry(token_bucket(&t, buckets)).or_insert(0.0) += 1.0;
    }
    counts
}

fn offline_embed(doc: &str, buckets: u32, dim: usize, seed: u64) -> Vec<f64> {
    let bow = hashed_bow(doc, buckets);
    let norm = bow.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = vec![0.0; dim];
    if norm == 0.0 {
        return out;
    }
    let scale = 1.0 / (dim as f64).sqrt();
    for (&bucket, &count) in &bow {
        let w = count / norm * scale;
        let mut rng = SeededRng::new(derive_seed(seed, &bucket.to_le_bytes()));
        let mut bits = 0u64;
        for (j, slot) in out.iter_mut().enumerate() {
            if j % 64 == 0 {
                bits = rng.next_u64();
            }
            if (bits >> (j % 64)) & 1 == 1 {
                *slot += w;
            } else {
                *slot -= w;
            }
        }
    }
    out
}

fn http_embed(docs: &[String], endpoint: &str, timeout_s: f64) -> Result<Vec<Vec<f64>>, TopicError> {
    #[derive(Deserialize)]
    struct Reply {
        vectors: Vec<Vec<f64>>,
    }
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs_f64(timeout_s.max(0.001)))
        .build();
    let body = serde_json::json!({ "texts": docs }).to_string();
    let text = agent
        .post(endpoint)
        .set("Content-Type", "application/json")
        .send_string(&body)
        .map_err(|e| TopicError::ProviderUnavailable(e.to_string()))?
        .into_string()
        .map_err(|e| TopicError::ProviderUnavailable(e.to_string()))?;
    let reply: Reply = serde_json::from_str(&text).map_err(|e| TopicError::ProviderUnavailable(e.to_string()))?;
    if reply.vectors.len() != docs.len() {
        return Err(TopicError::ProviderUnavailable("vector count mismatch".into()));
    }
    Ok(reply.vectors)
}

pub fn embed(docs: &[String], cfg: &EmbedConfig) -> Result<Vec<EmbeddingVector>, TopicError> {
    if docs.is_empty() {
        return Err(TopicError::EmptyCorpus);
    }
    let provider_id = cfg.provider_id();
    let vectors = match cfg {
        EmbedConfig::Offline { buckets, dim, seed } => {
            par::map(docs, |d| offline_embed(d, (*buckets).max(1), *dim, *seed))
        }
        EmbedConfig::HttpEndpoint { endpoint, timeout_s } => http_embed(docs, endpoint, *timeout_s)?,
    };
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(TopicError::InconsistentDimensions);
    }
    Ok(vectors
        .into_iter()
        .map(|values| EmbeddingVector {
            values,
            provider_id: provider_id.clone(),
        })
        .collect())
}

/// Stored linear projection: `components * (v - mean)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl Projection {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(v.iter().zip(&self.mean))
                    .map(|(w, (x, m))| w * (x - m))
                    .sum()
            })
            .collect()
    }

    pub fn apply_all(&self, vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        vs.iter().map(|v| self.apply(v)).collect()
    }
}

/// PCA onto the top `d_out` principal components of the centered corpus.
/// Each component is sign-fixed so that its largest-magnitude entry is
/// positive.
pub fn reduce_dim(vectors: &[Vec<f64>], d_out: usize) -> Result<(Projection, Vec<Vec<f64>>), TopicError> {
    let n = vectors.len();
    if n == 0 {
        return Err(TopicError::EmptyCorpus);
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(TopicError::InconsistentDimensions);
    }
    if d_out == 0 || n < d_out || d < d_out {
        return Err(TopicError::CorpusTooSmall { n, d_out });
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(d_out);
    let mut explained = Vec::with_capacity(d_out);
    for &idx in order.iter().take(d_out) {
        let mut c: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot = c
            .iter()
            .enumerate()
            .fold(
                (0, 0.0f64),
                |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) },
            )
            .0;
        if c[pivot] < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(c);
        explained.push(eig.eigenvalues[idx].max(0.0));
    }
    let proj = Projection {
        mean,
        components,
        explained_variance: explained,
    };
    let reduced = proj.apply_all(vectors);
    Ok((proj, reduced))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

/// Indices sorted by vector content, and a digest of the content in that
/// order. Both are independent of the input order.
fn canonical_order(points: &[Vec<f64>]) -> (Vec<usize>, [u8; 32]) {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut h = Sha256::new();
    for &i in &idx {
        for x in &points[i] {
            h.update(x.to_le_bytes());
        }
    }
    (idx, h.finalize().into())
}

/// k-means with k-means++ seeding. Points are processed in content order and
/// the seeding stream is keyed by (seed, content digest), so a permutation of
/// the input permutes the assignments identically.
pub fn cluster(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering, TopicError> {
    let n = points.len();
    if n == 0 {
        return Err(TopicError::EmptyCorpus);
    }
    if k == 0 || k > n {
        return Err(TopicError::KTooLarge { k, n });
    }
    let (order, digest) = canonical_order(points);
    let pts: Vec<&[f64]> = order.iter().map(|&i| points[i].as_slice()).collect();
    let mut rng = SeededRng::new(derive_seed(seed, &digest));

    // k-means++
    let mut centroids: Vec<Vec<f64>> = vec![pts[rng.below(n as u64) as usize].to_vec()];
    let mut d2: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.unit() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = i;
                    break;
                }
            }
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.below(n as u64) as usize
        };
        centroids.push(pts[pick].to_vec());
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let dim = pts[0].len();
    let mut assign = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut dist = vec![0.0; n];
        for (i, p) in pts.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assign[i] = c;
            dist[i] = d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in pts.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, x) in sums[assign[i]].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        let mut taken: BTreeSet<usize> = BTreeSet::new();
        for c in 0..k {
            let next = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                // re-seed from the point farthest from its centroid
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .fold((0, f64::NEG_INFINITY), |(bi, bd), i| {
                        if dist[i] > bd {
                            (i, dist[i])
                        } else {
                            (bi, bd)
                        }
                    })
                    .0;
                taken.insert(far);
                dist[far] = 0.0;
                pts[far].to_vec()
            };
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    let mut inertia = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        assign[i] = c;
        inertia += d;
    }

    let mut assignments = vec![0usize; n];
    for (pos, &orig) in order.iter().enumerate() {
        assignments[orig] = assign[pos];
    }
    Ok(Clustering {
        assignments,
        centroids,
        inertia,
    })
}

/// Mean silhouette with Euclidean distance. Singleton clusters score 0, and
/// so does a single-cluster partition.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n == 0 || k < 2 {
        return 0.0;
    }
    let sizes = assignments.iter().fold(vec![0usize; k], |mut s, &a| {
        s[a] += 1;
        s
    });
    let scores = par::map_range(n, |i| {
        let own = assignments[i];
        if sizes[own] <= 1 {
            return 0.0;
        }
        let mut sum = vec![0.0; k];
        for (j, p) in points.iter().enumerate() {
            if j != i {
                sum[assignments[j]] += sq_dist(&points[i], p).sqrt();
            }
        }
        let a = sum[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sum[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            return 0.0;
        }
        let denom = a.max(b);
        if denom > 0.0 {
            (b - a) / denom
        } else {
            0.0
        }
    });
    scores.iter().sum::<f64>() / n as f64
}

/// Picks the candidate k with the highest mean silhouette; ties go to the
/// smaller k. Returns the chosen k and the score of every candidate.
pub fn select_k(
    points: &[Vec<f64>],
    candidates: &[usize],
    seed: u64,
) -> Result<(usize, Vec<(usize, f64)>), TopicError> {
    let uniq: BTreeSet<usize> = candidates.iter().copied().collect();
    if uniq.is_empty() {
        return Err(TopicError::NoCandidates);
    }
    let mut scores = Vec::with_capacity(uniq.len());
    let mut best: Option<(usize, f64)> = None;
    for k in uniq {
        let c = cluster(points, k, seed)?;
        let s = silhouette(points, &c.assignments, k);
        scores.push((k, s));
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    Ok((best.expect("non-empty").0, scores))
}

/// Class-based TF-IDF top words per topic (stop-words removed). Scores are
/// `tf(w,t) * ln(1 + A / f(w))` with `A` the average topic token count and
/// `f(w)` the corpus frequency of `w`; ties are broken lexicographically.
pub fn topic_words(docs: &[String], assignments: &[usize], k: usize) -> Result<Vec<Vec<(String, f64)>>, TopicError> {
    let mut doc_counts = vec![0usize; k];
    let mut per_topic: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); k];
    let mut corpus: BTreeMap<String, f64> = BTreeMap::new();
    let stop = stopwords();
    for (doc, &t) in docs.iter().zip(assignments) {
        doc_counts[t] += 1;
        for tok in tokenize(doc) {
            if stop.contains(tok.as_str()) {
                continue;
            }
            *per_topic[t].entry(tok.clone()).or_insert(0.0) += 1.0;
            *corpus.entry(tok).or_insert(0.0) += 1.0;
        }
    }
    if let Some(empty) = doc_counts.iter().position(|&c| c == 0) {
        return Err(TopicError::EmptyTopic(empty));
    }
    let totals: Vec<f64> = per_topic.iter().map(|m| m.values().sum()).collect();
    let avg = totals.iter().sum::<f64>() / k as f64;
    Ok(per_topic
        .iter()
        .zip(&totals)
        .map(|(counts, &total)| {
            let mut scored: Vec<(String, f64)> = counts
                .iter()
                .map(|(w, &c)| (w.clone(), (c / total) * (1.0 + avg / corpus[w]).ln()))
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            scored.truncate(TOP_WORDS);
            scored
        })
        .collect())
}

pub fn topic_features(assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    assignments
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; k];
            row[a] = 1.0;
            row
        })
        .collect()
}

fn default_d_out() -> usize {
    16
}
fn default_k_candidates() -> Vec<usize> {
    vec![17]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsConfig {
    #[serde(default)]
    pub provider: EmbedConfig,
    #[serde(default = "default_d_out")]
    pub d_out: usize,
    #[serde(default = "default_k_candidates")]
    pub k_candidates: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Optional human labels by topic id.
    #[serde(default)]
    pub labels: BTreeMap<usize, String>,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        Self {
            provider: EmbedConfig::default(),
            d_out: default_d_out(),
            k_candidates: default_k_candidates(),
            seed: 0,
            labels: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub provider_id: String,
    pub config: TopicsConfig,
    pub reducer: Projection,
    pub centroids: Vec<Vec<f64>>,
    pub topic_words: Vec<Vec<(String, f64)>>,
    pub assignments: Vec<usize>,
    pub silhouette_by_k: Vec<(usize, f64)>,
    pub seed: u64,
}

impl TopicModel {
    /// Nearest-centroid topic for already-embedded documents.
    pub fn assign(&self, vectors: &[Vec<f64>]) -> Vec<usize> {
        vectors
            .iter()
            .map(|v| nearest(&self.reducer.apply(v), &self.centroids).0)
            .collect()
    }

    pub fn indicators(&self) -> Vec<Vec<f64>> {
        topic_features(&self.assignments, self.k)
    }
}

/// Full topic stage. `d_out` is capped at the corpus size and candidates
/// larger than the corpus are skipped.
pub fn fit_topics(docs: &[String], cfg: &TopicsConfig) -> Result<TopicModel, TopicError> {
    let embedded = embed(docs, &cfg.provider)?;
    let vectors: Vec<Vec<f64>> = embedded.into_iter().map(|e| e.values).collect();
    let n = vectors.len();
    let d_out = cfg.d_out.min(n).min(vectors[0].len());
    let (reducer, reduced) = reduce_dim(&vectors, d_out)?;
    let candidates: Vec<usize> = cfg.k_candidates.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
    let (k, silhouette_by_k) = select_k(&reduced, &candidates, cfg.seed)?;
    let clustering = cluster(&reduced, k, cfg.seed)?;
    let words = topic_words(docs, &clustering.assignments, k)?;
    Ok(TopicModel {
        k,
        provider_id: cfg.provider.provider_id(),
        config: cfg.clone(),
        reducer,
        centroids: clustering.centroids,
        topic_words: words,
        assignments: clustering.assignments,
        silhouette_by_k,
        seed: cfg.seed,
    })
}
