//! Gradient-boosted regression trees, squared-error loss, exact split search.
//!
//! Missing values are NaN in the input matrix and are routed left at every
//! split, both when scoring candidate splits and at prediction time.

use serde::{Deserialize, Serialize};

use super::PredictorError;
use crate::par;
use crate::rng::{derive_seed, SeededRng};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Gains closer than this fraction of the node's residual energy count as
/// ties, which then go to the lowest feature index and lowest threshold.
const TIE_REL_EPS: f64 = 1e-12;

fn default_n_trees() -> usize {
    740
}
fn default_max_depth() -> usize {
    12
}
fn default_learning_rate() -> f64 {
    0.0764
}
fn default_min_samples_split() -> usize {
    50
}
fn default_subsample() -> f64 {
    0.86
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbdtParams {
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_min_samples_split")]
    pub min_samples_split: usize,
    #[serde(default = "default_subsample")]
    pub subsample: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: default_n_trees(),
            max_depth: default_max_depth(),
            learning_rate: default_learning_rate(),
            min_samples_split: default_min_samples_split(),
            subsample: default_subsample(),
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::InvalidParams(m.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.min_samples_split == 0 {
            return bad("min_samples_split must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes in pre-order; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    // NaN fails the comparison and goes left
                    i = if row[feature] >= threshold { right } else { left };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split {
                feature,
                threshold,
                gain,
                ..
            } => Some((feature, threshold, gain)),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    #[default]
    Identity,
    Log1p,
}

impl TargetTransform {
    pub fn forward(self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => y,
            TargetTransform::Log1p => y.ln_1p(),
        }
    }

    pub fn inverse(self, v: f64) -> f64 {
        match self {
            TargetTransform::Identity => v,
            TargetTransform::Log1p => v.exp_m1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub params: GbdtParams,
    pub schema_id: String,
    pub feature_names: Vec<String>,
    pub n_features: usize,
    pub target_transform: TargetTransform,
    pub base_prediction: f64,
    pub trees: Vec<RegressionTree>,
}

impl GbdtModel {
    /// `base + lr * sum(tree outputs)`, in the (possibly transformed) space
    /// the model was fit in.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.base_prediction;
        for t in &self.trees {
            acc += self.params.learning_rate * t.predict_row(row);
        }
        acc
    }
}

/// Sum in ascending value order, so the result depends only on the multiset.
pub(crate) fn canonical_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Threshold strictly above `a` and not above `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let t = 0.5 * (a + b);
    if t > a {
        t
    } else {
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn tie_eps(residuals: &[f64], rows: &[usize]) -> f64 {
    TIE_REL_EPS * canonical_sum(rows.iter().map(|&i| residuals[i] * residuals[i])).max(f64::MIN_POSITIVE)
}

fn best_for_feature(
    x: &[Vec<f64>],
    r: &[f64],
    rows: &[usize],
    feature: usize,
    total: f64,
    eps: f64,
) -> Option<SplitCandidate> {
    let mut present = Vec::with_capacity(rows.len());
    let mut missing = Vec::new();
    for &i in rows {
        let v = x[i][feature];
        if v.is_nan() {
            missing.push(r[i]);
        } else {
            present.push((v, r[i]));
        }
    }
    if present.len() < 2 {
        return None;
    }
    present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = rows.len() as f64;
    let parent = total * total / n;
    let mut s_left = canonical_sum(missing.iter().copied());
    let mut n_left = missing.len() as f64;
    let mut best: Option<SplitCandidate> = None;
    for j in 0..present.len() - 1 {
        s_left += present[j].1;
        n_left += 1.0;
        let (a, b) = (present[j].0, present[j + 1].0);
        if a == b {
            continue;
        }
        let s_right = total - s_left;
        let gain = s_left * s_left / n_left + s_right * s_right / (n - n_left) - parent;
        if best.is_none_or(|c| gain > c.gain + eps) {
            best = Some(SplitCandidate {
                feature,
                threshold: midpoint(a, b),
                gain,
            });
        }
    }
    best
}

/// Best (feature, midpoint threshold) for the given rows of `x` against
/// residuals `r`, scored by reduction in squared error with missing values
/// on the left. Features are scanned in parallel; among features tied within
/// the epsilon the lowest index wins.
pub fn best_split(x: &[Vec<f64>], r: &[f64], rows: &[usize]) -> Option<SplitCandidate> {
    best_split_with(x, r, rows, None)
}

/// As [`best_split`], but with `tie_seed` tied features are ordered by
/// `derive_seed(tie_seed, feature)` instead of by index, so that exact
/// duplicates (e.g. a monotone transform of another column) share the gain
/// across nodes rather than one of them taking all of it.
pub fn best_split_with(x: &[Vec<f64>], r: &[f64], rows: &[usize], tie_seed: Option<u64>) -> Option<SplitCandidate> {
    let n_features = x.first().map_or(0, Vec::len);
    if rows.len() < 2 || n_features == 0 {
        return None;
    }
    let total = canonical_sum(rows.iter().map(|&i| r[i]));
    let eps = tie_eps(r, rows);
    let per_feature: Vec<SplitCandidate> = par::map_range(n_features, |f| best_for_feature(x, r, rows, f, total, eps))
        .into_iter()
        .flatten()
        .collect();
    let mut best: Option<SplitCandidate> = None;
    for &c in &per_feature {
        if best.is_none_or(|b| c.gain > b.gain + eps) {
            best = Some(c);
        }
    }
    let (best, seed) = (best?, tie_seed);
    let Some(seed) = seed else {
        return Some(best);
    };
    let key = |c: &SplitCandidate| derive_seed(seed, &(c.feature as u64).to_le_bytes());
    per_feature
        .into_iter()
        .filter(|c| c.gain >= best.gain - eps)
        .min_by_key(|c| (key(c), c.feature))
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    r: &'a [f64],
    params: &'a GbdtParams,
    seed: u64,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let value = canonical_sum(rows.iter().map(|&i| self.r[i])) / rows.len() as f64;
        self.nodes.push(Node::Leaf { value });
        let first = self.r[rows[0]];
        let constant = rows.iter().all(|&i| self.r[i] == first);
        if rows.len() < self.params.min_samples_split || depth >= self.params.max_depth || constant {
            if constant {
                self.nodes[id] = Node::Leaf { value: first };
            }
            return id;
        }
        let node_seed = derive_seed(self.seed, &(id as u64).to_le_bytes());
        let Some(split) = best_split_with(self.x, self.r, &rows, Some(node_seed)) else {
            return id;
        };
        if split.gain <= tie_eps(self.r, &rows) {
            return id;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| !(self.x[i][split.feature] >= split.threshold));
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            left,
            right,
        };
        id
    }
}

/// `seed` orders tied features at every node.
pub fn fit_tree(x: &[Vec<f64>], r: &[f64], rows: Vec<usize>, params: &GbdtParams, seed: u64) -> RegressionTree {
    let mut b = TreeBuilder {
        x,
        r,
        params,
        seed,
        nodes: Vec::new(),
    };
    b.grow(rows, 0);
    RegressionTree { nodes: b.nodes }
}

/// Rows seen by tree `t`: `floor(subsample * n)` of them, drawn with the
/// pinned generator under a per-tree seed.
pub fn tree_rows(n: usize, subsample: f64, seed: u64, t: usize) -> Vec<usize> {
    let k = ((subsample * n as f64).floor() as usize).clamp(1, n);
    if k == n {
        return (0..n).collect();
    }
    SeededRng::new(derive_seed(seed, &(t as u64).to_le_bytes())).sample_indices(n, k)
}

fn check_matrix(x: &[Vec<f64>], y_len: usize) -> Result<usize, PredictorError> {
    if x.len() != y_len {
        return Err(PredictorError::DimensionMismatch(format!(
            "{} rows vs {} targets",
            x.len(),
            y_len
        )));
    }
    let width = x.first().map_or(0, Vec::len);
    if x.iter().any(|row| row.len() != width) {
        return Err(PredictorError::DimensionMismatch("ragged feature matrix".into()));
    }
    Ok(width)
}

pub fn fit_gbdt(x: &[Vec<f64>], y: &[f64], params: &GbdtParams) -> Result<GbdtModel, PredictorError> {
    fit_gbdt_with(x, y, params, TargetTransform::Identity)
}

pub fn fit_gbdt_with(
    x: &[Vec<f64>],
    y: &[f64],
    params: &GbdtParams,
    transform: TargetTransform,
) -> Result<GbdtModel, PredictorError> {
    params.validate()?;
    let n = y.len();
    let n_features = check_matrix(x, n)?;
    if n < params.min_samples_split.max(1) {
        return Err(PredictorError::TooFewRows {
            n,
            min: params.min_samples_split.max(1),
        });
    }
    let y: Vec<f64> = y.iter().map(|&v| transform.forward(v)).collect();
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(PredictorError::NonFiniteTarget(i));
    }
    let base = if y.iter().all(|&v| v == y[0]) {
        y[0]
    } else {
        canonical_sum(y.iter().copied()) / n as f64
    };
    let mut f = vec![base; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let r: Vec<f64> = y.iter().zip(&f).map(|(yi, fi)| yi - fi).collect();
        let tie_seed = derive_seed(params.seed, format!("ties-{t}").as_bytes());
        let tree = fit_tree(x, &r, tree_rows(n, params.subsample, params.seed, t), params, tie_seed);
        for (fi, row) in f.iter_mut().zip(x) {
            *fi += params.learning_rate * tree.predict_row(row);
        }
        trees.push(tree);
    }
    Ok(GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        params: params.clone(),
        schema_id: String::new(),
        feature_names: Vec::new(),
        n_features,
        target_transform: transform,
        base_prediction: base,
        trees,
    })
}

/// Predictions in the model's fitting space.
pub fn predict(model: &GbdtModel, x: &[Vec<f64>]) -> Result<Vec<f64>, PredictorError> {
    if let Some(row) = x.iter().find(|r| r.len() != model.n_features) {
        return Err(PredictorError::SchemaMismatch(format!(
            "row has {} features, model expects {}",
            row.len(),
            model.n_features
        )));
    }
    Ok(par::map(x, |row| model.predict_row(row)))
}

/// Predictions mapped back to the original target scale.
pub fn predict_target(model: &GbdtModel, x: &[Vec<f64>]) -> Result<Vec<f64>, PredictorError> {
    Ok(predict(model, x)?
        .into_iter()
        .map(|v| model.target_transform.inverse(v))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::metrics::eval_metrics;
    use proptest::prelude::*;

    fn params(n_trees: usize, max_depth: usize, lr: f64, min_split: usize, subsample: f64) -> GbdtParams {
        GbdtParams {
            n_trees,
            max_depth,
            learning_rate: lr,
            min_samples_split: min_split,
            subsample,
            seed: 11,
        }
    }

    /// Random 50x5 matrix; small-alphabet columns produce duplicate values and
    /// some entries are missing.
    fn fixture(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut g = SeededRng::new(seed);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                (0..5)
                    .map(|f| {
                        if g.unit() < 0.08 {
                            f64::NAN
                        } else if f % 2 == 0 {
                            g.below(6) as f64
                        } else {
                            g.normal()
                        }
                    })
                    .collect()
            })
            .collect();
        let y = x
            .iter()
            .map(|r| (if r[0].is_nan() { 1.0 } else { r[0] }) - 2.0 * r[1].max(0.0) + g.normal())
            .collect();
        (x, y)
    }

    fn sse(v: &[f64]) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum()
    }

    /// Exhaustive enumeration of every (feature, midpoint) pair with a direct
    /// two-pass SSE for each partition.
    fn oracle(x: &[Vec<f64>], r: &[f64]) -> Option<(usize, f64, f64)> {
        let parent = sse(r);
        let energy: f64 = r.iter().map(|v| v * v).sum();
        let eps = TIE_REL_EPS * energy;
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = x.iter().map(|row| row[f]).filter(|v| !v.is_nan()).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = (w[0] + w[1]) / 2.0;
                let (mut l, mut rr) = (Vec::new(), Vec::new());
                for (row, &ri) in x.iter().zip(r) {
                    if row[f].is_nan() || row[f] < thr {
                        l.push(ri);
                    } else {
                        rr.push(ri);
                    }
                }
                let gain = parent - sse(&l) - sse(&rr);
                if best.is_none_or(|b| gain > b.2 + eps) {
                    best = Some((f, thr, gain));
                }
            }
        }
        best
    }

    #[test]
    fn split_search_matches_exhaustive_oracle() {
        for seed in 0..200 {
            let (x, y) = fixture(seed);
            let rows: Vec<usize> = (0..x.len()).collect();
            let got = best_split(&x, &y, &rows).unwrap();
            let (f, thr, gain) = oracle(&x, &y).unwrap();
            assert_eq!((got.feature, got.threshold), (f, thr), "seed {seed}");
            assert!((got.gain - gain).abs() <= 1e-9 * gain.abs().max(1.0));
        }
    }

    #[test]
    fn seeded_ties_pick_among_best_only() {
        for seed in 0..50 {
            let (x, y) = fixture(seed);
            let rows: Vec<usize> = (0..x.len()).collect();
            let (_, _, gain) = oracle(&x, &y).unwrap();
            let got = best_split_with(&x, &y, &rows, Some(seed)).unwrap();
            assert!((got.gain - gain).abs() <= 1e-9 * gain.abs().max(1.0));
        }
    }

    #[test]
    fn monotone_duplicate_shares_importance() {
        let (x0, y) = fixture(3);
        let x: Vec<Vec<f64>> = x0.iter().map(|r| vec![r[1], r[1].exp(), r[2]]).collect();
        let rows: Vec<usize> = (0..x.len()).collect();
        assert_eq!(best_split(&x, &y, &rows).unwrap().feature, 0);
        let m = fit_gbdt(&x, &y, &params(60, 3, 0.1, 2, 0.8)).unwrap();
        let used: std::collections::BTreeSet<usize> = m.trees.iter().flat_map(|t| t.splits().map(|s| s.0)).collect();
        assert!(used.contains(&0) && used.contains(&1), "{used:?}");
    }

    #[test]
    fn constant_target_is_exact() {
        let (x, _) = fixture(1);
        let y = vec![0.3; 50];
        let m = fit_gbdt(&x, &y, &params(20, 3, 0.1, 2, 0.8)).unwrap();
        assert_eq!(m.trees.len(), 20);
        assert!(m.trees.iter().all(|t| t.nodes == vec![Node::Leaf { value: 0.0 }]));
        assert!(predict(&m, &x).unwrap().iter().all(|&p| p == 0.3));
    }

    fn step_fixture() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 199.0]).collect();
        let y = x.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
        (x, y)
    }

    #[test]
    fn step_function_fit() {
        let (x, y) = step_fixture();
        let m = fit_gbdt(&x, &y, &params(50, 1, 0.1, 2, 1.0)).unwrap();
        let met = eval_metrics(&y, &predict(&m, &x).unwrap()).unwrap();
        assert!(met.r2 >= 0.99, "{}", met.r2);
        let Node::Split { threshold, .. } = m.trees[0].nodes[0] else {
            panic!("stump expected")
        };
        assert!(threshold > 99.0 / 199.0 && threshold < 100.0 / 199.0);
        let (f, thr, _) = oracle(&x, &y.iter().map(|v| v - m.base_prediction).collect::<Vec<_>>()).unwrap();
        assert_eq!((f, thr), (0, threshold));
        assert!(m.trees.iter().all(|t| t.depth() <= 1));
    }

    #[test]
    fn single_stump_outputs_leaf_means() {
        let (x, y) = step_fixture();
        let m = fit_gbdt(&x, &y, &params(1, 1, 1.0, 2, 1.0)).unwrap();
        assert_eq!(m.base_prediction, 0.5);
        let p = predict(&m, &x).unwrap();
        // left leaf residuals all -0.5, right all +0.5
        assert_eq!(p[0], 0.0);
        assert_eq!(p[199], 1.0);
        let distinct: std::collections::BTreeSet<u64> = p.iter().map(|v| v.to_bits()).collect();
        assert_eq!(distinct.len(), 2);
    }

    #[test]
    fn zero_trees_predict_base() {
        let (x, y) = fixture(4);
        let m = fit_gbdt(&x, &y, &params(0, 3, 0.1, 2, 1.0)).unwrap();
        assert!(predict(&m, &x).unwrap().iter().all(|&p| p == m.base_prediction));
    }

    #[test]
    fn defaults_and_errors() {
        let p = GbdtParams::default();
        assert_eq!(
            (
                p.n_trees,
                p.max_depth,
                p.learning_rate,
                p.min_samples_split,
                p.subsample
            ),
            (740, 12, 0.0764, 50, 0.86)
        );
        let p: GbdtParams = serde_json::from_str("{}").unwrap();
        assert_eq!(p, GbdtParams::default());
        assert!(serde_json::from_str::<GbdtParams>(r#"{"n_tree": 3}"#).is_err());
        let (x, y) = fixture(0);
        assert_eq!(
            fit_gbdt(&x[..10], &y[..10], &GbdtParams::default()).unwrap_err(),
            PredictorError::TooFewRows { n: 10, min: 50 }
        );
        let mut bad = y.clone();
        bad[3] = f64::NAN;
        assert_eq!(
            fit_gbdt(&x, &bad, &params(1, 1, 0.1, 2, 1.0)).unwrap_err(),
            PredictorError::NonFiniteTarget(3)
        );
        assert!(matches!(
            fit_gbdt(&x, &y, &params(1, 1, 0.1, 2, 1.5)),
            Err(PredictorError::InvalidParams(_))
        ));
        let m = fit_gbdt(&x, &y, &params(2, 2, 0.1, 2, 1.0)).unwrap();
        assert!(matches!(
            predict(&m, &[vec![0.0; 4]]),
            Err(PredictorError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn deterministic_and_depth_bounded() {
        let (x, y) = fixture(8);
        let p = params(30, 3, 0.2, 5, 0.7);
        let a = fit_gbdt(&x, &y, &p).unwrap();
        let b = fit_gbdt(&x, &y, &p).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let pa: Vec<u64> = predict(&a, &x).unwrap().iter().map(|v| v.to_bits()).collect();
        let pb: Vec<u64> = predict(&b, &x).unwrap().iter().map(|v| v.to_bits()).collect();
        assert_eq!(pa, pb);
        for t in &a.trees {
            assert!(t.depth() <= 3);
            for n in &t.nodes {
                match *n {
                    Node::Split { gain, left, right, .. } => {
                        assert!(gain >= 0.0 && left < t.nodes.len() && right < t.nodes.len());
                    }
                    Node::Leaf { value } => assert!(value.is_finite()),
                }
            }
        }
    }

    #[test]
    fn training_predictions_match_predict() {
        let (x, y) = fixture(12);
        let p = params(25, 4, 0.1, 4, 0.86);
        let m = fit_gbdt(&x, &y, &p).unwrap();
        let mut f = vec![m.base_prediction; x.len()];
        for t in &m.trees {
            for (fi, row) in f.iter_mut().zip(&x) {
                *fi += p.learning_rate * t.predict_row(row);
            }
        }
        assert_eq!(f, predict(&m, &x).unwrap());
    }

    #[test]
    fn interpolates_distinct_rows_when_unbounded() {
        for seed in 0..50 {
            let (x, y) = fixture(100 + seed);
            let m = fit_gbdt(&x, &y, &params(200, 64, 0.1, 2, 1.0)).unwrap();
            let met = eval_metrics(&y, &predict(&m, &x).unwrap()).unwrap();
            assert!(met.r2 >= 0.999, "seed {seed}: {}", met.r2);
        }
    }

    #[test]
    fn log1p_round_trip() {
        let (x, _) = fixture(3);
        let y: Vec<f64> = (0..50).map(|i| (i % 7) as f64 * 0.5).collect();
        let m = fit_gbdt_with(&x, &y, &params(100, 8, 0.3, 2, 1.0), TargetTransform::Log1p).unwrap();
        let p = predict_target(&m, &x).unwrap();
        assert!(eval_metrics(&y, &p).unwrap().r2 > 0.9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn row_permutation_gives_identical_model(seed in 0u64..1000, rot in 1usize..49) {
            let (x, y) = fixture(seed);
            let p = params(15, 4, 0.2, 3, 1.0);
            let a = fit_gbdt(&x, &y, &p).unwrap();
            let idx: Vec<usize> = (0..50).map(|i| (i * 7 + rot) % 50).collect();
            let xp: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let b = fit_gbdt(&xp, &yp, &p).unwrap();
            prop_assert_eq!(serde_json::to_string(&a.trees).unwrap(), serde_json::to_string(&b.trees).unwrap());
        }

        #[test]
        fn shifting_target_shifts_predictions(seed in 0u64..1000, c in -10.0f64..10.0) {
            let (x, y) = fixture(seed);
            let p = params(10, 3, 0.1, 5, 0.8);
            let a = predict(&fit_gbdt(&x, &y, &p).unwrap(), &x).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
            let b = predict(&fit_gbdt(&x, &ys, &p).unwrap(), &x).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                prop_assert!((pb - pa - c).abs() < 1e-9);
            }
        }
    }
}
