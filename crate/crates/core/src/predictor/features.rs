//! Feature matrix assembly with a fixed column schema.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PredictorError;
use crate::acoustic::{AcousticFeatures, SCALAR_NAMES};
use crate::predictor::junk::JUNK_NAMES;

pub const OTHER_LEVEL: &str = "<other>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalGroup {
    pub field: String,
    /// Levels seen in training, sorted. An extra "other" column follows them.
    pub levels: Vec<String>,
}

/// Column layout: topic indicators, acoustic scalars plus `has_audio`, one
/// one-hot group per ad-context field, then the optional junk block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub n_topics: usize,
    pub categoricals: Vec<CategoricalGroup>,
    pub with_junk: bool,
    pub names: Vec<String>,
    pub schema_id: String,
}

impl FeatureSchema {
    pub fn new(n_topics: usize, categoricals: Vec<CategoricalGroup>, with_junk: bool) -> Self {
        let mut names: Vec<String> = (0..n_topics).map(|t| format!("topic_{t}")).collect();
        names.extend(SCALAR_NAMES.iter().map(|s| format!("acoustic.{s}")));
        names.push("acoustic.has_audio".into());
        for g in &categoricals {
            for l in &g.levels {
                names.push(format!("ctx.{}={}", g.field, l));
            }
            names.push(format!("ctx.{}={}", g.field, OTHER_LEVEL));
        }
        if with_junk {
            names.extend(JUNK_NAMES.iter().map(|s| format!("junk.{s}")));
        }
        let mut h = Sha256::new();
        for n in &names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        let schema_id = hex::encode(h.finalize());
        Self {
            n_topics,
            categoricals,
            with_junk,
            names,
            schema_id,
        }
    }

    /// Builds the schema from the training split's ad contexts.
    pub fn from_training<'a>(
        n_topics: usize,
        contexts: impl IntoIterator<Item = &'a BTreeMap<String, String>>,
        with_junk: bool,
    ) -> Self {
        let mut levels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for ctx in contexts {
            for (k, v) in ctx {
                levels.entry(k.clone()).or_default().insert(v.clone());
            }
        }
        let groups = levels
            .into_iter()
            .map(|(field, ls)| CategoricalGroup {
                field,
                levels: ls.into_iter().collect(),
            })
            .collect();
        Self::new(n_topics, groups, with_junk)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn acoustic_offset(&self) -> usize {
        self.n_topics
    }

    /// Whether `col` is a 0/1 indicator column.
    pub fn is_binary(&self, col: usize) -> bool {
        let cat_start = self.n_topics + SCALAR_NAMES.len() + 1;
        let cat_end = self.len() - if self.with_junk { JUNK_NAMES.len() } else { 0 };
        col < self.n_topics || col == cat_start - 1 || (cat_start..cat_end).contains(&col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub asset_id: String,
    pub values: Vec<f64>,
    pub missing_mask: Vec<bool>,
    pub schema_id: String,
}

impl FeatureVector {
    /// Values with masked entries replaced by NaN, the form the tree learner
    /// consumes.
    pub fn model_row(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.missing_mask)
            .map(|(&v, &m)| if m { f64::NAN } else { v })
            .collect()
    }
}

/// Per-asset inputs to [`assemble_features`].
#[derive(Debug, Clone, Default)]
pub struct FeatureSources<'a> {
    pub topics: BTreeMap<&'a str, usize>,
    pub acoustic: BTreeMap<&'a str, &'a AcousticFeatures>,
    pub ad_context: BTreeMap<&'a str, &'a BTreeMap<String, String>>,
    pub junk: Option<BTreeMap<&'a str, &'a [f64]>>,
}

pub fn assemble_row(
    schema: &FeatureSchema,
    asset_id: &str,
    topic: usize,
    acoustic: &AcousticFeatures,
    ad_context: &BTreeMap<String, String>,
    junk: Option<&[f64]>,
) -> Result<FeatureVector, PredictorError> {
    if topic >= schema.n_topics {
        return Err(PredictorError::SchemaMismatch(format!(
            "topic {topic} outside {} indicator columns",
            schema.n_topics
        )));
    }
    let mut values = vec![0.0; schema.n_topics];
    let mut mask = vec![false; schema.n_topics];
    values[topic] = 1.0;

    for s in acoustic.scalars() {
        values.push(s.unwrap_or(0.0));
        mask.push(s.is_none());
    }
    values.push(if acoustic.has_audio { 1.0 } else { 0.0 });
    mask.push(false);

    for g in &schema.categoricals {
        let mut block = vec![0.0; g.levels.len() + 1];
        match ad_context.get(&g.field) {
            Some(v) => {
                let slot = g.levels.binary_search(v).unwrap_or(g.levels.len());
                block[slot] = 1.0;
                mask.extend(std::iter::repeat_n(false, block.len()));
            }
            None => mask.extend(std::iter::repeat_n(true, block.len())),
        }
        values.extend(block);
    }

    match (schema.with_junk, junk) {
        (true, Some(j)) if j.len() == JUNK_NAMES.len() => {
            values.extend_from_slice(j);
            mask.extend(std::iter::repeat_n(false, j.len()));
        }
        (true, _) => {
            return Err(PredictorError::SchemaMismatch(format!(
                "{asset_id}: junk block missing"
            )))
        }
        (false, _) => {}
    }
    debug_assert_eq!(values.len(), schema.len());
    Ok(FeatureVector {
        asset_id: asset_id.to_string(),
        values,
        missing_mask: mask,
        schema_id: schema.schema_id.clone(),
    })
}

/// Assembles rows for `ids` in the given order. Every id must be present in
/// every source map.
pub fn assemble_features(
    schema: &FeatureSchema,
    ids: &[&str],
    sources: &FeatureSources<'_>,
) -> Result<Vec<FeatureVector>, PredictorError> {
    if sources.junk.is_some() != schema.with_junk {
        return Err(PredictorError::SchemaMismatch(
            "junk block presence differs from schema".into(),
        ));
    }
    ids.iter()
        .map(|&id| {
            let unknown = || PredictorError::UnknownAsset(id.to_string());
            let topic = *sources.topics.get(id).ok_or_else(unknown)?;
            let acoustic = sources.acoustic.get(id).ok_or_else(unknown)?;
            let ctx = sources.ad_context.get(id).ok_or_else(unknown)?;
            let junk = match &sources.junk {
                Some(m) => Some(*m.get(id).ok_or_else(unknown)?),
                None => None,
            };
            assemble_row(schema, id, topic, acoustic, ctx, junk)
        })
        .collect()
}
