//! Group-based prefill with per-group KV-cache pruning.
//!
//! The visual encoder and transformer are replaced by a deterministic stand-in:
//! tokens are seeded projections of mean-pooled patches, and each layer's keys
//! and values are seeded linear projections of those tokens. The pruning math
//! runs on real tensors of shape `(tokens, n_heads, d_head)`.

mod cache;
mod model;
mod score;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::decode::FrameBuffer;
use crate::error::{Error, Result};

pub use cache::{KvCache, LayerCache};
pub use model::{Model, ModelConfig, TextQuery};
pub use score::{retained_count, score_tokens, top_k_indices, KvBlock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// `s = -||K||`: keep the smallest-norm keys.
    KeyNormSmall,
    /// `s = ||V||`
    ValueNorm,
    /// Mean over text tokens and heads of `K . Q`.
    AttentionScore,
}

impl std::str::FromStr for Scorer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "key_norm_small" => Ok(Scorer::KeyNormSmall),
            "value_norm" => Ok(Scorer::ValueNorm),
            "attention_score" => Ok(Scorer::AttentionScore),
            other => Err(Error::InvalidConfig(format!("unknown scorer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PruneConfig {
    pub scorer: Scorer,
    /// Retention ratio in `(0, 1]`.
    pub rho: f64,
    /// Per-layer text queries; required by [`Scorer::AttentionScore`].
    pub text_query: Option<Arc<TextQuery>>,
}

impl PruneConfig {
    pub fn new(scorer: Scorer, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("retention ratio {rho} not in (0, 1]")));
        }
        Ok(PruneConfig {
            scorer,
            rho,
            text_query: None,
        })
    }

    pub fn with_text_query(mut self, q: Arc<TextQuery>) -> Self {
        self.text_query = Some(q);
        self
    }
}

/// A contiguous run of video tokens, `(n_tokens, d_model)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenGroup {
    pub group_id: usize,
    pub first_token: u64,
    pub n_tokens: usize,
    pub tokens: Vec<f32>,
    /// Inclusive slot range of the frames that produced these tokens.
    pub frame_span: (usize, usize),
}

/// Number of groups for `frames` split into groups of `frames_per_group`.
pub fn group_count(frames: usize, frames_per_group: usize) -> usize {
    frames.div_ceil(frames_per_group)
}

/// Tokenizes every frame and partitions the tokens into groups of
/// `frames_per_group` frames (the last group may be smaller).
pub fn tokenize_frames(frames: &FrameBuffer, model: &Model, frames_per_group: usize) -> Result<Vec<TokenGroup>> {
    if frames.slots == 0 {
        return Err(Error::InvalidConfig("empty frame buffer".into()));
    }
    if frames_per_group == 0 {
        return Err(Error::InvalidConfig("frames_per_group must be >= 1".into()));
    }
    let mut groups = Vec::with_capacity(group_count(frames.slots, frames_per_group));
    let mut first_token = 0u64;
    for (g, start) in (0..frames.slots).step_by(frames_per_group).enumerate() {
        let end = (start + frames_per_group).min(frames.slots);
        let group = model.tokenize_group(frames, start..end, g, first_token)?;
        first_token += group.n_tokens as u64;
        groups.push(group);
    }
    Ok(groups)
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupStats {
    pub group_id: usize,
    pub tokens: usize,
    /// Retained entries per layer.
    pub retained: Vec<usize>,
    #[serde(serialize_with = "crate::serialize_ms")]
    pub duration: Duration,
}

/// Incremental prefill: groups must be pushed in order.
pub struct Prefiller<'m> {
    model: &'m Model,
    prune: PruneConfig,
    cache: KvCache,
    next_group: usize,
}

impl<'m> Prefiller<'m> {
    pub fn new(model: &'m Model, prune: PruneConfig) -> Result<Self> {
        if prune.scorer == Scorer::AttentionScore && prune.text_query.is_none() {
            return Err(Error::MissingTextQuery);
        }
        Ok(Prefiller {
            cache: KvCache::new(model.config()),
            model,
            prune,
            next_group: 0,
        })
    }

    pub fn push_group(&mut self, group: &TokenGroup) -> Result<GroupStats> {
        if group.group_id != self.next_group {
            return Err(Error::InvalidConfig(format!(
                "group {} pushed out of order, expected {}",
                group.group_id, self.next_group
            )));
        }
        let start = Instant::now();
        let cfg = self.model.config();
        let mut retained = Vec::with_capacity(cfg.layers);
        for layer in 0..cfg.layers {
            let keys = self.model.project_keys(layer, &group.tokens);
            let values = self.model.project_values(layer, &group.tokens);
            let block = KvBlock {
                keys: &keys,
                values: &values,
                n_heads: cfg.n_heads,
                d_head: cfg.d_head,
            };
            let query = self.prune.text_query.as_ref().map(|q| q.layer(layer));
            let pruned = prune_group(&block, &self.prune, query)?;
            retained.push(pruned.indices.len());
            self.cache.append(layer, group.first_token, pruned);
        }
        self.cache.note_group(group.n_tokens);
        self.next_group += 1;
        Ok(GroupStats {
            group_id: group.group_id,
            tokens: group.n_tokens,
            retained,
            duration: start.elapsed(),
        })
    }

    pub fn finish(self) -> KvCache {
        self.cache
    }
}

/// Output of pruning one group in one layer. Entries are in ascending
/// original-index order.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedGroup {
    pub keys: Vec<f32>,
    pub values: Vec<f32>,
    /// Retained token indices, local to the group.
    pub indices: Vec<usize>,
}

/// Scores a group and keeps the top `max(1, round(rho * N))` tokens, ties to
/// the smaller index. `query` is the layer's text query `(T, n_heads*d_head)`.
pub fn prune_group(block: &KvBlock<'_>, cfg: &PruneConfig, query: Option<&[f32]>) -> Result<PrunedGroup> {
    let n = block.tokens();
    if n == 0 {
        return Err(Error::InvalidConfig("cannot prune an empty group".into()));
    }
    if cfg.rho >= 1.0 {
        return Ok(PrunedGroup {
            keys: block.keys.to_vec(),
            values: block.values.to_vec(),
            indices: (0..n).collect(),
        });
    }
    let scores = score_tokens(block, cfg.scorer, query)?;
    let indices = top_k_indices(&scores, retained_count(cfg.rho, n));
    let width = block.n_heads * block.d_head;
    let mut keys = Vec::with_capacity(indices.len() * width);
    let mut values = Vec::with_capacity(indices.len() * width);
    for &i in &indices {
        keys.extend_from_slice(&block.keys[i * width..(i + 1) * width]);
        values.extend_from_slice(&block.values[i * width..(i + 1) * width]);
    }
    Ok(PrunedGroup { keys, values, indices })
}

/// Sequentially prefills every group into a pruned cache.
pub fn prefill(groups: &[TokenGroup], model: &Model, prune: &PruneConfig) -> Result<KvCache> {
    if groups.is_empty() {
        return Err(Error::InvalidConfig("prefill needs at least one group".into()));
    }
    let mut p = Prefiller::new(model, prune.clone())?;
    for g in groups {
        p.push_group(g)?;
    }
    Ok(p.finish())
}
