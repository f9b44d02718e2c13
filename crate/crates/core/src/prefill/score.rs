use std::cmp::Ordering;

use crate::error::{Error, Result};

use super::Scorer;

/// Borrowed per-layer keys and values of one group, `(tokens, n_heads, d_head)`.
#[derive(Clone, Copy, Debug)]
pub struct KvBlock<'a> {
    pub keys: &'a [f32],
    pub values: &'a [f32],
    pub n_heads: usize,
    pub d_head: usize,
}

impl KvBlock<'_> {
    pub fn width(&self) -> usize {
        self.n_heads * self.d_head
    }

    pub fn tokens(&self) -> usize {
        self.keys.len() / self.width()
    }
}

fn l2(row: &[f32]) -> f64 {
    row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

/// One importance score per token. Norms are taken over the flattened
/// `n_heads * d_head` vector. `query` is `(T, n_heads * d_head)`.
pub fn score_tokens(block: &KvBlock<'_>, scorer: Scorer, query: Option<&[f32]>) -> Result<Vec<f64>> {
    let width = block.width();
    match scorer {
        Scorer::KeyNormSmall => Ok(block.keys.chunks_exact(width).map(|k| -l2(k)).collect()),
        Scorer::ValueNorm => Ok(block.values.chunks_exact(width).map(l2).collect()),
        Scorer::AttentionScore => {
            let q = query.ok_or(Error::MissingTextQuery)?;
            if q.is_empty() || q.len() % width != 0 {
                return Err(Error::InvalidConfig(format!(
                    "text query length {} is not a multiple of {width}",
                    q.len()
                )));
            }
            let text_tokens = q.len() / width;
            // mean_{t,h} <K_h, Q_{t,h}> = <K, sum_t Q_t> / (T * H)
            let mut q_sum = vec![0f64; width];
            for row in q.chunks_exact(width) {
                for (s, &v) in q_sum.iter_mut().zip(row) {
                    *s += f64::from(v);
                }
            }
            let scale = 1.0 / (text_tokens * block.n_heads) as f64;
            Ok(block
                .keys
                .chunks_exact(width)
                .map(|k| k.iter().zip(&q_sum).map(|(&a, &b)| f64::from(a) * b).sum::<f64>() * scale)
                .collect())
        }
    }
}

/// `max(1, round(rho * n))`, capped at `n`.
pub fn retained_count(rho: f64, n: usize) -> usize {
    ((rho * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Indices of the `k` highest scores, ties to the smaller index, returned in
/// ascending index order.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    let rank = |&a: &usize, &b: &usize| -> Ordering { scores[b].total_cmp(&scores[a]).then(a.cmp(&b)) };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, rank);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}
