use super::model::ModelConfig;
use super::PrunedGroup;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerCache {
    /// `(retained, n_heads, d_head)` row-major.
    pub keys: Vec<f32>,
    pub values: Vec<f32>,
    /// Global token id of each retained entry.
    pub origin: Vec<u64>,
}

/// Per-layer pruned key/value cache built group by group.
#[derive(Clone, Debug, PartialEq)]
pub struct KvCache {
    pub n_heads: usize,
    pub d_head: usize,
    pub layers: Vec<LayerCache>,
    pub groups: usize,
    /// Largest number of tokens held transiently for a single group.
    pub peak_group_tokens: usize,
}

impl KvCache {
    pub fn new(cfg: &ModelConfig) -> Self {
        KvCache {
            n_heads: cfg.n_heads,
            d_head: cfg.d_head,
            layers: vec![LayerCache::default(); cfg.layers],
            groups: 0,
            peak_group_tokens: 0,
        }
    }

    pub(crate) fn append(&mut self, layer: usize, first_token: u64, pruned: PrunedGroup) {
        let l = &mut self.layers[layer];
        l.keys.extend_from_slice(&pruned.keys);
        l.values.extend_from_slice(&pruned.values);
        l.origin.extend(pruned.indices.iter().map(|&i| first_token + i as u64));
    }

    pub(crate) fn note_group(&mut self, tokens: usize) {
        self.groups += 1;
        self.peak_group_tokens = self.peak_group_tokens.max(tokens);
    }

    pub fn retained_tokens(&self, layer: usize) -> usize {
        self.layers[layer].origin.len()
    }

    pub fn total_retained(&self) -> usize {
        self.layers.iter().map(|l| l.origin.len()).sum()
    }

    /// Cache size if stored at `bytes_per_element` (2 for float16).
    pub fn bytes(&self, bytes_per_element: usize) -> u64 {
        let entries: usize = self.layers.iter().map(|l| l.keys.len() + l.values.len()).sum();
        (entries * bytes_per_element) as u64
    }

    /// Equality on raw bit patterns, so `-0.0` and NaN payloads count.
    pub fn bit_eq(&self, other: &KvCache) -> bool {
        fn same(a: &[f32], b: &[f32]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.n_heads == other.n_heads
            && self.d_head == other.d_head
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.origin == b.origin && same(&a.keys, &b.keys) && same(&a.values, &b.values)
            })
    }
}
