//! Scoring, pruning and full grouped prefill.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qvs_core::prefill::KvBlock;
use qvs_core::{prefill, prune_group, tokenize_frames, FrameBuffer, Model, ModelConfig, PruneConfig, Scorer};

fn model() -> Model {
    Model::new(ModelConfig {
        d_model: 256,
        n_heads: 4,
        d_head: 64,
        layers: 4,
        tokens_per_frame: 16,
        seed: 3,
    })
}

fn frames(slots: usize, side: usize) -> FrameBuffer {
    let data = (0..slots * 3 * side * side).map(|i| (i.wrapping_mul(2_654_435_761) >> 13) as u8).collect();
    FrameBuffer::from_raw(data, side, side).unwrap()
}

fn pruning(c: &mut Criterion) {
    let m = model();
    let width = 256;
    let tokens = 16 * 16;
    let keys: Vec<f32> = (0..tokens * width).map(|i| ((i * 37 % 101) as f32 - 50.0) / 50.0).collect();
    let values: Vec<f32> = keys.iter().rev().copied().collect();
    let block = KvBlock {
        keys: &keys,
        values: &values,
        n_heads: 4,
        d_head: 64,
    };
    let query = m.text_query(32);
    let mut group = c.benchmark_group("prune_group_256tok");
    for scorer in [Scorer::KeyNormSmall, Scorer::ValueNorm, Scorer::AttentionScore] {
        let cfg = PruneConfig::new(scorer, 0.3).unwrap().with_text_query(query.clone());
        group.bench_with_input(BenchmarkId::from_parameter(format!("{scorer:?}")), &cfg, |b, cfg| {
            b.iter(|| prune_group(black_box(&block), cfg, Some(query.layer(0))).unwrap())
        });
    }
    group.finish();
}

fn grouped_prefill(c: &mut Criterion) {
    let m = model();
    let buf = frames(64, 32);
    let mut group = c.benchmark_group("prefill_64frames");
    group.sample_size(20);
    for fpg in [4, 16, 64] {
        let groups = tokenize_frames(&buf, &m, fpg).unwrap();
        let cfg = PruneConfig::new(Scorer::KeyNormSmall, 0.3).unwrap();
        group.bench_with_input(BenchmarkId::new("frames_per_group", fpg), &groups, |b, groups| {
            b.iter(|| prefill(black_box(groups), &m, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pruning, grouped_prefill);
criterion_main!(benches);
