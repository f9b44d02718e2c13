#![allow(dead_code)]

use qvs_core::container::{EncodeConfig, VideoFile};
use qvs_core::synth::{synth_video, SynthParams};

pub fn video(frames: u64, width: usize, height: usize, keyframe_period: u32, max_packet_bytes: u32, seed: u64) -> VideoFile {
    let cfg = EncodeConfig {
        keyframe_period,
        max_packet_bytes,
        ..EncodeConfig::default()
    };
    synth_video(
        SynthParams {
            width,
            height,
            frames,
            seed,
        },
        &cfg,
    )
    .expect("synthetic encode")
}

/// Keyframe nearest to `numer / denom` by exhaustive search, ties to the earlier.
pub fn brute_snap(keyframes: &[u64], numer: u128, denom: u128) -> u64 {
    let dist = |k: u64| (k as u128 * denom).abs_diff(numer);
    let mut best = keyframes[0];
    for &k in keyframes {
        if dist(k) < dist(best) {
            best = k;
        }
    }
    best
}
