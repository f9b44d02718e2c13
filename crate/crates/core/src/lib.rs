//! Keyframe-parallel video decoding, grouped prefill with KV-cache pruning,
//! and an overlapped decode/prefill pipeline, all over the QVS toy container.

pub mod bench;
pub mod container;
pub mod decode;
pub mod error;
pub mod memory;
pub mod pipeline;
pub mod planner;
pub mod prefill;
pub mod synth;

pub use container::{decode_sequential, encode, seek, EncodeConfig, Frame, Packet, StreamKind, VideoFile};
pub use decode::{
    decode_parallel, decode_seek_based, decode_sequential_slice, frame_index, resize_bilinear, DecodeStats,
    Decoded, FrameBuffer, SampleSpec,
};
pub use error::{Error, Result};
pub use planner::{keyframe_intervals, scan_packets, IntervalSet, ScanResult};
pub use prefill::{prefill, prune_group, score_tokens, tokenize_frames, KvCache, Model, ModelConfig, PruneConfig, Scorer};

pub(crate) fn serialize_ms<S: serde::Serializer>(d: &std::time::Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}
