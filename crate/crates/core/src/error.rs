use thiserror::Error;

/// Errors produced anywhere in the decode / prefill / pipeline stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected \"QVS1\"")]
    BadMagic,

    #[error("version mismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("truncated packet")]
    TruncatedPacket,

    #[error("truncated header")]
    TruncatedHeader,

    #[error("no video stream")]
    NoVideoStream,

    #[error("invalid stream kind {0}")]
    InvalidStreamKind(u8),

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("checksum mismatch for frame at pts {pts}")]
    ChecksumMismatch { pts: u64 },

    #[error("delta frame at pts {pts} has no reference frame")]
    MissingReference { pts: u64 },

    #[error("empty frame list")]
    EmptyFrames,

    #[error("frame {index} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        found: (usize, usize),
        expected: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pts {pts} outside [{min}, {max}]")]
    PtsOutOfRange { pts: u64, min: u64, max: u64 },

    #[error("invalid sample spec: {0}")]
    InvalidSample(String),

    #[error("frame {index} requested but never produced by the decoder")]
    FrameNotFound { index: u64 },

    #[error("slot {slot} written {writes} times")]
    SlotCoverage { slot: usize, writes: u32 },

    #[error("frame size {height}x{width} does not divide into a {grid_h}x{grid_w} patch grid")]
    PatchGrid {
        height: usize,
        width: usize,
        grid_h: usize,
        grid_w: usize,
    },

    #[error("attention_score scorer requires a text query")]
    MissingTextQuery,

    #[error("negative latency input: {0}")]
    NegativeLatency(f64),

    #[error("decode worker failed: {0}")]
    Worker(String),

    #[error("pipeline aborted: {message}")]
    Pipeline {
        message: String,
        partial: Box<crate::pipeline::PipelineReport>,
    },

    #[error("benchmark output mismatch: {0}")]
    BenchMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
