//! Frame-sampled decoding into a packed `(|I|, 3, h, w)` tensor.
//!
//! Two strategies share the same output contract:
//! - [`decode_seek_based`]: one seek per requested frame.
//! - [`decode_parallel`]: one seek per keyframe-aligned interval, intervals
//!   decoded concurrently into disjoint slices of the output.

mod parallel;
mod resize;
mod seek_based;

use std::time::Duration;

use serde::Serialize;

use crate::container::{for_each_frame_sequential, VideoFile};
use crate::error::{Error, Result};

pub use parallel::decode_parallel;
pub(crate) use parallel::{plan_jobs, spawn_workers, DecodeContext, IntervalJob, WorkerMessage};
pub use resize::{resize_bilinear, resize_plane};
pub use seek_based::decode_seek_based;

/// Maps a pts to its frame index: `round((m-1) * (pts - pts_min) / (pts_max - pts_min))`,
/// rounding halves away from zero.
pub fn frame_index(pts: u64, pts_min: u64, pts_max: u64, m: u64) -> Result<u64> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("frame_index needs m >= 2, got {m}")));
    }
    if pts < pts_min || pts > pts_max || pts_max == pts_min {
        return Err(Error::PtsOutOfRange {
            pts,
            min: pts_min,
            max: pts_max,
        });
    }
    Ok(rounded_ratio(
        (m - 1) as u128 * (pts - pts_min) as u128,
        (pts_max - pts_min) as u128,
    ))
}

/// `round(numer / denom)` with halves rounded up (both operands non-negative).
fn rounded_ratio(numer: u128, denom: u128) -> u64 {
    ((2 * numer + denom) / (2 * denom)) as u64
}

/// Frame-index mapping over a fixed pts range; tolerates single-frame streams.
#[derive(Clone, Copy, Debug)]
pub struct IndexMapper {
    pub pts_min: u64,
    pub pts_max: u64,
    pub frame_count: u64,
}

impl IndexMapper {
    pub fn index(&self, pts: u64) -> Result<u64> {
        if self.frame_count < 2 || self.pts_max == self.pts_min {
            return if pts == self.pts_min {
                Ok(0)
            } else {
                Err(Error::PtsOutOfRange {
                    pts,
                    min: self.pts_min,
                    max: self.pts_max,
                })
            };
        }
        frame_index(pts, self.pts_min, self.pts_max, self.frame_count)
    }

    /// Inverse estimate: the pts at which frame `i` should be displayed.
    pub fn estimate_pts(&self, i: u64) -> u64 {
        if self.frame_count < 2 {
            return self.pts_min;
        }
        self.pts_min
            + rounded_ratio(
                i as u128 * (self.pts_max - self.pts_min) as u128,
                (self.frame_count - 1) as u128,
            )
    }
}

/// Which frames to extract and at what size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SampleSpec {
    indices: Vec<u64>,
    pub target_size: Option<(usize, usize)>,
}

impl SampleSpec {
    /// `indices` must be strictly increasing and below `frame_count`.
    pub fn new(indices: Vec<u64>, frame_count: u64) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidSample("no frames selected".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSample("indices must be strictly increasing".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= frame_count {
                return Err(Error::InvalidSample(format!(
                    "index {last} >= frame count {frame_count}"
                )));
            }
        }
        Ok(SampleSpec {
            indices,
            target_size: None,
        })
    }

    pub fn all(frame_count: u64) -> Result<Self> {
        Self::new((0..frame_count).collect(), frame_count)
    }

    /// `offset, offset + gap, offset + 2*gap, ...` below `frame_count`.
    pub fn every(frame_count: u64, gap: u64, offset: u64) -> Result<Self> {
        if gap == 0 {
            return Err(Error::InvalidSample("gap must be >= 1".into()));
        }
        Self::new((offset..frame_count).step_by(gap as usize).collect(), frame_count)
    }

    /// Uniform sampling at `sample_fps` from a stream stored at `stored_fps`.
    pub fn uniform_fps(frame_count: u64, stored_fps: f64, sample_fps: f64) -> Result<Self> {
        if !(sample_fps > 0.0 && stored_fps > 0.0) {
            return Err(Error::InvalidSample("fps must be positive".into()));
        }
        let step = stored_fps / sample_fps;
        let mut indices: Vec<u64> = (0..)
            .map(|j| (j as f64 * step).round() as u64)
            .take_while(|&i| i < frame_count)
            .collect();
        indices.dedup();
        Self::new(indices, frame_count)
    }

    pub fn with_target_size(mut self, size: Option<(usize, usize)>) -> Result<Self> {
        if let Some((h, w)) = size {
            if h == 0 || w == 0 {
                return Err(Error::InvalidSample("zero target dimension".into()));
            }
        }
        self.target_size = size;
        Ok(self)
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn offsets(&self) -> OffsetMap<'_> {
        OffsetMap {
            indices: &self.indices,
        }
    }

    /// Output `(height, width)` for a source of the given size.
    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        self.target_size.unwrap_or((height, width))
    }
}

/// Frame index to slot offset, `M[I[k]] = k`.
#[derive(Clone, Copy, Debug)]
pub struct OffsetMap<'a> {
    indices: &'a [u64],
}

impl OffsetMap<'_> {
    pub fn get(&self, frame: u64) -> Option<usize> {
        self.indices.binary_search(&frame).ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The packed output tensor `(slots, 3, height, width)` plus per-slot write
/// counters.
#[derive(Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    pub slots: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
    pub write_counts: Vec<u32>,
}

impl std::fmt::Debug for FrameBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameBuffer")
            .field("slots", &self.slots)
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl FrameBuffer {
    pub fn zeroed(slots: usize, height: usize, width: usize) -> Self {
        FrameBuffer {
            slots,
            height,
            width,
            data: vec![0; slots * 3 * height * width],
            write_counts: vec![0; slots],
        }
    }

    /// Wraps raw slot-ordered bytes (e.g. a `frames.bin` dump); every slot is
    /// marked written.
    pub fn from_raw(data: Vec<u8>, height: usize, width: usize) -> Result<Self> {
        let per = 3 * height * width;
        if per == 0 || data.is_empty() || !data.len().is_multiple_of(per) {
            return Err(Error::InvalidConfig(format!(
                "{} bytes is not a whole number of 3x{height}x{width} frames",
                data.len()
            )));
        }
        let slots = data.len() / per;
        Ok(FrameBuffer {
            slots,
            height,
            width,
            data,
            write_counts: vec![1; slots],
        })
    }

    pub fn slot_bytes(&self) -> usize {
        3 * self.height * self.width
    }

    pub fn slot(&self, j: usize) -> &[u8] {
        let n = self.slot_bytes();
        &self.data[j * n..(j + 1) * n]
    }

    pub(crate) fn write_slot(&mut self, j: usize, pixels: &[u8]) {
        let n = self.slot_bytes();
        self.data[j * n..(j + 1) * n].copy_from_slice(pixels);
        self.write_counts[j] += 1;
    }

    /// Fails unless every slot was written exactly once.
    pub fn verify_complete(&self) -> Result<()> {
        match self.write_counts.iter().position(|&c| c != 1) {
            None => Ok(()),
            Some(slot) => Err(Error::SlotCoverage {
                slot,
                writes: self.write_counts[slot],
            }),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DecodeStats {
    pub seeks: u64,
    pub frames_decoded: u64,
    pub intervals: usize,
    pub workers: usize,
    #[serde(serialize_with = "crate::serialize_ms")]
    pub wall: Duration,
}

#[derive(Debug)]
pub struct Decoded {
    pub frames: FrameBuffer,
    pub stats: DecodeStats,
}

/// Reference extraction: decodes everything sequentially and keeps the
/// requested slots. Streaming, so memory stays at one output buffer.
pub fn decode_sequential_slice(file: &VideoFile, spec: &SampleSpec) -> Result<FrameBuffer> {
    let (h, w) = spec.output_size(file.height(), file.width());
    let mut buf = FrameBuffer::zeroed(spec.len(), h, w);
    let offsets = spec.offsets();
    let mut index = 0u64;
    let mut resized = Vec::new();
    for_each_frame_sequential(file, |frame| {
        if let Some(slot) = offsets.get(index) {
            if (h, w) == (frame.height, frame.width) {
                buf.write_slot(slot, &frame.pixels);
            } else {
                resize_plane(&frame.pixels, frame.height, frame.width, h, w, &mut resized);
                buf.write_slot(slot, &resized);
            }
        }
        index += 1;
        Ok(())
    })?;
    buf.verify_complete()?;
    Ok(buf)
}
