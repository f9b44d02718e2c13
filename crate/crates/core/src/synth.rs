//! Deterministic synthetic footage for tests and benchmarks.
//!
//! A blocky static background with a moving square and a sweeping scan line:
//! keyframes compress moderately, delta frames are mostly zero.

use serde::{Deserialize, Serialize};

use crate::container::{encode, EncodeConfig, Frame, VideoFile, TICKS_PER_SECOND};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub frames: u64,
    pub seed: u64,
}

fn mix(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

const BLOCK: usize = 16;
const SQUARE: usize = 24;

/// Renders frame `index`.
pub fn synth_frame(p: &SynthParams, index: u64) -> Frame {
    let (w, h) = (p.width, p.height);
    let mut px = vec![0u8; 3 * w * h];
    let blocks_x = w.div_ceil(BLOCK);
    for c in 0..3 {
        let plane = &mut px[c * w * h..(c + 1) * w * h];
        for y in 0..h {
            let row = &mut plane[y * w..(y + 1) * w];
            for bx in 0..blocks_x {
                let key = p.seed ^ ((y / BLOCK * blocks_x + bx) as u64) << 2 ^ c as u64;
                let v = (mix(key) & 0xFF) as u8;
                let x0 = bx * BLOCK;
                row[x0..(x0 + BLOCK).min(w)].fill(v);
            }
        }
        // moving square
        let sq = SQUARE.min(w).min(h);
        let sx = (index as usize * 3) % (w - sq + 1);
        let sy = (index as usize * 2 + h / 3) % (h - sq + 1);
        let colour = (mix(p.seed ^ (index / 48) ^ ((c as u64) << 40)) & 0xFF) as u8;
        for y in sy..sy + sq {
            plane[y * w + sx..y * w + sx + sq].fill(colour);
        }
        // scan line
        let ly = index as usize % h;
        for (x, v) in plane[ly * w..(ly + 1) * w].iter_mut().enumerate() {
            *v = (x as u64 * 7 + index + c as u64 * 85) as u8;
        }
    }
    Frame {
        width: w,
        height: h,
        pts: index,
        pixels: px,
    }
}

pub fn synth_frames(p: SynthParams) -> impl Iterator<Item = Frame> {
    (0..p.frames).map(move |i| synth_frame(&p, i))
}

/// Ticks per frame for a stored frame rate; the rate must divide the time base.
pub fn ticks_per_frame_for_fps(fps: u32) -> Result<u32> {
    if fps == 0 || !TICKS_PER_SECOND.is_multiple_of(u64::from(fps)) {
        return Err(Error::InvalidConfig(format!(
            "fps {fps} does not divide the {TICKS_PER_SECOND}-tick time base"
        )));
    }
    Ok((TICKS_PER_SECOND / u64::from(fps)) as u32)
}

/// Encodes a synthetic clip in one go.
pub fn synth_video(p: SynthParams, config: &EncodeConfig) -> Result<VideoFile> {
    if p.width == 0 || p.height == 0 {
        return Err(Error::InvalidConfig("zero frame dimension".into()));
    }
    encode(synth_frames(p), config)
}

/// Stored frame rate implied by the file's time base.
pub fn stored_fps(file: &VideoFile) -> f64 {
    TICKS_PER_SECOND as f64 / f64::from(file.header().ticks_per_frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let p = SynthParams {
            width: 40,
            height: 30,
            frames: 3,
            seed: 7,
        };
        assert_eq!(synth_frame(&p, 2), synth_frame(&p, 2));
        assert_ne!(synth_frame(&p, 1).pixels, synth_frame(&p, 2).pixels);
        assert_eq!(synth_frame(&p, 0).pixels.len(), 3 * 40 * 30);
    }

    #[test]
    fn tiny_frames_do_not_panic() {
        let p = SynthParams {
            width: 1,
            height: 1,
            frames: 4,
            seed: 0,
        };
        assert_eq!(synth_frames(p).count(), 4);
    }

    #[test]
    fn fps_time_base() {
        assert_eq!(ticks_per_frame_for_fps(24).unwrap(), 1000);
        assert_eq!(ticks_per_frame_for_fps(30).unwrap(), 800);
        assert!(ticks_per_frame_for_fps(7).is_err());
    }
}
