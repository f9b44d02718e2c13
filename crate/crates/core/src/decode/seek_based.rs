use std::time::Instant;

use crate::container::{VideoFile, VideoReader};
use crate::error::{Error, Result};
use crate::planner::scan_packets;

use super::{resize_plane, DecodeStats, Decoded, FrameBuffer, IndexMapper, SampleSpec};

/// Seek-per-frame extraction: for every requested index, seek to the keyframe
/// before it and decode forward until it comes out.
pub fn decode_seek_based(file: &VideoFile, spec: &SampleSpec) -> Result<Decoded> {
    let start = Instant::now();
    let scan = scan_packets(file)?;
    let mapper = IndexMapper {
        pts_min: scan.pts_min,
        pts_max: scan.pts_max,
        frame_count: file.frame_count(),
    };
    let (h, w) = spec.output_size(file.height(), file.width());
    let mut buf = FrameBuffer::zeroed(spec.len(), h, w);
    let mut reader = VideoReader::new(file);
    let mut resized = Vec::new();

    for (slot, &target) in spec.indices().iter().enumerate() {
        reader.seek(mapper.estimate_pts(target))?;
        loop {
            let frame = reader
                .next_frame()?
                .ok_or(Error::FrameNotFound { index: target })?;
            let i = mapper.index(frame.pts)?;
            if i < target {
                continue;
            }
            if i > target {
                return Err(Error::FrameNotFound { index: target });
            }
            resize_plane(&frame.pixels, frame.height, frame.width, h, w, &mut resized);
            buf.write_slot(slot, &resized);
            break;
        }
    }
    buf.verify_complete()?;
    Ok(Decoded {
        frames: buf,
        stats: DecodeStats {
            seeks: reader.seeks(),
            frames_decoded: reader.frames_decoded(),
            intervals: 0,
            workers: 1,
            wall: start.elapsed(),
        },
    })
}
