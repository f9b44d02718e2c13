use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::frame::{decode_body, LEN_PREFIX};
use super::{Frame, StreamKind, VideoFile};

/// Packet-in, frame-out decoder queue.
///
/// Packets are not frame aligned, so a single [`enqueue`](Self::enqueue) may
/// release zero, one or several frames. Enqueueing an empty payload marks end
/// of stream.
pub struct DecoderQueue {
    width: usize,
    height: usize,
    pending: Vec<u8>,
    consumed: usize,
    reference: Option<Vec<u8>>,
    output: VecDeque<Frame>,
    ended: bool,
}

impl DecoderQueue {
    pub fn new(width: usize, height: usize) -> Self {
        DecoderQueue {
            width,
            height,
            pending: Vec::new(),
            consumed: 0,
            reference: None,
            output: VecDeque::new(),
            ended: false,
        }
    }

    /// Drops buffered bytes, pending frames and the reference picture.
    pub fn reset(&mut self) {
        self.pending.clear();
        self.consumed = 0;
        self.reference = None;
        self.output.clear();
        self.ended = false;
    }

    pub fn enqueue(&mut self, payload: &[u8]) -> Result<()> {
        if payload.is_empty() {
            self.ended = true;
            if self.consumed != self.pending.len() {
                return Err(Error::CorruptPayload("stream ended mid-frame".into()));
            }
            return Ok(());
        }
        self.pending.extend_from_slice(payload);
        self.drain_bodies()
    }

    pub fn dequeue(&mut self) -> Option<Frame> {
        self.output.pop_front()
    }

    pub fn has_output(&self) -> bool {
        !self.output.is_empty()
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    fn drain_bodies(&mut self) -> Result<()> {
        let plane_len = 3 * self.width * self.height;
        loop {
            let avail = &self.pending[self.consumed..];
            if avail.len() < LEN_PREFIX {
                break;
            }
            let body_len = u32::from_le_bytes(avail[..LEN_PREFIX].try_into().unwrap()) as usize;
            if avail.len() < LEN_PREFIX + body_len {
                break;
            }
            let body = &avail[LEN_PREFIX..LEN_PREFIX + body_len];
            let mut plane = vec![0u8; plane_len];
            let header = decode_body(body, self.reference.as_deref(), &mut plane)?;
            match &mut self.reference {
                Some(r) => r.copy_from_slice(&plane),
                None => self.reference = Some(plane.clone()),
            }
            self.output.push_back(Frame {
                width: self.width,
                height: self.height,
                pts: header.pts,
                pixels: plane,
            });
            self.consumed += LEN_PREFIX + body_len;
        }
        if self.consumed > 0 && self.consumed * 2 >= self.pending.len() {
            self.pending.drain(..self.consumed);
            self.consumed = 0;
        }
        Ok(())
    }
}

/// Returns the packet index of the latest keyframe with pts <= `pts`.
/// Decoding from there yields every frame with `frame.pts >= pts`.
pub fn seek(file: &VideoFile, pts: u64) -> Result<usize> {
    let (min, max) = file.pts_bounds();
    if pts < min || pts > max {
        return Err(Error::PtsOutOfRange { pts, min, max });
    }
    let table = file.keyframe_table();
    let n = table.partition_point(|k| k.pts <= pts);
    let entry = table
        .get(n.wrapping_sub(1))
        .ok_or(Error::PtsOutOfRange { pts, min: table[0].pts, max })?;
    Ok(entry.packet)
}

/// A decoder bound to a file with a packet cursor. Tracks how many seeks it
/// performed.
pub struct VideoReader<'a> {
    file: &'a VideoFile,
    queue: DecoderQueue,
    cursor: usize,
    seeks: u64,
    frames_decoded: u64,
}

impl<'a> VideoReader<'a> {
    pub fn new(file: &'a VideoFile) -> Self {
        VideoReader {
            file,
            queue: DecoderQueue::new(file.width(), file.height()),
            cursor: 0,
            seeks: 0,
            frames_decoded: 0,
        }
    }

    /// Flushes the decoder and repositions at the keyframe covering `pts`.
    pub fn seek(&mut self, pts: u64) -> Result<()> {
        let packet = seek(self.file, pts)?;
        self.queue.reset();
        self.cursor = packet;
        self.seeks += 1;
        Ok(())
    }

    pub fn seeks(&self) -> u64 {
        self.seeks
    }

    pub fn frames_decoded(&self) -> u64 {
        self.frames_decoded
    }

    /// Next frame in pts order, feeding packets as needed. `None` at end of
    /// stream.
    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        loop {
            if let Some(f) = self.queue.dequeue() {
                self.frames_decoded += 1;
                return Ok(Some(f));
            }
            if self.queue.is_ended() {
                return Ok(None);
            }
            let packets = self.file.packets();
            match packets.get(self.cursor) {
                Some(p) => {
                    self.cursor += 1;
                    if p.stream_kind == StreamKind::Video && p.len > 0 {
                        self.queue.enqueue(self.file.payload(p))?;
                    }
                }
                None => self.queue.enqueue(&[])?,
            }
        }
    }
}

/// Streams every frame of the file, strictly sequentially from packet 0.
pub fn for_each_frame_sequential(file: &VideoFile, mut f: impl FnMut(Frame) -> Result<()>) -> Result<()> {
    let mut reader = VideoReader::new(file);
    while let Some(frame) = reader.next_frame()? {
        f(frame)?;
    }
    Ok(())
}

/// Reference decoder: all frames, in pts order.
pub fn decode_sequential(file: &VideoFile) -> Result<Vec<Frame>> {
    let mut frames = Vec::with_capacity(file.frame_count() as usize);
    for_each_frame_sequential(file, |f| {
        frames.push(f);
        Ok(())
    })?;
    Ok(frames)
}
