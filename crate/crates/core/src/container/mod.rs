//! The QVS container: a deterministic toy format with keyframes, packets that
//! are not frame aligned, delta-coded frames and interleaved audio packets.
//!
//! File layout (little-endian):
//!
//! ```text
//! "QVS1" | version u16 | width u32 | height u32 | frame_count u64
//!        | ticks_per_frame u32 | keyframe_period u32 | max_packet_bytes u32
//!        | packet_count u64 | packets...
//! packet: stream_kind u8 | pts_present u8 | pts u64 | keyframe u8
//!        | payload_len u32 | payload
//! ```
//!
//! The video payload bytes, concatenated in packet order, form a stream of
//! length-prefixed frame bodies (see [`frame`]).

mod decoder;
mod encoder;
pub mod frame;
pub mod rle;

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use decoder::{decode_sequential, for_each_frame_sequential, seek, DecoderQueue, VideoReader};
pub use encoder::{encode, EncodeConfig};

pub const MAGIC: &[u8; 4] = b"QVS1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 42;
pub const PACKET_HEADER_LEN: usize = 15;

/// Stream time base. `ticks_per_frame = TICKS_PER_SECOND / fps`.
pub const TICKS_PER_SECOND: u64 = 24_000;

/// A decoded picture: planar RGB, shape `(3, height, width)`.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pts: u64,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pts: u64, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::InvalidConfig(format!(
                "frame has {} bytes, expected 3x{height}x{width}",
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pts,
            pixels,
        })
    }

    pub fn byte_len(&self) -> usize {
        3 * self.width * self.height
    }
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("pts", &self.pts)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Video,
    Audio,
}

impl StreamKind {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(StreamKind::Video),
            1 => Ok(StreamKind::Audio),
            other => Err(Error::InvalidStreamKind(other)),
        }
    }

    fn as_u8(self) -> u8 {
        match self {
            StreamKind::Video => 0,
            StreamKind::Audio => 1,
        }
    }
}

/// Packet metadata. The payload lives in the owning [`VideoFile`]'s byte
/// image; use [`VideoFile::payload`] to borrow it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packet {
    pub stream_kind: StreamKind,
    pub pts: Option<u64>,
    pub keyframe: bool,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct VideoHeader {
    pub version: u16,
    pub width: u32,
    pub height: u32,
    pub frame_count: u64,
    pub ticks_per_frame: u32,
    pub keyframe_period: u32,
    pub max_packet_bytes: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct KeyframeEntry {
    pub pts: u64,
    pub packet: usize,
}

/// An opened (or freshly encoded) QVS file. Immutable and `Sync`.
#[derive(Clone)]
pub struct VideoFile {
    header: VideoHeader,
    packets: Vec<Packet>,
    keyframes: Vec<KeyframeEntry>,
    pts_bounds: (u64, u64),
    bytes: Vec<u8>,
}

impl std::fmt::Debug for VideoFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VideoFile")
            .field("header", &self.header)
            .field("packets", &self.packets.len())
            .field("bytes", &self.bytes.len())
            .finish()
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }
    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub(crate) fn write_header(out: &mut Vec<u8>, h: &VideoHeader, packet_count: u64) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&h.version.to_le_bytes());
    out.extend_from_slice(&h.width.to_le_bytes());
    out.extend_from_slice(&h.height.to_le_bytes());
    out.extend_from_slice(&h.frame_count.to_le_bytes());
    out.extend_from_slice(&h.ticks_per_frame.to_le_bytes());
    out.extend_from_slice(&h.keyframe_period.to_le_bytes());
    out.extend_from_slice(&h.max_packet_bytes.to_le_bytes());
    out.extend_from_slice(&packet_count.to_le_bytes());
}

pub(crate) fn write_packet(
    out: &mut Vec<u8>,
    kind: StreamKind,
    pts: Option<u64>,
    keyframe: bool,
    payload: &[u8],
) {
    out.push(kind.as_u8());
    out.push(pts.is_some() as u8);
    out.extend_from_slice(&pts.unwrap_or(0).to_le_bytes());
    out.push(keyframe as u8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
}

impl VideoFile {
    /// Reads and indexes a QVS file. Payloads are not decoded.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(std::fs::read(path)?)
    }

    /// Parses a QVS byte image into a packet index.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let mut c = Cursor {
            buf: &bytes,
            pos: 0,
        };
        match c.take(4) {
            Some(m) if m == MAGIC => {}
            Some(_) => return Err(Error::BadMagic),
            None if bytes.starts_with(&MAGIC[..bytes.len().min(4)]) => {
                return Err(Error::TruncatedHeader)
            }
            None => return Err(Error::BadMagic),
        }
        let version = c.u16().ok_or(Error::TruncatedHeader)?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let mut field = || c.u32().ok_or(Error::TruncatedHeader);
        let width = field()?;
        let height = field()?;
        let frame_count = c.u64().ok_or(Error::TruncatedHeader)?;
        let ticks_per_frame = c.u32().ok_or(Error::TruncatedHeader)?;
        let keyframe_period = c.u32().ok_or(Error::TruncatedHeader)?;
        let max_packet_bytes = c.u32().ok_or(Error::TruncatedHeader)?;
        let packet_count = c.u64().ok_or(Error::TruncatedHeader)?;
        let header = VideoHeader {
            version,
            width,
            height,
            frame_count,
            ticks_per_frame,
            keyframe_period,
            max_packet_bytes,
        };
        if width == 0 || height == 0 || frame_count == 0 || keyframe_period == 0 {
            return Err(Error::InvalidConfig(format!("degenerate header {header:?}")));
        }

        // Cap the preallocation: a corrupt count must not trigger a huge alloc.
        let mut packets = Vec::with_capacity((packet_count as usize).min(bytes.len() / PACKET_HEADER_LEN));
        for _ in 0..packet_count {
            let kind = StreamKind::from_u8(c.u8().ok_or(Error::TruncatedPacket)?)?;
            let pts_present = c.u8().ok_or(Error::TruncatedPacket)? != 0;
            let pts = c.u64().ok_or(Error::TruncatedPacket)?;
            let keyframe = c.u8().ok_or(Error::TruncatedPacket)? != 0;
            let len = c.u32().ok_or(Error::TruncatedPacket)? as usize;
            let offset = c.pos;
            c.take(len).ok_or(Error::TruncatedPacket)?;
            packets.push(Packet {
                stream_kind: kind,
                pts: pts_present.then_some(pts),
                keyframe,
                offset,
                len,
            });
        }
        if c.pos != bytes.len() {
            return Err(Error::CorruptPayload(format!(
                "{} trailing bytes after last packet",
                bytes.len() - c.pos
            )));
        }

        let mut keyframes = Vec::new();
        let mut bounds: Option<(u64, u64)> = None;
        for (i, p) in packets.iter().enumerate() {
            if p.stream_kind != StreamKind::Video {
                continue;
            }
            let Some(pts) = p.pts else { continue };
            bounds = Some(match bounds {
                None => (pts, pts),
                Some((lo, hi)) => (lo.min(pts), hi.max(pts)),
            });
            if p.keyframe {
                keyframes.push(KeyframeEntry { pts, packet: i });
            }
        }
        let pts_bounds = bounds.ok_or(Error::NoVideoStream)?;
        if keyframes.is_empty() {
            return Err(Error::CorruptPayload("video stream has no keyframes".into()));
        }
        keyframes.sort_by_key(|k| (k.pts, k.packet));
        keyframes.dedup_by_key(|k| k.pts);

        Ok(VideoFile {
            header,
            packets,
            keyframes,
            pts_bounds,
            bytes,
        })
    }

    pub fn header(&self) -> &VideoHeader {
        &self.header
    }

    pub fn width(&self) -> usize {
        self.header.width as usize
    }

    pub fn height(&self) -> usize {
        self.header.height as usize
    }

    pub fn frame_count(&self) -> u64 {
        self.header.frame_count
    }

    pub fn packets(&self) -> &[Packet] {
        &self.packets
    }

    pub fn payload(&self, packet: &Packet) -> &[u8] {
        &self.bytes[packet.offset..packet.offset + packet.len]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, &self.bytes)?;
        Ok(())
    }

    /// `(pts_min, pts_max)` over video packets carrying a pts.
    pub fn pts_bounds(&self) -> (u64, u64) {
        self.pts_bounds
    }

    pub(crate) fn keyframe_table(&self) -> &[KeyframeEntry] {
        &self.keyframes
    }
}
