use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::frame::encode_body;
use super::{write_header, write_packet, Frame, StreamKind, VideoFile, VideoHeader, HEADER_LEN, VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeConfig {
    /// Every frame with `index % keyframe_period == 0` is intra coded.
    pub keyframe_period: u32,
    pub max_packet_bytes: u32,
    pub ticks_per_frame: u32,
    /// One audio packet after every this many video packets; 0 disables audio.
    pub audio_interleave_period: u32,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            keyframe_period: 24,
            max_packet_bytes: 4096,
            ticks_per_frame: 1000,
            audio_interleave_period: 4,
        }
    }
}

const AUDIO_PAYLOAD: usize = 16;

/// Cuts the frame byte stream into packets.
///
/// A packet's pts is the pts of the last frame whose data begins in it, or of
/// the frame it continues when none begins there. Keyframes always start a
/// fresh packet and no other frame begins in a keyframe's packets.
struct Packetizer<'a> {
    out: &'a mut Vec<u8>,
    max: usize,
    audio_period: u32,
    current: Vec<u8>,
    current_pts: u64,
    current_key: bool,
    video_packets: u64,
    audio_packets: u64,
    packet_count: u64,
}

impl Packetizer<'_> {
    fn flush(&mut self) {
        if self.current.is_empty() {
            return;
        }
        write_packet(
            self.out,
            StreamKind::Video,
            Some(self.current_pts),
            self.current_key,
            &self.current,
        );
        self.current.clear();
        self.packet_count += 1;
        self.video_packets += 1;
        if self.audio_period > 0 && self.video_packets.is_multiple_of(u64::from(self.audio_period)) {
            let n = self.audio_packets;
            let payload: Vec<u8> = (0..AUDIO_PAYLOAD as u64).map(|j| (n * 31 + j * 7) as u8).collect();
            // Every other audio packet omits its pts.
            let pts = n.is_multiple_of(2).then_some(self.current_pts);
            write_packet(self.out, StreamKind::Audio, pts, false, &payload);
            self.audio_packets += 1;
            self.packet_count += 1;
        }
    }

    fn push_frame(&mut self, mut bytes: &[u8], pts: u64, keyframe: bool) {
        if keyframe {
            self.flush();
        }
        let mut begins = true;
        while !bytes.is_empty() {
            if self.current.is_empty() {
                self.current_pts = pts;
                self.current_key = keyframe && begins;
            } else if begins {
                self.current_pts = pts;
            }
            let take = (self.max - self.current.len()).min(bytes.len());
            self.current.extend_from_slice(&bytes[..take]);
            bytes = &bytes[take..];
            begins = false;
            if self.current.len() == self.max {
                self.flush();
            }
        }
        if keyframe {
            self.flush();
        }
    }
}

/// Encodes a frame sequence into a QVS file. Frame `i` is stamped with
/// `pts = i * ticks_per_frame`; input pts values are ignored.
pub fn encode<I>(frames: I, config: &EncodeConfig) -> Result<VideoFile>
where
    I: IntoIterator<Item = Frame>,
{
    if config.keyframe_period == 0 {
        return Err(Error::InvalidConfig("keyframe period K must be >= 1".into()));
    }
    if config.max_packet_bytes == 0 {
        return Err(Error::InvalidConfig("max_packet_bytes must be >= 1".into()));
    }
    if config.ticks_per_frame == 0 {
        return Err(Error::InvalidConfig("ticks_per_frame must be >= 1".into()));
    }

    let mut out = vec![0u8; HEADER_LEN];
    let mut packetizer = Packetizer {
        out: &mut out,
        max: config.max_packet_bytes as usize,
        audio_period: config.audio_interleave_period,
        current: Vec::new(),
        current_pts: 0,
        current_key: false,
        video_packets: 0,
        audio_packets: 0,
        packet_count: 0,
    };

    let mut shape: Option<(usize, usize)> = None;
    let mut reference: Vec<u8> = Vec::new();
    let mut residual = Vec::new();
    let mut body = Vec::new();
    let mut count = 0u64;
    for (index, frame) in frames.into_iter().enumerate() {
        let fs = (frame.height, frame.width);
        let expected = *shape.get_or_insert(fs);
        if fs != expected || frame.pixels.len() != 3 * fs.0 * fs.1 || fs.0 == 0 || fs.1 == 0 {
            return Err(Error::ShapeMismatch {
                index,
                found: fs,
                expected,
            });
        }
        let pts = index as u64 * u64::from(config.ticks_per_frame);
        let keyframe = (index as u64).is_multiple_of(u64::from(config.keyframe_period));
        body.clear();
        encode_body(
            &frame.pixels,
            (!keyframe).then_some(reference.as_slice()),
            pts,
            &mut residual,
            &mut body,
        );
        packetizer.push_frame(&body, pts, keyframe);
        reference = frame.pixels;
        count += 1;
    }
    packetizer.flush();
    let packet_count = packetizer.packet_count;

    let (height, width) = shape.ok_or(Error::EmptyFrames)?;
    let header = VideoHeader {
        version: VERSION,
        width: width as u32,
        height: height as u32,
        frame_count: count,
        ticks_per_frame: config.ticks_per_frame,
        keyframe_period: config.keyframe_period,
        max_packet_bytes: config.max_packet_bytes,
    };
    let mut head = Vec::with_capacity(HEADER_LEN);
    write_header(&mut head, &header, packet_count);
    out[..HEADER_LEN].copy_from_slice(&head);
    VideoFile::from_bytes(out)
}
