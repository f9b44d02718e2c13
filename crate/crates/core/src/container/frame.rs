//! Frame body coding.
//!
//! Each frame in the video byte stream is `body_len u32 | body`, where
//! `body = kind u8 | pts u64 | crc32 u32 | rle(plane)`. For intra bodies the
//! plane is the pixels; for delta bodies it is the wrapping byte difference
//! against the previous reconstructed frame.

use crate::error::{Error, Result};

use super::rle;

pub const LEN_PREFIX: usize = 4;
pub const BODY_HEADER: usize = 1 + 8 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    Intra,
    Delta,
}

impl FrameKind {
    fn as_u8(self) -> u8 {
        match self {
            FrameKind::Intra => 0,
            FrameKind::Delta => 1,
        }
    }
}

pub fn checksum(pixels: &[u8]) -> u32 {
    crc32fast::hash(pixels)
}

/// Appends a length-prefixed body to `out`. `residual` is reused scratch.
pub fn encode_body(
    pixels: &[u8],
    reference: Option<&[u8]>,
    pts: u64,
    residual: &mut Vec<u8>,
    out: &mut Vec<u8>,
) -> FrameKind {
    let start = out.len();
    out.extend_from_slice(&[0; LEN_PREFIX]);
    let kind = match reference {
        None => FrameKind::Intra,
        Some(_) => FrameKind::Delta,
    };
    out.push(kind.as_u8());
    out.extend_from_slice(&pts.to_le_bytes());
    out.extend_from_slice(&checksum(pixels).to_le_bytes());
    match reference {
        None => rle::encode(pixels, out),
        Some(prev) => {
            residual.clear();
            residual.extend(pixels.iter().zip(prev).map(|(&a, &b)| a.wrapping_sub(b)));
            rle::encode(residual, out);
        }
    }
    let body_len = (out.len() - start - LEN_PREFIX) as u32;
    out[start..start + LEN_PREFIX].copy_from_slice(&body_len.to_le_bytes());
    kind
}

pub struct BodyHeader {
    pub kind: FrameKind,
    pub pts: u64,
    pub crc: u32,
}

pub fn parse_body_header(body: &[u8]) -> Result<BodyHeader> {
    if body.len() < BODY_HEADER {
        return Err(Error::CorruptPayload("frame body shorter than its header".into()));
    }
    let kind = match body[0] {
        0 => FrameKind::Intra,
        1 => FrameKind::Delta,
        k => return Err(Error::CorruptPayload(format!("unknown frame kind {k}"))),
    };
    Ok(BodyHeader {
        kind,
        pts: u64::from_le_bytes(body[1..9].try_into().unwrap()),
        crc: u32::from_le_bytes(body[9..13].try_into().unwrap()),
    })
}

/// Reconstructs a frame from `body` into `plane`, using `reference` for delta
/// bodies. On success `plane` holds the pixels.
pub fn decode_body(body: &[u8], reference: Option<&[u8]>, plane: &mut [u8]) -> Result<BodyHeader> {
    let header = parse_body_header(body)?;
    rle::decode_into(&body[BODY_HEADER..], plane)?;
    if header.kind == FrameKind::Delta {
        let prev = reference.ok_or(Error::MissingReference { pts: header.pts })?;
        for (p, &r) in plane.iter_mut().zip(prev) {
            *p = p.wrapping_add(r);
        }
    }
    if checksum(plane) != header.crc {
        return Err(Error::ChecksumMismatch { pts: header.pts });
    }
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_roundtrip() {
        let prev: Vec<u8> = (0..48).map(|i| (i * 7) as u8).collect();
        let cur: Vec<u8> = prev.iter().map(|v| v.wrapping_add(250)).collect();
        let mut out = Vec::new();
        let mut scratch = Vec::new();
        assert_eq!(
            encode_body(&cur, Some(&prev), 5, &mut scratch, &mut out),
            FrameKind::Delta
        );
        let mut plane = vec![0u8; 48];
        let h = decode_body(&out[LEN_PREFIX..], Some(&prev), &mut plane).unwrap();
        assert_eq!(h.pts, 5);
        assert_eq!(plane, cur);
        assert!(matches!(
            decode_body(&out[LEN_PREFIX..], None, &mut plane),
            Err(Error::MissingReference { pts: 5 })
        ));
    }

    #[test]
    fn corrupt_checksum_detected() {
        let px = vec![9u8; 12];
        let mut out = Vec::new();
        encode_body(&px, None, 0, &mut Vec::new(), &mut out);
        out[LEN_PREFIX + 9] ^= 1;
        let mut plane = vec![0u8; 12];
        assert!(matches!(
            decode_body(&out[LEN_PREFIX..], None, &mut plane),
            Err(Error::ChecksumMismatch { .. })
        ));
    }
}
