//! Byte-oriented run-length coding used for both intra and residual planes.
//!
//! Token stream:
//! - control `0x00..=0x7F`: a literal block of `control + 1` bytes follows.
//! - control `0x80`: a run; LEB128 length, then the repeated byte.
//!
//! Controls above `0x80` are reserved and rejected by the decoder.

use crate::error::{Error, Result};

const RUN: u8 = 0x80;
const MAX_LITERAL: usize = 128;
const MIN_RUN: usize = 4;

pub fn encode(input: &[u8], out: &mut Vec<u8>) {
    let mut literal_start = 0;
    let mut i = 0;
    while i < input.len() {
        let value = input[i];
        let mut run = 1;
        while i + run < input.len() && input[i + run] == value {
            run += 1;
        }
        if run >= MIN_RUN {
            flush_literals(&input[literal_start..i], out);
            out.push(RUN);
            write_varint(run as u64, out);
            out.push(value);
            i += run;
            literal_start = i;
        } else {
            i += run;
        }
    }
    flush_literals(&input[literal_start..], out);
}

fn flush_literals(mut literals: &[u8], out: &mut Vec<u8>) {
    while !literals.is_empty() {
        let n = literals.len().min(MAX_LITERAL);
        out.push((n - 1) as u8);
        out.extend_from_slice(&literals[..n]);
        literals = &literals[n..];
    }
}

fn write_varint(mut v: u64, out: &mut Vec<u8>) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(input: &[u8], pos: &mut usize) -> Result<u64> {
    let mut value = 0u64;
    let mut shift = 0;
    loop {
        let byte = *input
            .get(*pos)
            .ok_or_else(|| Error::CorruptPayload("truncated run length".into()))?;
        *pos += 1;
        if shift >= 64 {
            return Err(Error::CorruptPayload("run length overflow".into()));
        }
        value |= u64::from(byte & 0x7F) << shift;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        shift += 7;
    }
}

/// Expands `input` into `out`, which must be filled exactly.
pub fn decode_into(input: &[u8], out: &mut [u8]) -> Result<()> {
    let mut pos = 0;
    let mut written = 0;
    while pos < input.len() {
        let control = input[pos];
        pos += 1;
        if control < RUN {
            let n = control as usize + 1;
            let src = input
                .get(pos..pos + n)
                .ok_or_else(|| Error::CorruptPayload("truncated literal block".into()))?;
            let dst = out
                .get_mut(written..written + n)
                .ok_or_else(|| Error::CorruptPayload("plane overflow".into()))?;
            dst.copy_from_slice(src);
            pos += n;
            written += n;
        } else if control == RUN {
            let n = read_varint(input, &mut pos)? as usize;
            let value = *input
                .get(pos)
                .ok_or_else(|| Error::CorruptPayload("truncated run".into()))?;
            pos += 1;
            let end = written
                .checked_add(n)
                .filter(|&e| e <= out.len())
                .ok_or_else(|| Error::CorruptPayload("plane overflow".into()))?;
            out[written..end].fill(value);
            written = end;
        } else {
            return Err(Error::CorruptPayload(format!("reserved control byte {control:#x}")));
        }
    }
    if written != out.len() {
        return Err(Error::CorruptPayload(format!(
            "plane underflow: {written} of {} bytes",
            out.len()
        )));
    }
    Ok(())
}
