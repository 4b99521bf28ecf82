//! `MOC1` frame layout (all integers little-endian):
//!
//! | offset | size | field                                 |
//! |--------|------|---------------------------------------|
//! | 0      | 4    | magic `4D 4F 43 31`                   |
//! | 4      | 1    | version = 1                           |
//! | 5      | 1    | flags = 0                             |
//! | 6      | 4    | sequence number, u32                  |
//! | 10     | 8    | timestamp, u64 microseconds           |
//! | 18     | 1    | segment count `n`                     |
//! | 19     | 16n  | per segment `w, x, y, z` as f32       |
//! | 19+16n | 4    | CRC-32 (IEEE) of all preceding bytes  |

use super::{MocapFrame, StreamError, MIN_DECODED_NORM};
use crate::geometry::UnitQuaternion;

pub const FRAME_MAGIC: [u8; 4] = *b"MOC1";
pub const FRAME_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 19;
const SEGMENT_LEN: usize = 16;
const CRC_LEN: usize = 4;

/// Total encoded size of a frame with `segments` segments.
pub const fn encoded_len(segments: usize) -> usize {
    FRAME_HEADER_LEN + SEGMENT_LEN * segments + CRC_LEN
}

/// Encodes a frame. Panics if it has more than 255 segments.
pub fn encode_frame(frame: &MocapFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(frame.segments.len()));
    encode_frame_into(frame, &mut out);
    out
}

pub fn encode_frame_into(frame: &MocapFrame, out: &mut Vec<u8>) {
    let count = u8::try_from(frame.segments.len()).expect("frame has more than 255 segments");
    let start = out.len();
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(0);
    out.extend_from_slice(&frame.seq.to_le_bytes());
    out.extend_from_slice(&frame.timestamp_us.to_le_bytes());
    out.push(count);
    for q in &frame.segments {
        for c in q.as_array() {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

/// Length of the frame at the start of `bytes`, from its header alone.
pub fn frame_len(bytes: &[u8]) -> Result<usize, StreamError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(StreamError::TruncatedFrame {
            needed: FRAME_HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[..4] != FRAME_MAGIC {
        return Err(StreamError::BadMagic);
    }
    if bytes[4] != FRAME_VERSION {
        return Err(StreamError::UnsupportedVersion(bytes[4]));
    }
    Ok(encoded_len(bytes[18] as usize))
}

/// Decodes exactly one frame; `bytes` must hold nothing else.
pub fn decode_frame(bytes: &[u8]) -> Result<MocapFrame, StreamError> {
    let len = frame_len(bytes)?;
    if bytes.len() < len {
        return Err(StreamError::TruncatedFrame {
            needed: len,
            available: bytes.len(),
        });
    }
    if bytes.len() > len {
        return Err(StreamError::TrailingBytes {
            expected: len,
            available: bytes.len(),
        });
    }
    let body = &bytes[..len - CRC_LEN];
    let stored = u32::from_le_bytes(bytes[len - CRC_LEN..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(StreamError::CrcMismatch { computed, stored });
    }

    let seq = u32::from_le_bytes(body[6..10].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(body[10..18].try_into().unwrap());
    let segments = body[FRAME_HEADER_LEN..]
        .chunks_exact(SEGMENT_LEN)
        .enumerate()
        .map(|(segment, chunk)| {
            let c = |i: usize| f32::from_le_bytes(chunk[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            let (w, x, y, z) = (c(0), c(1), c(2), c(3));
            let norm = (w * w + x * x + y * y + z * z).sqrt();
            if !(norm > MIN_DECODED_NORM) || !norm.is_finite() {
                return Err(StreamError::DegenerateQuaternion { segment });
            }
            UnitQuaternion::new(w, x, y, z).map_err(|_| StreamError::DegenerateQuaternion { segment })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(MocapFrame {
        seq,
        timestamp_us,
        segments,
    })
}
