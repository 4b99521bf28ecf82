use std::io::Write;

use log::warn;

use super::codec::{decode_frame, encode_frame_into, frame_len};
use super::{MocapFrame, StreamError};

/// `MOCREC01`, followed by back-to-back `MOC1` frames.
pub const RECORDING_MAGIC: [u8; 8] = *b"MOCREC01";

/// Frames recovered from a recording file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recording {
    pub frames: Vec<MocapFrame>,
    /// Complete frames skipped because they failed to decode.
    pub corrupt_frames: usize,
    /// Bytes at the end that did not form a complete frame.
    pub truncated_tail_bytes: usize,
}

pub fn write_recording<W: Write>(mut out: W, frames: &[MocapFrame]) -> Result<(), StreamError> {
    let mut buf = Vec::with_capacity(8 + frames.iter().map(|f| super::encoded_len(f.segments.len())).sum::<usize>());
    buf.extend_from_slice(&RECORDING_MAGIC);
    for frame in frames {
        encode_frame_into(frame, &mut buf);
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// Parses a recording. A truncated final frame is dropped with a warning;
/// complete frames that fail their checksum are skipped and counted.
pub fn read_recording(bytes: &[u8]) -> Result<Recording, StreamError> {
    if bytes.len() < RECORDING_MAGIC.len() || bytes[..8] != RECORDING_MAGIC {
        return Err(StreamError::BadRecordingMagic);
    }
    let mut rec = Recording::default();
    let mut at = RECORDING_MAGIC.len();
    while at < bytes.len() {
        let rest = &bytes[at..];
        let len = match frame_len(rest) {
            Ok(len) if len <= rest.len() => len,
            Ok(_) | Err(StreamError::TruncatedFrame { .. }) => {
                warn!("recording ends with a truncated frame ({} bytes dropped)", rest.len());
                rec.truncated_tail_bytes = rest.len();
                break;
            }
            Err(e) => {
                // No way to resynchronize without a valid header.
                warn!("recording unreadable at byte {at}: {e}; {} bytes dropped", rest.len());
                rec.truncated_tail_bytes = rest.len();
                break;
            }
        };
        match decode_frame(&rest[..len]) {
            Ok(frame) => rec.frames.push(frame),
            Err(e) => {
                warn!("skipping corrupt frame at byte {at}: {e}");
                rec.corrupt_frames += 1;
            }
        }
        at += len;
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::encode_frame;

    fn frames(n: u32) -> Vec<MocapFrame> {
        (0..n).map(|i| MocapFrame::identity(i, i as u64 * 10_000, 23)).collect()
    }

    #[test]
    fn round_trip_and_layout() {
        let mut buf = Vec::new();
        write_recording(&mut buf, &frames(3)).unwrap();
        assert_eq!(buf.len(), 8 + 3 * 391);
        assert_eq!(&buf[..8], b"MOCREC01");
        let rec = read_recording(&buf).unwrap();
        assert_eq!(rec.frames, frames(3));
        assert_eq!(rec.corrupt_frames, 0);
    }

    #[test]
    fn truncated_tail_dropped() {
        let mut buf = Vec::new();
        write_recording(&mut buf, &frames(3)).unwrap();
        buf.truncate(buf.len() - 100);
        let rec = read_recording(&buf).unwrap();
        assert_eq!(rec.frames.len(), 2);
        assert_eq!(rec.truncated_tail_bytes, 291);
    }

    #[test]
    fn corrupt_middle_frame_skipped() {
        let mut buf = Vec::new();
        write_recording(&mut buf, &frames(3)).unwrap();
        buf[8 + 391 + 30] ^= 0x40;
        let rec = read_recording(&buf).unwrap();
        assert_eq!(rec.frames.iter().map(|f| f.seq).collect::<Vec<_>>(), [0, 2]);
        assert_eq!(rec.corrupt_frames, 1);
    }

    #[test]
    fn header_checked() {
        assert_eq!(read_recording(b"MOCREC0"), Err(StreamError::BadRecordingMagic));
        let mut bad = b"MOCREC02".to_vec();
        bad.extend(encode_frame(&MocapFrame::identity(0, 0, 1)));
        assert_eq!(read_recording(&bad), Err(StreamError::BadRecordingMagic));
        assert!(read_recording(b"MOCREC01").unwrap().frames.is_empty());
    }
}
