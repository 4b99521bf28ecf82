//! Byte layouts for emitted commands.
//!
//! A trace record is `seq u32, source_seq u32, source_timestamp_us u64,
//! emitted_us u64, joint_count u8, angles f64 × n, hold u8, crc u32`, all
//! little-endian, with the CRC-32 over every preceding record byte:
//! `30 + 8n` bytes. A datagram is the same record prefixed with `CMD1` and
//! a version byte, its CRC then also covering the prefix: `35 + 8n` bytes.

use thiserror::Error;

use crate::retarget::JointCommand;

pub const COMMAND_MAGIC: [u8; 4] = *b"CMD1";
pub const COMMAND_VERSION: u8 = 1;
pub const TRACE_MAGIC: [u8; 8] = *b"CMDTRC01";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unexpected trailing bytes")]
    TrailingBytes,
    #[error("crc mismatch in record {record}")]
    CrcMismatch { record: usize },
}

pub const fn trace_record_len(joints: usize) -> usize {
    30 + 8 * joints
}

pub const fn datagram_len(joints: usize) -> usize {
    5 + trace_record_len(joints)
}

fn put_body(cmd: &JointCommand, out: &mut Vec<u8>) {
    assert!(cmd.angles.len() <= 255, "command exceeds 255 joints");
    out.extend_from_slice(&cmd.seq.to_le_bytes());
    out.extend_from_slice(&cmd.source_seq.to_le_bytes());
    out.extend_from_slice(&cmd.source_timestamp_us.to_le_bytes());
    out.extend_from_slice(&cmd.emitted_us.to_le_bytes());
    out.push(cmd.angles.len() as u8);
    for a in &cmd.angles {
        out.extend_from_slice(&a.to_le_bytes());
    }
    out.push(cmd.hold as u8);
}

fn seal(out: &mut Vec<u8>, from: usize) {
    let crc = crc32fast::hash(&out[from..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

/// Appends one trace record. Panics on more than 255 joints.
pub fn encode_trace_record_into(cmd: &JointCommand, out: &mut Vec<u8>) {
    let start = out.len();
    put_body(cmd, out);
    seal(out, start);
}

pub fn encode_datagram(cmd: &JointCommand) -> Vec<u8> {
    let mut out = Vec::with_capacity(datagram_len(cmd.angles.len()));
    out.extend_from_slice(&COMMAND_MAGIC);
    out.push(COMMAND_VERSION);
    put_body(cmd, &mut out);
    seal(&mut out, 0);
    out
}

fn take<const N: usize>(bytes: &[u8], at: &mut usize) -> [u8; N] {
    let out = bytes[*at..*at + N].try_into().unwrap();
    *at += N;
    out
}

/// Parses a record body + CRC starting at `bytes[0]`; the CRC covers
/// `crc_prefix` bytes that precede it. Returns the command and bytes used.
fn decode_body(bytes: &[u8], crc_prefix: &[u8]) -> Result<(JointCommand, usize), WireError> {
    let available = bytes.len();
    if available < 25 {
        return Err(WireError::Truncated {
            needed: trace_record_len(0),
            available,
        });
    }
    let n = bytes[24] as usize;
    let len = trace_record_len(n);
    if available < len {
        return Err(WireError::Truncated { needed: len, available });
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(crc_prefix);
    hasher.update(&bytes[..len - 4]);
    let stored = u32::from_le_bytes(bytes[len - 4..len].try_into().unwrap());
    if hasher.finalize() != stored {
        return Err(WireError::CrcMismatch { record: 0 });
    }
    let mut at = 0;
    let seq = u32::from_le_bytes(take(bytes, &mut at));
    let source_seq = u32::from_le_bytes(take(bytes, &mut at));
    let source_timestamp_us = u64::from_le_bytes(take(bytes, &mut at));
    let emitted_us = u64::from_le_bytes(take(bytes, &mut at));
    at += 1;
    let angles = (0..n).map(|_| f64::from_le_bytes(take(bytes, &mut at))).collect();
    let hold = bytes[at] != 0;
    Ok((
        JointCommand {
            seq,
            source_seq,
            source_timestamp_us,
            emitted_us,
            angles,
            hold,
        },
        len,
    ))
}

pub fn decode_datagram(bytes: &[u8]) -> Result<JointCommand, WireError> {
    if bytes.len() < 5 {
        return Err(WireError::Truncated {
            needed: datagram_len(0),
            available: bytes.len(),
        });
    }
    if bytes[..4] != COMMAND_MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[4] != COMMAND_VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    let (cmd, used) = decode_body(&bytes[5..], &bytes[..5]).map_err(|e| match e {
        WireError::Truncated { needed, available } => WireError::Truncated {
            needed: needed + 5,
            available: available + 5,
        },
        other => other,
    })?;
    if used != bytes.len() - 5 {
        return Err(WireError::TrailingBytes);
    }
    Ok(cmd)
}

/// Header plus records, as a trace sink writes them.
pub fn encode_trace(commands: &[JointCommand]) -> Vec<u8> {
    let mut out = TRACE_MAGIC.to_vec();
    for cmd in commands {
        encode_trace_record_into(cmd, &mut out);
    }
    out
}

/// Strict reader: any truncation or checksum failure is an error.
pub fn read_trace(bytes: &[u8]) -> Result<Vec<JointCommand>, WireError> {
    if bytes.len() < TRACE_MAGIC.len() || bytes[..8] != TRACE_MAGIC {
        return Err(WireError::BadMagic);
    }
    let mut at = TRACE_MAGIC.len();
    let mut commands = Vec::new();
    while at < bytes.len() {
        let (cmd, used) = decode_body(&bytes[at..], &[]).map_err(|e| match e {
            WireError::CrcMismatch { .. } => WireError::CrcMismatch { record: commands.len() },
            other => other,
        })?;
        commands.push(cmd);
        at += used;
    }
    Ok(commands)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn command(n: usize) -> JointCommand {
        JointCommand {
            seq: 7,
            source_seq: 3,
            source_timestamp_us: 30_000,
            emitted_us: 31_234,
            angles: (0..n).map(|i| i as f64 * 0.1 - 1.0).collect(),
            hold: true,
        }
    }

    #[test]
    fn datagram_layout() {
        let bytes = encode_datagram(&command(23));
        assert_eq!(bytes.len(), 4 + 1 + 4 + 4 + 8 + 8 + 1 + 184 + 1 + 4);
        assert_eq!(&bytes[..5], b"CMD1\x01");
        assert_eq!(&bytes[5..9], &7u32.to_le_bytes());
        assert_eq!(bytes[29], 23);
        assert_eq!(bytes[214], 1);
        assert_eq!(&bytes[215..], &crc32fast::hash(&bytes[..215]).to_le_bytes());
        assert_eq!(decode_datagram(&bytes).unwrap(), command(23));
    }

    #[test]
    fn datagram_rejects_damage() {
        let good = encode_datagram(&command(2));
        let mut flipped = good.clone();
        flipped[12] ^= 4;
        assert!(matches!(decode_datagram(&flipped), Err(WireError::CrcMismatch { .. })));
        assert_eq!(decode_datagram(&good[..good.len() - 1]).unwrap_err(), WireError::Truncated { needed: 51, available: 50 });
        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_datagram(&long).unwrap_err(), WireError::TrailingBytes);
        let mut version = good;
        version[4] = 2;
        assert_eq!(decode_datagram(&version).unwrap_err(), WireError::UnsupportedVersion(2));
    }

    #[test]
    fn trace_round_trip_and_length() {
        assert_eq!(encode_trace(&[]), b"CMDTRC01");
        let cmds: Vec<_> = (0..4).map(|i| JointCommand { seq: i, ..command(23) }).collect();
        let bytes = encode_trace(&cmds);
        assert_eq!(bytes.len(), 8 + 4 * trace_record_len(23));
        assert_eq!(read_trace(&bytes).unwrap(), cmds);

        let mut bad = bytes.clone();
        bad[8 + trace_record_len(23) + 40] ^= 1;
        assert_eq!(read_trace(&bad).unwrap_err(), WireError::CrcMismatch { record: 1 });
        assert!(matches!(read_trace(&bytes[..bytes.len() - 3]), Err(WireError::Truncated { .. })));
    }
}
