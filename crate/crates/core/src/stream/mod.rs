//! Motion-capture frames: the open `MOC1` wire format, `MOCREC01`
//! recordings, timed replay, synthetic motion, and receive-side accounting.

mod codec;
mod recording;
mod replay;
mod stats;
mod synth;

use thiserror::Error;

use crate::geometry::UnitQuaternion;

pub use codec::{
    decode_frame, encode_frame, encode_frame_into, encoded_len, frame_len, FRAME_HEADER_LEN, FRAME_MAGIC,
    FRAME_VERSION,
};
pub use recording::{read_recording, write_recording, Recording, RECORDING_MAGIC};
pub use replay::{Replay, TimedReplay};
pub use stats::{FrameIngest, StreamStats, REORDER_WINDOW};
pub use synth::{random_rotation, synth_motion, MotionPattern, SynthMotion};

/// Decoded segment norms at or below this are treated as corrupt.
pub const MIN_DECODED_NORM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("trailing bytes after frame: expected {expected}, have {available}")]
    TrailingBytes { expected: usize, available: usize },
    #[error("crc mismatch: computed {computed:#010x}, stored {stored:#010x}")]
    CrcMismatch { computed: u32, stored: u32 },
    #[error("degenerate quaternion in segment {segment}")]
    DegenerateQuaternion { segment: usize },
    #[error("frame has {actual} segments, skeleton has {expected}")]
    SegmentCount { expected: usize, actual: usize },
    #[error("recording is empty")]
    EmptyRecording,
    #[error("recording timestamps decrease at frame {index}")]
    NonMonotonicTimestamps { index: usize },
    #[error("replay speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("bad recording header")]
    BadRecordingMagic,
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for StreamError {
    fn from(e: std::io::Error) -> Self {
        StreamError::Io(e.to_string())
    }
}

/// One timestamped snapshot of per-segment orientations.
///
/// Orientations are relative to the parent segment, in skeleton order.
#[derive(Debug, Clone, PartialEq)]
pub struct MocapFrame {
    pub seq: u32,
    /// Sender clock, microseconds.
    pub timestamp_us: u64,
    pub segments: Vec<UnitQuaternion>,
}

impl MocapFrame {
    pub fn new(seq: u32, timestamp_us: u64, segments: Vec<UnitQuaternion>) -> Self {
        MocapFrame {
            seq,
            timestamp_us,
            segments,
        }
    }

    /// Calibration pose: every segment at identity.
    pub fn identity(seq: u32, timestamp_us: u64, segment_count: usize) -> Self {
        Self::new(seq, timestamp_us, vec![UnitQuaternion::IDENTITY; segment_count])
    }

    /// Largest component difference between matching segments.
    pub fn max_abs_diff(&self, other: &MocapFrame) -> f64 {
        self.segments
            .iter()
            .zip(&other.segments)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}
