use super::{decode_frame, MocapFrame, StreamError};
use crate::Histogram;

/// How far behind the newest sequence number a late frame is still
/// recognized as filling a gap (or as a duplicate).
pub const REORDER_WINDOW: u32 = 64;

/// Receive-side accounting by sequence number.
///
/// `received` counts distinct accepted frames; `dropped` counts sequence
/// numbers skipped over and not (yet) filled in. Without duplicates or
/// reordering beyond the window, `received + dropped` equals the span of
/// observed sequence numbers exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamStats {
    pub received: u64,
    pub dropped: u64,
    pub duplicates: u64,
    pub out_of_order: u64,
    /// Datagrams that failed to decode (checksum, magic, truncation, ...).
    pub rejected: u64,
    /// |arrival gap - sender timestamp gap| between consecutive new frames, us.
    pub jitter_us: Histogram,
    first: Option<u32>,
    highest: u32,
    // Bit k set: sequence number `highest - k` has been seen.
    window: u64,
    last_arrival: Option<(u64, u64)>,
}

/// What [`StreamStats::record`] decided about a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    /// Newer than anything seen so far.
    Fresh,
    /// Older than the newest frame but not seen before.
    Late,
    Duplicate,
}

impl StreamStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn first_seq(&self) -> Option<u32> {
        self.first
    }

    pub fn highest_seq(&self) -> Option<u32> {
        self.first.map(|_| self.highest)
    }

    /// Accounts for one decoded frame. `sender_us` is the frame's own timestamp.
    pub fn record(&mut self, seq: u32, sender_us: u64, arrival_us: u64) -> Arrival {
        let Some(first) = self.first else {
            self.first = Some(seq);
            self.highest = seq;
            self.window = 1;
            self.received = 1;
            self.last_arrival = Some((arrival_us, sender_us));
            return Arrival::Fresh;
        };

        if seq > self.highest {
            let gap = seq - self.highest;
            self.dropped += (gap - 1) as u64;
            self.window = if gap >= 64 { 0 } else { self.window << gap };
            self.window |= 1;
            self.highest = seq;
            self.received += 1;
            if let Some((prev_arrival, prev_sender)) = self.last_arrival {
                let arrival_gap = arrival_us as i128 - prev_arrival as i128;
                let sender_gap = sender_us as i128 - prev_sender as i128;
                self.jitter_us.record((arrival_gap - sender_gap).unsigned_abs() as u64);
            }
            self.last_arrival = Some((arrival_us, sender_us));
            return Arrival::Fresh;
        }

        let behind = self.highest - seq;
        if behind < REORDER_WINDOW.min(64) {
            let bit = 1u64 << behind;
            if self.window & bit != 0 {
                self.duplicates += 1;
                return Arrival::Duplicate;
            }
            self.window |= bit;
            if seq >= first {
                // Filled a gap counted as dropped when it was skipped.
                self.dropped -= 1;
            }
        }
        self.received += 1;
        self.out_of_order += 1;
        Arrival::Late
    }

    pub fn write_key_values(&self, out: &mut String, prefix: &str) {
        use std::fmt::Write as _;
        let _ = writeln!(out, "{prefix}_received={}", self.received);
        let _ = writeln!(out, "{prefix}_dropped={}", self.dropped);
        let _ = writeln!(out, "{prefix}_duplicates={}", self.duplicates);
        let _ = writeln!(out, "{prefix}_out_of_order={}", self.out_of_order);
        let _ = writeln!(out, "{prefix}_rejected={}", self.rejected);
        self.jitter_us.write_key_values(out, &format!("{prefix}_jitter"));
    }
}

/// Datagram intake: decode, check against the skeleton, account.
#[derive(Debug, Clone)]
pub struct FrameIngest {
    segment_count: usize,
    pub stats: StreamStats,
}

impl FrameIngest {
    pub fn new(segment_count: usize) -> Self {
        FrameIngest {
            segment_count,
            stats: StreamStats::new(),
        }
    }

    /// Returns the frame if it should be forwarded to the loop. Corrupt
    /// datagrams, duplicates and late frames are counted and withheld.
    pub fn ingest(&mut self, bytes: &[u8], arrival_us: u64) -> Result<Option<MocapFrame>, StreamError> {
        let frame = match decode_frame(bytes) {
            Ok(frame) if frame.segments.len() == self.segment_count => frame,
            Ok(frame) => {
                self.stats.rejected += 1;
                return Err(StreamError::SegmentCount {
                    expected: self.segment_count,
                    actual: frame.segments.len(),
                });
            }
            Err(e) => {
                self.stats.rejected += 1;
                return Err(e);
            }
        };
        match self.stats.record(frame.seq, frame.timestamp_us, arrival_us) {
            Arrival::Fresh => Ok(Some(frame)),
            Arrival::Late | Arrival::Duplicate => Ok(None),
        }
    }
}
