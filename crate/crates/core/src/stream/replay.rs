use std::time::{Duration, Instant};

use super::{MocapFrame, StreamError};

/// A recording played back against a clock.
///
/// `speed` scales the recorded gaps: 2.0 plays twice as fast. An infinite
/// speed releases every frame immediately, in order.
#[derive(Debug, Clone)]
pub struct Replay {
    frames: Vec<MocapFrame>,
    speed: f64,
}

impl Replay {
    pub fn new(frames: Vec<MocapFrame>, speed: f64) -> Result<Self, StreamError> {
        if frames.is_empty() {
            return Err(StreamError::EmptyRecording);
        }
        if !(speed > 0.0) {
            return Err(StreamError::InvalidSpeed(speed));
        }
        if let Some(index) = frames
            .windows(2)
            .position(|w| w[1].timestamp_us < w[0].timestamp_us)
        {
            return Err(StreamError::NonMonotonicTimestamps { index: index + 1 });
        }
        Ok(Replay { frames, speed })
    }

    pub fn frames(&self) -> &[MocapFrame] {
        &self.frames
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn is_unpaced(&self) -> bool {
        self.speed.is_infinite()
    }

    /// Release offset of each frame relative to the first, in microseconds.
    pub fn offsets_us(&self) -> Vec<u64> {
        let first = self.frames[0].timestamp_us;
        self.frames
            .iter()
            .map(|f| {
                if self.is_unpaced() {
                    0
                } else {
                    ((f.timestamp_us - first) as f64 / self.speed).round() as u64
                }
            })
            .collect()
    }

    /// `(release time, frame)` pairs starting at `start_us`.
    pub fn schedule(&self, start_us: u64) -> Vec<(u64, MocapFrame)> {
        self.offsets_us()
            .into_iter()
            .zip(self.frames.iter().cloned())
            .map(|(offset, frame)| (start_us + offset, frame))
            .collect()
    }

    /// Iterator that sleeps on the wall clock until each frame is due.
    pub fn timed(&self) -> TimedReplay<'_> {
        TimedReplay {
            replay: self,
            offsets: self.offsets_us(),
            next: 0,
            start: None,
        }
    }
}

pub struct TimedReplay<'a> {
    replay: &'a Replay,
    offsets: Vec<u64>,
    next: usize,
    start: Option<Instant>,
}

impl<'a> Iterator for TimedReplay<'a> {
    type Item = &'a MocapFrame;

    fn next(&mut self) -> Option<Self::Item> {
        let frame = self.replay.frames.get(self.next)?;
        let start = *self.start.get_or_insert_with(Instant::now);
        let due = start + Duration::from_micros(self.offsets[self.next]);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        self.next += 1;
        Some(frame)
    }
}
