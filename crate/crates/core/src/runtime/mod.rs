//! The fixed-rate control loop.
//!
//! Each cycle reads and clears a one-frame mailbox ([`LatestFrameSlot`]).
//! A fresh frame is retargeted and emitted as exactly one command; an empty
//! slot produces a hold command repeating the last emitted angles (the
//! model defaults before the first frame). Nothing is queued: a frame that
//! is replaced before the loop gets to it is counted as overwritten and
//! never seen.
//!
//! Time comes from a [`Clock`]. [`VirtualClock`] jumps straight to each
//! deadline, which together with an inline source makes a run fully
//! deterministic; [`MonotonicClock`] sleeps on the wall clock.

mod sink;
mod source;
pub mod wire;

use std::fmt::Write as _;
use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::{debug, warn};
use thiserror::Error;

use crate::retarget::{JointCommand, Retargeter};
use crate::stream::{MocapFrame, StreamStats};
use crate::Histogram;

pub use sink::{DatagramSink, FanoutSink, MemorySink, NullSink, Sink, SinkError, TraceSink, ValidatorSink};
pub use source::{FrameSource, ScheduledDatagramSource, ScheduledSource, SynthSource, ThreadedReplaySource, UdpSource};

pub const DEFAULT_RATE_HZ: f64 = 500.0;
pub const DEFAULT_BACKPRESSURE_CYCLES: u32 = 8;

/// Microsecond time source.
pub trait Clock {
    fn now_us(&self) -> u64;
    /// Returns once `now_us() >= deadline_us`.
    fn sleep_until_us(&mut self, deadline_us: u64);
}

/// Deterministic clock that advances only when told to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VirtualClock {
    now_us: u64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_us(&mut self, now_us: u64) {
        self.now_us = now_us;
    }

    pub fn advance_us(&mut self, us: u64) {
        self.now_us += us;
    }
}

impl Clock for VirtualClock {
    fn now_us(&self) -> u64 {
        self.now_us
    }

    fn sleep_until_us(&mut self, deadline_us: u64) {
        self.now_us = self.now_us.max(deadline_us);
    }
}

/// Wall-clock time since construction. Copies share the origin.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_us(&self) -> u64 {
        self.origin.elapsed().as_micros() as u64
    }

    fn sleep_until_us(&mut self, deadline_us: u64) {
        let deadline = self.origin + Duration::from_micros(deadline_us);
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

/// Single-frame mailbox shared by the source and the loop.
#[derive(Debug, Default)]
pub struct LatestFrameSlot {
    frame: Mutex<Option<(MocapFrame, u64)>>,
    written: AtomicU64,
    overwritten: AtomicU64,
}

impl LatestFrameSlot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `frame`, replacing any unconsumed one. Returns true if a frame
    /// was replaced.
    pub fn write(&self, frame: MocapFrame, arrival_us: u64) -> bool {
        let mut slot = self.frame.lock().unwrap();
        let replaced = slot.replace((frame, arrival_us)).is_some();
        self.written.fetch_add(1, Ordering::Relaxed);
        if replaced {
            self.overwritten.fetch_add(1, Ordering::Relaxed);
        }
        replaced
    }

    /// Removes and returns the pending frame with its arrival time.
    pub fn take(&self) -> Option<(MocapFrame, u64)> {
        self.frame.lock().unwrap().take()
    }

    /// Drops a pending frame, counting it as overwritten.
    pub fn discard(&self) -> bool {
        let dropped = self.take().is_some();
        if dropped {
            self.overwritten.fetch_add(1, Ordering::Relaxed);
        }
        dropped
    }

    pub fn is_empty(&self) -> bool {
        self.frame.lock().unwrap().is_none()
    }

    pub fn written(&self) -> u64 {
        self.written.load(Ordering::Relaxed)
    }

    pub fn overwritten(&self) -> u64 {
        self.overwritten.load(Ordering::Relaxed)
    }
}

/// Timestep handed to the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DtMode {
    /// Always the nominal period: identical output under any jitter.
    #[default]
    Nominal,
    /// Time since the previous retargeted frame, by the loop clock.
    Measured,
}

#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub rate_hz: f64,
    /// Stop after this many cycles.
    pub max_cycles: Option<u64>,
    /// Stop once this much nominal time has elapsed.
    pub duration: Option<Duration>,
    pub dt_mode: DtMode,
    /// Longest a single `Sink::accept` may take before it counts as over budget.
    pub sink_budget: Duration,
    /// Consecutive over-budget cycles that abort the loop.
    pub backpressure_cycles: u32,
    /// Keep every compute time and frame age for exact percentiles.
    pub keep_compute_samples: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            rate_hz: DEFAULT_RATE_HZ,
            max_cycles: None,
            duration: None,
            dt_mode: DtMode::Nominal,
            sink_budget: Duration::from_millis(1),
            backpressure_cycles: DEFAULT_BACKPRESSURE_CYCLES,
            keep_compute_samples: false,
        }
    }
}

impl LoopConfig {
    pub fn with_rate(rate_hz: f64) -> Self {
        LoopConfig {
            rate_hz,
            ..Self::default()
        }
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.rate_hz
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoopMetrics {
    pub cycles: u64,
    pub commands: u64,
    pub hold_commands: u64,
    pub frames_written: u64,
    pub frames_consumed: u64,
    pub frames_overwritten: u64,
    /// Frames that reached the loop but could not be retargeted.
    pub frames_rejected: u64,
    pub clamped_joints: u64,
    pub gimbal_warnings: u64,
    pub sink_errors: u64,
    pub sink_over_budget: u64,
    pub compute_us: Histogram,
    /// Emission time minus arrival time, for commands built from fresh frames.
    pub frame_age_us: Histogram,
    /// |actual cycle start - nominal cycle start|.
    pub jitter_us: Histogram,
    /// Per-cycle compute times in nanoseconds, when kept.
    pub compute_samples_ns: Vec<u64>,
    /// Frame ages in microseconds, when kept.
    pub frame_age_samples_us: Vec<u64>,
    pub stream: Option<StreamStats>,
}

impl LoopMetrics {
    /// Nearest-rank percentile of the kept compute samples, in nanoseconds.
    pub fn compute_percentile_ns(&self, q: f64) -> Option<u64> {
        percentile(&self.compute_samples_ns, q)
    }

    /// `key=value` lines; histograms as described on [`Histogram::write_key_values`].
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (key, value) in [
            ("cycles", self.cycles),
            ("commands", self.commands),
            ("hold_commands", self.hold_commands),
            ("frames_written", self.frames_written),
            ("frames_consumed", self.frames_consumed),
            ("frames_overwritten", self.frames_overwritten),
            ("frames_rejected", self.frames_rejected),
            ("clamped_joints", self.clamped_joints),
            ("gimbal_warnings", self.gimbal_warnings),
            ("sink_errors", self.sink_errors),
            ("sink_over_budget", self.sink_over_budget),
        ] {
            let _ = writeln!(out, "{key}={value}");
        }
        self.compute_us.write_key_values(&mut out, "compute");
        self.frame_age_us.write_key_values(&mut out, "frame_age");
        self.jitter_us.write_key_values(&mut out, "jitter");
        if let Some(stream) = &self.stream {
            stream.write_key_values(&mut out, "stream");
        }
        out
    }
}

/// Nearest-rank percentile; `q` in `[0, 1]`.
pub fn percentile(samples: &[u64], q: f64) -> Option<u64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("loop rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("backpressure limit must be at least one cycle")]
    InvalidBackpressure,
    #[error("source failed to start: {0}")]
    Source(io::Error),
    #[error("sink exceeded its {budget:?} budget for {cycles} consecutive cycles")]
    SinkBackpressure {
        cycles: u32,
        budget: Duration,
        metrics: Box<LoopMetrics>,
    },
    #[error("sink failed: {error}")]
    SinkFailed { error: io::Error, metrics: Box<LoopMetrics> },
}

impl LoopError {
    pub fn metrics(&self) -> Option<&LoopMetrics> {
        match self {
            LoopError::SinkBackpressure { metrics, .. } | LoopError::SinkFailed { metrics, .. } => Some(metrics),
            _ => None,
        }
    }
}

enum Abort {
    Backpressure,
    Fatal(io::Error),
}

/// Runs cycles until the cycle budget, the duration, or the end of a
/// finite source (slot drained) is reached.
pub fn run_loop(
    source: &mut dyn FrameSource,
    retargeter: &mut Retargeter,
    sink: &mut dyn Sink,
    clock: &mut dyn Clock,
    config: &LoopConfig,
) -> Result<LoopMetrics, LoopError> {
    if !(config.rate_hz > 0.0 && config.rate_hz.is_finite()) {
        return Err(LoopError::InvalidRate(config.rate_hz));
    }
    if config.backpressure_cycles == 0 {
        return Err(LoopError::InvalidBackpressure);
    }
    let period_us = 1e6 / config.rate_hz;
    let period_s = config.period_s();
    let duration_us = config.duration.map(|d| d.as_micros() as u64);

    let slot = Arc::new(LatestFrameSlot::new());
    let start = clock.now_us();
    source.start(&slot, start).map_err(LoopError::Source)?;

    let mut metrics = LoopMetrics::default();
    let mut last_angles = retargeter.model().defaults();
    let mut last_emitted: Option<u64> = None;
    let mut last_step_us: Option<u64> = None;
    let mut last_source = (0u32, 0u64);
    let mut over_budget_streak = 0u32;

    let outcome = loop {
        let cycle = metrics.cycles;
        if config.max_cycles.is_some_and(|max| cycle >= max) {
            break Ok(());
        }
        let offset = (cycle as f64 * period_us).round() as u64;
        if duration_us.is_some_and(|d| offset >= d) {
            break Ok(());
        }
        let nominal = start + offset;
        clock.sleep_until_us(nominal);
        let now = clock.now_us();
        metrics.jitter_us.record(now.abs_diff(nominal));

        source.pump(now, &slot);
        let compute_start = Instant::now();
        let exhausted = source.is_exhausted();
        let taken = slot.take();
        if taken.is_none() && exhausted {
            break Ok(());
        }

        let mut fresh = None;
        if let Some((frame, arrival)) = taken {
            let dt = match (config.dt_mode, last_step_us) {
                (DtMode::Measured, Some(prev)) if now > prev => (now - prev) as f64 * 1e-6,
                _ => period_s,
            };
            match retargeter.step(&frame, dt, &*clock) {
                Ok((command, diagnostics)) => {
                    metrics.frames_consumed += 1;
                    metrics.clamped_joints += diagnostics.clamped_count as u64;
                    metrics.gimbal_warnings += diagnostics.gimbal_warnings as u64;
                    last_step_us = Some(now);
                    fresh = Some((command, arrival));
                }
                Err(e) => {
                    warn!("frame {} rejected: {e}", frame.seq);
                    metrics.frames_rejected += 1;
                }
            }
        }

        let emitted = clock.now_us().max(last_emitted.map_or(0, |t| t + 1));
        let mut command = match fresh {
            Some((command, arrival)) => {
                let age = emitted.saturating_sub(arrival);
                metrics.frame_age_us.record(age);
                if config.keep_compute_samples {
                    metrics.frame_age_samples_us.push(age);
                }
                command
            }
            None => {
                metrics.hold_commands += 1;
                JointCommand {
                    seq: 0,
                    source_seq: 0,
                    source_timestamp_us: 0,
                    emitted_us: 0,
                    angles: last_angles.clone(),
                    hold: true,
                }
            }
        };
        if command.hold {
            // Keep pointing at the frame the held posture came from.
            command.source_seq = last_source.0;
            command.source_timestamp_us = last_source.1;
        }
        command.seq = cycle as u32;
        command.emitted_us = emitted;
        last_emitted = Some(emitted);

        let compute = compute_start.elapsed();
        metrics.compute_us.record(compute.as_micros() as u64);
        if config.keep_compute_samples {
            metrics.compute_samples_ns.push(compute.as_nanos() as u64);
        }

        let sink_start = Instant::now();
        let delivered = sink.accept(&command);
        let spent = sink_start.elapsed();
        metrics.cycles += 1;
        metrics.commands += 1;
        if !command.hold {
            last_angles.clone_from(&command.angles);
            last_source = (command.source_seq, command.source_timestamp_us);
        }
        match delivered {
            Ok(()) => {}
            Err(SinkError::Send(e)) => {
                debug!("cycle {cycle}: {e}");
                metrics.sink_errors += 1;
            }
            Err(SinkError::Fatal(e)) => break Err(Abort::Fatal(e)),
        }
        if spent > config.sink_budget {
            metrics.sink_over_budget += 1;
            over_budget_streak += 1;
            if over_budget_streak >= config.backpressure_cycles {
                break Err(Abort::Backpressure);
            }
        } else {
            over_budget_streak = 0;
        }
    };

    source.stop();
    slot.discard();
    metrics.frames_written = slot.written();
    metrics.frames_overwritten = slot.overwritten();
    metrics.stream = source.stream_stats();

    let finished = sink.finish();
    match outcome {
        Err(Abort::Backpressure) => Err(LoopError::SinkBackpressure {
            cycles: config.backpressure_cycles,
            budget: config.sink_budget,
            metrics: Box::new(metrics),
        }),
        Err(Abort::Fatal(error)) => Err(LoopError::SinkFailed {
            error,
            metrics: Box::new(metrics),
        }),
        Ok(()) => match finished {
            Ok(()) => Ok(metrics),
            Err(SinkError::Send(error) | SinkError::Fatal(error)) => Err(LoopError::SinkFailed {
                error,
                metrics: Box::new(metrics),
            }),
        },
    }
}
