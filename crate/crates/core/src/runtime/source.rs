use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};

use super::{Clock, LatestFrameSlot, MonotonicClock};
use crate::stream::{FrameIngest, MocapFrame, Replay, StreamStats, SynthMotion};

/// Producer side of the loop.
///
/// Inline sources do their work in [`pump`](FrameSource::pump), which the
/// loop calls at the top of every cycle with the current time. Threaded
/// sources spawn their producer in [`start`](FrameSource::start) and publish
/// into the slot on their own; their `pump` does nothing.
pub trait FrameSource {
    fn start(&mut self, _slot: &Arc<LatestFrameSlot>, _start_us: u64) -> io::Result<()> {
        Ok(())
    }

    fn pump(&mut self, now_us: u64, slot: &LatestFrameSlot);

    /// No frame will be written after this returns true.
    fn is_exhausted(&self) -> bool;

    fn stop(&mut self) {}

    fn stream_stats(&self) -> Option<StreamStats> {
        None
    }
}

/// Publishes pre-scheduled frames at fixed offsets from the loop start.
///
/// In unpaced mode the offsets are ignored and exactly one frame is
/// published per pump, so every frame gets its own cycle.
#[derive(Debug, Clone)]
pub struct ScheduledSource {
    schedule: Vec<(u64, MocapFrame)>,
    next: usize,
    start_us: u64,
    unpaced: bool,
}

impl ScheduledSource {
    /// `schedule` holds `(offset from loop start in µs, frame)`, sorted by offset.
    pub fn new(mut schedule: Vec<(u64, MocapFrame)>) -> Self {
        schedule.sort_by_key(|(t, _)| *t);
        ScheduledSource {
            schedule,
            next: 0,
            start_us: 0,
            unpaced: false,
        }
    }

    pub fn from_replay(replay: &Replay) -> Self {
        let mut source = ScheduledSource::new(replay.schedule(0));
        source.unpaced = replay.is_unpaced();
        source
    }

    pub fn unpaced(frames: Vec<MocapFrame>) -> Self {
        let mut source = ScheduledSource::new(frames.into_iter().map(|f| (0, f)).collect());
        source.unpaced = true;
        source
    }

    pub fn remaining(&self) -> usize {
        self.schedule.len() - self.next
    }
}

impl FrameSource for ScheduledSource {
    fn start(&mut self, _slot: &Arc<LatestFrameSlot>, start_us: u64) -> io::Result<()> {
        self.start_us = start_us;
        Ok(())
    }

    fn pump(&mut self, now_us: u64, slot: &LatestFrameSlot) {
        if self.unpaced {
            if let Some((_, frame)) = self.schedule.get(self.next) {
                slot.write(frame.clone(), now_us);
                self.next += 1;
            }
            return;
        }
        while let Some((offset, frame)) = self.schedule.get(self.next) {
            let due = self.start_us + offset;
            if due > now_us {
                break;
            }
            slot.write(frame.clone(), due);
            self.next += 1;
        }
    }

    fn is_exhausted(&self) -> bool {
        self.next == self.schedule.len()
    }
}

/// Generates synthetic frames lazily at the motion's own rate.
#[derive(Debug, Clone)]
pub struct SynthSource {
    motion: SynthMotion,
    limit: Option<u64>,
    produced: u64,
    start_us: u64,
}

impl SynthSource {
    /// `limit` caps the number of frames; `None` runs forever.
    pub fn new(motion: SynthMotion, limit: Option<u64>) -> Self {
        SynthSource {
            motion,
            limit,
            produced: 0,
            start_us: 0,
        }
    }
}

impl FrameSource for SynthSource {
    fn start(&mut self, _slot: &Arc<LatestFrameSlot>, start_us: u64) -> io::Result<()> {
        self.start_us = start_us;
        Ok(())
    }

    fn pump(&mut self, now_us: u64, slot: &LatestFrameSlot) {
        while !self.is_exhausted() {
            let due = self.start_us + self.motion.timestamp_us(self.produced);
            if due > now_us {
                break;
            }
            slot.write(self.motion.next_frame(), due);
            self.produced += 1;
        }
    }

    fn is_exhausted(&self) -> bool {
        self.limit.is_some_and(|l| self.produced >= l)
    }
}

/// Raw datagrams at fixed offsets, decoded and accounted like live traffic.
#[derive(Debug, Clone)]
pub struct ScheduledDatagramSource {
    schedule: Vec<(u64, Vec<u8>)>,
    next: usize,
    start_us: u64,
    ingest: FrameIngest,
}

impl ScheduledDatagramSource {
    pub fn new(mut schedule: Vec<(u64, Vec<u8>)>, segment_count: usize) -> Self {
        schedule.sort_by_key(|(t, _)| *t);
        ScheduledDatagramSource {
            schedule,
            next: 0,
            start_us: 0,
            ingest: FrameIngest::new(segment_count),
        }
    }
}

impl FrameSource for ScheduledDatagramSource {
    fn start(&mut self, _slot: &Arc<LatestFrameSlot>, start_us: u64) -> io::Result<()> {
        self.start_us = start_us;
        Ok(())
    }

    fn pump(&mut self, now_us: u64, slot: &LatestFrameSlot) {
        while let Some((offset, bytes)) = self.schedule.get(self.next) {
            let due = self.start_us + offset;
            if due > now_us {
                break;
            }
            match self.ingest.ingest(bytes, due) {
                Ok(Some(frame)) => {
                    slot.write(frame, due);
                }
                Ok(None) => {}
                Err(e) => debug!("rejected datagram: {e}"),
            }
            self.next += 1;
        }
    }

    fn is_exhausted(&self) -> bool {
        self.next == self.schedule.len()
    }

    fn stream_stats(&self) -> Option<StreamStats> {
        Some(self.ingest.stats.clone())
    }
}

struct Worker {
    stop: Arc<AtomicBool>,
    done: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Worker {
    fn spawn(name: &str, body: impl FnOnce(Arc<AtomicBool>) + Send + 'static) -> io::Result<Self> {
        let stop = Arc::new(AtomicBool::new(false));
        let done = Arc::new(AtomicBool::new(false));
        let (s, d) = (stop.clone(), done.clone());
        let handle = std::thread::Builder::new().name(name.into()).spawn(move || {
            body(s);
            d.store(true, Ordering::Release);
        })?;
        Ok(Worker {
            stop,
            done,
            handle: Some(handle),
        })
    }

    fn is_done(&self) -> bool {
        self.done.load(Ordering::Acquire)
    }

    fn join(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(handle) = self.handle.take() {
            if handle.join().is_err() {
                warn!("source thread panicked");
            }
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.join();
    }
}

/// Receives `MOC1` datagrams on its own thread.
pub struct UdpSource {
    socket: Option<UdpSocket>,
    local: SocketAddr,
    clock: MonotonicClock,
    stats: Arc<Mutex<FrameIngest>>,
    worker: Option<Worker>,
}

impl UdpSource {
    /// Binds immediately so the port is known (and reserved) before the loop starts.
    /// `clock` must be the loop's clock so arrival and emission times agree.
    pub fn bind(address: impl ToSocketAddrs, segment_count: usize, clock: MonotonicClock) -> io::Result<Self> {
        let socket = UdpSocket::bind(address)?;
        socket.set_read_timeout(Some(Duration::from_millis(20)))?;
        Ok(UdpSource {
            local: socket.local_addr()?,
            socket: Some(socket),
            clock,
            stats: Arc::new(Mutex::new(FrameIngest::new(segment_count))),
            worker: None,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }
}

impl FrameSource for UdpSource {
    fn start(&mut self, slot: &Arc<LatestFrameSlot>, _start_us: u64) -> io::Result<()> {
        let socket = self
            .socket
            .take()
            .ok_or_else(|| io::Error::other("source already started"))?;
        let (slot, clock, ingest) = (slot.clone(), self.clock, self.stats.clone());
        self.worker = Some(Worker::spawn("teleop-udp-source", move |stop| {
            let mut buf = vec![0u8; 65_536];
            while !stop.load(Ordering::Acquire) {
                let len = match socket.recv(&mut buf) {
                    Ok(len) => len,
                    Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
                    Err(e) => {
                        warn!("receive failed: {e}");
                        continue;
                    }
                };
                let arrival = clock.now_us();
                let result = ingest.lock().unwrap().ingest(&buf[..len], arrival);
                match result {
                    Ok(Some(frame)) => {
                        slot.write(frame, arrival);
                    }
                    Ok(None) => {}
                    Err(e) => debug!("rejected datagram: {e}"),
                }
            }
        })?);
        Ok(())
    }

    fn pump(&mut self, _: u64, _: &LatestFrameSlot) {}

    fn is_exhausted(&self) -> bool {
        false
    }

    fn stop(&mut self) {
        if let Some(mut worker) = self.worker.take() {
            worker.join();
        }
    }

    fn stream_stats(&self) -> Option<StreamStats> {
        Some(self.stats.lock().unwrap().stats.clone())
    }
}

/// Plays a recording on its own thread against the wall clock.
pub struct ThreadedReplaySource {
    replay: Option<Replay>,
    clock: MonotonicClock,
    worker: Option<Worker>,
}

impl ThreadedReplaySource {
    pub fn new(replay: Replay, clock: MonotonicClock) -> Self {
        ThreadedReplaySource {
            replay: Some(replay),
            clock,
            worker: None,
        }
    }
}

impl FrameSource for ThreadedReplaySource {
    fn start(&mut self, slot: &Arc<LatestFrameSlot>, _start_us: u64) -> io::Result<()> {
        let replay = self
            .replay
            .take()
            .ok_or_else(|| io::Error::other("source already started"))?;
        let (slot, clock) = (slot.clone(), self.clock);
        self.worker = Some(Worker::spawn("teleop-replay-source", move |stop| {
            for frame in replay.timed() {
                if stop.load(Ordering::Acquire) {
                    break;
                }
                slot.write(frame.clone(), clock.now_us());
            }
        })?);
        Ok(())
    }

    fn pump(&mut self, _: u64, _: &LatestFrameSlot) {}

    fn is_exhausted(&self) -> bool {
        self.worker.as_ref().map_or(self.replay.is_none(), Worker::is_done)
    }

    fn stop(&mut self) {
        if let Some(mut worker) = self.worker.take() {
            worker.join();
        }
    }
}
