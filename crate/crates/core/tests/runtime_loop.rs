use std::net::UdpSocket;
use std::time::Duration;

use proptest::prelude::*;
use teleop_core::model::sample;
use teleop_core::retarget::{JointCommand, Retargeter};
use teleop_core::runtime::wire::{datagram_len, decode_datagram, encode_datagram, read_trace, trace_record_len};
use teleop_core::runtime::{
    run_loop, Clock, DatagramSink, DtMode, FrameSource, LatestFrameSlot, LoopConfig, LoopError, MemorySink, MonotonicClock,
    ScheduledDatagramSource, ScheduledSource, Sink, SinkError, SynthSource, ThreadedReplaySource, TraceSink, UdpSource,
    VirtualClock,
};
use teleop_core::stream::{encode_frame, synth_motion, MocapFrame, MotionPattern, Replay, SynthMotion};

fn retargeter() -> Retargeter {
    let (model, skeleton, map) = sample::bundle();
    Retargeter::new(model, skeleton, map)
}

fn synth(pattern: MotionPattern, rate: f64, frames: u64) -> SynthSource {
    let skeleton = sample::skeleton();
    SynthSource::new(SynthMotion::new(pattern, rate, 0.0, 1, &skeleton), Some(frames))
}

fn run_virtual(source: &mut dyn FrameSource, sink: &mut dyn Sink, config: &LoopConfig) -> teleop_core::runtime::LoopMetrics {
    run_loop(source, &mut retargeter(), sink, &mut VirtualClock::new(), config).unwrap()
}

fn assert_sink_order(commands: &[JointCommand]) {
    for (i, w) in commands.windows(2).enumerate() {
        assert!(w[1].emitted_us > w[0].emitted_us, "emission order at {i}");
        assert!(w[1].seq > w[0].seq, "sequence order at {i}");
    }
}

#[test]
fn matched_rates_emit_one_command_per_frame() {
    let mut source = synth(MotionPattern::ArmWave, 100.0, 1000);
    let mut sink = MemorySink::default();
    let metrics = run_virtual(&mut source, &mut sink, &LoopConfig::with_rate(100.0));
    assert_eq!(metrics.commands, 1000);
    assert_eq!(metrics.cycles, metrics.commands);
    assert_eq!(metrics.frames_consumed, 1000);
    assert_eq!(metrics.frames_overwritten, 0);
    assert_eq!(metrics.hold_commands, 0);
    for (cycle, cmd) in sink.commands.iter().enumerate() {
        assert_eq!(cmd.source_seq, cycle as u32);
        assert!(!cmd.hold);
    }
    assert_sink_order(&sink.commands);
    assert_eq!(metrics.frame_age_us.max(), Some(0));
}

#[test]
fn double_rate_source_overwrites_about_half() {
    let mut source = synth(MotionPattern::Squat, 200.0, 401);
    let mut sink = MemorySink::default();
    let metrics = run_virtual(&mut source, &mut sink, &LoopConfig::with_rate(100.0));
    assert!(metrics.frames_overwritten.abs_diff(metrics.frames_consumed) <= 1, "{metrics:?}");
    assert_eq!(metrics.frames_consumed + metrics.frames_overwritten, metrics.frames_written);
    for (cycle, cmd) in sink.commands.iter().enumerate() {
        // Newest frame due at cycle k is frame 2k.
        assert_eq!(cmd.source_seq, 2 * cycle as u32);
    }
}

#[test]
fn silence_produces_identical_hold_commands() {
    let frames = synth_motion(MotionPattern::ArmWave, 100.0, 0.3, 0.0, 0);
    let schedule: Vec<(u64, MocapFrame)> = frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let cycle = if i < 5 { i } else { i + 10 };
            (cycle as u64 * 10_000, f)
        })
        .collect();
    let mut source = ScheduledSource::new(schedule);
    let mut sink = MemorySink::default();
    let metrics = run_virtual(&mut source, &mut sink, &LoopConfig::with_rate(100.0));
    assert_eq!(metrics.hold_commands, 10);
    let holds: Vec<&JointCommand> = sink.commands.iter().filter(|c| c.hold).collect();
    assert_eq!(holds.len(), 10);
    for h in &holds {
        assert_eq!(h.angles, sink.commands[4].angles);
        assert_eq!(h.source_seq, 4);
    }
    assert!(sink.commands[5..15].iter().all(|c| c.hold));
    assert_sink_order(&sink.commands);
}

#[test]
fn hold_before_first_frame_uses_defaults() {
    let frames = synth_motion(MotionPattern::Static, 100.0, 0.05, 0.0, 0);
    let mut source = ScheduledSource::new(frames.into_iter().map(|f| (30_000 + f.timestamp_us, f)).collect());
    let mut sink = MemorySink::default();
    run_virtual(&mut source, &mut sink, &LoopConfig::with_rate(100.0));
    assert!(sink.commands[..3].iter().all(|c| c.hold && c.angles == sample::robot().defaults()));
    assert!(!sink.commands[3].hold);
}

#[derive(Debug, Clone)]
enum Op {
    Write,
    Take,
}

proptest! {
    #[test]
    fn slot_is_zero_buffer_and_fresh(ops in prop::collection::vec(prop_oneof![Just(Op::Write), Just(Op::Take)], 0..200)) {
        let slot = LatestFrameSlot::new();
        let mut next_seq = 0u32;
        let mut consumed = 0u64;
        let mut newest: Option<u32> = None;
        for op in ops {
            match op {
                Op::Write => {
                    slot.write(MocapFrame::identity(next_seq, 0, 1), next_seq as u64);
                    newest = Some(next_seq);
                    next_seq += 1;
                }
                Op::Take => match slot.take() {
                    Some((frame, arrival)) => {
                        prop_assert_eq!(Some(frame.seq), newest);
                        prop_assert_eq!(arrival, frame.seq as u64);
                        consumed += 1;
                        newest = None;
                    }
                    None => prop_assert!(newest.is_none()),
                },
            }
            prop_assert_eq!(consumed + slot.overwritten() + (!slot.is_empty()) as u64, slot.written());
        }
    }

    #[test]
    fn loop_counters_hold_for_any_schedule(offsets in prop::collection::vec(0u64..200_000, 0..60), rate in 50.0f64..600.0) {
        let mut offsets = offsets;
        offsets.sort_unstable();
        let schedule = offsets.iter().enumerate().map(|(i, &t)| (t, MocapFrame::identity(i as u32, t, 23))).collect();
        let mut source = ScheduledSource::new(schedule);
        let mut sink = MemorySink::default();
        let metrics = run_virtual(&mut source, &mut sink, &LoopConfig::with_rate(rate));
        prop_assert_eq!(metrics.cycles, metrics.commands);
        prop_assert_eq!(metrics.commands as usize, sink.commands.len());
        prop_assert_eq!(metrics.frames_consumed + metrics.frames_overwritten, metrics.frames_written);
        prop_assert_eq!(metrics.frames_written, offsets.len() as u64);
        prop_assert_eq!(metrics.hold_commands + metrics.frames_consumed, metrics.commands);
        assert_sink_order(&sink.commands);
    }
}

#[test]
fn trace_files_have_header_and_fixed_records() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.trc");
    let mut sink = TraceSink::create(&empty).unwrap();
    sink.finish().unwrap();
    drop(sink);
    assert_eq!(std::fs::read(&empty).unwrap(), b"CMDTRC01");

    let path = dir.path().join("run.trc");
    let mut trace = TraceSink::create(&path).unwrap();
    let metrics = run_virtual(&mut synth(MotionPattern::WalkCycle, 100.0, 50), &mut trace, &LoopConfig::default());
    drop(trace);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 8 + metrics.commands as usize * trace_record_len(23));

    let mut memory = MemorySink::default();
    run_virtual(&mut synth(MotionPattern::WalkCycle, 100.0, 50), &mut memory, &LoopConfig::default());
    assert_eq!(read_trace(&bytes).unwrap(), memory.commands);
}

#[test]
fn virtual_clock_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let mut sink = TraceSink::create(&path).unwrap();
        let skeleton = sample::skeleton();
        let mut source = SynthSource::new(SynthMotion::new(MotionPattern::Squat, 100.0, 0.01, 42, &skeleton), Some(300));
        run_virtual(&mut source, &mut sink, &LoopConfig::default());
        drop(sink);
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.trc"), run("b.trc"));
}

/// Virtual time, but each cycle also yields briefly in real time so a
/// loopback receiver can keep up.
struct PacedClock(VirtualClock);

impl Clock for PacedClock {
    fn now_us(&self) -> u64 {
        self.0.now_us()
    }

    fn sleep_until_us(&mut self, deadline_us: u64) {
        std::thread::sleep(Duration::from_micros(200));
        self.0.sleep_until_us(deadline_us);
    }
}

#[test]
fn datagram_sink_delivers_byte_identical_payloads() {
    let receiver = UdpSocket::bind("127.0.0.1:0").unwrap();
    receiver.set_read_timeout(Some(Duration::from_millis(500))).unwrap();
    let mut sink = DatagramSink::new(receiver.local_addr().unwrap()).unwrap();
    // Drain concurrently; a burst of 200 datagrams can exceed the socket buffer.
    let capture = std::thread::spawn(move || {
        let mut got = Vec::new();
        let mut buf = [0u8; 1024];
        while let Ok(len) = receiver.recv(&mut buf) {
            got.push(buf[..len].to_vec());
        }
        got
    });
    let config = LoopConfig {
        max_cycles: Some(200),
        ..LoopConfig::default()
    };
    let mut clock = PacedClock(VirtualClock::new());
    let metrics = run_loop(&mut synth(MotionPattern::ArmWave, 100.0, 100), &mut retargeter(), &mut sink, &mut clock, &config).unwrap();
    assert_eq!(sink.sent, metrics.commands);
    assert_eq!(metrics.sink_errors, 0);

    let mut memory = MemorySink::default();
    run_virtual(&mut synth(MotionPattern::ArmWave, 100.0, 100), &mut memory, &config);
    let received = capture.join().unwrap();
    assert_eq!(received.len(), memory.commands.len());
    for (bytes, expected) in received.iter().zip(&memory.commands) {
        assert_eq!(bytes.len(), datagram_len(23));
        assert_eq!(bytes, &encode_datagram(expected));
        assert_eq!(&decode_datagram(bytes).unwrap(), expected);
    }
}

#[test]
fn unreachable_destination_is_counted_not_fatal() {
    // Broadcast without SO_BROADCAST: every send is refused locally.
    let mut sink = DatagramSink::new("255.255.255.255:9").unwrap();
    let config = LoopConfig {
        max_cycles: Some(40),
        ..LoopConfig::default()
    };
    let metrics = run_virtual(&mut synth(MotionPattern::Static, 100.0, 100), &mut sink, &config);
    assert_eq!(metrics.cycles, 40);
    assert_eq!(metrics.sink_errors, 40);
    assert_eq!(sink.send_errors, 40);
}

struct StallingSink {
    stall: Duration,
    accepted: u64,
}

impl Sink for StallingSink {
    fn accept(&mut self, _: &JointCommand) -> Result<(), SinkError> {
        std::thread::sleep(self.stall);
        self.accepted += 1;
        Ok(())
    }
}

#[test]
fn stalled_sink_aborts_after_eight_cycles() {
    let mut sink = StallingSink {
        stall: Duration::from_millis(3),
        accepted: 0,
    };
    let err = run_loop(
        &mut synth(MotionPattern::Static, 100.0, 1000),
        &mut retargeter(),
        &mut sink,
        &mut VirtualClock::new(),
        &LoopConfig::default(),
    )
    .unwrap_err();
    match &err {
        LoopError::SinkBackpressure { cycles, metrics, .. } => {
            assert_eq!(*cycles, 8);
            assert_eq!(metrics.cycles, 8);
            assert_eq!(metrics.sink_over_budget, 8);
        }
        other => panic!("unexpected {other}"),
    }
    assert_eq!(sink.accepted, 8);
}

#[test]
fn corrupt_datagrams_are_counted_and_the_loop_continues() {
    let frames = synth_motion(MotionPattern::ArmWave, 100.0, 1.0, 0.0, 0);
    let schedule: Vec<(u64, Vec<u8>)> = frames
        .iter()
        .filter(|f| f.seq % 10 != 7) // gaps
        .map(|f| {
            let mut bytes = encode_frame(f);
            if f.seq % 10 == 3 {
                bytes[40] ^= 0x10;
            }
            (f.timestamp_us, bytes)
        })
        .collect();
    let mut source = ScheduledDatagramSource::new(schedule, 23);
    let mut sink = MemorySink::default();
    let metrics = run_virtual(&mut source, &mut sink, &LoopConfig::with_rate(100.0));
    let stream = metrics.stream.as_ref().unwrap();
    assert_eq!(stream.rejected, 10);
    assert_eq!(stream.received, 80);
    // Every gap is a missing sequence number, whether skipped or corrupted.
    assert_eq!(stream.dropped, 20);
    assert_eq!(metrics.frames_consumed, 80);
    assert_eq!(metrics.hold_commands, 20);
    assert_eq!(metrics.commands, 100);
}

#[test]
fn measured_dt_mode_runs() {
    let config = LoopConfig {
        dt_mode: DtMode::Measured,
        ..LoopConfig::with_rate(250.0)
    };
    let mut sink = MemorySink::default();
    let metrics = run_virtual(&mut synth(MotionPattern::Squat, 100.0, 100), &mut sink, &config);
    assert_eq!(metrics.frames_consumed, 100);
}

#[test]
fn udp_source_feeds_wall_clock_loop() {
    let clock = MonotonicClock::new();
    let mut source = UdpSource::bind("127.0.0.1:0", 23, clock).unwrap();
    let target = source.local_addr();
    let sender = std::thread::spawn(move || {
        let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
        for f in synth_motion(MotionPattern::ArmWave, 100.0, 0.5, 0.0, 0) {
            socket.send_to(&encode_frame(&f), target).unwrap();
            std::thread::sleep(Duration::from_millis(10));
        }
    });
    let config = LoopConfig {
        duration: Some(Duration::from_millis(800)),
        sink_budget: Duration::from_millis(50),
        ..LoopConfig::default()
    };
    let mut sink = MemorySink::default();
    let metrics = run_loop(&mut source, &mut retargeter(), &mut sink, &mut { clock }, &config).unwrap();
    sender.join().unwrap();
    assert!(metrics.frames_consumed > 10, "{metrics:?}");
    assert_eq!(metrics.frames_consumed + metrics.frames_overwritten, metrics.frames_written);
    assert_eq!(metrics.stream.as_ref().unwrap().received, metrics.frames_written);
    assert_sink_order(&sink.commands);
}

#[test]
fn threaded_replay_drains_and_stops() {
    let clock = MonotonicClock::new();
    let replay = Replay::new(synth_motion(MotionPattern::Squat, 100.0, 0.2, 0.0, 0), 1.0).unwrap();
    let mut source = ThreadedReplaySource::new(replay, clock);
    let config = LoopConfig {
        sink_budget: Duration::from_millis(50),
        max_cycles: Some(5_000),
        ..LoopConfig::default()
    };
    let metrics = run_loop(&mut source, &mut retargeter(), &mut MemorySink::default(), &mut { clock }, &config).unwrap();
    assert_eq!(metrics.frames_written, 20);
    assert_eq!(metrics.frames_consumed + metrics.frames_overwritten, 20);
    assert!(metrics.cycles < 5_000);
}

#[test]
fn unpaced_replay_gives_each_frame_a_cycle() {
    let frames = synth_motion(MotionPattern::WalkCycle, 100.0, 0.5, 0.0, 0);
    let replay = Replay::new(frames, f64::INFINITY).unwrap();
    let mut source = ScheduledSource::from_replay(&replay);
    let mut sink = MemorySink::default();
    let metrics = run_virtual(&mut source, &mut sink, &LoopConfig::default());
    assert_eq!(metrics.frames_consumed, 50);
    assert_eq!(metrics.commands, 50);
    assert_eq!(metrics.frames_overwritten, 0);
}

#[test]
fn metrics_dump_is_key_value() {
    let metrics = run_virtual(&mut synth(MotionPattern::Static, 100.0, 10), &mut MemorySink::default(), &LoopConfig::default());
    let text = metrics.to_key_values();
    for line in text.lines() {
        let (key, value) = line.split_once('=').unwrap();
        assert!(!key.is_empty() && !value.is_empty(), "{line}");
    }
    assert!(text.contains("commands=46\n"));
    assert!(text.contains("compute_hist="));
}
