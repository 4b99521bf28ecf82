//! The `teleop` command line: `run`, `validate`, `gen` and `bench`.
//!
//! Machine-readable output goes to the writer handed to each command
//! (standard output for the binary); diagnostics go through `log`.
//! Exit codes: 0 success, 1 violations or sink backpressure, 2 usage or
//! configuration errors.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use thiserror::Error;

use teleop_core::model::{sample, ConfigError, HumanSkeleton, RetargetMap, RobotModel};
use teleop_core::retarget::{JointCommand, Retargeter};
use teleop_core::runtime::wire::{read_trace, WireError};
use teleop_core::runtime::{
    percentile, run_loop, Clock, DatagramSink, DtMode, FanoutSink, FrameSource, LoopConfig, LoopError, LoopMetrics,
    MonotonicClock, NullSink, ScheduledSource, Sink, SinkError, SynthSource, ThreadedReplaySource, TraceSink, UdpSource,
    ValidatorSink, VirtualClock,
};
use teleop_core::stream::{read_recording, write_recording, MotionPattern, Replay, StreamError, SynthMotion};
use teleop_core::validate::{validate_trace, Thresholds, ValidateError, DEFAULT_ACCELERATION_LIMIT};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Config { path: PathBuf, source: ConfigError },
    #[error("{}: {source}", path.display())]
    Recording { path: PathBuf, source: StreamError },
    #[error("{}: {source}", path.display())]
    Trace { path: PathBuf, source: WireError },
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error(transparent)]
    Loop(LoopError),
    #[error("writing output: {0}")]
    Output(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Loop(LoopError::SinkBackpressure { .. }) => 1,
            _ => 2,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    /// Ran, but validation found violations.
    Fail,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "teleop", version, about = "Retarget motion-capture streams onto a humanoid joint model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the control loop from a source into one or more sinks.
    Run(RunArgs),
    /// Audit a command trace file against a robot model.
    Validate(ValidateArgs),
    /// Write a synthetic MOCREC01 recording.
    Gen(GenArgs),
    /// Measure per-cycle compute time and frame age with a null sink.
    Bench(BenchArgs),
}

/// Model files. Any file left out falls back to the built-in sample.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Robot model file [default: built-in 23-joint sample].
    #[arg(long, value_name = "PATH")]
    pub robot: Option<PathBuf>,
    /// Human skeleton file [default: built-in 23-segment layout].
    #[arg(long, value_name = "PATH")]
    pub skeleton: Option<PathBuf>,
    /// Retargeting map file [default: built-in sample map].
    #[arg(long, value_name = "PATH")]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    /// Acceleration limit in rad/s².
    #[arg(long, value_name = "RAD_PER_S2", default_value_t = DEFAULT_ACCELERATION_LIMIT)]
    pub accel_limit: f64,
    /// Skip the acceleration check.
    #[arg(long)]
    pub no_accel: bool,
    /// Skip the velocity check against each joint's vmax.
    #[arg(long)]
    pub no_velocity: bool,
    /// Skip the self-collision check.
    #[arg(long)]
    pub no_collision: bool,
    /// Extra clearance between collision spheres, meters.
    #[arg(long, value_name = "METERS", default_value_t = 0.0)]
    pub margin: f64,
}

impl Default for ThresholdArgs {
    fn default() -> Self {
        ThresholdArgs {
            accel_limit: DEFAULT_ACCELERATION_LIMIT,
            no_accel: false,
            no_velocity: false,
            no_collision: false,
            margin: 0.0,
        }
    }
}

impl ThresholdArgs {
    pub fn thresholds(&self, model: &RobotModel, rate_hz: f64) -> Result<Thresholds, CliError> {
        if !(self.accel_limit > 0.0) {
            return Err(CliError::Usage("--accel-limit must be positive".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(CliError::Usage("--margin must be non-negative".into()));
        }
        let mut t = Thresholds::from_model(model, rate_hz);
        t.acceleration = (!self.no_accel).then_some(self.accel_limit);
        if self.no_velocity {
            t.velocity = None;
        }
        t.collision_margin = (!self.no_collision).then_some(self.margin);
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum DtArg {
    #[default]
    Nominal,
    Measured,
}

/// Where frames come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    /// `synth:<pattern>`
    Synth(MotionPattern),
    /// `replay:<path>`
    Replay(PathBuf),
    /// `live:<port>` or `live:<addr:port>`
    Live(String),
}

impl FromStr for SourceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("synth", p)) => p.parse().map(SourceSpec::Synth),
            Some(("replay", p)) if !p.is_empty() => Ok(SourceSpec::Replay(p.into())),
            Some(("live", a)) if !a.is_empty() => Ok(SourceSpec::Live(if a.contains(':') {
                a.to_string()
            } else {
                format!("0.0.0.0:{a}")
            })),
            _ => Err(format!("expected synth:<pattern>, replay:<path> or live:<port>, found `{s}`")),
        }
    }
}

/// Where commands go.
#[derive(Debug, Clone, PartialEq)]
pub enum SinkSpec {
    /// `trace:<path>`
    Trace(PathBuf),
    /// `udp:<host:port>`
    Datagram(String),
    /// `validate`
    Validate,
    /// `null`
    Null,
}

impl FromStr for SinkSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("trace", p)) if !p.is_empty() => Ok(SinkSpec::Trace(p.into())),
            Some(("udp", a)) if !a.is_empty() => Ok(SinkSpec::Datagram(a.to_string())),
            None if s == "validate" => Ok(SinkSpec::Validate),
            None if s == "null" => Ok(SinkSpec::Null),
            _ => Err(format!("expected trace:<path>, udp:<host:port>, validate or null, found `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Frame source: synth:<pattern>, replay:<path> or live:<port>.
    #[arg(long, value_name = "SPEC")]
    pub source: SourceSpec,
    /// Command sink: trace:<path>, udp:<host:port>, validate or null. Repeatable.
    #[arg(long = "sink", value_name = "SPEC", required = true)]
    pub sinks: Vec<SinkSpec>,
    /// Control loop rate in Hz.
    #[arg(long, default_value_t = 500.0)]
    pub rate: f64,
    /// Stop after this many control cycles (one command each).
    #[arg(long)]
    pub frames: Option<u64>,
    /// Stop after this many seconds of loop time.
    #[arg(long, value_name = "SECONDS")]
    pub duration: Option<f64>,
    /// Override every joint's filter time constant, seconds (0 disables smoothing).
    #[arg(long, value_name = "SECONDS")]
    pub tau: Option<f64>,
    /// Filter timestep: the nominal period, or measured time between frames.
    #[arg(long, value_enum, default_value_t = DtArg::Nominal)]
    pub dt: DtArg,
    /// Seed for synthetic noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise standard deviation for synthetic sources, radians.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Frame rate of synthetic sources, Hz.
    #[arg(long, default_value_t = 100.0)]
    pub source_rate: f64,
    /// Replay speed factor; `inf` releases one frame per cycle.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Pace the loop on the wall clock (always on for live sources).
    #[arg(long)]
    pub realtime: bool,
    /// Per-command sink time budget, microseconds.
    #[arg(long, value_name = "US", default_value_t = 1000)]
    pub sink_budget_us: u64,
    /// Consecutive over-budget cycles before the run aborts.
    #[arg(long, default_value_t = 8)]
    pub backpressure: u32,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Robot model file [default: built-in 23-joint sample].
    #[arg(long, value_name = "PATH")]
    pub robot: Option<PathBuf>,
    /// CMDTRC01 trace file.
    #[arg(long, value_name = "PATH")]
    pub trace: PathBuf,
    /// Loop rate the trace was recorded at, Hz.
    #[arg(long, default_value_t = 500.0)]
    pub rate: f64,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// static, arm-wave, squat or walk-cycle.
    #[arg(long)]
    pub pattern: MotionPattern,
    /// Frame rate, Hz.
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    /// Seconds of motion.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Noise standard deviation, radians.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output recording path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Synthetic motion driving the benchmark.
    #[arg(long, default_value = "arm-wave")]
    pub pattern: MotionPattern,
    /// Control loop rate, Hz.
    #[arg(long, default_value_t = 500.0)]
    pub rate: f64,
    /// Synthetic source rate, Hz.
    #[arg(long, default_value_t = 100.0)]
    pub source_rate: f64,
    /// Control cycles per repetition.
    #[arg(long, default_value_t = 10_000)]
    pub frames: u64,
    /// Number of repetitions pooled into the statistics.
    #[arg(long, default_value_t = 1)]
    pub repetitions: u32,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pace cycles on the wall clock instead of running back to back.
    #[arg(long)]
    pub realtime: bool,
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Validate(args) => cmd_validate(&args, out),
        Command::Gen(args) => cmd_gen(&args, out).map(|_| Outcome::Pass),
        Command::Bench(args) => cmd_bench(&args, out).map(|_| Outcome::Pass),
    };
    match result {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            if let CliError::Loop(err) = &e {
                if let Some(metrics) = err.metrics() {
                    let _ = out.write_all(metrics.to_key_values().as_bytes());
                }
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load<T>(path: Option<&Path>, fallback: impl FnOnce() -> T, parse: impl FnOnce(&str) -> Result<T, ConfigError>) -> Result<T, CliError> {
    match path {
        None => Ok(fallback()),
        Some(path) => parse(&read_text(path)?).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        }),
    }
}

pub fn load_robot(path: Option<&Path>) -> Result<RobotModel, CliError> {
    load(path, sample::robot, RobotModel::parse)
}

impl ModelArgs {
    pub fn load(&self) -> Result<(RobotModel, HumanSkeleton, RetargetMap), CliError> {
        let model = load_robot(self.robot.as_deref())?;
        let skeleton = load(self.skeleton.as_deref(), sample::skeleton, HumanSkeleton::parse)?;
        let map = match &self.map {
            None => RetargetMap::parse(sample::MAP, &skeleton, &model).map_err(|source| CliError::Config {
                path: "<built-in map>".into(),
                source,
            })?,
            Some(path) => RetargetMap::parse(&read_text(path)?, &skeleton, &model).map_err(|source| CliError::Config {
                path: path.clone(),
                source,
            })?,
        };
        Ok((model, skeleton, map))
    }
}

fn check_rate(name: &str, rate: f64) -> Result<(), CliError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must be a positive number of Hz, got {rate}")))
    }
}

/// Trace, datagram and null sinks plus an optional validator kept apart so
/// its report can be read after the run.
struct RunSinks {
    others: FanoutSink,
    validator: Option<ValidatorSink>,
}

impl Sink for RunSinks {
    fn accept(&mut self, command: &JointCommand) -> Result<(), SinkError> {
        let mut result = self.others.accept(command);
        if let Some(v) = &mut self.validator {
            if let Err(e) = v.accept(command) {
                result = result.and(Err(e));
            }
        }
        result
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        self.others.finish()
    }
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    check_rate("--rate", args.rate)?;
    check_rate("--source-rate", args.source_rate)?;
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        return Err(CliError::Usage("--noise must be non-negative".into()));
    }
    if args.backpressure == 0 {
        return Err(CliError::Usage("--backpressure must be at least 1".into()));
    }
    let duration = match args.duration {
        Some(d) if d > 0.0 && d.is_finite() => Some(Duration::from_secs_f64(d)),
        Some(d) => return Err(CliError::Usage(format!("--duration must be positive, got {d}"))),
        None => None,
    };
    if matches!(args.source, SourceSpec::Synth(_)) && args.frames.is_none() && duration.is_none() {
        return Err(CliError::Usage("a synth source needs --frames or --duration".into()));
    }

    let (model, skeleton, map) = args.model.load()?;
    let thresholds = args.thresholds.thresholds(&model, args.rate)?;
    let mut retargeter = Retargeter::new(model.clone(), skeleton.clone(), map);
    if let Some(tau) = args.tau {
        retargeter = retargeter
            .with_tau(tau)
            .map_err(|e| CliError::Usage(format!("--tau: {e}")))?;
    }

    let live = matches!(args.source, SourceSpec::Live(_));
    let wall = MonotonicClock::new();
    let realtime = args.realtime || live;
    let mut source: Box<dyn FrameSource> = match &args.source {
        SourceSpec::Synth(pattern) => {
            let motion = SynthMotion::new(*pattern, args.source_rate, args.noise, args.seed, &skeleton);
            Box::new(SynthSource::new(motion, None))
        }
        SourceSpec::Replay(path) => {
            let bytes = std::fs::read(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            let recording = read_recording(&bytes).map_err(|source| CliError::Recording {
                path: path.clone(),
                source,
            })?;
            let replay = Replay::new(recording.frames, args.speed).map_err(|source| CliError::Recording {
                path: path.clone(),
                source,
            })?;
            if realtime {
                Box::new(ThreadedReplaySource::new(replay, wall))
            } else {
                Box::new(ScheduledSource::from_replay(&replay))
            }
        }
        SourceSpec::Live(address) => Box::new(UdpSource::bind(address.as_str(), skeleton.len(), wall).map_err(|source| {
            CliError::Io {
                path: address.into(),
                source,
            }
        })?),
    };

    let mut sinks = RunSinks {
        others: FanoutSink::default(),
        validator: None,
    };
    for spec in &args.sinks {
        match spec {
            SinkSpec::Trace(path) => sinks.others.sinks.push(Box::new(TraceSink::create(path).map_err(|source| {
                CliError::Io {
                    path: path.clone(),
                    source,
                }
            })?)),
            SinkSpec::Datagram(address) => sinks.others.sinks.push(Box::new(DatagramSink::new(address.as_str()).map_err(
                |source| CliError::Io {
                    path: address.into(),
                    source,
                },
            )?)),
            SinkSpec::Validate => {
                if sinks.validator.is_some() {
                    return Err(CliError::Usage("--sink validate given twice".into()));
                }
                sinks.validator = Some(ValidatorSink::new(model.clone(), thresholds.clone()));
            }
            SinkSpec::Null => sinks.others.sinks.push(Box::new(NullSink)),
        }
    }

    let config = LoopConfig {
        rate_hz: args.rate,
        max_cycles: args.frames,
        duration,
        dt_mode: match args.dt {
            DtArg::Nominal => DtMode::Nominal,
            DtArg::Measured => DtMode::Measured,
        },
        sink_budget: Duration::from_micros(args.sink_budget_us),
        backpressure_cycles: args.backpressure,
        keep_compute_samples: false,
    };
    info!("running at {} Hz, {} clock", args.rate, if realtime { "wall" } else { "virtual" });
    let mut virtual_clock = VirtualClock::new();
    let mut wall_clock = wall;
    let clock: &mut dyn Clock = if realtime { &mut wall_clock } else { &mut virtual_clock };
    let metrics = run_loop(source.as_mut(), &mut retargeter, &mut sinks, clock, &config).map_err(CliError::Loop)?;

    out.write_all(metrics.to_key_values().as_bytes())?;
    match &sinks.validator {
        Some(validator) => {
            let report = validator.report();
            out.write_all(report.to_text().as_bytes())?;
            Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
        }
        None => Ok(Outcome::Pass),
    }
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    check_rate("--rate", args.rate)?;
    let model = load_robot(args.robot.as_deref())?;
    let bytes = std::fs::read(&args.trace).map_err(|source| CliError::Io {
        path: args.trace.clone(),
        source,
    })?;
    let trace = read_trace(&bytes).map_err(|source| CliError::Trace {
        path: args.trace.clone(),
        source,
    })?;
    let thresholds = args.thresholds.thresholds(&model, args.rate)?;
    let report = validate_trace(&model, &trace, &thresholds)?;
    out.write_all(report.to_text().as_bytes())?;
    Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
}

/// Writes the recording and returns the number of frames.
pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<usize, CliError> {
    check_rate("--rate", args.rate)?;
    if !(args.duration > 0.0 && args.duration.is_finite()) {
        return Err(CliError::Usage("--duration must be positive".into()));
    }
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        return Err(CliError::Usage("--noise must be non-negative".into()));
    }
    let count = (args.rate * args.duration).round() as usize;
    let skeleton = sample::skeleton();
    let frames: Vec<_> = SynthMotion::new(args.pattern, args.rate, args.noise, args.seed, &skeleton)
        .take(count)
        .collect();
    let io_err = |source| CliError::Io {
        path: args.out.clone(),
        source,
    };
    let file = std::fs::File::create(&args.out).map_err(io_err)?;
    write_recording(io::BufWriter::new(file), &frames).map_err(|source| CliError::Recording {
        path: args.out.clone(),
        source,
    })?;
    writeln!(out, "frames={count}")?;
    writeln!(out, "path={}", args.out.display())?;
    Ok(count)
}

/// Pooled latency statistics from [`cmd_bench`].
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub joints: usize,
    pub repetitions: u32,
    pub cycles: u64,
    pub compute_p50_ns: u64,
    pub compute_p99_ns: u64,
    pub compute_max_ns: u64,
    pub compute_mean_ns: f64,
    pub frame_age_p50_us: u64,
    pub frame_age_p99_us: u64,
    pub frame_age_max_us: u64,
}

impl BenchReport {
    pub fn to_key_values(&self) -> String {
        let us = |ns: u64| ns as f64 / 1_000.0;
        let mut s = String::new();
        let _ = writeln!(s, "bench_joints={}", self.joints);
        let _ = writeln!(s, "bench_repetitions={}", self.repetitions);
        let _ = writeln!(s, "bench_cycles={}", self.cycles);
        let _ = writeln!(s, "compute_p50_us={:.3}", us(self.compute_p50_ns));
        let _ = writeln!(s, "compute_p99_us={:.3}", us(self.compute_p99_ns));
        let _ = writeln!(s, "compute_max_us={:.3}", us(self.compute_max_ns));
        let _ = writeln!(s, "compute_mean_us={:.3}", self.compute_mean_ns / 1_000.0);
        let _ = writeln!(s, "frame_age_p50_us={}", self.frame_age_p50_us);
        let _ = writeln!(s, "frame_age_p99_us={}", self.frame_age_p99_us);
        let _ = writeln!(s, "frame_age_max_us={}", self.frame_age_max_us);
        s
    }
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<BenchReport, CliError> {
    if args.repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be at least 1".into()));
    }
    if args.frames == 0 {
        return Err(CliError::Usage("--frames must be at least 1".into()));
    }
    check_rate("--rate", args.rate)?;
    check_rate("--source-rate", args.source_rate)?;
    let (model, skeleton, map) = args.model.load()?;
    let config = LoopConfig {
        rate_hz: args.rate,
        max_cycles: Some(args.frames),
        keep_compute_samples: true,
        // A null sink cannot stall; keep scheduler hiccups from aborting a measurement.
        sink_budget: Duration::from_secs(1),
        ..LoopConfig::default()
    };
    let mut pooled = LoopMetrics::default();
    for rep in 0..args.repetitions {
        let mut retargeter = Retargeter::new(model.clone(), skeleton.clone(), map.clone());
        let motion = SynthMotion::new(args.pattern, args.source_rate, args.noise, args.seed + rep as u64, &skeleton);
        let mut source = SynthSource::new(motion, None);
        let metrics = if args.realtime {
            run_loop(&mut source, &mut retargeter, &mut NullSink, &mut MonotonicClock::new(), &config)
        } else {
            run_loop(&mut source, &mut retargeter, &mut NullSink, &mut VirtualClock::new(), &config)
        }
        .map_err(CliError::Loop)?;
        pooled.cycles += metrics.cycles;
        pooled.compute_samples_ns.extend(metrics.compute_samples_ns);
        pooled.frame_age_samples_us.extend(metrics.frame_age_samples_us);
    }
    let compute = &pooled.compute_samples_ns;
    let ages = &pooled.frame_age_samples_us;
    let report = BenchReport {
        joints: model.joint_count(),
        repetitions: args.repetitions,
        cycles: pooled.cycles,
        compute_p50_ns: percentile(compute, 0.50).unwrap_or(0),
        compute_p99_ns: percentile(compute, 0.99).unwrap_or(0),
        compute_max_ns: compute.iter().copied().max().unwrap_or(0),
        compute_mean_ns: compute.iter().sum::<u64>() as f64 / compute.len().max(1) as f64,
        frame_age_p50_us: percentile(ages, 0.50).unwrap_or(0),
        frame_age_p99_us: percentile(ages, 0.99).unwrap_or(0),
        frame_age_max_us: ages.iter().copied().max().unwrap_or(0),
    };
    out.write_all(report.to_key_values().as_bytes())?;
    Ok(report)
}
