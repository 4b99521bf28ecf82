//! Kinematic audit of command traces.
//!
//! Four checks per sample, all against the robot model:
//!
//! * `limit`: the angle lies inside the joint's soft interval.
//! * `velocity`: the backward difference over the nominal period stays
//!   within the joint's `vmax`.
//! * `acceleration`: the second difference over the period squared stays
//!   within a single threshold (optional).
//! * `self-collision`: after forward kinematics, no pair of collision
//!   spheres on non-adjacent, non-excluded links is closer than the sum of
//!   radii plus a margin.
//!
//! Hold commands are checked like any other sample.

use std::fmt;

use thiserror::Error;

use crate::model::RobotModel;
use crate::retarget::JointCommand;
use crate::DimensionMismatch;

pub const DEFAULT_ACCELERATION_LIMIT: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidateError {
    #[error(transparent)]
    DimensionMismatch(#[from] DimensionMismatch),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("traces differ in shape: {0}")]
    ShapeMismatch(String),
}

/// Which checks run, and against what.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    /// Time between consecutive samples, seconds.
    pub period_s: f64,
    pub check_limits: bool,
    /// Per-joint velocity limits in rad/s.
    pub velocity: Option<Vec<f64>>,
    /// rad/s².
    pub acceleration: Option<f64>,
    /// Extra clearance in meters required between spheres.
    pub collision_margin: Option<f64>,
}

impl Thresholds {
    /// Every check enabled: velocity against the model's `vmax`,
    /// acceleration at the default limit, zero collision margin.
    pub fn from_model(model: &RobotModel, rate_hz: f64) -> Self {
        Thresholds {
            period_s: 1.0 / rate_hz,
            check_limits: true,
            velocity: Some(model.joints().iter().map(|j| j.vmax).collect()),
            acceleration: Some(DEFAULT_ACCELERATION_LIMIT),
            collision_margin: Some(0.0),
        }
    }

    pub fn limits_only(rate_hz: f64) -> Self {
        Thresholds {
            period_s: 1.0 / rate_hz,
            check_limits: true,
            velocity: None,
            acceleration: None,
            collision_margin: None,
        }
    }

    pub fn without_acceleration(mut self) -> Self {
        self.acceleration = None;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    Limit,
    Velocity,
    Acceleration,
    SelfCollision,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 4] = [
        ViolationKind::Limit,
        ViolationKind::Velocity,
        ViolationKind::Acceleration,
        ViolationKind::SelfCollision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Limit => "limit",
            ViolationKind::Velocity => "velocity",
            ViolationKind::Acceleration => "acceleration",
            ViolationKind::SelfCollision => "self-collision",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Index of the sample in the trace.
    pub cycle: usize,
    /// Joint name, or `link/i:link/j` for a sphere pair.
    pub subject: String,
    /// Angle, |velocity|, |acceleration| or center distance.
    pub value: f64,
    /// Violated bound; for limits, the soft bound that was crossed.
    pub threshold: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {:.6} {:.6}", self.kind, self.cycle, self.subject, self.value, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub thresholds: Thresholds,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    pub fn of_kind(&self, kind: ViolationKind) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.kind == kind)
    }

    /// Report text: `#` header lines, one `kind cycle subject value threshold`
    /// line per violation, then a `# verdict=` line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let t = &self.thresholds;
        let on = |b: bool| if b { "on" } else { "off" };
        out.push_str("# teleop validation report\n");
        out.push_str(&format!("# samples={} period_s={}\n", self.samples, t.period_s));
        out.push_str(&format!(
            "# checks limit={} velocity={} acceleration={} self-collision={}\n",
            on(t.check_limits),
            on(t.velocity.is_some()),
            t.acceleration.map_or("off".to_string(), |a| format!("{a}rad/s2")),
            t.collision_margin.map_or("off".to_string(), |m| format!("margin={m}m")),
        ));
        if t.velocity.is_some() {
            out.push_str("# velocity threshold is each joint's model vmax, a proxy for abrupt motion; re-threshold as needed\n");
        }
        out.push_str("# columns: kind cycle subject value threshold\n");
        for v in &self.violations {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let counts: Vec<String> = ViolationKind::ALL
            .iter()
            .map(|&k| format!("{}={}", k, self.count(k)))
            .collect();
        out.push_str(&format!("# counts {}\n", counts.join(" ")));
        out.push_str(&format!("# verdict={}\n", if self.passed() { "pass" } else { "fail" }));
        out
    }
}

/// Checks samples one at a time, keeping the two previous samples for the
/// finite differences.
#[derive(Debug, Clone)]
pub struct IncrementalValidator {
    model: RobotModel,
    thresholds: Thresholds,
    history: [Option<Vec<f64>>; 2],
    cycle: usize,
    violations: Vec<Violation>,
}

impl IncrementalValidator {
    pub fn new(model: RobotModel, thresholds: Thresholds) -> Self {
        if let Some(v) = &thresholds.velocity {
            assert_eq!(v.len(), model.joint_count(), "one velocity limit per joint");
        }
        IncrementalValidator {
            model,
            thresholds,
            history: [None, None],
            cycle: 0,
            violations: Vec::new(),
        }
    }

    pub fn samples(&self) -> usize {
        self.cycle
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn push(&mut self, angles: &[f64]) -> Result<(), DimensionMismatch> {
        DimensionMismatch::check(self.model.joint_count(), angles.len())?;
        let cycle = self.cycle;
        let t = &self.thresholds;
        let joints = self.model.joints();

        if t.check_limits {
            for (joint, &a) in joints.iter().zip(angles) {
                // Soft bounds are recomputed exactly as the clamp computes them,
                // so a clamped value sits on the bound, not past it.
                if a < joint.soft_min() || a > joint.soft_max() || a.is_nan() {
                    let threshold = if a < joint.soft_min() { joint.soft_min() } else { joint.soft_max() };
                    self.violations.push(Violation {
                        kind: ViolationKind::Limit,
                        cycle,
                        subject: joint.name.clone(),
                        value: a,
                        threshold,
                    });
                }
            }
        }

        if let (Some(limits), Some(prev)) = (&t.velocity, &self.history[0]) {
            for (i, joint) in joints.iter().enumerate() {
                let v = ((angles[i] - prev[i]) / t.period_s).abs();
                if v > limits[i] {
                    self.violations.push(Violation {
                        kind: ViolationKind::Velocity,
                        cycle,
                        subject: joint.name.clone(),
                        value: v,
                        threshold: limits[i],
                    });
                }
            }
        }

        if let (Some(limit), Some(prev), Some(prev2)) = (t.acceleration, &self.history[0], &self.history[1]) {
            for (i, joint) in joints.iter().enumerate() {
                let a = ((angles[i] - 2.0 * prev[i] + prev2[i]) / (t.period_s * t.period_s)).abs();
                if a > limit {
                    self.violations.push(Violation {
                        kind: ViolationKind::Acceleration,
                        cycle,
                        subject: joint.name.clone(),
                        value: a,
                        threshold: limit,
                    });
                }
            }
        }

        if let Some(margin) = t.collision_margin {
            for (a, b, distance, limit) in colliding_pairs(&self.model, angles, margin)? {
                self.violations.push(Violation {
                    kind: ViolationKind::SelfCollision,
                    cycle,
                    subject: format!("{}:{}", self.model.sphere_label(a), self.model.sphere_label(b)),
                    value: distance,
                    threshold: limit,
                });
            }
        }

        self.history.swap(0, 1);
        match &mut self.history[0] {
            Some(v) => v.copy_from_slice(angles),
            slot => *slot = Some(angles.to_vec()),
        }
        self.cycle += 1;
        Ok(())
    }

    pub fn report(&self) -> ValidationReport {
        ValidationReport {
            samples: self.cycle,
            thresholds: self.thresholds.clone(),
            violations: self.violations.clone(),
        }
    }
}

/// Sphere pairs closer than `r1 + r2 + margin`, as
/// `(sphere a, sphere b, center distance, r1 + r2 + margin)`.
pub fn colliding_pairs(
    model: &RobotModel,
    angles: &[f64],
    margin: f64,
) -> Result<Vec<(usize, usize, f64, f64)>, DimensionMismatch> {
    let centers = sphere_centers(model, angles)?;
    let spheres = model.spheres();
    Ok(model
        .collision_pairs()
        .iter()
        .filter_map(|&(a, b)| {
            let distance = centers[a].distance(centers[b]);
            let limit = spheres[a].radius + spheres[b].radius + margin;
            (distance < limit).then_some((a, b, distance, limit))
        })
        .collect())
}

/// World-frame sphere centers for one configuration.
pub fn sphere_centers(model: &RobotModel, angles: &[f64]) -> Result<Vec<crate::geometry::Vec3>, DimensionMismatch> {
    let links = model.forward_kinematics(angles)?;
    Ok(model
        .spheres()
        .iter()
        .zip(model.sphere_links())
        .map(|(s, &link)| links[link].transform_point(s.center))
        .collect())
}

pub fn validate_trace(
    model: &RobotModel,
    trace: &[JointCommand],
    thresholds: &Thresholds,
) -> Result<ValidationReport, ValidateError> {
    if trace.is_empty() {
        return Err(ValidateError::EmptyTrace);
    }
    let mut validator = IncrementalValidator::new(model.clone(), thresholds.clone());
    for command in trace {
        validator.push(&command.angles)?;
    }
    Ok(validator.report())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDiff {
    pub tolerance: f64,
    /// Max |a - b| over joints, per sample.
    pub per_sample: Vec<f64>,
    /// First sample whose difference exceeds the tolerance.
    pub first_divergence: Option<usize>,
}

impl TraceDiff {
    pub fn equal(&self) -> bool {
        self.first_divergence.is_none()
    }

    pub fn max_diff(&self) -> f64 {
        self.per_sample.iter().cloned().fold(0.0, f64::max)
    }
}

/// Compares joint angles sample by sample. Metadata (timestamps, flags) is
/// not compared.
pub fn compare_traces(a: &[JointCommand], b: &[JointCommand], tolerance: f64) -> Result<TraceDiff, ValidateError> {
    if a.len() != b.len() {
        return Err(ValidateError::ShapeMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    let mut per_sample = Vec::with_capacity(a.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.angles.len() != y.angles.len() {
            return Err(ValidateError::ShapeMismatch(format!(
                "sample {i}: {} vs {} joints",
                x.angles.len(),
                y.angles.len()
            )));
        }
        let d = x
            .angles
            .iter()
            .zip(&y.angles)
            .map(|(p, q)| if p == q { 0.0 } else { (p - q).abs() })
            .fold(0.0, |m: f64, d| if d.is_nan() || d > m { d } else { m });
        per_sample.push(d);
    }
    let first_divergence = per_sample.iter().position(|&d| d > tolerance || d.is_nan());
    Ok(TraceDiff {
        tolerance,
        per_sample,
        first_divergence,
    })
}
