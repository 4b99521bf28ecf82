//! One retargeting step: project a frame onto joint angles, smooth, clamp.
//!
//! The stage order is fixed at map → smooth → clamp. Clamping last means
//! no emitted angle can leave the soft interval, whatever the filter does.

use thiserror::Error;

use crate::model::{HumanSkeleton, RetargetMap, RetargetRule, RobotModel};
use crate::runtime::Clock;
use crate::stream::MocapFrame;
use crate::DimensionMismatch;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetargetError {
    #[error(transparent)]
    DimensionMismatch(#[from] DimensionMismatch),
    #[error("timestep must be positive and finite, got {0}")]
    InvalidTimestep(f64),
    #[error("filter time constant must be finite and non-negative, got {0}")]
    InvalidTimeConstant(f64),
}

/// Joint angles projected from one frame, before smoothing or clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedAngles {
    pub angles: Vec<f64>,
    /// Triple rules whose decomposition hit the gimbal band.
    pub gimbal_warnings: u32,
}

/// Projects `frame` onto the robot's joints.
///
/// Twist rules take `sign * scale * twist + offset`; triple rules apply the
/// same per-angle transform to an Euler decomposition. Unmapped joints sit
/// at their default angle. No limits are applied here.
pub fn map_frame(
    map: &RetargetMap,
    skeleton: &HumanSkeleton,
    model: &RobotModel,
    frame: &MocapFrame,
) -> Result<MappedAngles, DimensionMismatch> {
    DimensionMismatch::check(skeleton.len(), frame.segments.len())?;
    let mut angles = model.defaults();
    let mut gimbal_warnings = 0;
    for rule in map.rules() {
        match rule {
            RetargetRule::Twist(r) => {
                let twist = frame.segments[r.segment].twist_angle(r.axis);
                angles[r.joint] = r.apply(twist);
            }
            RetargetRule::Triple(r) => {
                let euler = frame.segments[r.segment].euler_decompose(r.order);
                gimbal_warnings += euler.gimbal as u32;
                for n in 0..3 {
                    angles[r.joints[n]] = r.apply(n, euler.angles[n]);
                }
            }
        }
    }
    Ok(MappedAngles {
        angles,
        gimbal_warnings,
    })
}

/// Clamps each angle into its joint's soft interval. The flag is set
/// exactly when clamping changed the value.
pub fn enforce_limits(model: &RobotModel, raw: &[f64]) -> Result<(Vec<f64>, Vec<bool>), DimensionMismatch> {
    DimensionMismatch::check(model.joint_count(), raw.len())?;
    let mut clamped = Vec::with_capacity(raw.len());
    let mut flags = Vec::with_capacity(raw.len());
    for (joint, &angle) in model.joints().iter().zip(raw) {
        let c = joint.clamp(angle);
        flags.push(c != angle);
        clamped.push(c);
    }
    Ok((clamped, flags))
}

/// Per-joint first-order low-pass state.
///
/// With `alpha = 1 - exp(-dt / tau)` each update is
/// `y = alpha * x + (1 - alpha) * y_prev`, the exact discretization of a
/// continuous first-order lag, so the response does not depend on the rate.
/// `tau = 0` passes input through. The first update returns its input.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    taus: Vec<f64>,
    previous: Vec<f64>,
    initialized: bool,
}

impl FilterState {
    pub fn new(taus: Vec<f64>) -> Result<Self, RetargetError> {
        if let Some(&bad) = taus.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(RetargetError::InvalidTimeConstant(bad));
        }
        let n = taus.len();
        Ok(FilterState {
            taus,
            previous: vec![0.0; n],
            initialized: false,
        })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn previous(&self) -> &[f64] {
        &self.previous
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn reset(&mut self) {
        self.initialized = false;
    }

    pub fn smooth(&mut self, input: &[f64], dt: f64) -> Result<Vec<f64>, RetargetError> {
        DimensionMismatch::check(self.taus.len(), input.len())?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RetargetError::InvalidTimestep(dt));
        }
        if !self.initialized {
            self.previous.copy_from_slice(input);
            self.initialized = true;
            return Ok(input.to_vec());
        }
        for ((prev, &x), &tau) in self.previous.iter_mut().zip(input).zip(&self.taus) {
            let alpha = if tau == 0.0 { 1.0 } else { 1.0 - (-dt / tau).exp() };
            *prev = alpha * x + (1.0 - alpha) * *prev;
        }
        Ok(self.previous.clone())
    }
}

/// One synchronized vector of joint targets, all from a single source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCommand {
    /// Control-cycle sequence number, assigned by the loop.
    pub seq: u32,
    pub source_seq: u32,
    pub source_timestamp_us: u64,
    pub emitted_us: u64,
    /// Radians, in robot-model joint order.
    pub angles: Vec<f64>,
    /// Set when no fresh frame was available and the previous posture is repeated.
    pub hold: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetargetDiagnostics {
    /// Per joint: clamping changed the smoothed value.
    pub clamped: Vec<bool>,
    pub clamped_count: usize,
    /// Largest distance a smoothed angle sat outside its soft interval.
    pub worst_excursion: f64,
    pub gimbal_warnings: u32,
}

/// map → smooth → clamp, once, for one frame.
#[allow(clippy::too_many_arguments)]
pub fn retarget_step(
    map: &RetargetMap,
    skeleton: &HumanSkeleton,
    model: &RobotModel,
    filter: &mut FilterState,
    frame: &MocapFrame,
    dt: f64,
    clock: &dyn Clock,
) -> Result<(JointCommand, RetargetDiagnostics), RetargetError> {
    let mapped = map_frame(map, skeleton, model, frame)?;
    let smoothed = filter.smooth(&mapped.angles, dt)?;
    let (angles, clamped) = enforce_limits(model, &smoothed)?;

    let worst_excursion = model
        .joints()
        .iter()
        .zip(&smoothed)
        .map(|(j, &a)| (j.soft_min() - a).max(a - j.soft_max()).max(0.0))
        .fold(0.0, f64::max);
    let diagnostics = RetargetDiagnostics {
        clamped_count: clamped.iter().filter(|&&c| c).count(),
        clamped,
        worst_excursion,
        gimbal_warnings: mapped.gimbal_warnings,
    };
    let command = JointCommand {
        seq: 0,
        source_seq: frame.seq,
        source_timestamp_us: frame.timestamp_us,
        emitted_us: clock.now_us(),
        angles,
        hold: false,
    };
    Ok((command, diagnostics))
}

/// Owns the validated configuration and one filter state.
#[derive(Debug, Clone)]
pub struct Retargeter {
    model: RobotModel,
    skeleton: HumanSkeleton,
    map: RetargetMap,
    filter: FilterState,
}

impl Retargeter {
    /// Filter time constants come from the model's joints.
    pub fn new(model: RobotModel, skeleton: HumanSkeleton, map: RetargetMap) -> Self {
        let filter = FilterState::new(model.taus()).expect("model joints carry validated time constants");
        Retargeter {
            model,
            skeleton,
            map,
            filter,
        }
    }

    /// Replaces every joint's time constant.
    pub fn with_tau(mut self, tau: f64) -> Result<Self, RetargetError> {
        self.filter = FilterState::new(vec![tau; self.model.joint_count()])?;
        Ok(self)
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn skeleton(&self) -> &HumanSkeleton {
        &self.skeleton
    }

    pub fn map(&self) -> &RetargetMap {
        &self.map
    }

    pub fn filter(&self) -> &FilterState {
        &self.filter
    }

    pub fn step(
        &mut self,
        frame: &MocapFrame,
        dt: f64,
        clock: &dyn Clock,
    ) -> Result<(JointCommand, RetargetDiagnostics), RetargetError> {
        retarget_step(&self.map, &self.skeleton, &self.model, &mut self.filter, frame, dt, clock)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{EulerOrder, UnitQuaternion, Vec3};
    use crate::model::sample;
    use crate::runtime::VirtualClock;
    use std::f64::consts::FRAC_PI_2;

    fn five_joint_model() -> RobotModel {
        let mut text = String::new();
        let mut parent = "base".to_string();
        for (i, (min, max, soft)) in [(-1.0, 1.0, 0.1), (-2.0, 0.5, 0.0), (0.0, 3.0, 0.2), (-0.5, 0.5, 0.05), (-1.0, 2.0, 0.5)]
            .iter()
            .enumerate()
        {
            text.push_str(&format!(
                "joint j{i} parent={parent} child=l{i} origin=0,0,0.1;1,0,0,0 axis=0,0,1 limits={min},{max} soft={soft} vmax=5 default={}\n",
                (min + max) / 2.0
            ));
            parent = format!("l{i}");
        }
        RobotModel::parse(&text).unwrap()
    }

    #[test]
    fn identity_frame_maps_to_zero() {
        let (model, skeleton, map) = sample::bundle();
        let frame = MocapFrame::identity(0, 0, skeleton.len());
        let mapped = map_frame(&map, &skeleton, &model, &frame).unwrap();
        assert!(mapped.angles.iter().all(|&a| a == 0.0));
        assert_eq!(mapped.gimbal_warnings, 0);
    }

    #[test]
    fn unmapped_joint_holds_default() {
        let skeleton = HumanSkeleton::parse("segment pelvis parent=-\nsegment arm parent=pelvis\n").unwrap();
        let model = RobotModel::parse(
            "joint a parent=base child=l1 origin=0,0,0;1,0,0,0 axis=0,0,1 limits=-1,1 soft=0 vmax=1 default=0\n\
             joint b parent=l1 child=l2 origin=0,0,0;1,0,0,0 axis=0,0,1 limits=-1,1 soft=0 vmax=1 default=0.25\n",
        )
        .unwrap();
        let map = RetargetMap::parse(
            "map a segment=arm axis=0,1,0 sign=+1 scale=2 offset=0.1\nunmapped b\n",
            &skeleton,
            &model,
        )
        .unwrap();
        let frame = MocapFrame::new(0, 0, vec![UnitQuaternion::IDENTITY, UnitQuaternion::from_axis_angle(Vec3::Y, 0.2).unwrap()]);
        let mapped = map_frame(&map, &skeleton, &model, &frame).unwrap();
        assert!((mapped.angles[0] - 0.5).abs() < 1e-12);
        assert_eq!(mapped.angles[1], 0.25);
    }

    #[test]
    fn elbow_quarter_turn_passes_through() {
        let (model, skeleton, _) = sample::bundle();
        let map = RetargetMap::parse(
            &sample::MAP.replace(
                "map left_elbow_joint       segment=left_forearm  axis=0,1,0 sign=-1",
                "map left_elbow_joint       segment=left_forearm  axis=0,1,0 sign=+1",
            ),
            &skeleton,
            &model,
        )
        .unwrap();
        let mut frame = MocapFrame::identity(0, 0, skeleton.len());
        frame.segments[skeleton.index_of("left_forearm").unwrap()] =
            UnitQuaternion::from_axis_angle(Vec3::Y, FRAC_PI_2).unwrap();
        let mapped = map_frame(&map, &skeleton, &model, &frame).unwrap();
        let elbow = model.joint_index("left_elbow_joint").unwrap();
        assert!((mapped.angles[elbow] - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn hip_triple_rule_matches_decomposition() {
        let (model, skeleton, map) = sample::bundle();
        let thigh = UnitQuaternion::from_euler(EulerOrder::Zxy, [0.3, -0.2, 0.7]);
        let mut frame = MocapFrame::identity(0, 0, skeleton.len());
        frame.segments[skeleton.index_of("right_thigh").unwrap()] = thigh;
        let mapped = map_frame(&map, &skeleton, &model, &frame).unwrap();
        let j = |n: &str| mapped.angles[model.joint_index(n).unwrap()];
        let angles = [j("right_hip_yaw_joint"), j("right_hip_roll_joint"), j("right_hip_pitch_joint")];
        let back = UnitQuaternion::from_euler(EulerOrder::Zxy, angles);
        assert!(back.max_abs_diff(&thigh) < 1e-9);
        assert!((angles[2] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn map_frame_checks_segment_count() {
        let (model, skeleton, map) = sample::bundle();
        let frame = MocapFrame::identity(0, 0, 3);
        assert_eq!(
            map_frame(&map, &skeleton, &model, &frame).unwrap_err(),
            DimensionMismatch { expected: 23, actual: 3 }
        );
    }

    #[test]
    fn enforce_limits_elementwise() {
        let model = five_joint_model();
        let raw = [0.5, 0.9, -0.3, 0.45, 1.5];
        // Element-wise reference: soft intervals written out by hand.
        let soft = [(-0.9, 0.9), (-2.0, 0.5), (0.2, 2.8), (-0.45, 0.45), (-0.5, 1.5)];
        let expected: Vec<f64> = raw.iter().zip(soft).map(|(&x, (lo, hi))| if x < lo { lo } else if x > hi { hi } else { x }).collect();
        let (clamped, flags) = enforce_limits(&model, &raw).unwrap();
        for (c, e) in clamped.iter().zip(&expected) {
            assert!((c - e).abs() < 1e-15);
        }
        assert_eq!(flags, [false, true, true, false, false]);
        assert!(enforce_limits(&model, &raw[..4]).is_err());
    }

    #[test]
    fn above_max_lands_on_soft_bound() {
        let model = five_joint_model();
        let (clamped, flags) = enforce_limits(&model, &[5.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(clamped[0], model.joints()[0].soft_max());
        assert!(flags[0]);
    }

    #[test]
    fn filter_passthrough_and_first_sample() {
        let mut f = FilterState::new(vec![0.0, 0.05]).unwrap();
        assert_eq!(f.smooth(&[1.0, 2.0], 0.01).unwrap(), [1.0, 2.0]);
        let out = f.smooth(&[3.0, 3.0], 0.01).unwrap();
        assert_eq!(out[0], 3.0);
        assert!(out[1] > 2.0 && out[1] < 3.0);
        assert!(f.smooth(&[1.0], 0.01).is_err());
        assert!(matches!(f.smooth(&[1.0, 1.0], 0.0), Err(RetargetError::InvalidTimestep(_))));
        assert!(FilterState::new(vec![-1.0]).is_err());
    }

    #[test]
    fn step_response_matches_closed_form() {
        let tau = 0.02;
        let dt = 0.002;
        let mut f = FilterState::new(vec![tau]).unwrap();
        f.smooth(&[0.0], dt).unwrap();
        for k in 1..=10 {
            let y = f.smooth(&[1.0], dt).unwrap()[0];
            let expected = 1.0 - (-(k as f64) * dt / tau).exp();
            assert!((y - expected).abs() < 1e-9, "step {k}: {y} vs {expected}");
        }
        assert!((f.previous()[0] - 0.632_120_558_828_557_7).abs() < 1e-9);
    }

    #[test]
    fn step_past_hard_limit_is_clamped_and_reported() {
        let (model, skeleton, map) = sample::bundle();
        let mut filter = FilterState::new(vec![0.0; model.joint_count()]).unwrap();
        let mut frame = MocapFrame::identity(9, 90_000, skeleton.len());
        // Knee hyperextension well past the hard minimum.
        frame.segments[skeleton.index_of("left_shank").unwrap()] = UnitQuaternion::from_axis_angle(Vec3::Y, -1.0).unwrap();
        let mut clock = VirtualClock::new();
        clock.set_us(123);
        let (cmd, diag) = retarget_step(&map, &skeleton, &model, &mut filter, &frame, 0.002, &clock).unwrap();
        let knee = model.joint_index("left_knee_joint").unwrap();
        assert_eq!(cmd.angles[knee], model.joints()[knee].soft_min());
        assert!(diag.clamped[knee]);
        assert_eq!(diag.clamped_count, 1);
        assert!(diag.worst_excursion > 0.9);
        assert_eq!((cmd.source_seq, cmd.source_timestamp_us, cmd.emitted_us), (9, 90_000, 123));
    }

    #[test]
    fn identity_step_without_filtering_equals_map() {
        let (model, skeleton, map) = sample::bundle();
        let mut r = Retargeter::new(model, skeleton, map).with_tau(0.0).unwrap();
        let frame = MocapFrame::identity(0, 0, 23);
        let (cmd, diag) = r.step(&frame, 0.002, &VirtualClock::new()).unwrap();
        assert!(cmd.angles.iter().all(|&a| a == 0.0));
        assert_eq!(diag.clamped_count, 0);
        assert!(!cmd.hold);
    }
}
