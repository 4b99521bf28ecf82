//! Deterministic synthetic motions on the canonical skeleton.
//!
//! Each pattern is a small set of sinusoidal segment rotations (angles in
//! radians, `t` in seconds, rotations relative to the parent segment):
//!
//! * `static`: every segment at identity.
//! * `arm-wave`: left upper arm about x by `0.8 + 0.5 sin(2 pi t)`
//!   (0.5 rad amplitude at 1 Hz around a raised arm), left forearm about y
//!   by `-(0.7 + 0.3 sin(4 pi t))`, left hand about z by `0.2 sin(4 pi t)`.
//! * `squat`: with `s = (1 - cos(pi t)) / 2` (one squat every 2 s), thighs
//!   about y by `-0.9 s`, shanks by `1.6 s`, feet by `-0.6 s`, upper arms by
//!   `-0.5 s` and spine1 by `0.3 s`.
//! * `walk-cycle`: with `p = 2 pi t` (1 s stride), thighs about y by
//!   `∓0.4 sin p` (left/right), shanks by `0.3 (1 ∓ cos p)`, feet by
//!   `±0.1 sin p`, upper arms by `±0.3 sin p`, spine1 about z by
//!   `0.1 sin p`.
//!
//! Noise, when enabled, right-multiplies every segment by a rotation about
//! a uniformly random axis with angle drawn from `Normal(0, noise_std)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::MocapFrame;
use crate::geometry::{UnitQuaternion, Vec3};
use crate::model::HumanSkeleton;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionPattern {
    Static,
    ArmWave,
    Squat,
    WalkCycle,
}

impl MotionPattern {
    pub const ALL: [MotionPattern; 4] = [
        MotionPattern::Static,
        MotionPattern::ArmWave,
        MotionPattern::Squat,
        MotionPattern::WalkCycle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MotionPattern::Static => "static",
            MotionPattern::ArmWave => "arm-wave",
            MotionPattern::Squat => "squat",
            MotionPattern::WalkCycle => "walk-cycle",
        }
    }

    /// Segment rotations at time `t`, as `(segment name, axis, angle)`.
    fn pose(self, t: f64) -> Vec<(&'static str, Vec3, f64)> {
        match self {
            MotionPattern::Static => Vec::new(),
            MotionPattern::ArmWave => {
                let wave = (2.0 * PI * t).sin();
                let fast = (4.0 * PI * t).sin();
                vec![
                    ("left_upper_arm", Vec3::X, 0.8 + 0.5 * wave),
                    ("left_forearm", Vec3::Y, -(0.7 + 0.3 * fast)),
                    ("left_hand", Vec3::Z, 0.2 * fast),
                ]
            }
            MotionPattern::Squat => {
                let s = (1.0 - (PI * t).cos()) / 2.0;
                vec![
                    ("left_thigh", Vec3::Y, -0.9 * s),
                    ("right_thigh", Vec3::Y, -0.9 * s),
                    ("left_shank", Vec3::Y, 1.6 * s),
                    ("right_shank", Vec3::Y, 1.6 * s),
                    ("left_foot", Vec3::Y, -0.6 * s),
                    ("right_foot", Vec3::Y, -0.6 * s),
                    ("left_upper_arm", Vec3::Y, -0.5 * s),
                    ("right_upper_arm", Vec3::Y, -0.5 * s),
                    ("spine1", Vec3::Y, 0.3 * s),
                ]
            }
            MotionPattern::WalkCycle => {
                let p = 2.0 * PI * t;
                let (sin, cos) = p.sin_cos();
                vec![
                    ("left_thigh", Vec3::Y, -0.4 * sin),
                    ("right_thigh", Vec3::Y, 0.4 * sin),
                    ("left_shank", Vec3::Y, 0.3 * (1.0 - cos)),
                    ("right_shank", Vec3::Y, 0.3 * (1.0 + cos)),
                    ("left_foot", Vec3::Y, 0.1 * sin),
                    ("right_foot", Vec3::Y, -0.1 * sin),
                    ("left_upper_arm", Vec3::Y, 0.3 * sin),
                    ("right_upper_arm", Vec3::Y, -0.3 * sin),
                    ("spine1", Vec3::Z, 0.1 * sin),
                ]
            }
        }
    }
}

impl fmt::Display for MotionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MotionPattern::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown pattern `{s}` (expected static, arm-wave, squat or walk-cycle)"))
    }
}

/// Unbounded frame generator; [`synth_motion`] collects a fixed duration.
#[derive(Debug, Clone)]
pub struct SynthMotion {
    pattern: MotionPattern,
    rate: f64,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    segment_names: Vec<String>,
    next: u64,
}

impl SynthMotion {
    /// Panics unless `rate > 0` and `noise_std >= 0`.
    pub fn new(pattern: MotionPattern, rate: f64, noise_std: f64, seed: u64, skeleton: &HumanSkeleton) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "rate must be positive");
        assert!(noise_std >= 0.0 && noise_std.is_finite(), "noise_std must be non-negative");
        SynthMotion {
            pattern,
            rate,
            noise: (noise_std > 0.0).then(|| Normal::new(0.0, noise_std).unwrap()),
            rng: ChaCha8Rng::seed_from_u64(seed),
            segment_names: skeleton.segments().iter().map(|s| s.name.clone()).collect(),
            next: 0,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn pattern(&self) -> MotionPattern {
        self.pattern
    }

    /// Sender timestamp of frame `index`.
    pub fn timestamp_us(&self, index: u64) -> u64 {
        (index as f64 * 1e6 / self.rate).round() as u64
    }

    pub fn next_frame(&mut self) -> MocapFrame {
        let index = self.next;
        self.next += 1;
        let t = index as f64 / self.rate;

        let mut segments = vec![UnitQuaternion::IDENTITY; self.segment_names.len()];
        for (name, axis, angle) in self.pattern.pose(t) {
            if let Some(i) = self.segment_names.iter().position(|n| n == name) {
                segments[i] = UnitQuaternion::from_axis_angle(axis, angle).expect("unit basis axis");
            }
        }
        if let Some(noise) = self.noise {
            for q in &mut segments {
                let axis = Vec3::new(
                    StandardNormal.sample(&mut self.rng),
                    StandardNormal.sample(&mut self.rng),
                    StandardNormal.sample(&mut self.rng),
                );
                let angle = noise.sample(&mut self.rng);
                // A zero-length axis has probability zero; fall back to x for determinism.
                let axis = if axis.norm() > 1e-12 { axis } else { Vec3::X };
                *q = *q * UnitQuaternion::from_axis_angle(axis, angle).unwrap();
            }
        }
        MocapFrame::new(index as u32, self.timestamp_us(index), segments)
    }
}

impl Iterator for SynthMotion {
    type Item = MocapFrame;

    fn next(&mut self) -> Option<MocapFrame> {
        Some(self.next_frame())
    }
}

/// `round(rate * duration)` frames of `pattern` on the canonical skeleton.
pub fn synth_motion(pattern: MotionPattern, rate: f64, duration: f64, noise_std: f64, seed: u64) -> Vec<MocapFrame> {
    assert!(duration > 0.0, "duration must be positive");
    let count = (rate * duration).round() as usize;
    SynthMotion::new(pattern, rate, noise_std, seed, &HumanSkeleton::canonical())
        .take(count)
        .collect()
}

/// Uniformly distributed random rotation.
pub fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion {
    loop {
        let c: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        if let Ok(q) = UnitQuaternion::new(c[0], c[1], c[2], c[3]) {
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::encode_frame;

    #[test]
    fn static_without_noise_is_identity() {
        let frames = synth_motion(MotionPattern::Static, 100.0, 0.5, 0.0, 1);
        assert_eq!(frames.len(), 50);
        for f in &frames {
            assert!(f.segments.iter().all(|q| *q == UnitQuaternion::IDENTITY));
        }
        assert_eq!(frames[3].seq, 3);
        assert_eq!(frames[3].timestamp_us, 30_000);
    }

    #[test]
    fn arm_wave_amplitude_and_frequency() {
        let frames = synth_motion(MotionPattern::ArmWave, 100.0, 1.0, 0.0, 0);
        assert_eq!(frames.len(), 100);
        let arm = HumanSkeleton::canonical().index_of("left_upper_arm").unwrap();
        let angles: Vec<f64> = frames.iter().map(|f| f.segments[arm].twist_angle(Vec3::X)).collect();
        let max = angles.iter().cloned().fold(f64::MIN, f64::max);
        let min = angles.iter().cloned().fold(f64::MAX, f64::min);
        assert!(((max - min) / 2.0 - 0.5).abs() < 1e-3);
        // 1 Hz: peak at t = 0.25 s, trough at t = 0.75 s.
        assert!((angles[25] - 1.3).abs() < 1e-12);
        assert!((angles[75] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn walk_cycle_thigh_period_is_one_second() {
        let frames = synth_motion(MotionPattern::WalkCycle, 100.0, 2.0, 0.0, 0);
        assert_eq!(frames.len(), 200);
        let thigh = HumanSkeleton::canonical().index_of("left_thigh").unwrap();
        let angle = |i: usize| frames[i].segments[thigh].twist_angle(Vec3::Y);
        for i in 0..100 {
            assert!((angle(i) - angle(i + 100)).abs() < 1e-12);
        }
        assert!((angle(25) + 0.4).abs() < 1e-12);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let a = synth_motion(MotionPattern::Static, 100.0, 0.2, 0.01, 7);
        let b = synth_motion(MotionPattern::Static, 100.0, 0.2, 0.01, 7);
        let bytes = |fs: &[MocapFrame]| fs.iter().flat_map(encode_frame).collect::<Vec<u8>>();
        assert_eq!(bytes(&a), bytes(&b));
        let c = synth_motion(MotionPattern::Static, 100.0, 0.2, 0.01, 8);
        assert_ne!(bytes(&a), bytes(&c));
        // Noise is small: every segment stays within a few sigma of identity.
        assert!(a.iter().flat_map(|f| &f.segments).all(|q| q.angle() < 0.08));
        assert!(a.iter().flat_map(|f| &f.segments).any(|q| q.angle() > 0.0));
    }

    #[test]
    fn pattern_tokens() {
        for p in MotionPattern::ALL {
            assert_eq!(p.as_str().parse::<MotionPattern>().unwrap(), p);
        }
        assert!("jog".parse::<MotionPattern>().is_err());
    }
}
