//! Real-time retargeting of full-body motion-capture frames onto a humanoid
//! joint model.
//!
//! The pipeline is deliberately small: each incoming [`stream::MocapFrame`]
//! is projected onto robot joint angles ([`retarget::map_frame`]), smoothed
//! per joint ([`retarget::FilterState`]), clamped to soft limits
//! ([`retarget::enforce_limits`]) and emitted as one
//! [`retarget::JointCommand`]. [`runtime::run_loop`] drives that step at a
//! fixed rate, and [`validate`] audits the resulting command traces.
//!
//! ```
//! use teleop_core::model::sample;
//! use teleop_core::retarget::Retargeter;
//! use teleop_core::runtime::VirtualClock;
//! use teleop_core::stream::MocapFrame;
//!
//! let (model, skeleton, map) = sample::bundle();
//! let mut retargeter = Retargeter::new(model, skeleton, map);
//! let frame = MocapFrame::identity(0, 0, retargeter.skeleton().len());
//! let clock = VirtualClock::new();
//! let (command, _) = retargeter.step(&frame, 0.002, &clock).unwrap();
//! assert_eq!(command.angles.len(), 23);
//! ```

pub mod geometry;
pub mod model;
pub mod retarget;
pub mod runtime;
pub mod stream;
pub mod validate;

mod config;
mod histogram;

pub use histogram::Histogram;

use thiserror::Error;

/// A vector did not have one entry per robot joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("dimension mismatch: expected {expected} values, got {actual}")]
pub struct DimensionMismatch {
    pub expected: usize,
    pub actual: usize,
}

impl DimensionMismatch {
    pub(crate) fn check(expected: usize, actual: usize) -> Result<(), DimensionMismatch> {
        if expected == actual {
            Ok(())
        } else {
            Err(DimensionMismatch { expected, actual })
        }
    }
}
