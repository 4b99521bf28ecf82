//! Bundled sample configuration: a 23-DoF humanoid, the canonical human
//! skeleton, and the map between them.
//!
//! The robot numbers are illustrative, not vendor data.

use super::{ConfigError, HumanSkeleton, RetargetMap, RobotModel};

pub const ROBOT: &str = include_str!("../../configs/g1.cfg");
pub const HUMAN_SKELETON: &str = include_str!("../../configs/human.cfg");
pub const MAP: &str = include_str!("../../configs/g1.map");

pub fn robot() -> RobotModel {
    RobotModel::parse(ROBOT).expect("bundled robot config is valid")
}

pub fn skeleton() -> HumanSkeleton {
    HumanSkeleton::canonical()
}

pub fn map(skeleton: &HumanSkeleton, model: &RobotModel) -> Result<RetargetMap, ConfigError> {
    RetargetMap::parse(MAP, skeleton, model)
}

/// Robot, skeleton and map loaded together.
pub fn bundle() -> (RobotModel, HumanSkeleton, RetargetMap) {
    let model = robot();
    let skeleton = skeleton();
    let map = map(&skeleton, &model).expect("bundled map is valid");
    (model, skeleton, map)
}
