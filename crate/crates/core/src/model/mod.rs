//! Robot kinematic model, human skeleton layout, retargeting map, and
//! forward kinematics.
//!
//! All three are loaded from the same line-oriented text grammar. Joint order
//! in the robot file is the command-vector order everywhere downstream.

mod map;
pub mod sample;

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::config::{self, Record};
use crate::geometry::{UnitQuaternion, Vec3};
use crate::DimensionMismatch;

pub use map::{RetargetMap, RetargetRule, TripleRule, TwistRule};

/// Filter time constant used when a joint line carries no `tau=`.
pub const DEFAULT_TAU: f64 = 0.02;

/// Wire formats carry joint and segment counts in one byte.
pub const MAX_ENTRIES: usize = 255;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", fmt_validation(*.line, .message))]
    Validation {
        line: Option<usize>,
        message: String,
    },
    #[error("coverage error: missing [{}], duplicated [{}]", .missing.join(", "), .duplicated.join(", "))]
    Coverage {
        missing: Vec<String>,
        duplicated: Vec<String>,
    },
    #[error("line {line}: unknown {kind} `{name}`")]
    UnknownReference {
        line: usize,
        kind: &'static str,
        name: String,
    },
}

fn fmt_validation(line: Option<usize>, message: &str) -> String {
    match line {
        Some(line) => format!("line {line}: {message}"),
        None => message.to_owned(),
    }
}

impl ConfigError {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        ConfigError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn validation(line: Option<usize>, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub parent: Option<usize>,
}

/// Human segment layout. Frames carry one orientation per segment, in this order.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanSkeleton {
    segments: Vec<Segment>,
}

impl HumanSkeleton {
    pub fn new(segments: Vec<Segment>) -> Result<Self, ConfigError> {
        if segments.is_empty() {
            return Err(ConfigError::validation(None, "skeleton has no segments"));
        }
        if segments.len() > MAX_ENTRIES {
            return Err(ConfigError::validation(
                None,
                format!("skeleton has {} segments, at most {MAX_ENTRIES} supported", segments.len()),
            ));
        }
        let mut seen = HashSet::new();
        let mut roots = 0;
        for (i, seg) in segments.iter().enumerate() {
            if !seen.insert(seg.name.as_str()) {
                return Err(ConfigError::validation(None, format!("duplicate segment `{}`", seg.name)));
            }
            match seg.parent {
                None => roots += 1,
                Some(p) if p >= i => {
                    return Err(ConfigError::validation(
                        None,
                        format!("segment `{}` must come after its parent", seg.name),
                    ))
                }
                Some(_) => {}
            }
        }
        if roots != 1 {
            return Err(ConfigError::validation(
                None,
                format!("skeleton must have exactly one root, found {roots}"),
            ));
        }
        Ok(HumanSkeleton { segments })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut segments: Vec<Segment> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for rec in config::records(text)? {
            if rec.keyword.text != "segment" {
                return Err(rec.error(
                    rec.keyword.column,
                    format!("unknown record `{}` in skeleton file", rec.keyword.text),
                ));
            }
            rec.expect_positional(1)?;
            rec.expect_keys(&["parent"])?;
            let name = rec.positional[0].text.to_owned();
            let parent_token = rec.required("parent")?;
            let parent = match parent_token.text {
                "-" => None,
                p => Some(*index.get(p).ok_or_else(|| ConfigError::UnknownReference {
                    line: rec.line,
                    kind: "parent segment",
                    name: p.to_owned(),
                })?),
            };
            if index.insert(name.clone(), segments.len()).is_some() {
                return Err(ConfigError::validation(
                    Some(rec.line),
                    format!("duplicate segment `{name}`"),
                ));
            }
            if parent.is_none() && segments.iter().any(|s| s.parent.is_none()) {
                return Err(ConfigError::validation(
                    Some(rec.line),
                    format!("second root segment `{name}`"),
                ));
            }
            segments.push(Segment { name, parent });
        }
        Self::new(segments)
    }

    /// The 23-segment layout streamed by the suit.
    pub fn canonical() -> Self {
        Self::parse(sample::HUMAN_SKELETON).expect("bundled skeleton is valid")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            let parent = seg.parent.map_or("-", |p| self.segments[p].name.as_str());
            let _ = writeln!(out, "segment {} parent={}", seg.name, parent);
        }
        out
    }
}

/// Rigid transform: rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transform {
    pub translation: Vec3,
    pub rotation: UnitQuaternion,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        translation: Vec3::ZERO,
        rotation: UnitQuaternion::IDENTITY,
    };

    pub fn new(translation: Vec3, rotation: UnitQuaternion) -> Self {
        Transform {
            translation,
            rotation,
        }
    }

    /// `self * child`: expresses a pose given in this frame in the outer frame.
    pub fn compose(&self, child: &Transform) -> Transform {
        Transform {
            translation: self.translation + self.rotation.rotate(child.translation),
            rotation: self.rotation * child.rotation,
        }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.translation + self.rotation.rotate(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotJoint {
    pub name: String,
    pub parent_link: String,
    pub child_link: String,
    /// Pose of the joint frame in the parent link frame.
    pub origin: Transform,
    /// Unit rotation axis in the joint frame.
    pub axis: Vec3,
    pub min: f64,
    pub max: f64,
    /// Distance the soft limits sit inside the hard limits.
    pub soft: f64,
    /// Velocity limit, rad/s.
    pub vmax: f64,
    pub default: f64,
    /// Smoothing time constant in seconds; zero disables smoothing.
    pub tau: f64,
}

impl RobotJoint {
    pub fn soft_min(&self) -> f64 {
        self.min + self.soft
    }

    pub fn soft_max(&self) -> f64 {
        self.max - self.soft
    }

    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.soft_min(), self.soft_max())
    }

    fn check(&self) -> Result<(), String> {
        let name = &self.name;
        let finite = [self.min, self.max, self.soft, self.vmax, self.default, self.tau];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(format!("non-finite value on joint {name}"));
        }
        if self.min >= self.max {
            return Err(format!("min >= max on joint {name}"));
        }
        if self.soft < 0.0 {
            return Err(format!("negative soft margin on joint {name}"));
        }
        if self.soft_min() > self.soft_max() {
            return Err(format!("soft interval empty on joint {name}"));
        }
        if !(self.vmax > 0.0) {
            return Err(format!("vmax must be positive on joint {name}"));
        }
        if self.tau < 0.0 {
            return Err(format!("negative tau on joint {name}"));
        }
        if self.default < self.soft_min() || self.default > self.soft_max() {
            return Err(format!("default outside soft interval on joint {name}"));
        }
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(format!("axis not unit on joint {name}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSphere {
    pub link: String,
    pub center: Vec3,
    pub radius: f64,
}

/// A sphere addressed by link name and its index among that link's spheres.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SphereRef {
    pub link: String,
    pub index: usize,
}

impl std::fmt::Display for SphereRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.link, self.index)
    }
}

/// Validated robot kinematic tree. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    joints: Vec<RobotJoint>,
    spheres: Vec<CollisionSphere>,
    exclusions: Vec<(SphereRef, SphereRef)>,
    // Derived: link 0 is the base, link i + 1 is the child of joint i.
    links: Vec<String>,
    joint_parent: Vec<usize>,
    sphere_link: Vec<usize>,
    collision_pairs: Vec<(usize, usize)>,
}

impl RobotModel {
    pub fn new(
        joints: Vec<RobotJoint>,
        spheres: Vec<CollisionSphere>,
        exclusions: Vec<(SphereRef, SphereRef)>,
    ) -> Result<Self, ConfigError> {
        Self::build(joints, spheres, exclusions, &[], &[])
    }

    fn build(
        joints: Vec<RobotJoint>,
        spheres: Vec<CollisionSphere>,
        exclusions: Vec<(SphereRef, SphereRef)>,
        joint_lines: &[usize],
        exclusion_lines: &[usize],
    ) -> Result<Self, ConfigError> {
        let line_of = |lines: &[usize], i: usize| lines.get(i).copied();
        if joints.is_empty() {
            return Err(ConfigError::validation(None, "model has no joints"));
        }
        if joints.len() > MAX_ENTRIES {
            return Err(ConfigError::validation(
                None,
                format!("model has {} joints, at most {MAX_ENTRIES} supported", joints.len()),
            ));
        }

        let base = joints[0].parent_link.clone();
        let mut links = vec![base];
        let mut link_index: HashMap<String, usize> = HashMap::new();
        link_index.insert(links[0].clone(), 0);
        let mut joint_names = HashSet::new();
        let mut joint_parent = Vec::with_capacity(joints.len());

        for (i, joint) in joints.iter().enumerate() {
            let line = line_of(joint_lines, i);
            joint.check().map_err(|m| ConfigError::validation(line, m))?;
            if !joint_names.insert(joint.name.as_str()) {
                return Err(ConfigError::validation(line, format!("duplicate joint {}", joint.name)));
            }
            let parent = *link_index.get(&joint.parent_link).ok_or_else(|| {
                ConfigError::validation(
                    line,
                    format!(
                        "joint {} has parent link {} which is neither the base nor an earlier child (second root or unordered tree)",
                        joint.name, joint.parent_link
                    ),
                )
            })?;
            if link_index.contains_key(&joint.child_link) {
                return Err(ConfigError::validation(
                    line,
                    format!("link {} is the child of more than one joint (cycle or duplicate)", joint.child_link),
                ));
            }
            link_index.insert(joint.child_link.clone(), links.len());
            links.push(joint.child_link.clone());
            joint_parent.push(parent);
        }

        let mut sphere_link = Vec::with_capacity(spheres.len());
        let mut per_link: HashMap<usize, Vec<usize>> = HashMap::new();
        for (s, sphere) in spheres.iter().enumerate() {
            let link = *link_index.get(&sphere.link).ok_or_else(|| {
                ConfigError::validation(None, format!("sphere on unknown link {}", sphere.link))
            })?;
            if !(sphere.radius > 0.0) || !sphere.radius.is_finite() {
                return Err(ConfigError::validation(
                    None,
                    format!("sphere {} on link {} needs a positive radius", s, sphere.link),
                ));
            }
            per_link.entry(link).or_default().push(s);
            sphere_link.push(link);
        }

        let mut excluded = HashSet::new();
        for (e, (a, b)) in exclusions.iter().enumerate() {
            let line = line_of(exclusion_lines, e);
            let resolve = |r: &SphereRef| -> Result<usize, ConfigError> {
                link_index
                    .get(&r.link)
                    .and_then(|l| per_link.get(l))
                    .and_then(|list| list.get(r.index))
                    .copied()
                    .ok_or_else(|| ConfigError::validation(line, format!("exclusion references missing sphere {r}")))
            };
            let (sa, sb) = (resolve(a)?, resolve(b)?);
            excluded.insert((sa.min(sb), sa.max(sb)));
        }

        let mut adjacent = HashSet::new();
        for (j, &parent) in joint_parent.iter().enumerate() {
            let child = j + 1;
            adjacent.insert((parent.min(child), parent.max(child)));
        }
        let mut collision_pairs = Vec::new();
        for a in 0..spheres.len() {
            for b in a + 1..spheres.len() {
                let (la, lb) = (sphere_link[a], sphere_link[b]);
                if la == lb || adjacent.contains(&(la.min(lb), la.max(lb))) || excluded.contains(&(a, b)) {
                    continue;
                }
                collision_pairs.push((a, b));
            }
        }

        Ok(RobotModel {
            joints,
            spheres,
            exclusions,
            links,
            joint_parent,
            sphere_link,
            collision_pairs,
        })
    }

    /// Parses and validates a robot description.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut joints = Vec::new();
        let mut joint_lines = Vec::new();
        let mut spheres = Vec::new();
        let mut exclusions = Vec::new();
        let mut exclusion_lines = Vec::new();
        for rec in config::records(text)? {
            match rec.keyword.text {
                "joint" => {
                    joints.push(parse_joint(&rec)?);
                    joint_lines.push(rec.line);
                }
                "sphere" => spheres.push(parse_sphere(&rec)?),
                "exclude" => {
                    rec.expect_positional(2)?;
                    rec.expect_keys(&[])?;
                    let a = parse_sphere_ref(&rec, 0)?;
                    let b = parse_sphere_ref(&rec, 1)?;
                    exclusions.push((a, b));
                    exclusion_lines.push(rec.line);
                }
                other => {
                    return Err(rec.error(rec.keyword.column, format!("unknown record `{other}` in robot file")))
                }
            }
        }
        Self::build(joints, spheres, exclusions, &joint_lines, &exclusion_lines)
    }

    pub fn joints(&self) -> &[RobotJoint] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn spheres(&self) -> &[CollisionSphere] {
        &self.spheres
    }

    pub fn exclusions(&self) -> &[(SphereRef, SphereRef)] {
        &self.exclusions
    }

    /// Link names; index 0 is the base, index `i + 1` is the child of joint `i`.
    pub fn links(&self) -> &[String] {
        &self.links
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l == name)
    }

    /// Link index of each sphere.
    pub fn sphere_links(&self) -> &[usize] {
        &self.sphere_link
    }

    /// Sphere pairs the self-collision check tests: different, non-adjacent
    /// links and not explicitly excluded.
    pub fn collision_pairs(&self) -> &[(usize, usize)] {
        &self.collision_pairs
    }

    /// `"link/index"` label for a sphere.
    pub fn sphere_label(&self, sphere: usize) -> String {
        let link = self.sphere_link[sphere];
        let index = self.sphere_link[..sphere].iter().filter(|&&l| l == link).count();
        format!("{}/{}", self.links[link], index)
    }

    pub fn defaults(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.default).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.tau).collect()
    }

    /// World pose of every link (indexed like [`RobotModel::links`]).
    pub fn forward_kinematics(&self, angles: &[f64]) -> Result<Vec<Transform>, DimensionMismatch> {
        DimensionMismatch::check(self.joints.len(), angles.len())?;
        let mut poses = Vec::with_capacity(self.links.len());
        poses.push(Transform::IDENTITY);
        for (joint, (&parent, &angle)) in self.joints.iter().zip(self.joint_parent.iter().zip(angles)) {
            let motion = Transform::new(
                Vec3::ZERO,
                UnitQuaternion::from_axis_angle(joint.axis, angle).unwrap_or_default(),
            );
            let pose = poses[parent].compose(&joint.origin).compose(&motion);
            poses.push(pose);
        }
        Ok(poses)
    }

    /// Serializes to the text grammar; [`RobotModel::parse`] reads it back unchanged.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for j in &self.joints {
            let t = j.origin.translation;
            let _ = writeln!(
                out,
                "joint {} parent={} child={} origin={};{} axis={} limits={},{} soft={} vmax={} default={} tau={}",
                j.name, j.parent_link, j.child_link, t, j.origin.rotation, j.axis, j.min, j.max, j.soft, j.vmax,
                j.default, j.tau
            );
        }
        for s in &self.spheres {
            let _ = writeln!(out, "sphere {} center={} radius={}", s.link, s.center, s.radius);
        }
        for (a, b) in &self.exclusions {
            let _ = writeln!(out, "exclude {a} {b}");
        }
        out
    }
}

fn parse_joint(rec: &Record<'_>) -> Result<RobotJoint, ConfigError> {
    rec.expect_positional(1)?;
    rec.expect_keys(&[
        "parent", "child", "origin", "axis", "limits", "soft", "vmax", "default", "tau",
    ])?;
    let (translation, rotation) = rec.origin("origin")?;
    let [min, max] = rec.reals::<2>("limits")?;
    let tau = match rec.optional("tau") {
        Some(_) => rec.real("tau")?,
        None => DEFAULT_TAU,
    };
    Ok(RobotJoint {
        name: rec.positional[0].text.to_owned(),
        parent_link: rec.required("parent")?.text.to_owned(),
        child_link: rec.required("child")?.text.to_owned(),
        origin: Transform::new(translation, rotation),
        axis: rec.unit_axis("axis")?,
        min,
        max,
        soft: rec.real("soft")?,
        vmax: rec.real("vmax")?,
        default: rec.real("default")?,
        tau,
    })
}

fn parse_sphere(rec: &Record<'_>) -> Result<CollisionSphere, ConfigError> {
    rec.expect_positional(1)?;
    rec.expect_keys(&["center", "radius"])?;
    Ok(CollisionSphere {
        link: rec.positional[0].text.to_owned(),
        center: rec.vec3("center")?,
        radius: rec.real("radius")?,
    })
}

fn parse_sphere_ref(rec: &Record<'_>, position: usize) -> Result<SphereRef, ConfigError> {
    let token = &rec.positional[position];
    let parsed = token
        .text
        .rsplit_once('/')
        .and_then(|(link, index)| Some((link, index.parse::<usize>().ok()?)));
    match parsed {
        Some((link, index)) if !link.is_empty() => Ok(SphereRef {
            link: link.to_owned(),
            index,
        }),
        _ => Err(rec.error(token.column, format!("expected `<link>/<sphere-index>`, found `{}`", token.text))),
    }
}
