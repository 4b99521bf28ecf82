use std::collections::HashMap;
use std::fmt::Write as _;

use super::{ConfigError, HumanSkeleton, RobotModel};
use crate::config::{self, Record};
use crate::geometry::{EulerOrder, Vec3};

/// One robot joint driven by the twist of a human segment about an axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistRule {
    pub joint: usize,
    pub segment: usize,
    /// Unit axis in the segment's parent frame.
    pub axis: Vec3,
    pub sign: f64,
    pub scale: f64,
    pub offset: f64,
}

impl TwistRule {
    pub fn apply(&self, twist: f64) -> f64 {
        self.sign * self.scale * twist + self.offset
    }
}

/// Three robot joints driven by an intrinsic Euler decomposition of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleRule {
    /// Joint receiving each decomposed angle, in `order`.
    pub joints: [usize; 3],
    pub segment: usize,
    pub order: EulerOrder,
    pub signs: [f64; 3],
    pub scales: [f64; 3],
    pub offsets: [f64; 3],
}

impl TripleRule {
    pub fn apply(&self, n: usize, angle: f64) -> f64 {
        self.signs[n] * self.scales[n] * angle + self.offsets[n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetargetRule {
    Twist(TwistRule),
    Triple(TripleRule),
}

/// Validated human-to-robot projection rules with total joint coverage.
///
/// Indices refer to the skeleton and model the map was loaded against.
#[derive(Debug, Clone, PartialEq)]
pub struct RetargetMap {
    rules: Vec<RetargetRule>,
    unmapped: Vec<usize>,
}

impl RetargetMap {
    pub fn parse(text: &str, skeleton: &HumanSkeleton, model: &RobotModel) -> Result<Self, ConfigError> {
        let mut rules = Vec::new();
        let mut unmapped = Vec::new();
        let mut claims: HashMap<usize, usize> = HashMap::new();

        for rec in config::records(text)? {
            let claimed: Vec<usize> = match rec.keyword.text {
                "map" => {
                    let rule = parse_twist(&rec, skeleton, model)?;
                    let joint = rule.joint;
                    rules.push(RetargetRule::Twist(rule));
                    vec![joint]
                }
                "map3" => {
                    let rule = parse_triple(&rec, skeleton, model)?;
                    let joints = rule.joints.to_vec();
                    rules.push(RetargetRule::Triple(rule));
                    joints
                }
                "unmapped" => {
                    rec.expect_positional(1)?;
                    rec.expect_keys(&[])?;
                    let joint = resolve_joint(&rec, rec.positional[0].text, model)?;
                    unmapped.push(joint);
                    vec![joint]
                }
                other => {
                    return Err(rec.error(rec.keyword.column, format!("unknown record `{other}` in map file")))
                }
            };
            for joint in claimed {
                *claims.entry(joint).or_default() += 1;
            }
        }

        let names = |pred: &dyn Fn(usize) -> bool| -> Vec<String> {
            (0..model.joint_count())
                .filter(|&j| pred(j))
                .map(|j| model.joints()[j].name.clone())
                .collect()
        };
        let missing = names(&|j| !claims.contains_key(&j));
        let duplicated = names(&|j| claims.get(&j).is_some_and(|&c| c > 1));
        if !missing.is_empty() || !duplicated.is_empty() {
            return Err(ConfigError::Coverage { missing, duplicated });
        }
        Ok(RetargetMap { rules, unmapped })
    }

    pub fn rules(&self) -> &[RetargetRule] {
        &self.rules
    }

    /// Joints held at their default angle.
    pub fn unmapped(&self) -> &[usize] {
        &self.unmapped
    }

    pub fn to_config_string(&self, skeleton: &HumanSkeleton, model: &RobotModel) -> String {
        let joint = |j: usize| model.joints()[j].name.as_str();
        let seg = |s: usize| skeleton.segments()[s].name.as_str();
        let sign = |s: f64| if s < 0.0 { "-1" } else { "+1" };
        let mut out = String::new();
        for rule in &self.rules {
            match rule {
                RetargetRule::Twist(r) => {
                    let _ = writeln!(
                        out,
                        "map {} segment={} axis={} sign={} scale={} offset={}",
                        joint(r.joint),
                        seg(r.segment),
                        r.axis,
                        sign(r.sign),
                        r.scale,
                        r.offset
                    );
                }
                RetargetRule::Triple(r) => {
                    let _ = writeln!(
                        out,
                        "map3 {},{},{} segment={} order={} signs={},{},{} scales={},{},{} offsets={},{},{}",
                        joint(r.joints[0]),
                        joint(r.joints[1]),
                        joint(r.joints[2]),
                        seg(r.segment),
                        r.order,
                        sign(r.signs[0]),
                        sign(r.signs[1]),
                        sign(r.signs[2]),
                        r.scales[0],
                        r.scales[1],
                        r.scales[2],
                        r.offsets[0],
                        r.offsets[1],
                        r.offsets[2]
                    );
                }
            }
        }
        for &j in &self.unmapped {
            let _ = writeln!(out, "unmapped {}", joint(j));
        }
        out
    }
}

fn resolve_joint(rec: &Record<'_>, name: &str, model: &RobotModel) -> Result<usize, ConfigError> {
    model.joint_index(name).ok_or_else(|| ConfigError::UnknownReference {
        line: rec.line,
        kind: "joint",
        name: name.to_owned(),
    })
}

fn resolve_segment(rec: &Record<'_>, skeleton: &HumanSkeleton) -> Result<usize, ConfigError> {
    let name = rec.required("segment")?.text;
    skeleton.index_of(name).ok_or_else(|| ConfigError::UnknownReference {
        line: rec.line,
        kind: "segment",
        name: name.to_owned(),
    })
}

fn finite(rec: &Record<'_>, key: &str, values: &[f64]) -> Result<(), ConfigError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(rec.error(rec.required(key)?.column, format!("`{key}` must be finite")))
    }
}

fn parse_twist(rec: &Record<'_>, skeleton: &HumanSkeleton, model: &RobotModel) -> Result<TwistRule, ConfigError> {
    rec.expect_positional(1)?;
    rec.expect_keys(&["segment", "axis", "sign", "scale", "offset"])?;
    let sign_token = rec.required("sign")?;
    let rule = TwistRule {
        joint: resolve_joint(rec, rec.positional[0].text, model)?,
        segment: resolve_segment(rec, skeleton)?,
        axis: rec.unit_axis("axis")?,
        sign: rec.sign(sign_token, sign_token.text, 0)?,
        scale: rec.real("scale")?,
        offset: rec.real("offset")?,
    };
    Ok(rule)
}

fn parse_triple(rec: &Record<'_>, skeleton: &HumanSkeleton, model: &RobotModel) -> Result<TripleRule, ConfigError> {
    rec.expect_positional(1)?;
    rec.expect_keys(&["segment", "order", "signs", "scales", "offsets"])?;
    let names: Vec<&str> = rec.positional[0].text.split(',').collect();
    if names.len() != 3 {
        return Err(rec.error(rec.positional[0].column, "`map3` needs exactly three comma-separated joints"));
    }
    let mut joints = [0; 3];
    for (slot, name) in joints.iter_mut().zip(&names) {
        *slot = resolve_joint(rec, name, model)?;
    }
    let order_token = rec.required("order")?;
    let order: EulerOrder = order_token
        .text
        .parse()
        .map_err(|e: crate::geometry::UnknownEulerOrder| rec.error(order_token.column, e.to_string()))?;

    let signs_token = rec.required("signs")?;
    let parts: Vec<&str> = signs_token.text.split(',').collect();
    if parts.len() != 3 {
        return Err(rec.error(signs_token.column, "expected 3 comma-separated signs"));
    }
    let mut signs = [0.0; 3];
    let mut offset = 0;
    for (slot, part) in signs.iter_mut().zip(parts) {
        *slot = rec.sign(signs_token, part, offset)?;
        offset += part.len() + 1;
    }
    let scales = rec.reals::<3>("scales")?;
    let offsets = rec.reals::<3>("offsets")?;
    finite(rec, "scales", &scales)?;
    finite(rec, "offsets", &offsets)?;
    Ok(TripleRule {
        joints,
        segment: resolve_segment(rec, skeleton)?,
        order,
        signs,
        scales,
        offsets,
    })
}
