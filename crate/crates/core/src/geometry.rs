//! Quaternion algebra and the rotation decompositions used to project human
//! segment orientations onto robot joint axes.
//!
//! Conventions, fixed crate-wide:
//!
//! * Hamilton product, right-handed frames, components stored `w, x, y, z`.
//! * Every [`UnitQuaternion`] is sign-canonical: `w >= 0`, and when `w == 0`
//!   the first nonzero vector component is positive. `q` and `-q` describe
//!   the same rotation, so fixing one representative makes equality and
//!   serialized output deterministic.
//! * Angles returned by decompositions lie in `(-pi, pi]`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use thiserror::Error;

/// Inputs with a norm at or below this are rejected as corrupt.
pub const MIN_QUATERNION_NORM: f64 = 1e-12;

/// Middle Euler angles within this distance of `±pi/2` raise the gimbal flag.
pub const GIMBAL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate quaternion (norm {norm:e})")]
    DegenerateQuaternion { norm: f64 },
    #[error("degenerate axis (norm {norm:e})")]
    DegenerateAxis { norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Scales to unit length. Vectors already unit to within rounding are
    /// returned bit-for-bit, which keeps repeated normalization idempotent.
    pub fn normalized(self) -> Result<Vec3, GeometryError> {
        let norm = self.norm();
        if !(norm > MIN_QUATERNION_NORM) || !norm.is_finite() {
            return Err(GeometryError::DegenerateAxis { norm });
        }
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(self);
        }
        Ok(self * (1.0 / norm))
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.x, self.y, self.z)
    }
}

/// A rotation as a unit quaternion in canonical sign.
///
/// Fields are private so the unit-norm and sign invariants cannot be broken
/// after construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes `(w, x, y, z)` and fixes the sign.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !(norm > MIN_QUATERNION_NORM) || !norm.is_finite() {
            return Err(GeometryError::DegenerateQuaternion { norm });
        }
        // Already-unit input keeps its exact bits; this makes normalization idempotent.
        let scale = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            1.0
        } else {
            1.0 / norm
        };
        Ok(Self::canonical(w * scale, x * scale, y * scale, z * scale))
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        // `+ 0.0` folds negative zero so equal rotations compare bit-equal.
        if flip {
            UnitQuaternion {
                w: -w + 0.0,
                x: -x + 0.0,
                y: -y + 0.0,
                z: -z + 0.0,
            }
        } else {
            UnitQuaternion {
                w: w + 0.0,
                x: x + 0.0,
                y: y + 0.0,
                z: z + 0.0,
            }
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, GeometryError> {
        let axis = axis.normalized()?;
        let (s, c) = (angle * 0.5).sin_cos();
        Self::new(c, axis.x * s, axis.y * s, axis.z * s)
    }

    /// Intrinsic composition `R(a1 about order[0]) * R(a2 about order[1]) * R(a3 about order[2])`.
    pub fn from_euler(order: EulerOrder, angles: [f64; 3]) -> Self {
        let [i, j, k] = order.axes();
        let r1 = Self::about_basis(i, angles[0]);
        let r2 = Self::about_basis(j, angles[1]);
        let r3 = Self::about_basis(k, angles[2]);
        r1 * r2 * r3
    }

    fn about_basis(axis: usize, angle: f64) -> Self {
        let (s, c) = (angle * 0.5).sin_cos();
        let mut v = [0.0; 3];
        v[axis] = s;
        Self::canonical(c, v[0], v[1], v[2])
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w)
    }

    /// Hamilton product `self * rhs`, re-normalized.
    pub fn multiply(&self, rhs: &UnitQuaternion) -> UnitQuaternion {
        let (a, b) = (self, rhs);
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        // The product of two unit quaternions has norm 1 up to rounding.
        Self::new(w, x, y, z).unwrap_or(Self::IDENTITY)
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u x v) + 2u x (u x v)
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Factors `self = swing * twist`, where `twist` rotates about `axis`.
    ///
    /// Returns the swing and the signed twist angle in `(-pi, pi]`. The swing
    /// has no rotation component about `axis`. When the vector part is
    /// orthogonal to `axis` the twist is zero and the swing is `self`.
    pub fn swing_twist(&self, axis: Vec3) -> (UnitQuaternion, f64) {
        let along = self.vector().dot(axis);
        let projected = axis * along;
        let twist = match UnitQuaternion::new(self.w, projected.x, projected.y, projected.z) {
            Ok(t) => t,
            // w == 0 and vector part orthogonal to the axis: a half turn with no twist.
            Err(_) => return (*self, 0.0),
        };
        let swing = self.multiply(&twist.conjugate());
        // `twist.w >= 0` so the atan2 lands in [-pi/2, pi/2] before doubling.
        let sign_along = twist.vector().dot(axis);
        let angle = wrap_angle(2.0 * sign_along.atan2(twist.w));
        (swing, angle)
    }

    /// Twist angle of `self` about `axis`; see [`UnitQuaternion::swing_twist`].
    pub fn twist_angle(&self, axis: Vec3) -> f64 {
        self.swing_twist(axis).1
    }

    /// Decomposes into three intrinsic rotations about the axes of `order`.
    pub fn euler_decompose(&self, order: EulerOrder) -> EulerAngles {
        let m = self.to_matrix();
        let [i, j, k] = order.axes();
        let e = order.parity();

        let sin_mid = e * m[i][k];
        let cos_mid = (m[i][i] * m[i][i] + m[i][j] * m[i][j]).sqrt();
        let mid = sin_mid.atan2(cos_mid);

        let gimbal = (mid.abs() - PI / 2.0).abs() < GIMBAL_TOLERANCE;
        let (first, last) = if gimbal {
            // On the singular set only a1 + a3 (or a1 - a3) is observable; a3 = 0.
            let first = (e * m[k][j]).atan2(m[j][j]);
            (first, 0.0)
        } else {
            let first = (-e * m[j][k]).atan2(m[k][k]);
            let last = (-e * m[i][j]).atan2(m[i][i]);
            (first, last)
        };

        EulerAngles {
            angles: [wrap_angle(first), wrap_angle(mid), wrap_angle(last)],
            gimbal,
        }
    }

    /// Row-major rotation matrix. Internal to the decompositions.
    pub(crate) fn to_matrix(self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Largest absolute component difference after sign canonicalization.
    pub fn max_abs_diff(&self, other: &UnitQuaternion) -> f64 {
        let a = self.as_array();
        let b = other.as_array();
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        self.multiply(&rhs)
    }
}

impl fmt::Display for UnitQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.w, self.x, self.y, self.z)
    }
}

/// Maps an angle onto `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Axis order for intrinsic three-angle decompositions (Tait-Bryan only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EulerOrder {
    Xyz,
    Zxy,
    Zyx,
    Yxz,
    Xzy,
    Yzx,
}

impl EulerOrder {
    pub const ALL: [EulerOrder; 6] = [
        EulerOrder::Xyz,
        EulerOrder::Zxy,
        EulerOrder::Zyx,
        EulerOrder::Yxz,
        EulerOrder::Xzy,
        EulerOrder::Yzx,
    ];

    /// Basis indices (0 = x, 1 = y, 2 = z) in application order.
    pub fn axes(self) -> [usize; 3] {
        match self {
            EulerOrder::Xyz => [0, 1, 2],
            EulerOrder::Zxy => [2, 0, 1],
            EulerOrder::Zyx => [2, 1, 0],
            EulerOrder::Yxz => [1, 0, 2],
            EulerOrder::Xzy => [0, 2, 1],
            EulerOrder::Yzx => [1, 2, 0],
        }
    }

    /// Unit vector of the `n`th axis.
    pub fn axis(self, n: usize) -> Vec3 {
        match self.axes()[n] {
            0 => Vec3::X,
            1 => Vec3::Y,
            _ => Vec3::Z,
        }
    }

    // +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
    fn parity(self) -> f64 {
        match self {
            EulerOrder::Xyz | EulerOrder::Yzx | EulerOrder::Zxy => 1.0,
            _ => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EulerOrder::Xyz => "XYZ",
            EulerOrder::Zxy => "ZXY",
            EulerOrder::Zyx => "ZYX",
            EulerOrder::Yxz => "YXZ",
            EulerOrder::Xzy => "XZY",
            EulerOrder::Yzx => "YZX",
        }
    }
}

impl fmt::Display for EulerOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown Euler order `{0}` (expected one of XYZ, ZXY, ZYX, YXZ, XZY, YZX)")]
pub struct UnknownEulerOrder(pub String);

impl FromStr for EulerOrder {
    type Err = UnknownEulerOrder;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EulerOrder::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| UnknownEulerOrder(s.to_owned()))
    }
}

/// Result of [`UnitQuaternion::euler_decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub angles: [f64; 3],
    /// Set when the middle angle is within [`GIMBAL_TOLERANCE`] of `±pi/2`.
    /// The angles are still usable; `angles[2]` is pinned to zero.
    pub gimbal: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn q(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion {
        UnitQuaternion::new(w, x, y, z).unwrap()
    }

    fn about(axis: Vec3, deg: f64) -> UnitQuaternion {
        UnitQuaternion::from_axis_angle(axis, deg.to_radians()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(q(2.0, 0.0, 0.0, 0.0).as_array(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(q(-1.0, 0.0, 0.0, 0.0).as_array(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(q(1.0, 1.0, 1.0, 1.0).as_array(), [0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn canonical_sign_with_zero_w() {
        assert_eq!(q(0.0, 0.0, -1.0, 0.0).as_array(), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(q(-0.0, -0.0, 0.0, -2.0).as_array(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn degenerate_input_rejected() {
        assert!(matches!(
            UnitQuaternion::new(0.0, 1e-13, 0.0, 0.0),
            Err(GeometryError::DegenerateQuaternion { .. })
        ));
        assert!(UnitQuaternion::new(f64::NAN, 1.0, 0.0, 0.0).is_err());
        assert!(UnitQuaternion::new(f64::INFINITY, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn multiply_examples() {
        let a = about(Vec3::new(0.3, -0.2, 0.9), 71.0);
        assert_eq!(UnitQuaternion::IDENTITY * a, a);
        assert!((a * a.conjugate()).max_abs_diff(&UnitQuaternion::IDENTITY) < 1e-15);

        let quarter = about(Vec3::Z, 90.0);
        let half = quarter * quarter;
        assert!(half.max_abs_diff(&q(0.0, 0.0, 0.0, 1.0)) < 1e-15);
    }

    #[test]
    fn rotate_examples() {
        assert_eq!(UnitQuaternion::IDENTITY.rotate(Vec3::X), Vec3::X);
        let r = about(Vec3::Z, 90.0).rotate(Vec3::X);
        assert!(r.distance(Vec3::Y) < 1e-15);
    }

    #[test]
    fn rotate_matches_axis_angle_matrix() {
        // 30 degrees about x via R = I + sin(t) K + (1 - cos(t)) K^2.
        let t = 30f64.to_radians();
        let (s, c) = t.sin_cos();
        let k = [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let k2: f64 = (0..3).map(|m| k[i][m] * k[m][j]).sum();
                r[i][j] = if i == j { 1.0 } else { 0.0 } + s * k[i][j] + (1.0 - c) * k2;
            }
        }
        let v = [0.0, 0.0, 1.0];
        let expected: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[i][j] * v[j]).sum()).collect();
        assert!((expected[1] + 0.5).abs() < 1e-15);
        assert!((expected[2] - 0.866_025_403_784_438_6).abs() < 1e-15);

        let got = about(Vec3::X, 30.0).rotate(Vec3::Z);
        assert!((got.x - expected[0]).abs() < 1e-12);
        assert!((got.y - expected[1]).abs() < 1e-12);
        assert!((got.z - expected[2]).abs() < 1e-12);
    }

    #[test]
    fn swing_twist_identity_and_pure_twist() {
        let (swing, angle) = UnitQuaternion::IDENTITY.swing_twist(Vec3::new(0.0, 0.6, 0.8));
        assert_eq!(swing, UnitQuaternion::IDENTITY);
        assert_eq!(angle, 0.0);

        let (swing, angle) = about(Vec3::Z, 90.0).swing_twist(Vec3::Z);
        assert!(swing.max_abs_diff(&UnitQuaternion::IDENTITY) < 1e-15);
        assert!((angle - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn swing_twist_composite_recomposes() {
        let input = about(Vec3::X, 30.0) * about(Vec3::Z, 45.0);
        let (swing, angle) = input.swing_twist(Vec3::Z);
        let twist = UnitQuaternion::from_axis_angle(Vec3::Z, angle).unwrap();
        assert!((swing * twist).max_abs_diff(&input) < 1e-9);
        assert!(swing.vector().dot(Vec3::Z).abs() < 1e-9);
        // Cross-check: twist angle from the projection of the vector part onto z.
        let projected = 2.0 * input.z().atan2(input.w());
        assert!((angle - projected).abs() < 1e-12);
        assert!((angle - 45f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn swing_twist_orthogonal_half_turn() {
        let half_x = q(0.0, 1.0, 0.0, 0.0);
        let (swing, angle) = half_x.swing_twist(Vec3::Z);
        assert_eq!(swing, half_x);
        assert_eq!(angle, 0.0);
    }

    #[test]
    fn swing_twist_half_turn_about_axis_is_pi() {
        let half_z = q(0.0, 0.0, 0.0, 1.0);
        assert_eq!(half_z.twist_angle(Vec3::Z), PI);
        assert_eq!(half_z.twist_angle(-Vec3::Z), PI);
    }

    #[test]
    fn euler_identity_and_single_axis() {
        for order in EulerOrder::ALL {
            let e = UnitQuaternion::IDENTITY.euler_decompose(order);
            assert_eq!(e.angles, [0.0, 0.0, 0.0]);
            assert!(!e.gimbal);
        }
        let e = about(Vec3::Z, 90.0).euler_decompose(EulerOrder::Zxy);
        assert!((e.angles[0] - FRAC_PI_2).abs() < 1e-15);
        assert!(e.angles[1].abs() < 1e-15);
        assert!(e.angles[2].abs() < 1e-15);
    }

    #[test]
    fn euler_composite_zxy() {
        let input = about(Vec3::Z, 20.0) * about(Vec3::X, 10.0) * about(Vec3::Y, 5.0);
        let e = input.euler_decompose(EulerOrder::Zxy);
        let expected = [0.349_065_850_398_865_9, 0.174_532_925_199_432_95, 0.087_266_462_599_716_48];
        for (got, want) in e.angles.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let mut back = UnitQuaternion::IDENTITY;
        for n in 0..3 {
            back = back * UnitQuaternion::from_axis_angle(EulerOrder::Zxy.axis(n), e.angles[n]).unwrap();
        }
        assert!(back.max_abs_diff(&input) < 1e-9);
    }

    #[test]
    fn euler_gimbal_sets_flag_and_pins_last_angle() {
        for order in EulerOrder::ALL {
            let input = UnitQuaternion::from_euler(order, [0.4, FRAC_PI_2 - 1e-4, 0.3]);
            let e = input.euler_decompose(order);
            assert!(e.gimbal, "{order}");
            assert_eq!(e.angles[2], 0.0);
            // At the singular set the rotation is still reproduced to first order.
            let back = UnitQuaternion::from_euler(order, e.angles);
            assert!(back.max_abs_diff(&input) < 1e-3, "{order}");

            let exact = UnitQuaternion::from_euler(order, [0.4, -FRAC_PI_2, 0.0]);
            let e = exact.euler_decompose(order);
            assert!(e.gimbal);
            assert!(UnitQuaternion::from_euler(order, e.angles).max_abs_diff(&exact) < 1e-9);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5 - 2.0 * PI) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn euler_order_tokens() {
        for order in EulerOrder::ALL {
            assert_eq!(order.as_str().parse::<EulerOrder>().unwrap(), order);
        }
        assert!("XYX".parse::<EulerOrder>().is_err());
    }
}
