use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rigid placement of a part: rotation followed by translation.
///
/// Serialized as `{"t": [x, y, z], "aa": [rx, ry, rz]}` with the rotation
/// written as an axis-angle vector whose angle lies in `[0, pi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(translation, UnitQuaternion::identity())
    }

    /// Builds a pose from a translation and an axis-angle rotation vector.
    pub fn from_axis_angle(translation: Vector3<f64>, axis_angle: Vector3<f64>) -> Self {
        Self::new(translation, UnitQuaternion::from_scaled_axis(axis_angle))
    }

    /// Rotation as an axis-angle vector with angle in `[0, pi]`.
    pub fn axis_angle(&self) -> Vector3<f64> {
        canonical_axis_angle(&self.rotation)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.rotation * other.translation + self.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            translation: -(inv * self.translation),
            rotation: inv,
        }
    }

    /// Linear translation and shortest-arc spherical interpolation.
    pub fn interpolate(&self, to: &Pose, s: f64) -> Pose {
        let mut q1 = *to.rotation.quaternion();
        if self.rotation.quaternion().dot(&q1) < 0.0 {
            q1 = -q1;
        }
        let q1 = UnitQuaternion::new_unchecked(q1);
        let rotation = self
            .rotation
            .try_slerp(&q1, s, 1e-12)
            .unwrap_or_else(|| UnitQuaternion::new_normalize(self.rotation.nlerp(&q1, s).into_inner()));
        Pose {
            translation: self.translation.lerp(&to.translation, s),
            rotation,
        }
    }

    /// Geodesic rotation angle between two poses, in `[0, pi]`.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let d = self.rotation.quaternion().dot(other.rotation.quaternion()).abs();
        2.0 * d.min(1.0).acos()
    }

    /// Weighted SE(3) distance `|dt| + w_rot * angle`.
    pub fn distance(&self, other: &Pose, w_rot: f64) -> f64 {
        (self.translation - other.translation).norm() + w_rot * self.rotation_angle_to(other)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn transform_point3(&self, p: &Point3<f64>) -> Point3<f64> {
        self.to_isometry() * p
    }

    /// Rotation of `angle` about the line through `pivot` along `axis`.
    pub fn rotation_about(pivot: &Vector3<f64>, axis: &Unit<Vector3<f64>>, angle: f64) -> Pose {
        let rotation = UnitQuaternion::from_axis_angle(axis, angle);
        Pose {
            translation: pivot - rotation * pivot,
            rotation,
        }
    }
}

/// Axis-angle vector of a rotation with the angle restricted to `[0, pi]`.
pub fn canonical_axis_angle(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut quat = *q.quaternion();
    if quat.w < 0.0 {
        quat = -quat;
    }
    let v = quat.imag();
    let s = v.norm();
    if s < 1e-15 {
        return Vector3::zeros();
    }
    let angle = 2.0 * s.atan2(quat.w);
    v * (angle / s)
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    t: [f64; 3],
    aa: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let aa = self.axis_angle();
        PoseRepr {
            t: [self.translation.x, self.translation.y, self.translation.z],
            aa: [aa.x, aa.y, aa.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = PoseRepr::deserialize(deserializer)?;
        Ok(Pose::from_axis_angle(Vector3::from(r.t), Vector3::from(r.aa)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn axis_angle_is_canonical() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 1.5 * PI);
        let aa = canonical_axis_angle(&q);
        assert_relative_eq!(aa.norm(), 0.5 * PI, epsilon = 1e-12);
        assert!(aa.z < 0.0);
        let back = UnitQuaternion::from_scaled_axis(aa);
        assert!(back.angle_to(&q) < 1e-12);
    }

    #[test]
    fn json_shape() {
        let p = Pose::from_axis_angle(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.0, 0.0, 0.5));
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"t\":[1.0,2.0,3.0],\"aa\":["));
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_relative_eq!(back.translation, p.translation);
        assert!(back.rotation.angle_to(&p.rotation) < 1e-12);
    }

    #[test]
    fn quaternion_stays_normalized_after_interpolation() {
        let a = Pose::from_axis_angle(Vector3::zeros(), Vector3::new(0.3, -1.0, 0.2));
        let b = Pose::from_axis_angle(Vector3::x(), Vector3::new(-2.0, 0.1, 0.9));
        for i in 0..=10 {
            let p = a.interpolate(&b, i as f64 / 10.0);
            assert!((p.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
        }
        assert!(a.interpolate(&b, 1.0).rotation_angle_to(&b) < 1e-9);
    }

    #[test]
    fn compose_and_inverse() {
        let a = Pose::from_axis_angle(Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.4, 0.0, -0.2));
        let id = a.compose(&a.inverse());
        assert!(id.translation.norm() < 1e-12);
        assert!(id.rotation.angle() < 1e-12);
    }
}
