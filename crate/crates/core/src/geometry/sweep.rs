//! Discretized swept-motion collision checks.

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::collision::check_collision;
use super::{Pose, TriMesh};

/// A rigid motion parameterized by `s` in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// Straight-line translation with shortest-arc rotation interpolation.
    Linear { from: Pose, to: Pose },
    /// Rotation about a world axis through `pivot`, advancing along the axis.
    Screw {
        start: Pose,
        pivot: Vector3<f64>,
        axis: Vector3<f64>,
        angle: f64,
        advance: f64,
    },
}

impl Motion {
    pub fn linear(from: Pose, to: Pose) -> Self {
        Motion::Linear { from, to }
    }

    pub fn start(&self) -> Pose {
        self.at(0.0)
    }

    pub fn end(&self) -> Pose {
        self.at(1.0)
    }

    pub fn at(&self, s: f64) -> Pose {
        match self {
            Motion::Linear { from, to } => from.interpolate(to, s),
            Motion::Screw {
                start,
                pivot,
                axis,
                angle,
                advance,
            } => {
                let axis = Unit::new_normalize(*axis);
                let mut turn = Pose::rotation_about(pivot, &axis, s * angle);
                turn.translation += axis.into_inner() * (s * advance);
                turn.compose(start)
            }
        }
    }

    /// Upper bound on the distance travelled by any point within `radius`
    /// of the moving body's origin.
    pub fn path_length(&self, radius: f64) -> f64 {
        match self {
            Motion::Linear { from, to } => from.distance(to, radius),
            Motion::Screw {
                start,
                pivot,
                angle,
                advance,
                ..
            } => {
                let lever = (start.translation - pivot).norm() + radius;
                advance.abs() + angle.abs() * lever
            }
        }
    }
}

/// Default interpolation step: `min(0.01, shortest_edge / path_length)`.
pub fn default_step(moving: &TriMesh, motion: &Motion) -> f64 {
    let length = motion.path_length(moving.radius_about_origin());
    if length <= 0.0 {
        return 0.01;
    }
    (moving.shortest_edge() / length).min(0.01)
}

/// Largest sampled fraction of `motion` that stays collision-free.
///
/// Poses at `{0, step, 2 step, ...}` are tested in order and the last free
/// parameter before the first collision is returned. A fully free motion
/// returns exactly 1 and a colliding start returns 0.
pub fn sweep_motion_free_fraction(
    moving: &TriMesh,
    motion: &Motion,
    obstacles: &[(&TriMesh, Pose)],
    clearance: f64,
    step: f64,
) -> f64 {
    assert!(step > 0.0, "sweep step must be positive");
    let collides = |s: f64| {
        let pose = motion.at(s);
        obstacles
            .iter()
            .any(|(m, p)| check_collision(moving, &pose, m, p, clearance))
    };
    let n = (1.0 / step).ceil() as usize;
    let mut last_free = 0.0;
    for i in 0..=n {
        let s = (i as f64 * step).min(1.0);
        if collides(s) {
            return last_free;
        }
        last_free = s;
    }
    1.0
}

/// Straight-line sweep between two poses; see [`sweep_motion_free_fraction`].
pub fn sweep_free_fraction(
    moving: &TriMesh,
    from: &Pose,
    to: &Pose,
    obstacles: &[(&TriMesh, Pose)],
    clearance: f64,
    step: f64,
) -> f64 {
    sweep_motion_free_fraction(moving, &Motion::linear(*from, *to), obstacles, clearance, step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall() -> (TriMesh, Pose) {
        let m = TriMesh::cuboid(Vector3::new(1.0, 10.0, 10.0)).unwrap();
        (m, Pose::from_translation(Vector3::new(2.5, 0.0, 0.0)))
    }

    #[test]
    fn empty_space_is_free() {
        let c = TriMesh::unit_cube();
        let to = Pose::from_translation(Vector3::new(10.0, 0.0, 0.0));
        assert_eq!(sweep_free_fraction(&c, &Pose::identity(), &to, &[], 0.0, 0.01), 1.0);
    }

    #[test]
    fn stops_at_wall() {
        let c = TriMesh::unit_cube();
        let (w, wp) = wall();
        let to = Pose::from_translation(Vector3::new(4.0, 0.0, 0.0));
        let step = 0.01;
        let f = sweep_free_fraction(&c, &Pose::identity(), &to, &[(&w, wp)], 0.0, step);
        assert!((f - 0.375).abs() <= step, "{f}");
    }

    #[test]
    fn colliding_start_is_zero() {
        let c = TriMesh::unit_cube();
        let (w, wp) = wall();
        let from = Pose::from_translation(Vector3::new(2.2, 0.0, 0.0));
        let to = Pose::from_translation(Vector3::new(-4.0, 0.0, 0.0));
        assert_eq!(sweep_free_fraction(&c, &from, &to, &[(&w, wp)], 0.0, 0.01), 0.0);
    }

    #[test]
    fn screw_motion_endpoints() {
        let m = Motion::Screw {
            start: Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)),
            pivot: Vector3::zeros(),
            axis: Vector3::z(),
            angle: std::f64::consts::PI,
            advance: 2.0,
        };
        let end = m.end();
        assert!((end.translation - Vector3::new(-1.0, 0.0, 2.0)).norm() < 1e-12);
        assert!((end.rotation.angle() - std::f64::consts::PI).abs() < 1e-12);
    }
}
