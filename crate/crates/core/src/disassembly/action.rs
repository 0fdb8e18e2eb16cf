use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{InertialProps, Motion, Pose};

/// Relative tolerance under which two principal moments count as equal.
pub const DEGENERATE_MOMENT_TOL: f64 = 1e-6;
/// Number of candidate removal directions per part.
pub const NUM_DIRECTIONS: usize = 12;

/// Removal primitive of one part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RemovalDirection {
    Translate(Vector3<f64>),
    /// Full turn about an axis through the center of mass, advancing along it.
    Screw(Vector3<f64>),
}

impl RemovalDirection {
    /// Direction in which the part leaves the assembly.
    pub fn heading(&self) -> Vector3<f64> {
        match self {
            RemovalDirection::Translate(d) | RemovalDirection::Screw(d) => *d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisassemblyAction {
    pub part_id: usize,
    /// Index into [`removal_directions`], in `0..12`.
    pub direction_index: usize,
    /// Escape distance travelled along the direction (m).
    pub magnitude: f64,
}

/// Inertial properties re-expressed after placing the part at `pose`.
///
/// Axes are rotated, not re-canonicalized, so directions are covariant.
pub fn place_props(props: &InertialProps, pose: &Pose) -> InertialProps {
    InertialProps {
        mass: props.mass,
        center_of_mass: pose.transform_point(&props.center_of_mass),
        principal_axes: props.principal_axes.map(|a| pose.transform_vector(&a)),
        principal_moments: props.principal_moments,
    }
}

/// The twelve removal directions of a part: `+a0, -a0, +a1, -a1, +a2, -a2`
/// as translations, then the same six as screw axes.
///
/// When two principal moments coincide the principal axes are not unique,
/// and the coordinate axes of the frame `props` is expressed in are used.
pub fn removal_directions(props: &InertialProps) -> [RemovalDirection; NUM_DIRECTIONS] {
    let axes = if props.is_degenerate(DEGENERATE_MOMENT_TOL) {
        [Vector3::x(), Vector3::y(), Vector3::z()]
    } else {
        props.principal_axes
    };
    let mut signed = [Vector3::zeros(); 6];
    for (k, a) in axes.iter().enumerate() {
        signed[2 * k] = *a;
        signed[2 * k + 1] = -*a;
    }
    std::array::from_fn(|j| {
        if j < 6 {
            RemovalDirection::Translate(signed[j])
        } else {
            RemovalDirection::Screw(signed[j - 6])
        }
    })
}

/// Sweep performed by `action` starting from `start`, with `world_props`
/// already placed at `start`.
pub fn removal_motion(action: &DisassemblyAction, start: &Pose, world_props: &InertialProps) -> Motion {
    let direction = removal_directions(world_props)[action.direction_index];
    match direction {
        RemovalDirection::Translate(d) => Motion::Linear {
            from: *start,
            to: Pose::new(start.translation + d * action.magnitude, start.rotation),
        },
        RemovalDirection::Screw(axis) => Motion::Screw {
            start: *start,
            pivot: world_props.center_of_mass,
            axis,
            angle: std::f64::consts::TAU,
            advance: action.magnitude,
        },
    }
}

/// Dense waypoint list following `motion` (at least `min_points` poses).
pub fn motion_waypoints(motion: &Motion, min_points: usize) -> Vec<Pose> {
    let n = match motion {
        Motion::Linear { .. } => 1,
        Motion::Screw { .. } => min_points.max(2) - 1,
    };
    (0..=n).map(|i| motion.at(i as f64 / n as f64)).collect()
}
