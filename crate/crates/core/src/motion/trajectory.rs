use serde::{Deserialize, Serialize};

use crate::geometry::{check_collision, Pose, TriMesh};

/// Waypoint path of one part, interpolated at `step_resolution`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub part_id: usize,
    pub waypoints: Vec<Pose>,
    /// Largest displacement of any point of the part between checked poses (m).
    pub step_resolution: f64,
}

/// Weighted pose distance that bounds the displacement of every point of a
/// body whose vertices lie within `radius` of its origin.
pub fn pose_distance(a: &Pose, b: &Pose, radius: f64) -> f64 {
    a.distance(b, radius)
}

/// Poses strictly after `a` up to and including `b`, spaced so that no
/// point moves more than `resolution` between consecutive poses.
pub fn edge_samples(a: &Pose, b: &Pose, radius: f64, resolution: f64) -> impl Iterator<Item = Pose> {
    let d = pose_distance(a, b, radius);
    let n = ((d / resolution).ceil() as usize).max(1);
    let (a, b) = (*a, *b);
    (1..=n).map(move |i| a.interpolate(&b, i as f64 / n as f64))
}

impl Trajectory {
    pub fn start(&self) -> &Pose {
        &self.waypoints[0]
    }

    pub fn goal(&self) -> &Pose {
        self.waypoints.last().expect("trajectories have waypoints")
    }

    /// Sum of weighted segment lengths.
    pub fn length(&self, radius: f64) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| pose_distance(&w[0], &w[1], radius))
            .sum()
    }

    /// Every pose visited at `resolution`, including the first waypoint.
    pub fn dense_poses(&self, radius: f64, resolution: f64) -> Vec<Pose> {
        let mut out = vec![self.waypoints[0]];
        for w in self.waypoints.windows(2) {
            out.extend(edge_samples(&w[0], &w[1], radius, resolution));
        }
        out
    }

    /// Re-validates the path at `resolution` against `obstacles`.
    pub fn is_collision_free(
        &self,
        mesh: &TriMesh,
        obstacles: &[(&TriMesh, Pose)],
        clearance: f64,
        resolution: f64,
    ) -> bool {
        let radius = mesh.radius_about_origin();
        self.dense_poses(radius, resolution)
            .iter()
            .all(|p| !obstacles.iter().any(|(m, q)| check_collision(mesh, p, m, q, clearance)))
    }
}
