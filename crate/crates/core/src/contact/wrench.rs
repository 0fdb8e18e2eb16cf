use nalgebra::{Matrix3, Matrix6x3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::geometry::InertialProps;
use crate::motion::Trajectory;

pub const GRAVITY: f64 = 9.81;

/// Force (N) and torque about the part's center of mass (N m).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WrenchTarget {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl WrenchTarget {
    pub fn new(force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self { force, torque }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

/// Tangent basis of a contact with unit normal `n`.
///
/// The first tangent is the world axis least aligned with `n`, orthogonalized
/// against it; the second completes a right-handed frame.
pub fn contact_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let mut e = Vector3::zeros();
    e[n.abs().imin()] = 1.0;
    let t1 = (e - n * n.dot(&e)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Maps a contact-frame force `(t1, t2, n)` to the wrench about `com`.
pub fn grasp_map(c: &Vector3<f64>, normal: &Vector3<f64>, com: &Vector3<f64>) -> Matrix6x3<f64> {
    let (t1, t2) = contact_frame(normal);
    let lever = c - com;
    let mut g = Matrix6x3::zeros();
    for (j, col) in [t1, t2, *normal].iter().enumerate() {
        g.fixed_view_mut::<3, 1>(0, j).copy_from(col);
        g.fixed_view_mut::<3, 1>(3, j).copy_from(&lever.cross(col));
    }
    g
}

/// Quasi-static wrench needed to hold and accelerate the part at waypoint `i`.
///
/// Waypoints are taken one time unit apart; accelerations are central
/// differences and vanish at the endpoints.
pub fn movement_wrench(trajectory: &Trajectory, i: usize, props: &InertialProps) -> WrenchTarget {
    let w = &trajectory.waypoints;
    let pose = w[i];
    let com = |k: usize| w[k].transform_point(&props.center_of_mass);
    let (acc, alpha) = if i == 0 || i + 1 >= w.len() {
        (Vector3::zeros(), Vector3::zeros())
    } else {
        let acc = com(i + 1) - 2.0 * com(i) + com(i - 1);
        let omega = |a: usize, b: usize| (w[b].rotation * w[a].rotation.inverse()).scaled_axis();
        (acc, omega(i, i + 1) - omega(i - 1, i))
    };
    let r: Matrix3<f64> = pose.rotation.to_rotation_matrix().into_inner();
    let inertia = r * props.tensor() * r.transpose();
    WrenchTarget {
        force: props.mass * (Vector3::z() * GRAVITY + acc),
        torque: inertia * alpha,
    }
}
