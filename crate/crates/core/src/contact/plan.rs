use serde::{Deserialize, Serialize};

use super::grasp::{antipodal_candidates, score_and_sort, GraspPair};
use super::push::{optimize_push_contact, PushContact};
use super::wrench::{movement_wrench, WrenchTarget};
use crate::blueprint::Blueprint;
use crate::disassembly::AssemblySequence;
use crate::error::Result;
use crate::geometry::{point_near_mesh, sample_point_cloud, Pose, TriMesh, PLANNING_CLEARANCE};
use crate::motion::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    pub mu: f64,
    pub antipodal_tol_deg: f64,
    /// Radius of the fingertip spheres used for collision filtering (m).
    pub gripper_radius: f64,
    pub clearance: f64,
    pub cloud_points: usize,
    pub push_samples: usize,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            mu: 0.2,
            antipodal_tol_deg: 10.0,
            gripper_radius: 0.005,
            clearance: PLANNING_CLEARANCE,
            cloud_points: 512,
            push_samples: 64,
        }
    }
}

/// How the robot holds the part during one assembly step. Points and
/// forces are expressed in the part's mesh frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactAssignment {
    Grasp(GraspPair),
    Push(PushContact),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactFailure {
    pub step: usize,
    pub part: usize,
}

impl std::fmt::Display for ContactFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "no feasible grasp or push for part {} at step {}", self.part, self.step)
    }
}

/// Chooses a contact for every step: the best grasp whose fingertips stay
/// clear of the assembled parts along the whole trajectory, otherwise the
/// cheapest push against the step's largest movement wrench.
pub fn plan_contacts(
    blueprint: &Blueprint,
    sequence: &AssemblySequence,
    trajectories: &[Trajectory],
    config: &ContactConfig,
) -> Result<Result<Vec<ContactAssignment>, ContactFailure>> {
    let props = blueprint.inertial_props()?;
    let mut out = Vec::with_capacity(trajectories.len());
    for (k, (&part, traj)) in sequence.order.iter().zip(trajectories).enumerate() {
        let mesh = &blueprint.meshes[part];
        let cloud = sample_point_cloud(mesh, &Pose::identity(), config.cloud_points, part as u64)?;
        let assembled: Vec<(&TriMesh, Pose)> = sequence.order[..k]
            .iter()
            .map(|&j| (&blueprint.meshes[j], blueprint.target_poses[j]))
            .collect();
        let reach = config.gripper_radius + config.clearance;
        let clear: Vec<bool> = cloud
            .points
            .iter()
            .map(|p| {
                traj.waypoints.iter().all(|w| {
                    let q = w.transform_point(p);
                    !assembled.iter().any(|(m, pose)| point_near_mesh(m, pose, &q, reach))
                })
            })
            .collect();

        let com = props[part].center_of_mass;
        let scale = mesh.radius_about_origin();
        // Candidates are subsampled from the reachable surface only, so a
        // narrow exposed band still yields a full set of pairs.
        let keep: Vec<usize> = (0..cloud.len()).filter(|&i| clear[i]).collect();
        let reachable = cloud.select(&keep);
        if reachable.is_empty() {
            return Ok(Err(ContactFailure { step: k, part }));
        }
        let pairs: Vec<GraspPair> = antipodal_candidates(&reachable, config.mu, config.antipodal_tol_deg)
            .into_iter()
            .map(|(a, b)| {
                GraspPair::new(
                    reachable.points[a],
                    -reachable.normals[a],
                    reachable.points[b],
                    -reachable.normals[b],
                )
            })
            .collect();
        let scored = score_and_sort(pairs, config.mu, &com, scale);
        if let Some(best) = scored.into_iter().find(|g| g.quality > 0.0) {
            out.push(ContactAssignment::Grasp(best));
            continue;
        }

        let worst = worst_wrench(traj, &props[part]);
        match optimize_push_contact(&reachable, &com, &worst, config.mu, config.push_samples) {
            Ok(push) => out.push(ContactAssignment::Push(push)),
            Err(_) => return Ok(Err(ContactFailure { step: k, part })),
        }
    }
    Ok(Ok(out))
}

/// Movement wrench of largest norm along the trajectory, in the part frame.
pub fn worst_wrench(traj: &Trajectory, props: &crate::geometry::InertialProps) -> WrenchTarget {
    let mut worst = WrenchTarget::default();
    for i in 0..traj.waypoints.len() {
        let w = movement_wrench(traj, i, props);
        let inv = traj.waypoints[i].rotation.inverse();
        let local = WrenchTarget::new(inv * w.force, inv * w.torque);
        if local.norm() > worst.norm() {
            worst = local;
        }
    }
    worst
}
