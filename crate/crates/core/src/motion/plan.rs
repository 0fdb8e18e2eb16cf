use nalgebra::Vector3;

use super::rrt::{plan_part_motion, plan_part_motion_seeded, MotionFailure, RrtConfig};
use super::trajectory::Trajectory;
use crate::blueprint::Blueprint;
use crate::disassembly::action::motion_waypoints;
use crate::disassembly::{
    escape_distance, place_props, removal_motion, AssemblySequence, DisassemblyAction, NUM_DIRECTIONS,
};
use crate::error::Result;
use crate::geometry::{default_step, sweep_motion_free_fraction, InertialProps, Pose, TriMesh};

/// Poses sampled along a screw removal when it is used as a hint path.
const SCREW_HINT_POINTS: usize = 96;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionPlanFailure {
    /// Position in the sequence of the part that could not be placed.
    pub step: usize,
    pub part: usize,
    pub reason: MotionFailure,
}

impl std::fmt::Display for MotionPlanFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "motion planning failed at step {} (part {}): {}", self.step, self.part, self.reason)
    }
}

/// Staging poses: canonical orientation, grid-packed next to the assembly at
/// twice its bounding radius, resting at the height of its lowest point.
pub fn resting_poses(blueprint: &Blueprint) -> Vec<Pose> {
    let (center, radius) = blueprint.bounding_sphere();
    let floor = blueprint
        .meshes
        .iter()
        .zip(&blueprint.target_poses)
        .flat_map(|(m, p)| m.vertices().iter().map(move |v| p.transform_point(v).z))
        .fold(f64::INFINITY, f64::min);
    let cell = 2.0 * blueprint
        .meshes
        .iter()
        .map(|m| m.radius_about_origin())
        .fold(0.0, f64::max)
        + 0.02;
    let n = blueprint.num_parts();
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    (0..n)
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            let (lo, _) = blueprint.meshes[i].aabb();
            let x = center.x + 2.0 * radius + 0.5 * cell + col as f64 * cell;
            let y = center.y + (row as f64 - 0.5 * (rows as f64 - 1.0)) * cell;
            Pose::from_translation(Vector3::new(x, y, floor - lo.z))
        })
        .collect()
}

/// Reversed removal path of `part` among `obstacles`: from its removal
/// action when available, otherwise from the first free removal direction.
fn insertion_hint(
    blueprint: &Blueprint,
    part: usize,
    props: &InertialProps,
    action: Option<&DisassemblyAction>,
    obstacles: &[(&TriMesh, Pose)],
    clearance: f64,
) -> Vec<Pose> {
    let target = blueprint.target_poses[part];
    let world = place_props(props, &target);
    let mesh = &blueprint.meshes[part];
    let action = action.copied().or_else(|| {
        let magnitude = escape_distance(blueprint);
        (0..NUM_DIRECTIONS)
            .map(|j| DisassemblyAction {
                part_id: part,
                direction_index: j,
                magnitude,
            })
            .find(|a| {
                let motion = removal_motion(a, &target, &world);
                let step = default_step(mesh, &motion);
                sweep_motion_free_fraction(mesh, &motion, obstacles, clearance, step) >= 1.0
            })
    });
    match action {
        Some(a) => {
            let mut path = motion_waypoints(&removal_motion(&a, &target, &world), SCREW_HINT_POINTS);
            path.reverse();
            path
        }
        None => Vec::new(),
    }
}

/// Plans every part from its resting pose into the assembly, in sequence
/// order, with the already placed parts and the fixtures as obstacles.
pub fn plan_all_motions(
    blueprint: &Blueprint,
    sequence: &AssemblySequence,
    resting: &[Pose],
    config: &RrtConfig,
) -> Result<Result<Vec<Trajectory>, MotionPlanFailure>> {
    let props = blueprint.inertial_props()?;
    let mut trajectories = Vec::with_capacity(sequence.order.len());
    for (k, &part) in sequence.order.iter().enumerate() {
        let mesh = &blueprint.meshes[part];
        let obstacles: Vec<(&TriMesh, Pose)> = sequence.order[..k]
            .iter()
            .map(|&j| (&blueprint.meshes[j], blueprint.target_poses[j]))
            .chain(blueprint.environment.iter().map(|(m, p)| (m, *p)))
            .collect();
        let goal = blueprint.target_poses[part];
        // The reversed removal path usually threads the tight final
        // approach; plain bidirectional search with a fresh seed is the
        // fallback.
        let hint = insertion_hint(
            blueprint,
            part,
            &props[part],
            sequence.action_for(part),
            &obstacles,
            config.clearance,
        );
        let first = plan_part_motion_seeded(part, mesh, &resting[part], &goal, &obstacles, config, &hint);
        let result = match first {
            Err(MotionFailure::Exhausted { .. }) if !hint.is_empty() => {
                let retry = RrtConfig {
                    seed: config.seed.wrapping_add(1),
                    ..config.clone()
                };
                plan_part_motion(part, mesh, &resting[part], &goal, &obstacles, &retry)
            }
            other => other,
        };
        match result {
            Ok(t) => trajectories.push(t),
            Err(reason) => return Ok(Err(MotionPlanFailure { step: k, part, reason })),
        }
    }
    Ok(Ok(trajectories))
}
