use super::action::{place_props, removal_motion};
use super::state::AssemblySequence;
use crate::blueprint::Blueprint;
use crate::error::{Error, Result};
use crate::geometry::{check_collision, default_step};

/// Re-checks a sequence by inserting each part along its reversed removal
/// sweep, sampled `refine` times more finely than the search did.
///
/// Returns the index of the first step whose insertion collides.
pub fn replay_sequence(blueprint: &Blueprint, sequence: &AssemblySequence, clearance: f64, refine: f64) -> Result<Option<usize>> {
    if sequence.removal_actions.len() != sequence.order.len() {
        return Err(Error::InvalidInput("sequence carries no removal actions".into()));
    }
    let props = blueprint.inertial_props()?;
    for (k, (&part, action)) in sequence.order.iter().zip(&sequence.removal_actions).enumerate() {
        let target = blueprint.target_poses[part];
        let motion = removal_motion(action, &target, &place_props(&props[part], &target));
        let mesh = &blueprint.meshes[part];
        let step = default_step(mesh, &motion) / refine;
        let n = (1.0 / step).ceil() as usize;
        let obstacles: Vec<_> = sequence.order[..k]
            .iter()
            .map(|&j| (&blueprint.meshes[j], blueprint.target_poses[j]))
            .chain(blueprint.environment.iter().map(|(m, p)| (m, *p)))
            .collect();
        // Insertion runs the sweep backwards, from the parked pose inwards.
        for i in (0..=n).rev() {
            let pose = motion.at((i as f64 * step).min(1.0));
            if obstacles
                .iter()
                .any(|(m, p)| check_collision(mesh, &pose, m, p, clearance))
            {
                return Ok(Some(k));
            }
        }
    }
    Ok(None)
}
