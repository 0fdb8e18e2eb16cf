//! Collision-free part trajectories from staging poses into the assembly.

pub mod plan;
pub mod rrt;
pub mod trajectory;

pub use plan::{plan_all_motions, resting_poses, MotionPlanFailure};
pub use rrt::{plan_part_motion, plan_part_motion_seeded, MotionFailure, RrtConfig};
pub use trajectory::Trajectory;
