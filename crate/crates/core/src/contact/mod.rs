//! Robot contacts: antipodal grasps scored by Ferrari-Canny, with a
//! single-point push as fallback.

pub mod grasp;
pub mod plan;
pub mod push;
pub mod wrench;

pub use grasp::{antipodal_candidates, enumerate_grasp_pairs, ferrari_canny, hull_origin_depth, score_and_sort, GraspPair};
pub use plan::{plan_contacts, ContactAssignment, ContactConfig, ContactFailure};
pub use push::{in_cone, optimize_push_contact, project_cone, residual_tolerance, solve_push_force, PushContact, PushFailure, PushSolve};
pub use wrench::{contact_frame, grasp_map, movement_wrench, WrenchTarget, GRAVITY};
