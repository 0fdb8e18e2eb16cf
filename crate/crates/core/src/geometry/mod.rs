//! Meshes, poses, surface sampling, mass properties and collision queries.

mod bvh;
pub mod collision;
pub mod inertia;
pub mod mesh;
pub mod obj;
pub mod pose;
pub mod sampling;
pub mod sweep;

pub use collision::{check_collision, point_mesh_distance, point_near_mesh, triangle_distance, winding_number};
pub use inertia::{compute_inertial_props, InertialProps};
pub use mesh::{rectilinear_union, TriMesh};
pub use obj::{parse_obj, read_obj, to_obj, write_obj};
pub use pose::{canonical_axis_angle, Pose};
pub use sampling::{farthest_point_indices, sample_point_cloud, PointCloud};
pub use sweep::{default_step, sweep_free_fraction, sweep_motion_free_fraction, Motion};

/// Planning clearance used by search and motion queries (meters).
pub const PLANNING_CLEARANCE: f64 = 1e-4;
