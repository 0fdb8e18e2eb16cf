//! Assembly planning by disassembly search, learned sequence prediction,
//! motion planning and contact planning.

pub mod blueprint;
pub mod contact;
pub mod disassembly;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod motion;

pub use blueprint::Blueprint;
pub use error::{Error, Result};
