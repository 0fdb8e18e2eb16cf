//! Assembly by disassembly: breadth-first search over removed-part sets.

pub mod action;
pub mod dataset;
pub mod replay;
pub mod search;
pub mod state;

pub use action::{place_props, removal_directions, removal_motion, DisassemblyAction, RemovalDirection, NUM_DIRECTIONS};
pub use dataset::{emit_dataset, feasibility_labels, DatasetConfig, SequenceSample};
pub use replay::replay_sequence;
pub use search::{enumerate_sequences, escape_distance, DisassemblyPlanner, PlannerConfig, SearchResult, SearchStats};
pub use state::{AssemblySequence, AssemblyState, VisitedSet};
