//! Hierarchical voxel store.
//!
//! Leaves hold occupancy log-odds, a fused colour, the timestep of the last
//! update and a list of label observation counts. Inner nodes hold the same
//! record as a summary of their children so that queries can stop at any
//! level.

mod code;
mod config;
mod map;
mod payload;

pub use code::{decode, encode, NodeCode, MAX_DEPTH_LEVELS};
pub use config::{logit, sigmoid, MapConfig};
pub use map::{NodeRef, OccupancyMap, SummaryReducer};
pub use payload::{classify, LabelCount, LeafPayload, OccupancyState, Rgb, Semantics};
