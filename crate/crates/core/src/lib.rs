//! Hierarchical 3D occupancy and semantic voxel mapping.
//!
//! The crate integrates posed, labelled point clouds into a sparse octree
//! that represents unknown space explicitly, answers region and content
//! queries at any resolution, streams incremental deltas to replicas and
//! scores map-accumulated semantic labels against ground truth.
//!
//! ```
//! use nalgebra::Point3;
//! use voxelmap::{MapConfig, OccupancyMap, OccupancyState};
//!
//! let mut map = OccupancyMap::new(MapConfig::default()).unwrap();
//! let code = map.config().code_from_point(&Point3::new(1.0, 2.0, 0.5), 0).unwrap();
//! let hit = map.config().inverse_sensor_logodds(true);
//! map.update_leaf(code, hit, None, Some(7)).unwrap();
//! map.propagate();
//! assert_eq!(map.state(code), OccupancyState::Occupied);
//! ```

pub mod codec;
pub mod error;
pub mod ingest;
pub mod integrator;
pub mod octree;
pub mod query;
pub mod semantics;

pub use error::MapError;
pub use integrator::{integrate_frame, raycast, IntegrationStats, IntegratorConfig, Pose, PointRecord, ScanFrame, SlotSelection};
pub use octree::{classify, LeafPayload, MapConfig, NodeCode, OccupancyMap, OccupancyState, Rgb, Semantics, SummaryReducer};
pub use query::{count_states, occluded, query, Predicate, Region};

// Guide chapters are compiled as doctests so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/addressing.md")]
    mod addressing {}
    #[doc = include_str!("../../../book/src/occupancy.md")]
    mod occupancy {}
    #[doc = include_str!("../../../book/src/hierarchy.md")]
    mod hierarchy {}
    #[doc = include_str!("../../../book/src/raycasting.md")]
    mod raycasting {}
    #[doc = include_str!("../../../book/src/queries.md")]
    mod queries {}
    #[doc = include_str!("../../../book/src/semantics.md")]
    mod semantics {}
    #[doc = include_str!("../../../book/src/streaming.md")]
    mod streaming {}
    #[doc = include_str!("../../../book/src/logs.md")]
    mod logs {}
}
