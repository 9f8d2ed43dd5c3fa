use thiserror::Error;

use crate::octree::NodeCode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("point or code outside the map extent")]
    OutOfBounds,
    #[error("depth {0} is not a valid query or voxel level")]
    InvalidDepth(u8),
    #[error("{0:?} is not a leaf code")]
    NotALeaf(NodeCode),
    #[error("invalid map configuration: {0}")]
    InvalidConfig(String),
    #[error("sensor pose is not a proper rigid transform: {0}")]
    PoseInvalid(String),
    #[error("frame contains a non-finite point at index {0}")]
    NonFinitePoint(usize),
    #[error("label slot {slot} not available (frame has {available})")]
    UnknownSlot { slot: usize, available: usize },
}
