//! Support code for the `voxelmap` binary.

pub mod report;
