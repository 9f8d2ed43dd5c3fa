//! Frame logs on disk, synthetic scenes and dataset conversion.

mod kitti;
mod log;
mod pts;
mod synth;

use thiserror::Error;

pub use kitti::{convert_kitti, decode_labels, decode_scan, encode_labels, encode_scan, semantic_id, KittiSource};
pub use log::{format_pose_line, frame_file_name, parse_pose_line, parse_poses, FrameLog, LogWriter, META_FILE, POSES_FILE};
pub use pts::{decode_points, encode_points, point_len, PTS_HEADER_LEN, PTS_MAGIC};
pub use synth::{label_file, synth_frame, synth_frames, synth_log, Ground, NoiseSlot, SceneBox, SceneSpec, Sensor, Trajectory, LABELS_FILE};

use crate::error::MapError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("{0}")]
    Io(String),
    #[error("corrupt frame: {0}")]
    CorruptFrame(String),
    #[error("poses.txt line {line}: expected 12 finite numbers")]
    PoseParse { line: usize },
    #[error("count mismatch: {0}")]
    CountMismatch(String),
    #[error("no frames: {0}")]
    NoFrames(String),
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Map(#[from] MapError),
}
