//! Frame log directories.
//!
//! ```text
//! log/
//!   meta.txt      "slots K" and optionally "labels <path>"
//!   poses.txt     one row-major 3x4 sensor-to-world pose per frame
//!   000000.pts
//!   000001.pts
//!   ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::pts::{decode_points, encode_points};
use super::IngestError;
use crate::integrator::{Pose, ScanFrame};

pub const META_FILE: &str = "meta.txt";
pub const POSES_FILE: &str = "poses.txt";

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.pts")
}

/// Parses one `poses.txt` line.
pub fn parse_pose_line(line: &str) -> Option<Pose> {
    let mut v = [0f64; 12];
    let mut it = line.split_whitespace();
    for slot in &mut v {
        *slot = it.next()?.parse().ok()?;
    }
    if it.next().is_some() || !v.iter().all(|x| x.is_finite()) {
        return None;
    }
    Some(Pose::from_row_major(&v))
}

/// Formats a pose so that [`parse_pose_line`] reads it back exactly.
pub fn format_pose_line(pose: &Pose) -> String {
    let mut s = String::new();
    for (i, v) in pose.to_row_major().iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

pub fn parse_poses(text: &str) -> Result<Vec<Pose>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_pose_line(l).ok_or(IngestError::PoseParse { line: n + 1 }))
        .collect()
}

fn io_err(path: &Path, e: std::io::Error) -> IngestError {
    IngestError::Io(format!("{}: {e}", path.display()))
}

/// An opened log. Frames are read on demand.
#[derive(Debug, Clone)]
pub struct FrameLog {
    dir: PathBuf,
    slots: u8,
    labels: Option<PathBuf>,
    poses: Vec<Pose>,
}

impl FrameLog {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, IngestError> {
        let dir = dir.as_ref().to_path_buf();
        let meta_path = dir.join(META_FILE);
        let meta = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
        let mut slots = None;
        let mut labels = None;
        for line in meta.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match key {
                "slots" => {
                    slots = Some(
                        value
                            .trim()
                            .parse::<u8>()
                            .map_err(|_| IngestError::CorruptFrame(format!("{META_FILE}: bad slot count `{}`", value.trim())))?,
                    )
                }
                "labels" => labels = Some(dir.join(value.trim())),
                _ => return Err(IngestError::CorruptFrame(format!("{META_FILE}: unknown key `{key}`"))),
            }
        }
        let slots = slots.ok_or_else(|| IngestError::CorruptFrame(format!("{META_FILE}: missing `slots`")))?;

        let poses_path = dir.join(POSES_FILE);
        let poses = parse_poses(&fs::read_to_string(&poses_path).map_err(|e| io_err(&poses_path, e))?)?;

        let mut frames = 0;
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let name = entry.map_err(|e| io_err(&dir, e))?.file_name();
            if name.to_string_lossy().ends_with(".pts") {
                frames += 1;
            }
        }
        if frames != poses.len() {
            return Err(IngestError::CountMismatch(format!("{frames} frame files, {} poses", poses.len())));
        }
        if let Some(i) = (0..frames).find(|&i| !dir.join(frame_file_name(i)).is_file()) {
            return Err(IngestError::CountMismatch(format!("frame file {} missing", frame_file_name(i))));
        }
        Ok(Self { dir, slots, labels, poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn slots(&self) -> u8 {
        self.slots
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Label set file named in `meta.txt`, resolved against the log directory.
    pub fn labels_path(&self) -> Option<&Path> {
        self.labels.as_deref()
    }

    pub fn pose(&self, index: usize) -> Option<&Pose> {
        self.poses.get(index)
    }

    /// Frame `index`, with timestep `index`.
    pub fn read_frame(&self, index: usize) -> Result<ScanFrame, IngestError> {
        let pose = *self
            .poses
            .get(index)
            .ok_or_else(|| IngestError::CountMismatch(format!("frame {index} of {}", self.len())))?;
        let path = self.dir.join(frame_file_name(index));
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let (slots, points) = decode_points(&bytes).map_err(|m| IngestError::CorruptFrame(format!("{}: {m}", path.display())))?;
        if slots != self.slots {
            return Err(IngestError::CorruptFrame(format!(
                "{}: {slots} label slots, log declares {}",
                path.display(),
                self.slots
            )));
        }
        Ok(ScanFrame {
            timestep: u32::try_from(index).unwrap_or(u32::MAX),
            pose,
            label_slots: slots,
            points,
        })
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<ScanFrame, IngestError>> + '_ {
        (0..self.len()).map(|i| self.read_frame(i))
    }
}

/// Writes a log one frame at a time.
#[derive(Debug)]
pub struct LogWriter {
    dir: PathBuf,
    slots: u8,
    poses: String,
    frames: usize,
}

impl LogWriter {
    /// Creates `dir` if needed and writes `meta.txt`.
    pub fn create(dir: impl AsRef<Path>, slots: u8, labels: Option<&str>) -> Result<Self, IngestError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut meta = format!("slots {slots}\n");
        if let Some(l) = labels {
            meta.push_str(&format!("labels {l}\n"));
        }
        let meta_path = dir.join(META_FILE);
        fs::write(&meta_path, meta).map_err(|e| io_err(&meta_path, e))?;
        Ok(Self {
            dir,
            slots,
            poses: String::new(),
            frames: 0,
        })
    }

    pub fn push(&mut self, frame: &ScanFrame) -> Result<(), IngestError> {
        if frame.label_slots != self.slots {
            return Err(IngestError::CorruptFrame(format!(
                "frame has {} label slots, log has {}",
                frame.label_slots, self.slots
            )));
        }
        if let Some(i) = frame.points.iter().position(|p| p.labels.len() != usize::from(self.slots)) {
            return Err(IngestError::CorruptFrame(format!("point {i} has the wrong number of labels")));
        }
        let path = self.dir.join(frame_file_name(self.frames));
        fs::write(&path, encode_points(&frame.points, self.slots)).map_err(|e| io_err(&path, e))?;
        self.poses.push_str(&format_pose_line(&frame.pose));
        self.poses.push('\n');
        self.frames += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<FrameLog, IngestError> {
        let path = self.dir.join(POSES_FILE);
        fs::write(&path, &self.poses).map_err(|e| io_err(&path, e))?;
        FrameLog::open(&self.dir)
    }
}
