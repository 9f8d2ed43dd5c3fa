//! Conversion from the common LiDAR odometry layout.
//!
//! Scans are `NNNNNN.bin` files of `x y z intensity` as little-endian `f32`.
//! Labels are `NNNNNN.label` files with one little-endian `u32` per point:
//! the lower 16 bits are the semantic class, the upper 16 the instance.
//! Intensity and instance ids are dropped and colours are zero.

use std::fs;
use std::path::{Path, PathBuf};

use super::{parse_poses, FrameLog, IngestError, LogWriter};
use crate::integrator::{PointRecord, ScanFrame};
use crate::octree::Rgb;

/// Semantic class of a label word.
#[inline]
pub fn semantic_id(word: u32) -> u16 {
    (word & 0xffff) as u16
}

pub fn encode_scan(points: &[[f32; 4]]) -> Vec<u8> {
    points.iter().flatten().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_scan(bytes: &[u8]) -> Option<Vec<[f32; 4]>> {
    if bytes.len() % 16 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(16)
            .map(|c| std::array::from_fn(|i| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().unwrap())))
            .collect(),
    )
}

pub fn encode_labels(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

pub fn decode_labels(bytes: &[u8]) -> Option<Vec<u32>> {
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
}

#[derive(Debug, Clone)]
pub struct KittiSource {
    pub velodyne: PathBuf,
    /// Ground truth, written to slot 0.
    pub labels: PathBuf,
    /// Further label directories (network predictions), slots 1, 2, ...
    pub extra_labels: Vec<PathBuf>,
    pub poses: PathBuf,
}

fn read(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))
}

fn scan_stems(dir: &Path) -> Result<Vec<String>, IngestError> {
    let entries = fs::read_dir(dir).map_err(|e| IngestError::Io(format!("{}: {e}", dir.display())))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| IngestError::Io(e.to_string()))?.path();
        if path.extension().is_some_and(|x| x == "bin") {
            if let Some(stem) = path.file_stem() {
                stems.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

/// Converts a sequence into a frame log at `out`.
pub fn convert_kitti(src: &KittiSource, out: impl AsRef<Path>, label_file: Option<&str>) -> Result<FrameLog, IngestError> {
    let stems = scan_stems(&src.velodyne)?;
    if stems.is_empty() {
        return Err(IngestError::NoFrames(format!("no .bin scans in {}", src.velodyne.display())));
    }
    let poses = parse_poses(&String::from_utf8_lossy(&read(&src.poses)?))?;
    if poses.len() != stems.len() {
        return Err(IngestError::CountMismatch(format!("{} scans, {} poses", stems.len(), poses.len())));
    }
    let label_dirs: Vec<&PathBuf> = std::iter::once(&src.labels).chain(&src.extra_labels).collect();
    let slots = u8::try_from(label_dirs.len()).map_err(|_| IngestError::InvalidSpec("too many label directories".into()))?;
    let mut w = LogWriter::create(out, slots, label_file)?;
    for (i, stem) in stems.iter().enumerate() {
        let scan_path = src.velodyne.join(format!("{stem}.bin"));
        let scan = decode_scan(&read(&scan_path)?)
            .ok_or_else(|| IngestError::CorruptFrame(format!("{}: length not a multiple of 16", scan_path.display())))?;
        let mut columns = Vec::with_capacity(label_dirs.len());
        for dir in &label_dirs {
            let path = dir.join(format!("{stem}.label"));
            let words = decode_labels(&read(&path)?)
                .ok_or_else(|| IngestError::CorruptFrame(format!("{}: length not a multiple of 4", path.display())))?;
            if words.len() != scan.len() {
                return Err(IngestError::CountMismatch(format!(
                    "{}: {} labels for {} points",
                    path.display(),
                    words.len(),
                    scan.len()
                )));
            }
            columns.push(words);
        }
        let mut frame = ScanFrame::new(i as u32, poses[i], slots);
        frame.points = scan
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let labels: Vec<u16> = columns.iter().map(|c| semantic_id(c[j])).collect();
                PointRecord::new([p[0], p[1], p[2]], Rgb::default(), &labels)
            })
            .collect();
        w.push(&frame)?;
    }
    w.finish()
}
