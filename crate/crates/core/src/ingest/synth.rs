//! Synthetic scans of box-and-plane scenes.
//!
//! A simulated spinning sensor moves along a straight line and casts
//! `azimuth_beams x elevation_beams` rays per frame against a ground plane
//! and axis-aligned boxes. Slot 0 of every point holds the ground-truth
//! label. Each entry of `noise` adds one corrupted copy of it.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FrameLog, IngestError, LogWriter};
use crate::integrator::{PointRecord, Pose, ScanFrame};
use crate::octree::Rgb;

pub const LABELS_FILE: &str = "labels.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ground {
    pub height: f64,
    pub label: u16,
    #[serde(default)]
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub label: u16,
    #[serde(default)]
    pub color: [u8; 3],
}

impl SceneBox {
    pub fn new(min: [f64; 3], max: [f64; 3], label: u16, color: [u8; 3]) -> Self {
        Self { min, max, label, color }
    }

    /// Entry distance of the ray, if it enters the box ahead of the origin.
    fn entry(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let mut near = f64::NEG_INFINITY;
        let mut far = f64::INFINITY;
        for a in 0..3 {
            if d[a] == 0.0 {
                if o[a] < self.min[a] || o[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let t0 = (self.min[a] - o[a]) / d[a];
            let t1 = (self.max[a] - o[a]) / d[a];
            near = near.max(t0.min(t1));
            far = far.min(t0.max(t1));
        }
        (near <= far && near > 0.0).then_some(near)
    }
}

/// Straight-line motion. The sensor faces along `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub start: [f64; 3],
    /// Displacement per frame.
    pub step: [f64; 3],
}

impl Trajectory {
    pub fn pose(&self, frame: usize) -> Pose {
        let s = Vector3::from(self.step);
        let yaw = if s.x == 0.0 && s.y == 0.0 { 0.0 } else { s.y.atan2(s.x) };
        Pose::from_yaw(yaw, Vector3::from(self.start) + s * frame as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensor {
    pub azimuth_beams: u32,
    pub elevation_beams: u32,
    /// Degrees.
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub max_range: f64,
    /// Random beam offset as a fraction of the beam spacing, in [0, 1].
    #[serde(default)]
    pub jitter: f64,
}

/// One corrupted label slot. A label is replaced, with probability `rate`
/// (or the per-class override), by a different label drawn uniformly from
/// the labels present in the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSlot {
    pub rate: f64,
    #[serde(default)]
    pub per_class: BTreeMap<u16, f64>,
}

impl NoiseSlot {
    pub fn uniform(rate: f64) -> Self {
        Self {
            rate,
            per_class: BTreeMap::new(),
        }
    }

    fn rate_for(&self, label: u16) -> f64 {
        self.per_class.get(&label).copied().unwrap_or(self.rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub ground: Option<Ground>,
    #[serde(default)]
    pub boxes: Vec<SceneBox>,
    pub trajectory: Trajectory,
    pub sensor: Sensor,
    #[serde(default)]
    pub noise: Vec<NoiseSlot>,
    /// Class names written to the log's label file.
    #[serde(default)]
    pub names: BTreeMap<u16, String>,
}

const ROAD: u16 = 40;
const BUILDING: u16 = 50;
const CAR: u16 = 10;
const POLE: u16 = 80;
const VEGETATION: u16 = 70;

fn names(pairs: &[(u16, &str)]) -> BTreeMap<u16, String> {
    pairs.iter().map(|&(i, n)| (i, n.to_string())).collect()
}

impl SceneSpec {
    /// A street between two rows of buildings with parked cars, poles and
    /// hedges. The sensor drives along +x at 0.5 m per frame.
    pub fn city_block() -> Self {
        Self::city_street(1)
    }

    /// [`SceneSpec::city_block`] repeated `blocks` times along +x, 90 m
    /// apart.
    pub fn city_street(blocks: u32) -> Self {
        let mut boxes = Vec::new();
        for b in 0..blocks {
            boxes.extend(Self::block_boxes(90.0 * f64::from(b)));
        }
        Self::street(boxes)
    }

    fn block_boxes(dx: f64) -> Vec<SceneBox> {
        let mut boxes = Vec::new();
        for i in 0..6 {
            let x0 = dx - 45.0 + 15.0 * f64::from(i);
            let h = 8.0 + 3.0 * f64::from(i % 3);
            boxes.push(SceneBox::new([x0, 9.0, 0.0], [x0 + 12.0, 20.0, h], BUILDING, [150, 140, 130]));
            boxes.push(SceneBox::new([x0 + 2.0, -21.0, 0.0], [x0 + 13.0, -9.0, h + 2.0], BUILDING, [140, 130, 120]));
        }
        for i in 0..8 {
            let x0 = dx - 38.0 + 9.5 * f64::from(i);
            let y = if i % 2 == 0 { 3.2 } else { -5.0 };
            boxes.push(SceneBox::new([x0, y, 0.0], [x0 + 4.2, y + 1.8, 1.5], CAR, [200, 30, 30]));
        }
        for i in 0..10 {
            let x = dx - 40.0 + 8.0 * f64::from(i);
            boxes.push(SceneBox::new([x, 6.5, 0.0], [x + 0.3, 6.8, 5.0], POLE, [90, 90, 90]));
            boxes.push(SceneBox::new([x + 2.0, -8.5, 0.0], [x + 5.0, -7.0, 1.2], VEGETATION, [40, 160, 40]));
        }
        boxes
    }

    fn street(boxes: Vec<SceneBox>) -> Self {
        Self {
            ground: Some(Ground {
                height: 0.0,
                label: ROAD,
                color: [60, 60, 60],
            }),
            boxes,
            trajectory: Trajectory {
                start: [-20.0, 0.0, 1.8],
                step: [0.5, 0.0, 0.0],
            },
            sensor: Sensor {
                azimuth_beams: 360,
                elevation_beams: 32,
                elevation_min: -25.0,
                elevation_max: 5.0,
                max_range: 50.0,
                jitter: 0.5,
            },
            noise: Vec::new(),
            names: names(&[(ROAD, "road"), (BUILDING, "building"), (CAR, "car"), (POLE, "pole"), (VEGETATION, "vegetation")]),
        }
    }

    /// Four labelled boxes standing apart on a floor, scanned from a slowly
    /// moving sensor.
    pub fn desk_boxes() -> Self {
        let boxes = vec![
            SceneBox::new([2.0, 1.0, 0.0], [3.0, 2.0, 0.8], 1, [200, 0, 0]),
            SceneBox::new([2.5, -2.5, 0.0], [3.1, -1.5, 1.2], 2, [0, 200, 0]),
            SceneBox::new([-2.8, 1.5, 0.0], [-1.8, 2.1, 0.6], 3, [0, 0, 200]),
            SceneBox::new([-2.6, -2.2, 0.0], [-2.0, -1.2, 1.5], 4, [200, 200, 0]),
        ];
        Self {
            ground: Some(Ground {
                height: 0.0,
                label: 5,
                color: [100, 100, 100],
            }),
            boxes,
            trajectory: Trajectory {
                start: [-0.5, 0.0, 1.0],
                step: [0.05, 0.0, 0.0],
            },
            sensor: Sensor {
                azimuth_beams: 360,
                elevation_beams: 24,
                elevation_min: -40.0,
                elevation_max: 10.0,
                max_range: 8.0,
                jitter: 0.5,
            },
            noise: Vec::new(),
            names: names(&[(1, "box_a"), (2, "box_b"), (3, "box_c"), (4, "box_d"), (5, "floor")]),
        }
    }

    /// Six labelled boxes floating apart in empty space around a sensor
    /// that drifts along +x. No ground, so no two classes share a voxel.
    pub fn isolated_boxes() -> Self {
        let boxes = vec![
            SceneBox::new([2.0, 1.0, -0.5], [2.8, 1.6, 0.3], 1, [200, 0, 0]),
            SceneBox::new([3.0, -2.5, 0.4], [3.5, -1.5, 1.4], 2, [0, 200, 0]),
            SceneBox::new([-3.2, 1.4, -1.2], [-2.2, 2.0, -0.6], 3, [0, 0, 200]),
            SceneBox::new([-2.6, -2.6, 0.2], [-2.0, -1.4, 1.0], 4, [200, 200, 0]),
            SceneBox::new([0.2, 3.0, -0.8], [1.0, 3.6, 0.8], 5, [0, 200, 200]),
            SceneBox::new([-0.6, -3.8, -1.0], [0.4, -3.2, -0.2], 6, [200, 0, 200]),
        ];
        Self {
            ground: None,
            boxes,
            trajectory: Trajectory {
                start: [-0.5, 0.05, 0.05],
                step: [0.05, 0.0, 0.0],
            },
            sensor: Sensor {
                azimuth_beams: 720,
                elevation_beams: 48,
                elevation_min: -45.0,
                elevation_max: 45.0,
                max_range: 10.0,
                jitter: 1.0,
            },
            noise: Vec::new(),
            names: names(&[(1, "car"), (2, "bicycle"), (3, "person"), (4, "truck"), (5, "pole"), (6, "sign")]),
        }
    }

    pub fn with_noise(mut self, slots: impl IntoIterator<Item = NoiseSlot>) -> Self {
        self.noise = slots.into_iter().collect();
        self
    }

    pub fn label_slots(&self) -> u8 {
        (1 + self.noise.len()) as u8
    }

    /// Sorted distinct labels of the scene.
    pub fn label_pool(&self) -> Vec<u16> {
        let mut pool: Vec<u16> = self.ground.iter().map(|g| g.label).chain(self.boxes.iter().map(|b| b.label)).collect();
        pool.sort_unstable();
        pool.dedup();
        pool
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::InvalidSpec(m));
        let s = &self.sensor;
        if s.azimuth_beams == 0 || s.elevation_beams == 0 {
            return bad("beam counts must be positive".into());
        }
        if !(s.elevation_min.is_finite() && s.elevation_max.is_finite())
            || s.elevation_min > s.elevation_max
            || s.elevation_min < -90.0
            || s.elevation_max > 90.0
        {
            return bad("elevation range must satisfy -90 <= min <= max <= 90".into());
        }
        if !(s.max_range.is_finite() && s.max_range > 0.0) {
            return bad(format!("max_range {} must be positive", s.max_range));
        }
        if !(0.0..=1.0).contains(&s.jitter) {
            return bad(format!("jitter {} outside [0, 1]", s.jitter));
        }
        if !self.trajectory.start.iter().chain(&self.trajectory.step).all(|v| v.is_finite()) {
            return bad("trajectory must be finite".into());
        }
        if let Some(g) = &self.ground {
            if !g.height.is_finite() {
                return bad("ground height must be finite".into());
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(0..3).all(|a| b.min[a].is_finite() && b.max[a].is_finite() && b.min[a] < b.max[a]) {
                return bad(format!("box {i} must have finite min < max on every axis"));
            }
        }
        if self.noise.len() > 254 {
            return bad("at most 254 noise slots".into());
        }
        for (i, n) in self.noise.iter().enumerate() {
            if !std::iter::once(&n.rate).chain(n.per_class.values()).all(|r| (0.0..=1.0).contains(r)) {
                return bad(format!("noise slot {i} has a rate outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Closest surface hit along a world-frame ray: distance, label, colour.
    fn cast(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<(f64, u16, [u8; 3])> {
        let mut best: Option<(f64, u16, [u8; 3])> = None;
        if let Some(g) = &self.ground {
            if d.z < 0.0 && o.z > g.height {
                best = Some(((g.height - o.z) / d.z, g.label, g.color));
            }
        }
        for b in &self.boxes {
            if let Some(t) = b.entry(o, d) {
                if best.is_none_or(|(bt, _, _)| t < bt) {
                    best = Some((t, b.label, b.color));
                }
            }
        }
        best.filter(|&(t, _, _)| t <= self.sensor.max_range)
    }
}

fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Frame `index` of the scene. Geometry and label noise draw from separate
/// random streams, so adding noise slots leaves the points unchanged.
pub fn synth_frame(spec: &SceneSpec, index: usize, seed: u64) -> Result<ScanFrame, IngestError> {
    spec.validate()?;
    let pose = spec.trajectory.pose(index);
    let origin = pose.origin();
    let s = &spec.sensor;
    let mut geo = frame_rng(seed, 2 * index as u64);
    let mut noise = frame_rng(seed, 2 * index as u64 + 1);
    let pool = spec.label_pool();
    let mut frame = ScanFrame::new(u32::try_from(index).unwrap_or(u32::MAX), pose, spec.label_slots());
    let (el_lo, el_hi) = (s.elevation_min.to_radians(), s.elevation_max.to_radians());
    let mut labels = Vec::with_capacity(spec.noise.len() + 1);
    for a in 0..s.azimuth_beams {
        for e in 0..s.elevation_beams {
            let ja = s.jitter * (geo.gen::<f64>() - 0.5);
            let je = s.jitter * (geo.gen::<f64>() - 0.5);
            let az = TAU * (f64::from(a) + 0.5 + ja) / f64::from(s.azimuth_beams);
            let el = el_lo + (el_hi - el_lo) * (f64::from(e) + 0.5 + je) / f64::from(s.elevation_beams);
            let local = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let world = pose.rotation * local;
            let Some((t, label, color)) = spec.cast(&origin, &world) else {
                continue;
            };
            labels.clear();
            labels.push(label);
            for slot in &spec.noise {
                labels.push(corrupt(label, slot.rate_for(label), &pool, &mut noise));
            }
            let p = local * t;
            frame
                .points
                .push(PointRecord::new([p.x as f32, p.y as f32, p.z as f32], Rgb(color), &labels));
        }
    }
    Ok(frame)
}

fn corrupt(label: u16, rate: f64, pool: &[u16], rng: &mut ChaCha8Rng) -> u16 {
    // Always draw, so the stream position does not depend on the outcome.
    let flip = rng.gen::<f64>() < rate;
    let pick = rng.gen_range(0..pool.len().max(2) - 1);
    if !flip || pool.len() < 2 {
        return label;
    }
    let others: Vec<u16> = pool.iter().copied().filter(|&l| l != label).collect();
    others[pick.min(others.len() - 1)]
}

pub fn synth_frames(spec: &SceneSpec, frames: usize, seed: u64) -> Result<Vec<ScanFrame>, IngestError> {
    (0..frames).map(|i| synth_frame(spec, i, seed)).collect()
}

/// Label file listing the scene's classes, all scored.
pub fn label_file(spec: &SceneSpec) -> String {
    let mut out = String::new();
    for id in spec.label_pool() {
        let name = spec.names.get(&id).cloned().unwrap_or_else(|| format!("class{id}"));
        out.push_str(&format!("{id}\t{name}\n"));
    }
    out
}

/// Writes `frames` frames of the scene to `dir`, plus a label file.
pub fn synth_log(spec: &SceneSpec, frames: usize, seed: u64, dir: impl AsRef<Path>) -> Result<FrameLog, IngestError> {
    spec.validate()?;
    let dir = dir.as_ref();
    let mut w = LogWriter::create(dir, spec.label_slots(), Some(LABELS_FILE))?;
    let labels = dir.join(LABELS_FILE);
    fs::write(&labels, label_file(spec)).map_err(|e| IngestError::Io(format!("{}: {e}", labels.display())))?;
    for i in 0..frames {
        w.push(&synth_frame(spec, i, seed)?)?;
    }
    w.finish()
}
