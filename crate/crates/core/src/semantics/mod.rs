//! Label fusion and segmentation scoring.

mod labels;
mod metrics;

use thiserror::Error;

pub use labels::{ClassRemap, LabelSet};
pub use metrics::{mean_iou, ConfusionMatrix, IouReport};

use crate::error::MapError;
use crate::integrator::{integrate_frame, IntegratorConfig, ScanFrame, SlotSelection};
use crate::octree::{LeafPayload, MapConfig, OccupancyMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticsError {
    #[error("label sequences differ in length ({truth} ground truth, {predicted} predicted)")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Most observed label of a voxel. Ties prefer `fallback`, then the
/// smallest id. An unlabelled or absent voxel yields `fallback`.
pub fn voxel_top_label(payload: Option<&LeafPayload>, fallback: Option<u16>) -> Option<u16> {
    match payload {
        Some(p) => p.semantics.top_label(fallback),
        None => fallback,
    }
}

/// Map-based label for every point of `frame`, with the point's own label
/// in `network_slot` as tie-breaker. Points outside the map keep it.
pub fn relabel_frame(map: &OccupancyMap, frame: &ScanFrame, network_slot: usize) -> Result<Vec<u16>, MapError> {
    SlotSelection::single(network_slot).validate(frame.label_slots)?;
    let config = map.config();
    Ok(frame
        .points
        .iter()
        .map(|pt| {
            let net = pt.labels[network_slot];
            let world = frame.pose.transform(&pt.position_f64());
            match config.code_from_point(&world, 0) {
                Ok(code) => voxel_top_label(map.payload_view(code).as_deref(), Some(net)).unwrap_or(net),
                Err(_) => net,
            }
        })
        .collect())
}

/// Slot selection that integrates every listed slot of `frame`, one count
/// per slot per point.
pub fn fuse_network_slots(frame: &ScanFrame, slots: &[usize]) -> Result<SlotSelection, MapError> {
    let sel = SlotSelection::new(slots);
    sel.validate(frame.label_slots)?;
    Ok(sel)
}

/// Applies `remap` to every label slot of every point.
pub fn remap_frame(frame: &mut ScanFrame, remap: &ClassRemap) {
    if remap.is_identity() {
        return;
    }
    for pt in &mut frame.points {
        for l in pt.labels.iter_mut() {
            *l = remap.apply(*l);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub gt_slot: usize,
    pub net_slot: usize,
    /// Slots integrated into the map; defaults to the network slot alone.
    pub fuse_slots: Vec<usize>,
    pub integrator: IntegratorConfig,
}

impl EvalConfig {
    pub fn new(gt_slot: usize, net_slot: usize) -> Self {
        Self {
            gt_slot,
            net_slot,
            fuse_slots: vec![net_slot],
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Integrate, relabel and score, frame by frame.
///
/// Each frame is integrated before its points are relabelled, so a point
/// sees its own observation plus everything before it.
pub struct Evaluator {
    map: OccupancyMap,
    cfg: EvalConfig,
    remap: ClassRemap,
    single: ConfusionMatrix,
    mapped: ConfusionMatrix,
    points: u64,
}

impl Evaluator {
    /// `labels` is the set before remapping; scoring uses its remapped form.
    pub fn new(map_config: MapConfig, labels: &LabelSet, remap: ClassRemap, cfg: EvalConfig) -> Result<Self, SemanticsError> {
        let target = labels.remapped(&remap)?;
        Ok(Self {
            map: OccupancyMap::new(map_config)?,
            cfg,
            remap,
            single: ConfusionMatrix::new(&target),
            mapped: ConfusionMatrix::new(&target),
            points: 0,
        })
    }

    pub fn push_frame(&mut self, mut frame: ScanFrame) -> Result<(), SemanticsError> {
        let k = frame.label_slots;
        SlotSelection::new(&[self.cfg.gt_slot, self.cfg.net_slot]).validate(k)?;
        let slots = fuse_network_slots(&frame, &self.cfg.fuse_slots)?;
        remap_frame(&mut frame, &self.remap);
        integrate_frame(&mut self.map, &frame, &self.cfg.integrator, &slots)?;
        let relabeled = relabel_frame(&self.map, &frame, self.cfg.net_slot)?;
        for (pt, &m) in frame.points.iter().zip(&relabeled) {
            let gt = pt.labels[self.cfg.gt_slot];
            self.single.add(gt, pt.labels[self.cfg.net_slot]);
            self.mapped.add(gt, m);
        }
        self.points += frame.points.len() as u64;
        Ok(())
    }

    pub fn map(&self) -> &OccupancyMap {
        &self.map
    }

    pub fn points(&self) -> u64 {
        self.points
    }

    /// Single-scan and map-accumulated confusion matrices.
    pub fn finish(self) -> (ConfusionMatrix, ConfusionMatrix) {
        (self.single, self.mapped)
    }
}
