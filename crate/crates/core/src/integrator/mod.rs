//! Turns posed scans into voxel updates.
//!
//! Each frame is integrated in one pass. Every leaf hit by at least one point
//! receives a single hit update, one colour observation (the mean of its
//! points) and one label increment per integrated slot per point. Every voxel
//! at the free-space depth crossed by a ray and not hit in the same frame
//! receives a single miss update. Hits win over misses.

mod frame;
mod raycast;

use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Vector3};
use rustc_hash::{FxHashMap, FxHashSet};
use smallvec::SmallVec;

pub use frame::{PointRecord, Pose, ScanFrame, SlotSelection};
pub use raycast::raycast;
pub(crate) use raycast::{grid_at_depth, level_cell_code, walk_grid};

use crate::error::MapError;
use crate::octree::{MapConfig, NodeCode, OccupancyMap, OccupancyState, Rgb};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Rays longer than this are truncated and produce no hit.
    pub max_range: f64,
    /// Level at which free space is marked; 0 marks individual leaves.
    pub free_depth: u8,
    /// Stop a ray at the first voxel that is already occupied.
    pub early_stop: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            max_range: 100.0,
            free_depth: 0,
            early_stop: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self, map: &MapConfig) -> Result<(), MapError> {
        if !(self.max_range > 0.0) {
            return Err(MapError::InvalidConfig("max_range must be positive".into()));
        }
        map.check_depth(self.free_depth)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegrationStats {
    /// Distinct leaves that received a hit update.
    pub hits: usize,
    /// Distinct free-space voxels that received a miss update.
    pub misses: usize,
    pub duration: Duration,
}

/// Log-odds increment of the inverse sensor model.
pub fn inverse_sensor_logodds(is_hit: bool, config: &MapConfig) -> f64 {
    config.inverse_sensor_logodds(is_hit)
}

#[derive(Default)]
struct HitAccum {
    color_sum: [u32; 3],
    points: u32,
    labels: SmallVec<[u16; 4]>,
}

/// Integrates one scan and propagates summaries before returning.
///
/// The map's frame counter is set to the frame's timestep. Points outside
/// the world or beyond `max_range` are truncated along their ray and mark
/// free space only.
pub fn integrate_frame(
    map: &mut OccupancyMap,
    frame: &ScanFrame,
    cfg: &IntegratorConfig,
    slots: &SlotSelection,
) -> Result<IntegrationStats, MapError> {
    let started = Instant::now();
    let config = *map.config();
    cfg.validate(&config)?;
    frame.pose.validate()?;
    slots.validate(frame.label_slots)?;
    map.set_frame_counter(frame.timestep);

    let origin = frame.pose.origin();
    if !config.contains(&origin) {
        return Err(MapError::OutOfBounds);
    }

    let mut hits: FxHashMap<u64, HitAccum> = FxHashMap::default();
    // Endpoint of each ray and whether it is a hit.
    let mut rays: Vec<(Point3<f64>, bool)> = Vec::with_capacity(frame.points.len());
    for (i, pt) in frame.points.iter().enumerate() {
        let world = frame.pose.transform(&pt.position_f64());
        if !(world.x.is_finite() && world.y.is_finite() && world.z.is_finite()) {
            return Err(MapError::NonFinitePoint(i));
        }
        let offset = world - origin;
        let dist = offset.norm();
        if dist <= cfg.max_range && config.contains(&world) {
            let code = config.code_from_point(&world, 0)?;
            let acc = hits.entry(code.morton()).or_default();
            for ch in 0..3 {
                acc.color_sum[ch] += u32::from(pt.color.0[ch]);
            }
            acc.points += 1;
            acc.labels.extend(slots.slots().iter().map(|&s| pt.labels[s]));
            rays.push((world, true));
        } else if let Some(end) = truncate_ray(&config, &origin, &offset, dist.min(cfg.max_range)) {
            rays.push((end, false));
        }
    }

    let free_depth = cfg.free_depth;
    // Ancestors of hit leaves at levels 1..=free_depth, for coarse free marking.
    let hit_ancestors: Vec<FxHashSet<u64>> = (1..=free_depth)
        .map(|d| {
            hits.keys()
                .map(|&m| NodeCode::from_raw(m, 0).ancestor_at(d).morton())
                .collect()
        })
        .collect();

    let mut free: FxHashSet<u64> = FxHashSet::default();
    let u_origin = grid_at_depth(&config, &origin, free_depth);
    for (end, is_hit) in &rays {
        let u_end = grid_at_depth(&config, end, free_depth);
        let stopped = walk_grid(u_origin, u_end, |cell| {
            let code = level_cell_code(cell, free_depth);
            if cfg.early_stop && map.state(code) == OccupancyState::Occupied {
                return ControlFlow::Break(());
            }
            free.insert(code.morton());
            ControlFlow::Continue(())
        });
        if !is_hit && stopped.is_continue() {
            let code = config.code_from_point(end, free_depth)?;
            if !(cfg.early_stop && map.state(code) == OccupancyState::Occupied) {
                free.insert(code.morton());
            }
        }
    }

    let hit_delta = config.inverse_sensor_logodds(true);
    let miss_delta = config.inverse_sensor_logodds(false);
    for (&m, acc) in &hits {
        let n = acc.points;
        let color = Rgb(acc.color_sum.map(|s| ((s + n / 2) / n) as u8));
        map.touch_leaf(NodeCode::from_raw(m, 0), hit_delta, Some(color), &acc.labels)?;
    }

    let mut misses = 0;
    if free_depth == 0 {
        for &m in &free {
            if !hits.contains_key(&m) {
                map.touch_leaf(NodeCode::from_raw(m, 0), miss_delta, None, &[])?;
                misses += 1;
            }
        }
    } else {
        let has_hit = |c: NodeCode| match c.depth() {
            0 => hits.contains_key(&c.morton()),
            d => hit_ancestors[usize::from(d) - 1].contains(&c.morton()),
        };
        for &m in &free {
            let code = NodeCode::from_raw(m, free_depth);
            map.update_block(code, miss_delta, &has_hit);
            misses += 1;
        }
    }

    map.propagate();
    Ok(IntegrationStats {
        hits: hits.len(),
        misses,
        duration: started.elapsed(),
    })
}

/// End point of a miss-only ray of length `len`, pulled back inside the
/// world if it would leave it.
fn truncate_ray(
    config: &MapConfig,
    origin: &Point3<f64>,
    offset: &Vector3<f64>,
    len: f64,
) -> Option<Point3<f64>> {
    let norm = offset.norm();
    if norm == 0.0 {
        return None;
    }
    let dir = offset / norm;
    let end = origin + dir * len;
    if config.contains(&end) {
        return Some(end);
    }
    let h = config.half_extent();
    let mut t_exit = len;
    for a in 0..3 {
        if dir[a] > 0.0 {
            t_exit = t_exit.min((h - origin[a]) / dir[a]);
        } else if dir[a] < 0.0 {
            t_exit = t_exit.min((-h - origin[a]) / dir[a]);
        }
    }
    let mut back = 1e-6 * config.resolution;
    for _ in 0..8 {
        let end = origin + dir * (t_exit - back).max(0.0);
        if config.contains(&end) {
            return Some(end);
        }
        back *= 10.0;
    }
    None
}
