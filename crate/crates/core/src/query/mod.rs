//! Region and content queries at any resolution.
//!
//! Absent space is enumerated lazily as the unknown payload. Inner nodes
//! are skipped when their summary proves that nothing below can match.

mod parse;
mod predicate;
mod region;

use std::borrow::Cow;

pub use parse::ParseError;
pub use predicate::{Predicate, StateSet};
pub use region::Region;

use predicate::states_below_max;

use crate::error::MapError;
use crate::octree::{LeafPayload, MapConfig, NodeCode, OccupancyMap, OccupancyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    /// Skip subtrees whose summaries rule out a match.
    pub prune: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self { prune: true }
    }
}

/// Voxel counts by state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateCounts {
    pub unknown: u64,
    pub free: u64,
    pub occupied: u64,
}

impl StateCounts {
    pub fn total(&self) -> u64 {
        self.unknown + self.free + self.occupied
    }

    fn add(&mut self, s: OccupancyState, n: u64) {
        match s {
            OccupancyState::Unknown => self.unknown += n,
            OccupancyState::Free => self.free += n,
            OccupancyState::Occupied => self.occupied += n,
        }
    }
}

/// What lies at a code during traversal.
#[derive(Clone, Copy)]
enum Slot<'a> {
    Stored(&'a LeafPayload),
    /// Every voxel below carries this leaf payload.
    Uniform(&'a LeafPayload),
    Absent,
}

fn slot_of(map: &OccupancyMap, code: NodeCode) -> Slot<'_> {
    match map.node(code) {
        Some(n) if n.collapsed => Slot::Uniform(n.payload),
        Some(n) => Slot::Stored(n.payload),
        None => Slot::Absent,
    }
}

struct Walker<'a, F> {
    map: &'a OccupancyMap,
    config: &'a MapConfig,
    region: &'a Region,
    depth: u8,
    unknown: LeafPayload,
    emit: F,
}

impl<F: FnMut(NodeCode, Cow<'_, LeafPayload>)> Walker<'_, F> {
    fn payload_at<'p>(&self, slot: Slot<'p>, code: NodeCode) -> Cow<'p, LeafPayload> {
        match slot {
            Slot::Stored(p) => Cow::Borrowed(p),
            Slot::Uniform(p) => Cow::Owned(self.map.uniform_view(p, code.depth())),
            Slot::Absent => Cow::Owned(self.unknown.clone()),
        }
    }

    /// Emits every voxel at the target depth inside `code` that lies in the
    /// region, without looking at payloads.
    fn enumerate(&mut self, code: NodeCode, slot: Slot<'_>) {
        if code.depth() == self.depth {
            if self.region.contains_voxel(self.config, code) {
                let p = self.payload_at(slot, code);
                (self.emit)(code, p);
            }
            return;
        }
        for child in code.children() {
            if self.region.may_touch(self.config, child, self.depth) {
                self.enumerate(child, slot);
            }
        }
    }

    fn walk(&mut self, code: NodeCode, slot: Slot<'_>, pred: &Predicate, prune: bool) {
        if !self.region.may_touch(self.config, code, self.depth) {
            return;
        }
        if code.depth() == self.depth {
            if self.region.contains_voxel(self.config, code) {
                let p = self.payload_at(slot, code);
                if pred.eval(&p, self.config) {
                    (self.emit)(code, p);
                }
            }
            return;
        }
        match slot {
            Slot::Absent => {
                if pred.eval(&self.unknown, self.config) {
                    self.enumerate(code, slot);
                }
            }
            Slot::Uniform(p) => {
                // Every target voxel below sees the same payload.
                if pred.eval(&self.map.uniform_view(p, self.depth), self.config) {
                    self.enumerate(code, slot);
                }
            }
            Slot::Stored(summary) => {
                if prune {
                    let states = if self.map.reducer().is_max() {
                        states_below_max(summary.state(self.config))
                    } else {
                        StateSet::ALL
                    };
                    if !pred.bounds(summary, states).may_true {
                        return;
                    }
                }
                for child in code.children() {
                    let s = slot_of(self.map, child);
                    self.walk(child, s, pred, prune);
                }
            }
        }
    }
}

fn check(map: &OccupancyMap, region: &Region, depth: u8) -> Result<(), MapError> {
    if depth >= map.config().depth_levels {
        return Err(MapError::InvalidDepth(depth));
    }
    if !region.is_valid() {
        return Err(MapError::InvalidConfig(format!("invalid region {region}")));
    }
    Ok(())
}

/// Calls `visit` for every voxel at `depth` that lies in `region` and
/// satisfies `pred`, in depth-first Morton order.
///
/// Voxels at `depth > 0` are judged by their summary payload. Summaries are
/// only trusted for pruning after [`OccupancyMap::propagate`]; with pending
/// updates the traversal visits every stored node.
pub fn query_visit<F>(
    map: &OccupancyMap,
    region: &Region,
    pred: &Predicate,
    depth: u8,
    options: QueryOptions,
    visit: F,
) -> Result<(), MapError>
where
    F: FnMut(NodeCode, Cow<'_, LeafPayload>),
{
    check(map, region, depth)?;
    let prune = options.prune && map.summaries_fresh();
    let mut w = Walker {
        map,
        config: map.config(),
        region,
        depth,
        unknown: LeafPayload::unknown(),
        emit: visit,
    };
    let root = map.config().root();
    w.walk(root, slot_of(map, root), pred, prune);
    Ok(())
}

/// Matching voxels with a snapshot of their payload.
pub fn query(
    map: &OccupancyMap,
    region: &Region,
    pred: &Predicate,
    depth: u8,
) -> Result<Vec<(NodeCode, LeafPayload)>, MapError> {
    query_with(map, region, pred, depth, QueryOptions::default())
}

pub fn query_with(
    map: &OccupancyMap,
    region: &Region,
    pred: &Predicate,
    depth: u8,
    options: QueryOptions,
) -> Result<Vec<(NodeCode, LeafPayload)>, MapError> {
    let mut out = Vec::new();
    query_visit(map, region, pred, depth, options, |c, p| out.push((c, p.into_owned())))?;
    Ok(out)
}

/// Predicate selecting voxels that are unknown or last updated before
/// `now - stale_after`.
pub fn occlusion_predicate(now: u32, stale_after: u32) -> Predicate {
    Predicate::state_in(&[OccupancyState::Unknown]).or(Predicate::UpdatedBefore(now.saturating_sub(stale_after)))
}

/// Voxels the map cannot vouch for: unknown or stale.
pub fn occluded(
    map: &OccupancyMap,
    region: &Region,
    now: u32,
    stale_after: u32,
    depth: u8,
) -> Result<Vec<NodeCode>, MapError> {
    let pred = occlusion_predicate(now, stale_after);
    let mut out = Vec::new();
    query_visit(map, region, &pred, depth, QueryOptions::default(), |c, _| out.push(c))?;
    Ok(out)
}

/// Number of voxels at `depth` in `region`, by state.
pub fn count_states(map: &OccupancyMap, region: &Region, depth: u8) -> Result<StateCounts, MapError> {
    check(map, region, depth)?;
    let mut counts = StateCounts::default();
    let root = map.config().root();
    let fresh = map.summaries_fresh() && map.reducer().is_max();
    count_rec(map, region, depth, root, slot_of(map, root), fresh, &mut counts);
    Ok(counts)
}

fn count_rec(
    map: &OccupancyMap,
    region: &Region,
    depth: u8,
    code: NodeCode,
    slot: Slot<'_>,
    fresh: bool,
    counts: &mut StateCounts,
) {
    let config = map.config();
    if !region.may_touch(config, code, depth) {
        return;
    }
    if code.depth() == depth {
        if region.contains_voxel(config, code) {
            let s = match slot {
                Slot::Stored(p) => p.state(config),
                Slot::Uniform(p) => map.uniform_view(p, depth).state(config),
                Slot::Absent => OccupancyState::Unknown,
            };
            counts.add(s, 1);
        }
        return;
    }
    // A block whose voxels all share one state and all lie in the region is
    // counted without descending.
    let uniform_state = match slot {
        Slot::Absent => Some(OccupancyState::Unknown),
        Slot::Uniform(p) => Some(map.uniform_view(p, depth).state(config)),
        Slot::Stored(p) if fresh && p.state(config) == OccupancyState::Free => Some(OccupancyState::Free),
        Slot::Stored(_) => None,
    };
    if let Some(s) = uniform_state {
        if region.covers(config, code, depth) {
            let n = 1u64 << (3 * u32::from(code.depth() - depth));
            counts.add(s, n);
            return;
        }
    }
    for child in code.children() {
        let s = match slot {
            Slot::Stored(_) => slot_of(map, child),
            other => other,
        };
        count_rec(map, region, depth, child, s, fresh, counts);
    }
}
