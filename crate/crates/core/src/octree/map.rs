use std::borrow::Cow;
use std::fmt;

use rustc_hash::{FxHashMap, FxHashSet};

use super::code::NodeCode;
use super::config::MapConfig;
use super::payload::{saturate, LeafPayload, OccupancyState, Rgb, Semantics};
use crate::error::MapError;

/// Reduces the eight child log-odds of an inner node to its summary value.
/// Missing children enter as `0.0`, the unknown prior.
#[derive(Clone, Copy)]
pub enum SummaryReducer {
    Max,
    Mean,
    Custom(fn(&[f64; 8]) -> f64),
}

impl SummaryReducer {
    pub fn reduce(&self, values: &[f64; 8]) -> f64 {
        match self {
            Self::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Mean => values.iter().sum::<f64>() / 8.0,
            Self::Custom(f) => f(values),
        }
    }

    /// Summary-based pruning of occupancy predicates is only sound for max.
    pub fn is_max(&self) -> bool {
        matches!(self, Self::Max)
    }
}

impl Default for SummaryReducer {
    fn default() -> Self {
        Self::Max
    }
}

impl fmt::Debug for SummaryReducer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Max => f.write_str("Max"),
            Self::Mean => f.write_str("Mean"),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    /// Leaf payload for depth 0 and collapsed nodes, summary otherwise.
    pub payload: LeafPayload,
    /// A childless inner node standing for `8^depth` identical leaves.
    pub collapsed: bool,
}

/// Borrowed view of one stored node.
#[derive(Debug, Clone, Copy)]
pub struct NodeRef<'a> {
    pub code: NodeCode,
    pub payload: &'a LeafPayload,
    pub collapsed: bool,
}

/// Sparse octree with occupancy, colour, timestep and label payloads.
///
/// Nodes exist only where some update has touched space. The root sits at
/// depth `depth_levels`. Mutations mark nodes for the next delta publish;
/// [`propagate`](Self::propagate) refreshes inner summaries.
#[derive(Clone)]
pub struct OccupancyMap {
    config: MapConfig,
    reducer: SummaryReducer,
    levels: Vec<FxHashMap<u64, Node>>,
    frame_counter: u32,
    /// Per depth: nodes whose parent summary is stale.
    dirty: Vec<FxHashSet<u64>>,
    changed: FxHashSet<NodeCode>,
    removed: FxHashSet<NodeCode>,
    collapsed_nodes: usize,
    next_sequence: u64,
}

impl fmt::Debug for OccupancyMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OccupancyMap")
            .field("config", &self.config)
            .field("reducer", &self.reducer)
            .field("nodes", &self.node_count())
            .field("frame_counter", &self.frame_counter)
            .finish()
    }
}

impl OccupancyMap {
    pub fn new(config: MapConfig) -> Result<Self, MapError> {
        Self::with_reducer(config, SummaryReducer::Max)
    }

    pub fn with_reducer(config: MapConfig, reducer: SummaryReducer) -> Result<Self, MapError> {
        config.validate()?;
        let n = usize::from(config.depth_levels) + 1;
        Ok(Self {
            config,
            reducer,
            levels: vec![FxHashMap::default(); n],
            frame_counter: 0,
            dirty: vec![FxHashSet::default(); n],
            changed: FxHashSet::default(),
            removed: FxHashSet::default(),
            collapsed_nodes: 0,
            next_sequence: 0,
        })
    }

    #[inline]
    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn reducer(&self) -> SummaryReducer {
        self.reducer
    }

    pub fn frame_counter(&self) -> u32 {
        self.frame_counter
    }

    pub fn set_frame_counter(&mut self, t: u32) {
        self.frame_counter = t;
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn nodes_at_depth(&self, depth: u8) -> usize {
        self.levels.get(usize::from(depth)).map_or(0, |l| l.len())
    }

    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(|l| l.is_empty())
    }

    pub fn collapsed_count(&self) -> usize {
        self.collapsed_nodes
    }

    /// Sequence number the next published delta will carry.
    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    pub(crate) fn set_next_sequence(&mut self, seq: u64) {
        self.next_sequence = seq;
    }

    /// Rough heap footprint of the stored nodes in bytes.
    pub fn memory_bytes(&self) -> usize {
        let per_entry = std::mem::size_of::<(u64, Node)>() + 1;
        let inline = 2;
        self.levels
            .iter()
            .flat_map(|l| l.values())
            .map(|n| {
                let heap = if n.payload.semantics.len() > inline {
                    n.payload.semantics.len() * std::mem::size_of::<super::payload::LabelCount>()
                } else {
                    0
                };
                per_entry + heap
            })
            .sum()
    }

    /// Stored node at exactly `code`.
    pub fn node(&self, code: NodeCode) -> Option<NodeRef<'_>> {
        self.levels
            .get(usize::from(code.depth()))?
            .get(&code.morton())
            .map(|n| NodeRef {
                code,
                payload: &n.payload,
                collapsed: n.collapsed,
            })
    }

    pub fn has_children(&self, code: NodeCode) -> bool {
        code.depth() > 0 && {
            let below = &self.levels[usize::from(code.depth() - 1)];
            code.children().iter().any(|c| below.contains_key(&c.morton()))
        }
    }

    /// All stored nodes, sorted by depth descending then Morton ascending.
    pub fn nodes(&self) -> Vec<NodeRef<'_>> {
        let mut out = Vec::with_capacity(self.node_count());
        for depth in (0..self.levels.len()).rev() {
            let mut level: Vec<_> = self.levels[depth]
                .iter()
                .map(|(&m, n)| NodeRef {
                    code: NodeCode::from_raw(m, depth as u8),
                    payload: &n.payload,
                    collapsed: n.collapsed,
                })
                .collect();
            level.sort_unstable_by_key(|r| r.code.morton());
            out.extend(level);
        }
        out
    }

    fn in_world(&self, code: NodeCode) -> bool {
        code.depth() <= self.config.depth_levels
            && code.morton() >> (3 * u32::from(self.config.depth_levels)) == 0
    }

    /// Payload of the voxel at `code`: the leaf payload, an inner summary, or
    /// the view of a collapsed ancestor. `None` for never-touched space.
    pub fn get_payload(&self, code: NodeCode) -> Option<LeafPayload> {
        self.payload_view(code).map(Cow::into_owned)
    }

    pub(crate) fn payload_view(&self, code: NodeCode) -> Option<Cow<'_, LeafPayload>> {
        if !self.in_world(code) {
            return None;
        }
        if let Some(n) = self.levels[usize::from(code.depth())].get(&code.morton()) {
            return Some(if n.collapsed {
                Cow::Owned(self.uniform_view(&n.payload, code.depth()))
            } else {
                Cow::Borrowed(&n.payload)
            });
        }
        if self.collapsed_nodes == 0 {
            return None;
        }
        for depth in code.depth() + 1..=self.config.depth_levels {
            let anc = code.ancestor_at(depth);
            if let Some(n) = self.levels[usize::from(depth)].get(&anc.morton()) {
                return n
                    .collapsed
                    .then(|| Cow::Owned(self.uniform_view(&n.payload, code.depth())));
            }
        }
        None
    }

    pub fn state(&self, code: NodeCode) -> OccupancyState {
        match self.payload_view(code) {
            Some(p) => p.state(&self.config),
            None => OccupancyState::Unknown,
        }
    }

    /// What an inner node at `depth` would summarise to if all of its leaves
    /// carried `leaf`.
    pub fn uniform_view(&self, leaf: &LeafPayload, depth: u8) -> LeafPayload {
        if depth == 0 {
            return leaf.clone();
        }
        let factor = 8u64.saturating_pow(u32::from(depth));
        let mut log_odds = leaf.log_odds;
        if !self.reducer.is_max() {
            for _ in 0..depth {
                log_odds = self.reducer.reduce(&[log_odds; 8]);
            }
        }
        LeafPayload {
            log_odds,
            color: if leaf.color_weight == 0 { Rgb::default() } else { leaf.color },
            color_weight: saturate(u64::from(leaf.color_weight).saturating_mul(factor)),
            timestep: leaf.timestep,
            semantics: leaf.semantics.scaled(factor),
        }
    }

    /// Additive log-odds update of one leaf, clamped to the configured bounds.
    pub fn update_leaf(
        &mut self,
        code: NodeCode,
        delta_l: f64,
        color: Option<Rgb>,
        label: Option<u16>,
    ) -> Result<LeafPayload, MapError> {
        self.touch_leaf(code, delta_l, color, label.as_slice())?;
        Ok(self.levels[0][&code.morton()].payload.clone())
    }

    /// Leaf update with any number of label increments (labels may repeat).
    pub(crate) fn touch_leaf(
        &mut self,
        code: NodeCode,
        delta_l: f64,
        color: Option<Rgb>,
        labels: &[u16],
    ) -> Result<(), MapError> {
        if code.depth() != 0 {
            return Err(MapError::NotALeaf(code));
        }
        if !self.in_world(code) {
            return Err(MapError::OutOfBounds);
        }
        let m = code.morton();
        if !self.levels[0].contains_key(&m) {
            self.ensure_exists(code, false);
        }
        let config = self.config;
        let now = self.frame_counter;
        let node = self.levels[0].get_mut(&m).expect("leaf just ensured");
        let p = &mut node.payload;
        p.apply_log_odds(delta_l, &config);
        p.timestep = p.timestep.max(now);
        if let Some(c) = color {
            p.blend_color(c);
        }
        for &label in labels {
            p.semantics.increment(label);
        }
        self.changed.insert(code);
        self.dirty[0].insert(m);
        Ok(())
    }

    /// Applies `delta_l` to every leaf inside `code` except those inside
    /// sub-blocks for which `has_hit` is true at leaf level. Unobserved
    /// sub-blocks become collapsed nodes.
    pub(crate) fn update_block(
        &mut self,
        code: NodeCode,
        delta_l: f64,
        has_hit: &dyn Fn(NodeCode) -> bool,
    ) -> usize {
        if has_hit(code) {
            if code.depth() == 0 {
                return 0;
            }
            self.ensure_exists(code, false);
            if self.levels[usize::from(code.depth())][&code.morton()].collapsed {
                self.expand(code);
            }
            return code
                .children()
                .into_iter()
                .map(|c| self.update_block(c, delta_l, has_hit))
                .sum();
        }
        self.ensure_exists(code, true);
        let depth = usize::from(code.depth());
        let uniform = depth == 0 || self.levels[depth][&code.morton()].collapsed;
        if !uniform {
            return code
                .children()
                .into_iter()
                .map(|c| self.update_block(c, delta_l, has_hit))
                .sum();
        }
        let config = self.config;
        let now = self.frame_counter;
        let node = self.levels[depth].get_mut(&code.morton()).expect("node just ensured");
        node.payload.apply_log_odds(delta_l, &config);
        node.payload.timestep = node.payload.timestep.max(now);
        self.changed.insert(code);
        self.dirty[depth].insert(code.morton());
        1
    }

    /// Makes sure a node exists at `code`, creating the path from the lowest
    /// existing ancestor or expanding a collapsed ancestor. A freshly created
    /// node at depth > 0 is collapsed when `uniform` is set.
    fn ensure_exists(&mut self, code: NodeCode, uniform: bool) {
        let depth = code.depth();
        if self.levels[usize::from(depth)].contains_key(&code.morton()) {
            return;
        }
        let top = self.config.depth_levels;
        let mut anc = depth + 1;
        while anc <= top && !self.levels[usize::from(anc)].contains_key(&code.ancestor_at(anc).morton()) {
            anc += 1;
        }
        if anc <= top && self.levels[usize::from(anc)][&code.ancestor_at(anc).morton()].collapsed {
            for d in (depth + 1..=anc).rev() {
                self.expand(code.ancestor_at(d));
            }
            return;
        }
        for d in (depth..anc).rev() {
            let c = code.ancestor_at(d);
            let collapsed = d == depth && uniform && d > 0;
            if collapsed {
                self.collapsed_nodes += 1;
                self.dirty[usize::from(d)].insert(c.morton());
            }
            self.levels[usize::from(d)].insert(
                c.morton(),
                Node {
                    payload: LeafPayload::default(),
                    collapsed,
                },
            );
            self.mark_created(c);
        }
    }

    /// Replaces a collapsed node by eight uniform children.
    fn expand(&mut self, code: NodeCode) {
        let depth = code.depth();
        debug_assert!(depth > 0);
        let leaf = {
            let node = &self.levels[usize::from(depth)][&code.morton()];
            debug_assert!(node.collapsed);
            node.payload.clone()
        };
        let summary = self.uniform_view(&leaf, depth);
        let node = self.levels[usize::from(depth)].get_mut(&code.morton()).unwrap();
        node.collapsed = false;
        node.payload = summary;
        self.collapsed_nodes -= 1;
        self.changed.insert(code);
        let child_collapsed = depth > 1;
        for child in code.children() {
            self.levels[usize::from(depth - 1)].insert(
                child.morton(),
                Node {
                    payload: leaf.clone(),
                    collapsed: child_collapsed,
                },
            );
            if child_collapsed {
                self.collapsed_nodes += 1;
            }
            self.mark_created(child);
        }
    }

    fn mark_created(&mut self, code: NodeCode) {
        self.removed.remove(&code);
        self.changed.insert(code);
    }

    /// Recomputes inner summaries along every path touched since the last
    /// call. Untouched subtrees are not visited.
    pub fn propagate(&mut self) {
        let top = usize::from(self.config.depth_levels);
        for depth in 0..top {
            if self.dirty[depth].is_empty() {
                continue;
            }
            let pending = std::mem::take(&mut self.dirty[depth]);
            let parent_depth = depth as u8 + 1;
            let parents: FxHashSet<u64> = pending
                .iter()
                .map(|&m| NodeCode::from_raw(m, depth as u8).parent().morton())
                .collect();
            for pm in parents {
                let pc = NodeCode::from_raw(pm, parent_depth);
                let Some(summary) = self.compute_summary(pc) else {
                    continue;
                };
                let node = self.levels[depth + 1]
                    .get_mut(&pm)
                    .expect("ancestors of stored nodes exist");
                if node.collapsed || node.payload.bit_eq(&summary) {
                    continue;
                }
                node.payload = summary;
                self.changed.insert(pc);
                self.dirty[depth + 1].insert(pm);
            }
        }
        self.dirty[top].clear();
    }

    fn compute_summary(&self, code: NodeCode) -> Option<LeafPayload> {
        let child_depth = code.depth() - 1;
        let level = &self.levels[usize::from(child_depth)];
        let mut log_odds = [0.0f64; 8];
        let mut timestep = 0u32;
        let mut semantics = Semantics::new();
        let mut color_sum = [0u64; 3];
        let mut weight = 0u64;
        let mut any = false;
        for (i, child) in code.children().iter().enumerate() {
            let Some(n) = level.get(&child.morton()) else {
                continue;
            };
            any = true;
            let view = if n.collapsed {
                Cow::Owned(self.uniform_view(&n.payload, child_depth))
            } else {
                Cow::Borrowed(&n.payload)
            };
            log_odds[i] = view.log_odds;
            timestep = timestep.max(view.timestep);
            semantics.merge_sum(&view.semantics);
            let w = u64::from(view.color_weight);
            for ch in 0..3 {
                color_sum[ch] += u64::from(view.color.0[ch]) * w;
            }
            weight += w;
        }
        if !any {
            return None;
        }
        let color = if weight == 0 {
            Rgb::default()
        } else {
            Rgb(color_sum.map(|s| ((s + weight / 2) / weight) as u8))
        };
        Some(LeafPayload {
            log_odds: self.reducer.reduce(&log_odds),
            color,
            color_weight: saturate(weight),
            timestep,
            semantics,
        })
    }

    /// Collapses every inner node whose eight children are childless and
    /// carry bit-identical payloads. Works bottom-up, so uniform regions
    /// collapse through several levels. Returns the number of collapses.
    pub fn prune(&mut self) -> usize {
        self.propagate();
        let mut collapsed = 0;
        for depth in 1..=self.config.depth_levels {
            let d = usize::from(depth);
            let mut candidates: Vec<u64> = self.levels[d]
                .iter()
                .filter(|(_, n)| !n.collapsed)
                .map(|(&m, _)| m)
                .collect();
            candidates.sort_unstable();
            for m in candidates {
                let code = NodeCode::from_raw(m, depth);
                let Some(leaf) = self.uniform_children(code) else {
                    continue;
                };
                for child in code.children() {
                    let n = self.levels[d - 1].remove(&child.morton()).unwrap();
                    if n.collapsed {
                        self.collapsed_nodes -= 1;
                    }
                    self.changed.remove(&child);
                    self.removed.insert(child);
                }
                let node = self.levels[d].get_mut(&m).unwrap();
                node.payload = leaf;
                node.collapsed = true;
                self.collapsed_nodes += 1;
                self.changed.insert(code);
                collapsed += 1;
            }
        }
        collapsed
    }

    fn uniform_children(&self, code: NodeCode) -> Option<LeafPayload> {
        let level = &self.levels[usize::from(code.depth() - 1)];
        let mut first: Option<&Node> = None;
        for child in code.children() {
            let n = level.get(&child.morton())?;
            if code.depth() > 1 && !n.collapsed {
                return None;
            }
            match first {
                None => first = Some(n),
                Some(f) if f.payload.bit_eq(&n.payload) => {}
                Some(_) => return None,
            }
        }
        first.map(|n| n.payload.clone())
    }

    /// True when `code` or a descendant changed since the last publish.
    pub fn is_modified(&self, code: NodeCode) -> bool {
        if self.changed.contains(&code) {
            return true;
        }
        (0..=code.depth()).any(|d| {
            self.dirty[usize::from(d)]
                .iter()
                .any(|&m| code.contains(NodeCode::from_raw(m, d)))
        })
    }

    /// True when every inner summary reflects the current leaves.
    pub fn summaries_fresh(&self) -> bool {
        self.dirty.iter().all(|d| d.is_empty())
    }

    pub fn has_unpublished_changes(&self) -> bool {
        !self.changed.is_empty()
            || !self.removed.is_empty()
            || self.dirty.iter().any(|d| !d.is_empty())
    }

    /// Drains the publish bookkeeping: changed nodes and removed nodes.
    pub(crate) fn drain_changes(&mut self) -> (Vec<NodeCode>, Vec<NodeCode>) {
        let changed = self.changed.drain().collect();
        let removed = self.removed.drain().collect();
        (changed, removed)
    }

    /// Stores a node verbatim (replica side of the codec).
    pub(crate) fn put_node(&mut self, code: NodeCode, payload: LeafPayload, collapsed: bool) -> Result<(), MapError> {
        if !self.in_world(code) {
            return Err(MapError::OutOfBounds);
        }
        let prev = self.levels[usize::from(code.depth())].insert(code.morton(), Node { payload, collapsed });
        if prev.as_ref().is_some_and(|n| n.collapsed) {
            self.collapsed_nodes -= 1;
        }
        if collapsed {
            self.collapsed_nodes += 1;
        }
        Ok(())
    }

    pub(crate) fn remove_node(&mut self, code: NodeCode) {
        if !self.in_world(code) {
            return;
        }
        if let Some(n) = self.levels[usize::from(code.depth())].remove(&code.morton()) {
            if n.collapsed {
                self.collapsed_nodes -= 1;
            }
        }
    }

    /// Same configuration and the same stored nodes, compared bit for bit.
    pub fn content_eq(&self, other: &OccupancyMap) -> bool {
        self.config == other.config
            && self.levels.len() == other.levels.len()
            && self.levels.iter().zip(&other.levels).all(|(a, b)| {
                a.len() == b.len()
                    && a.iter().all(|(m, n)| {
                        b.get(m)
                            .is_some_and(|o| o.collapsed == n.collapsed && o.payload.bit_eq(&n.payload))
                    })
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::octree::config::logit;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> MapConfig {
        MapConfig::with_resolution(0.1, 4)
    }

    fn leaf(x: u32, y: u32, z: u32) -> NodeCode {
        NodeCode::from_index([x, y, z], 0)
    }

    /// Brute-force: every stored leaf-level descendant payload of `code`,
    /// expanding collapsed nodes.
    fn descendant_leaves(map: &OccupancyMap, code: NodeCode) -> Vec<Option<LeafPayload>> {
        let [x0, y0, z0] = code.index();
        let n = 1u32 << code.depth();
        let mut out = Vec::new();
        for x in x0..x0 + n {
            for y in y0..y0 + n {
                for z in z0..z0 + n {
                    out.push(map.get_payload(leaf(x, y, z)));
                }
            }
        }
        out
    }

    #[test]
    fn fresh_update_matches_logit() {
        let mut map = OccupancyMap::new(MapConfig::default()).unwrap();
        let code = map.config().code_from_point(&nalgebra::Point3::new(0.05, 0.05, 0.05), 0).unwrap();
        let p = map.update_leaf(code, logit(0.7), None, None).unwrap();
        assert_abs_diff_eq!(p.log_odds, 0.847_297_860_387_203_7, epsilon = 1e-12);
        assert_eq!(map.state(code), OccupancyState::Occupied);
        assert_abs_diff_eq!(map.get_payload(code).unwrap().log_odds, 0.847_297_860_387_203_7, epsilon = 1e-12);
    }

    #[test]
    fn zero_update_stays_unknown() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let p = map.update_leaf(leaf(1, 1, 1), 0.0, None, None).unwrap();
        assert_eq!(p.log_odds, 0.0);
        assert_eq!(map.state(leaf(1, 1, 1)), OccupancyState::Unknown);
    }

    #[test]
    fn saturates_at_l_max() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let c = leaf(2, 3, 4);
        for _ in 0..20 {
            map.update_leaf(c, logit(0.7), None, None).unwrap();
        }
        let l_max = map.config().l_max;
        assert_eq!(map.get_payload(c).unwrap().log_odds, l_max);
        let p = map.update_leaf(c, logit(0.7), None, None).unwrap();
        assert_eq!(p.log_odds, l_max);
    }

    #[test]
    fn rejects_inner_codes_and_outside() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        assert!(matches!(
            map.update_leaf(NodeCode::from_index([0, 0, 0], 1), 1.0, None, None),
            Err(MapError::NotALeaf(_))
        ));
        let outside = NodeCode::new(1u64 << 12, 0).unwrap();
        assert!(matches!(map.update_leaf(outside, 1.0, None, None), Err(MapError::OutOfBounds)));
    }

    #[test]
    fn never_touched_is_absent() {
        let map = OccupancyMap::new(small_config()).unwrap();
        assert!(map.get_payload(leaf(0, 0, 0)).is_none());
        assert_eq!(map.state(leaf(0, 0, 0)), OccupancyState::Unknown);
        assert!(map.is_empty());
    }

    #[test]
    fn single_leaf_propagates_to_root() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let c = leaf(5, 9, 2);
        map.update_leaf(c, 0.8, None, None).unwrap();
        map.propagate();
        for depth in 1..=4 {
            let p = map.get_payload(c.ancestor_at(depth)).unwrap();
            // max(0.8, 0, ..., 0)
            assert_eq!(p.log_odds, 0.8);
        }
    }

    #[test]
    fn sibling_semantics_sum() {
        let (car, road) = (10u16, 40u16);
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let a = leaf(0, 0, 0);
        let b = leaf(1, 0, 0);
        map.update_leaf(a, 0.1, None, Some(car)).unwrap();
        map.update_leaf(a, 0.1, None, Some(car)).unwrap();
        map.update_leaf(b, 0.1, None, Some(car)).unwrap();
        map.update_leaf(b, 0.1, None, Some(road)).unwrap();
        map.propagate();
        let parent = map.get_payload(a.parent()).unwrap();
        assert_eq!(parent.semantics, Semantics::from_pairs([(car, 3), (road, 1)]));
    }

    #[test]
    fn parent_summary_is_max_of_children() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parent = NodeCode::from_index([4, 4, 4], 1);
        for child in parent.children() {
            if rng.gen_bool(0.7) {
                map.update_leaf(child, rng.gen_range(-1.5..1.5), None, None).unwrap();
            }
        }
        map.propagate();
        let oracle = parent
            .children()
            .iter()
            .map(|c| map.get_payload(*c).map_or(0.0, |p| p.log_odds))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(map.get_payload(parent).unwrap().log_odds, oracle);
    }

    #[test]
    fn propagate_without_changes_is_noop() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        map.update_leaf(leaf(1, 2, 3), 0.4, Some(Rgb([9, 9, 9])), Some(3)).unwrap();
        map.propagate();
        let before = map.clone();
        map.propagate();
        assert!(map.content_eq(&before));
    }

    #[test]
    fn modified_flags_cover_path() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let c = leaf(7, 7, 7);
        map.update_leaf(c, 0.5, None, None).unwrap();
        for d in 0..=4 {
            assert!(map.is_modified(c.ancestor_at(d)));
        }
        assert!(!map.is_modified(leaf(0, 0, 0)));
    }

    #[test]
    fn prune_identical_siblings() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let parent = NodeCode::from_index([2, 2, 2], 1);
        for child in parent.children() {
            for _ in 0..10 {
                map.update_leaf(child, 1.0, None, None).unwrap();
            }
        }
        map.propagate();
        let n = map.prune();
        assert!(n >= 1);
        assert!(map.node(parent).unwrap().collapsed);
        let l_max = map.config().l_max;
        assert_eq!(map.get_payload(parent.child(3)).unwrap().log_odds, l_max);
        assert_eq!(map.state(parent.child(5)), OccupancyState::Occupied);
    }

    #[test]
    fn prune_blocked_by_timestep() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let parent = NodeCode::from_index([2, 2, 2], 1);
        for (i, child) in parent.children().into_iter().enumerate() {
            map.set_frame_counter(if i == 4 { 9 } else { 1 });
            for _ in 0..10 {
                map.update_leaf(child, 1.0, None, None).unwrap();
            }
        }
        map.propagate();
        assert_eq!(map.prune(), 0);
    }

    #[test]
    fn update_inside_collapsed_region_expands() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let parent = NodeCode::from_index([0, 0, 0], 1);
        for child in parent.children() {
            map.update_leaf(child, -0.3, None, Some(7)).unwrap();
        }
        map.propagate();
        assert_eq!(map.prune(), 1);
        let target = parent.child(6);
        map.update_leaf(target, 0.9, None, Some(7)).unwrap();
        map.propagate();
        assert!(!map.node(parent).unwrap().collapsed);
        assert_eq!(map.get_payload(target).unwrap().semantics.count(7), 2);
        assert_eq!(map.get_payload(parent.child(0)).unwrap().semantics.count(7), 1);
        let root = map.get_payload(map.config().root()).unwrap();
        assert_eq!(root.semantics.count(7), 9);
    }

    #[test]
    fn block_update_creates_uniform_node() {
        let mut map = OccupancyMap::new(small_config()).unwrap();
        let block = NodeCode::from_index([8, 8, 8], 2);
        let hit = leaf(9, 9, 9);
        map.set_frame_counter(4);
        let n = map.update_block(block, -0.4, &|c: NodeCode| c.contains(hit));
        map.propagate();
        assert!(n > 1);
        assert!(map.get_payload(hit).is_none());
        assert_eq!(map.get_payload(leaf(8, 8, 8)).unwrap().log_odds, -0.4);
        assert_eq!(map.get_payload(leaf(11, 11, 11)).unwrap().timestep, 4);
        for x in 8..12 {
            for y in 8..12 {
                for z in 8..12 {
                    let c = leaf(x, y, z);
                    if c != hit {
                        assert_eq!(map.state(c), OccupancyState::Free, "{c:?}");
                    }
                }
            }
        }
    }

    #[derive(Debug, Clone)]
    struct Op {
        idx: [u32; 3],
        delta: f64,
        label: Option<u16>,
        color: Option<[u8; 3]>,
        frame: u32,
    }

    fn op_strategy() -> impl Strategy<Value = Op> {
        (
            [0u32..6, 0u32..6, 0u32..6],
            prop_oneof![Just(logit(0.7)), Just(logit(0.4)), -2.5f64..2.5],
            proptest::option::of(0u16..4),
            proptest::option::of(any::<[u8; 3]>()),
            0u32..5,
        )
            .prop_map(|(idx, delta, label, color, frame)| Op {
                idx,
                delta,
                label,
                color,
                frame,
            })
    }

    fn apply_ops(map: &mut OccupancyMap, ops: &[Op]) {
        for op in ops {
            map.set_frame_counter(op.frame);
            map.update_leaf(leaf(op.idx[0], op.idx[1], op.idx[2]), op.delta, op.color.map(Rgb), op.label)
                .unwrap();
        }
    }

    proptest! {
        #[test]
        fn clamp_bounds_hold(ops in proptest::collection::vec(op_strategy(), 1..80)) {
            let mut map = OccupancyMap::new(small_config()).unwrap();
            apply_ops(&mut map, &ops);
            map.propagate();
            let (lo, hi) = (map.config().l_min, map.config().l_max);
            for r in map.nodes() {
                prop_assert!(r.payload.log_odds >= lo && r.payload.log_odds <= hi);
                prop_assert!(r.payload.semantics.is_well_formed());
            }
        }

        #[test]
        fn summary_soundness_and_conservation(ops in proptest::collection::vec(op_strategy(), 1..80)) {
            let mut map = OccupancyMap::new(small_config()).unwrap();
            apply_ops(&mut map, &ops);
            map.propagate();
            for r in map.nodes().into_iter().filter(|r| r.code.depth() > 0) {
                let leaves = descendant_leaves(&map, r.code);
                let cfg = map.config();
                let states: Vec<_> = leaves.iter().map(|p| super::super::payload::classify(p.as_ref(), cfg)).collect();
                match r.payload.state(cfg) {
                    OccupancyState::Occupied => prop_assert!(states.contains(&OccupancyState::Occupied)),
                    OccupancyState::Free => prop_assert!(!states.contains(&OccupancyState::Occupied)),
                    OccupancyState::Unknown => {}
                }
                let max_ts = leaves.iter().flatten().map(|p| p.timestep).max().unwrap_or(0);
                prop_assert_eq!(r.payload.timestep, max_ts);
            }
            let root = map.get_payload(map.config().root()).unwrap();
            for label in 0u16..4 {
                let calls = ops.iter().filter(|o| o.label == Some(label)).count() as u32;
                prop_assert_eq!(root.semantics.count(label), calls);
            }
        }

        #[test]
        fn additivity_below_saturation(
            deltas in proptest::collection::vec(-0.15f64..0.15, 1..12),
            seed in any::<u64>(),
        ) {
            let mut shuffled = deltas.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.gen_range(0..=i));
            }
            let c = leaf(3, 3, 3);
            let mut a = OccupancyMap::new(small_config()).unwrap();
            let mut b = OccupancyMap::new(small_config()).unwrap();
            for d in &deltas { a.update_leaf(c, *d, None, None).unwrap(); }
            for d in &shuffled { b.update_leaf(c, *d, None, None).unwrap(); }
            let sum: f64 = deltas.iter().sum();
            prop_assert!((a.get_payload(c).unwrap().log_odds - sum).abs() < 1e-12);
            prop_assert!((a.get_payload(c).unwrap().log_odds - b.get_payload(c).unwrap().log_odds).abs() < 1e-12);
        }

        #[test]
        fn prune_preserves_every_payload(
            ops in proptest::collection::vec(op_strategy(), 1..60),
            fill in any::<bool>(),
        ) {
            let mut map = OccupancyMap::new(small_config()).unwrap();
            if fill {
                // Uniform blocks so that pruning actually fires.
                for x in 0..8 { for y in 0..8 { for z in 0..4 {
                    map.update_leaf(leaf(x, y, z), -1.0, None, Some(1)).unwrap();
                }}}
            }
            apply_ops(&mut map, &ops);
            map.propagate();
            let before = map.clone();
            map.prune();
            for depth in 0..=4u8 {
                let n = 16u32 >> depth;
                for x in 0..n { for y in 0..n { for z in 0..n {
                    let c = NodeCode::from_index([x << depth, y << depth, z << depth], depth);
                    let (p, q) = (before.get_payload(c), map.get_payload(c));
                    prop_assert_eq!(p.is_some(), q.is_some());
                    if let (Some(p), Some(q)) = (p, q) {
                        prop_assert!(p.bit_eq(&q), "{:?}: {:?} vs {:?}", c, p, q);
                    }
                }}}
            }
            // Updating after a prune gives the same result as without pruning.
            let mut unpruned = before;
            apply_ops(&mut unpruned, &ops);
            apply_ops(&mut map, &ops);
            unpruned.propagate();
            map.propagate();
            for x in 0..16 { for y in 0..16 { for z in 0..16 {
                let c = leaf(x, y, z);
                let (p, q) = (unpruned.get_payload(c), map.get_payload(c));
                prop_assert_eq!(p.is_some(), q.is_some());
                if let (Some(p), Some(q)) = (p, q) { prop_assert!(p.bit_eq(&q)); }
            }}}
        }
    }
}
