use smallvec::SmallVec;

use super::config::{sigmoid, MapConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgb(pub [u8; 3]);

/// Tri-state occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OccupancyState {
    Unknown,
    Free,
    Occupied,
}

impl OccupancyState {
    pub const ALL: [OccupancyState; 3] = [Self::Unknown, Self::Free, Self::Occupied];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unknown => "unknown",
            Self::Free => "free",
            Self::Occupied => "occupied",
        }
    }

    /// Classifies a log-odds value with the two-threshold rule.
    pub fn from_log_odds(log_odds: f64, config: &MapConfig) -> Self {
        let p = sigmoid(log_odds);
        if p > config.occ_threshold {
            Self::Occupied
        } else if p < config.free_threshold {
            Self::Free
        } else {
            Self::Unknown
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelCount {
    pub label: u16,
    pub count: u32,
}

/// Label/count pairs, sorted by label, labels unique, counts at least one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Semantics(SmallVec<[LabelCount; 2]>);

impl Semantics {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from arbitrary pairs, merging duplicates and dropping zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u16, u32)>) -> Self {
        let mut s = Self::new();
        for (label, count) in pairs {
            s.add(label, count);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = LabelCount> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[LabelCount] {
        &self.0
    }

    pub fn count(&self, label: u16) -> u32 {
        match self.0.binary_search_by_key(&label, |lc| lc.label) {
            Ok(i) => self.0[i].count,
            Err(_) => 0,
        }
    }

    pub fn contains(&self, label: u16) -> bool {
        self.0.binary_search_by_key(&label, |lc| lc.label).is_ok()
    }

    /// Adds `count` observations of `label`, saturating at `u32::MAX`.
    pub fn add(&mut self, label: u16, count: u32) {
        if count == 0 {
            return;
        }
        match self.0.binary_search_by_key(&label, |lc| lc.label) {
            Ok(i) => self.0[i].count = self.0[i].count.saturating_add(count),
            Err(i) => self.0.insert(i, LabelCount { label, count }),
        }
    }

    pub fn increment(&mut self, label: u16) {
        self.add(label, 1);
    }

    /// Union of label sets with counts summed.
    pub fn merge_sum(&mut self, other: &Semantics) {
        if other.is_empty() {
            return;
        }
        if self.is_empty() {
            self.0.clone_from(&other.0);
            return;
        }
        let mut out: SmallVec<[LabelCount; 2]> = SmallVec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(x), Some(y)) if x.label == y.label => {
                    out.push(LabelCount {
                        label: x.label,
                        count: x.count.saturating_add(y.count),
                    });
                    a.next();
                    b.next();
                }
                (Some(x), Some(y)) if x.label < y.label => out.push(*a.next().unwrap()),
                (Some(_), Some(_)) => out.push(*b.next().unwrap()),
                (Some(_), None) => out.push(*a.next().unwrap()),
                (None, Some(_)) => out.push(*b.next().unwrap()),
                (None, None) => break,
            }
        }
        self.0 = out;
    }

    /// Every count multiplied by `factor`, saturating.
    pub fn scaled(&self, factor: u64) -> Self {
        Self(
            self.0
                .iter()
                .map(|lc| LabelCount {
                    label: lc.label,
                    count: saturate(u64::from(lc.count).saturating_mul(factor)),
                })
                .collect(),
        )
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|lc| u64::from(lc.count)).sum()
    }

    /// Label with the strictly largest count. On ties the fallback wins when
    /// it is among the tied labels, otherwise the smallest tied id. An empty
    /// list yields the fallback.
    pub fn top_label(&self, fallback: Option<u16>) -> Option<u16> {
        let Some(best) = self.0.iter().map(|lc| lc.count).max() else {
            return fallback;
        };
        if let Some(f) = fallback {
            if self.count(f) == best {
                return Some(f);
            }
        }
        // Sorted ascending, so the first maximal entry has the smallest id.
        self.0.iter().find(|lc| lc.count == best).map(|lc| lc.label)
    }

    pub(crate) fn push_sorted_unchecked(&mut self, lc: LabelCount) {
        self.0.push(lc);
    }

    /// Checks sortedness, uniqueness and non-zero counts.
    pub fn is_well_formed(&self) -> bool {
        self.0.windows(2).all(|w| w[0].label < w[1].label) && self.0.iter().all(|lc| lc.count > 0)
    }
}

#[inline]
pub(crate) fn saturate(v: u64) -> u32 {
    v.min(u64::from(u32::MAX)) as u32
}

/// Per-voxel state. Inner nodes carry the same record as a summary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LeafPayload {
    pub log_odds: f64,
    pub color: Rgb,
    /// Number of colour-carrying updates folded into `color`.
    pub color_weight: u32,
    pub timestep: u32,
    pub semantics: Semantics,
}

impl LeafPayload {
    /// Payload implied for space with no stored node.
    pub fn unknown() -> Self {
        Self::default()
    }

    pub fn state(&self, config: &MapConfig) -> OccupancyState {
        OccupancyState::from_log_odds(self.log_odds, config)
    }

    pub fn probability(&self) -> f64 {
        sigmoid(self.log_odds)
    }

    /// Equality that compares the log-odds bit pattern.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.log_odds.to_bits() == other.log_odds.to_bits()
            && self.color == other.color
            && self.color_weight == other.color_weight
            && self.timestep == other.timestep
            && self.semantics == other.semantics
    }

    pub(crate) fn apply_log_odds(&mut self, delta: f64, config: &MapConfig) {
        self.log_odds = (self.log_odds + delta).clamp(config.l_min, config.l_max);
    }

    /// Folds one colour observation into the running average.
    pub(crate) fn blend_color(&mut self, c: Rgb) {
        let w = u64::from(self.color_weight);
        let n = w + 1;
        for ch in 0..3 {
            let sum = u64::from(self.color.0[ch]) * w + u64::from(c.0[ch]);
            self.color.0[ch] = ((sum + n / 2) / n) as u8;
        }
        self.color_weight = self.color_weight.saturating_add(1);
    }
}

/// Classifies a payload, treating `None` as never-observed space.
pub fn classify(payload: Option<&LeafPayload>, config: &MapConfig) -> OccupancyState {
    match payload {
        Some(p) => p.state(config),
        None => OccupancyState::Unknown,
    }
}
