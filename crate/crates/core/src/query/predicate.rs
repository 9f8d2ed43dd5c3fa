use std::fmt;

use crate::octree::{LeafPayload, MapConfig, OccupancyState};

/// Set of occupancy states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StateSet(u8);

impl StateSet {
    pub const EMPTY: Self = Self(0);
    pub const ALL: Self = Self(0b111);

    fn bit(s: OccupancyState) -> u8 {
        match s {
            OccupancyState::Unknown => 1,
            OccupancyState::Free => 2,
            OccupancyState::Occupied => 4,
        }
    }

    pub fn of(states: &[OccupancyState]) -> Self {
        Self(states.iter().fold(0, |m, &s| m | Self::bit(s)))
    }

    pub fn contains(self, s: OccupancyState) -> bool {
        self.0 & Self::bit(s) != 0
    }

    pub fn with(self, s: OccupancyState) -> Self {
        Self(self.0 | Self::bit(s))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = OccupancyState> {
        OccupancyState::ALL.into_iter().filter(move |&s| self.contains(s))
    }

    fn intersects(self, other: Self) -> bool {
        self.0 & other.0 != 0
    }

    fn complement(self) -> Self {
        Self(!self.0 & Self::ALL.0)
    }
}

/// Boolean filter over voxel payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    True,
    StateIn(StateSet),
    HasLabel(u16),
    /// Top label without a fallback: ties go to the smallest id.
    TopLabelIs(u16),
    UpdatedBefore(u32),
    UpdatedAtOrAfter(u32),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

/// Whether some, respectively not all, voxels below a node can match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Bounds {
    pub may_true: bool,
    pub may_false: bool,
}

impl Predicate {
    pub fn state_in(states: &[OccupancyState]) -> Self {
        Self::StateIn(StateSet::of(states))
    }

    pub fn and(self, other: Predicate) -> Self {
        Self::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Predicate) -> Self {
        Self::Or(Box::new(self), Box::new(other))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        Self::Not(Box::new(self))
    }

    pub fn eval(&self, p: &LeafPayload, config: &MapConfig) -> bool {
        match self {
            Self::True => true,
            Self::StateIn(set) => set.contains(p.state(config)),
            Self::HasLabel(l) => p.semantics.contains(*l),
            Self::TopLabelIs(l) => p.semantics.top_label(None) == Some(*l),
            Self::UpdatedBefore(t) => p.timestep < *t,
            Self::UpdatedAtOrAfter(t) => p.timestep >= *t,
            Self::And(a, b) => a.eval(p, config) && b.eval(p, config),
            Self::Or(a, b) => a.eval(p, config) || b.eval(p, config),
            Self::Not(a) => !a.eval(p, config),
        }
    }

    /// Bounds over every voxel summarised by `summary`.
    ///
    /// `states` is the set of states a summarised voxel can be in.
    pub(crate) fn bounds(&self, summary: &LeafPayload, states: StateSet) -> Bounds {
        match self {
            Self::True => Bounds {
                may_true: true,
                may_false: false,
            },
            Self::StateIn(set) => Bounds {
                may_true: states.intersects(*set),
                may_false: states.intersects(set.complement()),
            },
            Self::HasLabel(l) | Self::TopLabelIs(l) => Bounds {
                may_true: summary.semantics.contains(*l),
                may_false: true,
            },
            Self::UpdatedBefore(t) => Bounds {
                may_true: true,
                may_false: summary.timestep >= *t,
            },
            Self::UpdatedAtOrAfter(t) => Bounds {
                may_true: summary.timestep >= *t,
                may_false: true,
            },
            Self::And(a, b) => {
                let (a, b) = (a.bounds(summary, states), b.bounds(summary, states));
                Bounds {
                    may_true: a.may_true && b.may_true,
                    may_false: a.may_false || b.may_false,
                }
            }
            Self::Or(a, b) => {
                let (a, b) = (a.bounds(summary, states), b.bounds(summary, states));
                Bounds {
                    may_true: a.may_true || b.may_true,
                    may_false: a.may_false && b.may_false,
                }
            }
            Self::Not(a) => {
                let a = a.bounds(summary, states);
                Bounds {
                    may_true: a.may_false,
                    may_false: a.may_true,
                }
            }
        }
    }
}

/// States reachable below an inner node with a max summary of class `s`.
pub(crate) fn states_below_max(s: OccupancyState) -> StateSet {
    match s {
        OccupancyState::Free => StateSet::of(&[OccupancyState::Free]),
        OccupancyState::Unknown => StateSet::of(&[OccupancyState::Unknown, OccupancyState::Free]),
        OccupancyState::Occupied => StateSet::ALL,
    }
}

impl fmt::Display for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(OccupancyState::as_str).collect();
        write!(f, "({})", names.join(", "))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::True => f.write_str("true"),
            Self::StateIn(s) => write!(f, "state in {s}"),
            Self::HasLabel(l) => write!(f, "has_label {l}"),
            Self::TopLabelIs(l) => write!(f, "top_label = {l}"),
            Self::UpdatedBefore(t) => write!(f, "updated_before {t}"),
            Self::UpdatedAtOrAfter(t) => write!(f, "updated_at_or_after {t}"),
            Self::And(a, b) => write!(f, "({a} and {b})"),
            Self::Or(a, b) => write!(f, "({a} or {b})"),
            Self::Not(a) => write!(f, "not {a}"),
        }
    }
}
