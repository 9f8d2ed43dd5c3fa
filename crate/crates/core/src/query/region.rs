use std::fmt;
use std::str::FromStr;

use nalgebra::Point3;

use super::parse::ParseError;
use crate::octree::{MapConfig, NodeCode};

/// Spatial filter for queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// Closed box. A voxel belongs if its half-open cell touches the box.
    Aabb { min: Point3<f64>, max: Point3<f64> },
    /// A voxel belongs if its centre lies within `radius` of `center`.
    Sphere { center: Point3<f64>, radius: f64 },
    Everything,
}

// Relative slack for block-level tests; voxel-level tests are exact.
const SLACK: f64 = 1e-9;

impl Region {
    pub fn aabb(min: [f64; 3], max: [f64; 3]) -> Self {
        Self::Aabb {
            min: Point3::from(min),
            max: Point3::from(max),
        }
    }

    pub fn sphere(center: [f64; 3], radius: f64) -> Self {
        Self::Sphere {
            center: Point3::from(center),
            radius,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Self::Aabb { min, max } => (0..3).all(|a| min[a].is_finite() && max[a].is_finite() && min[a] <= max[a]),
            Self::Sphere { center, radius } => center.iter().all(|v| v.is_finite()) && radius.is_finite() && *radius > 0.0,
            Self::Everything => true,
        }
    }

    /// Exact membership of a voxel.
    pub fn contains_voxel(&self, config: &MapConfig, code: NodeCode) -> bool {
        match self {
            Self::Aabb { min, max } => {
                let [lo, hi] = config.cell_bounds(code);
                (0..3).all(|a| lo[a] <= max[a] && min[a] < hi[a])
            }
            Self::Sphere { center, radius } => {
                let c = config.point_from_code(code);
                (c - center).norm_squared() <= radius * radius
            }
            Self::Everything => true,
        }
    }

    /// False only if no voxel at `depth` inside `block` can belong.
    pub(crate) fn may_touch(&self, config: &MapConfig, block: NodeCode, depth: u8) -> bool {
        let [lo, hi] = config.cell_bounds(block);
        let eps = SLACK * config.cell_size(block.depth());
        match self {
            Self::Aabb { min, max } => (0..3).all(|a| lo[a] - eps <= max[a] && min[a] < hi[a] + eps),
            Self::Sphere { center, radius } => {
                let h = 0.5 * config.cell_size(depth);
                let d2: f64 = (0..3)
                    .map(|a| {
                        // Centres span [lo + h, hi - h]; the two can cross by an ulp.
                        let (c0, c1) = (lo[a] + h, hi[a] - h);
                        let v = center[a].max(c0).min(c1.max(c0));
                        (v - center[a]).powi(2)
                    })
                    .sum();
                d2.sqrt() <= radius + eps
            }
            Self::Everything => true,
        }
    }

    /// True only if every voxel at `depth` inside `block` belongs.
    pub(crate) fn covers(&self, config: &MapConfig, block: NodeCode, depth: u8) -> bool {
        let [lo, hi] = config.cell_bounds(block);
        let eps = SLACK * config.cell_size(block.depth());
        match self {
            Self::Aabb { min, max } => {
                // First voxel must reach past min, last voxel must start before max.
                let first_hi = lo + nalgebra::Vector3::repeat(config.cell_size(depth));
                let last_lo = hi - nalgebra::Vector3::repeat(config.cell_size(depth));
                (0..3).all(|a| min[a] + eps < first_hi[a] && last_lo[a] + eps <= max[a])
            }
            Self::Sphere { center, radius } => {
                let d2: f64 = (0..3)
                    .map(|a| (center[a] - lo[a]).abs().max((hi[a] - center[a]).abs()).powi(2))
                    .sum();
                d2.sqrt() + eps < *radius
            }
            Self::Everything => true,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Aabb { min, max } => write!(f, "aabb:{},{},{},{},{},{}", min.x, min.y, min.z, max.x, max.y, max.z),
            Self::Sphere { center, radius } => write!(f, "sphere:{},{},{},{}", center.x, center.y, center.z, radius),
            Self::Everything => f.write_str("all"),
        }
    }
}

impl FromStr for Region {
    type Err = ParseError;

    /// `aabb:x0,y0,z0,x1,y1,z1`, `sphere:cx,cy,cz,r` or `all`.
    fn from_str(s: &str) -> Result<Self, ParseError> {
        let s_trim = s.trim();
        if s_trim == "all" {
            return Ok(Self::Everything);
        }
        let Some((kind, rest)) = s_trim.split_once(':') else {
            return Err(ParseError::new(0, "expected `aabb:`, `sphere:` or `all`"));
        };
        let offset = kind.len() + 1;
        let mut values = Vec::new();
        let mut pos = offset;
        for part in rest.split(',') {
            let v: f64 = part
                .trim()
                .parse()
                .map_err(|_| ParseError::new(pos, format!("invalid number `{}`", part.trim())))?;
            values.push(v);
            pos += part.len() + 1;
        }
        let region = match (kind, values.len()) {
            ("aabb", 6) => Self::aabb([values[0], values[1], values[2]], [values[3], values[4], values[5]]),
            ("sphere", 4) => Self::sphere([values[0], values[1], values[2]], values[3]),
            ("aabb", n) => return Err(ParseError::new(offset, format!("aabb needs 6 numbers, got {n}"))),
            ("sphere", n) => return Err(ParseError::new(offset, format!("sphere needs 4 numbers, got {n}"))),
            _ => return Err(ParseError::new(0, format!("unknown region kind `{kind}`"))),
        };
        if !region.is_valid() {
            return Err(ParseError::new(offset, "min must not exceed max and radius must be positive"));
        }
        Ok(region)
    }
}
