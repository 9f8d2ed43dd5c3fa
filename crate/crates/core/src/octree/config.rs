use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::code::{NodeCode, MAX_DEPTH_LEVELS};
use crate::error::MapError;

/// `ln(p / (1 - p))`.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Geometry and sensor-model parameters of a map.
///
/// The world is a cube of edge `resolution * 2^depth_levels` centred on the
/// origin. Cells are half-open, `[lo, hi)` on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    /// Leaf voxel edge length in meters.
    pub resolution: f64,
    pub depth_levels: u8,
    pub p_hit: f64,
    pub p_miss: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Probabilities strictly above this classify as occupied.
    pub occ_threshold: f64,
    /// Probabilities strictly below this classify as free.
    pub free_threshold: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            depth_levels: 16,
            p_hit: 0.7,
            p_miss: 0.4,
            l_min: logit(0.12),
            l_max: logit(0.97),
            occ_threshold: 0.5,
            free_threshold: 0.5,
        }
    }
}

impl MapConfig {
    pub fn with_resolution(resolution: f64, depth_levels: u8) -> Self {
        Self {
            resolution,
            depth_levels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let bad = |msg: &str| Err(MapError::InvalidConfig(msg.to_owned()));
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return bad("resolution must be positive");
        }
        if !(2..=MAX_DEPTH_LEVELS).contains(&self.depth_levels) {
            return bad("depth_levels must be in [2, 21]");
        }
        if !(self.p_hit > 0.5 && self.p_hit < 1.0) {
            return bad("p_hit must be in (0.5, 1)");
        }
        if !(self.p_miss > 0.0 && self.p_miss < 0.5) {
            return bad("p_miss must be in (0, 0.5)");
        }
        if !(self.l_min < 0.0 && self.l_max > 0.0) {
            return bad("clamp bounds must satisfy l_min < 0 < l_max");
        }
        if !(self.occ_threshold >= 0.5 && self.occ_threshold < 1.0) {
            return bad("occ_threshold must be in [0.5, 1)");
        }
        if !(self.free_threshold > 0.0 && self.free_threshold <= 0.5) {
            return bad("free_threshold must be in (0, 0.5]");
        }
        if self.free_threshold > self.occ_threshold {
            return bad("free_threshold must not exceed occ_threshold");
        }
        Ok(())
    }

    /// Log-odds increment for a hit or a miss.
    pub fn inverse_sensor_logodds(&self, is_hit: bool) -> f64 {
        if is_hit {
            logit(self.p_hit)
        } else {
            logit(self.p_miss)
        }
    }

    /// Number of leaf cells along one axis.
    #[inline]
    pub fn leaf_cells(&self) -> u64 {
        1u64 << self.depth_levels
    }

    /// Half the world edge length.
    #[inline]
    pub fn half_extent(&self) -> f64 {
        self.resolution * (1u64 << (self.depth_levels - 1)) as f64
    }

    #[inline]
    pub fn cell_size(&self, depth: u8) -> f64 {
        self.resolution * (1u64 << depth) as f64
    }

    /// Depth of the root node, which covers the whole world.
    #[inline]
    pub fn root_depth(&self) -> u8 {
        self.depth_levels
    }

    pub fn root(&self) -> NodeCode {
        NodeCode::from_raw(0, self.depth_levels)
    }

    /// Continuous position in leaf-cell units, measured from the world's
    /// minimum corner.
    #[inline]
    pub fn to_grid(&self, p: &Point3<f64>) -> [f64; 3] {
        let half = (1u64 << (self.depth_levels - 1)) as f64;
        [
            p.x / self.resolution + half,
            p.y / self.resolution + half,
            p.z / self.resolution + half,
        ]
    }

    /// Leaf index containing `p`, or `None` outside the world.
    pub fn leaf_index(&self, p: &Point3<f64>) -> Option<[u32; 3]> {
        let g = self.to_grid(p);
        let n = self.leaf_cells() as f64;
        let mut out = [0u32; 3];
        for axis in 0..3 {
            let f = g[axis].floor();
            // NaN fails both comparisons.
            if !(f >= 0.0 && f < n) {
                return None;
            }
            out[axis] = f as u32;
        }
        Some(out)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.leaf_index(p).is_some()
    }

    /// Canonical code of the voxel at `depth` containing `p`.
    pub fn code_from_point(&self, p: &Point3<f64>, depth: u8) -> Result<NodeCode, MapError> {
        self.check_depth(depth)?;
        let index = self.leaf_index(p).ok_or(MapError::OutOfBounds)?;
        Ok(NodeCode::from_index(index, depth))
    }

    /// Centre of the voxel named by `code`.
    pub fn point_from_code(&self, code: NodeCode) -> Point3<f64> {
        let [lo, _] = self.cell_bounds(code);
        let h = 0.5 * self.cell_size(code.depth());
        Point3::new(lo.x + h, lo.y + h, lo.z + h)
    }

    /// Minimum and maximum corners of the voxel.
    pub fn cell_bounds(&self, code: NodeCode) -> [Point3<f64>; 2] {
        let half = (1u64 << (self.depth_levels - 1)) as f64;
        let [x, y, z] = code.index();
        let lo = Point3::new(
            (x as f64 - half) * self.resolution,
            (y as f64 - half) * self.resolution,
            (z as f64 - half) * self.resolution,
        );
        let size = self.cell_size(code.depth());
        [lo, Point3::new(lo.x + size, lo.y + size, lo.z + size)]
    }

    pub(crate) fn check_depth(&self, depth: u8) -> Result<(), MapError> {
        if depth < self.depth_levels {
            Ok(())
        } else {
            Err(MapError::InvalidDepth(depth))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_clamp_bounds() {
        let c = MapConfig::default();
        assert_abs_diff_eq!(c.l_min, -1.992_430_164_690_206_3, epsilon = 1e-12);
        assert_abs_diff_eq!(c.l_max, 3.476_098_689_835_273_3, epsilon = 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn inverse_sensor_values() {
        let c = MapConfig::default();
        assert_eq!(logit(0.5), 0.0);
        assert_abs_diff_eq!(c.inverse_sensor_logodds(true), 0.847_297_860_387_203_7, epsilon = 1e-12);
        assert_abs_diff_eq!(c.inverse_sensor_logodds(false), -0.405_465_108_108_164_3, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = MapConfig::default();
        c.depth_levels = 1;
        assert!(c.validate().is_err());
        let mut c = MapConfig::default();
        c.free_threshold = 0.5;
        c.occ_threshold = 0.49;
        assert!(c.validate().is_err());
        let mut c = MapConfig::default();
        c.p_hit = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn voxel_centre_maps_to_itself() {
        let c = MapConfig::default();
        let p = Point3::new(0.05, 0.05, 0.05);
        let code = c.code_from_point(&p, 0).unwrap();
        let centre = c.point_from_code(code);
        assert_abs_diff_eq!((centre - p).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn face_points_belong_to_higher_cell() {
        let c = MapConfig::default();
        let a = c.leaf_index(&Point3::new(0.0999, 0.0, 0.0)).unwrap();
        let b = c.leaf_index(&Point3::new(0.10, 0.0, 0.0)).unwrap();
        // floor(coord / res) oracle
        let half = 1u32 << 15;
        assert_eq!(a[0], half + (0.0999f64 / 0.1).floor() as u32);
        assert_eq!(b[0], half + (0.10f64 / 0.1).floor() as u32);
        assert_eq!(b[0], a[0] + 1);
    }

    #[test]
    fn out_of_extent_rejected() {
        let c = MapConfig::with_resolution(1.0, 4);
        assert!(c.code_from_point(&Point3::new(7.99, -8.0, 0.0), 0).is_ok());
        assert!(matches!(c.code_from_point(&Point3::new(8.0, 0.0, 0.0), 0), Err(MapError::OutOfBounds)));
        assert!(c.code_from_point(&Point3::new(f64::NAN, 0.0, 0.0), 0).is_err());
        assert!(matches!(c.code_from_point(&Point3::origin(), 4), Err(MapError::InvalidDepth(4))));
    }

    #[test]
    fn point_code_roundtrip_random() {
        let c = MapConfig::with_resolution(0.1, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let depth = rng.gen_range(0..16u8);
            let index = [(); 3].map(|_| rng.gen_range(0..(1u32 << 16)));
            let code = NodeCode::from_index(index, depth);
            let back = c.code_from_point(&c.point_from_code(code), depth).unwrap();
            assert_eq!(back, code);
        }
    }
}
