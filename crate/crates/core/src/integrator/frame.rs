use nalgebra::{Matrix3, Point3, Vector3};
use smallvec::SmallVec;

use crate::error::MapError;
use crate::octree::Rgb;

const POSE_TOLERANCE: f64 = 1e-6;

/// Rigid sensor-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation about +z by `yaw` radians followed by a translation.
    pub fn from_yaw(yaw: f64, t: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: t,
        }
    }

    /// Parses the row-major 3x4 layout `r00 r01 r02 t0 r10 .. t2`.
    pub fn from_row_major(v: &[f64; 12]) -> Self {
        Self {
            rotation: Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            translation: Vector3::new(v[3], v[7], v[11]),
        }
    }

    #[rustfmt::skip]
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    /// Orthonormal rotation with determinant +1, all entries finite.
    pub fn validate(&self) -> Result<(), MapError> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(MapError::PoseInvalid("non-finite entry".into()));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if err > POSE_TOLERANCE {
            return Err(MapError::PoseInvalid(format!("rotation not orthonormal (error {err:e})")));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > POSE_TOLERANCE {
            return Err(MapError::PoseInvalid(format!("determinant {det}")));
        }
        Ok(())
    }

    #[inline]
    pub fn transform(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn origin(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }
}

/// One return of a scan, in the sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub position: [f32; 3],
    pub color: Rgb,
    /// Slot `k` holds the top-1 label of source `k`.
    pub labels: SmallVec<[u16; 2]>,
}

impl PointRecord {
    pub fn new(position: [f32; 3], color: Rgb, labels: &[u16]) -> Self {
        Self {
            position,
            color,
            labels: SmallVec::from_slice(labels),
        }
    }

    pub fn position_f64(&self) -> Point3<f64> {
        Point3::new(
            f64::from(self.position[0]),
            f64::from(self.position[1]),
            f64::from(self.position[2]),
        )
    }
}

/// A posed scan. Every point carries `label_slots` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame {
    pub timestep: u32,
    pub pose: Pose,
    pub label_slots: u8,
    pub points: Vec<PointRecord>,
}

impl ScanFrame {
    pub fn new(timestep: u32, pose: Pose, label_slots: u8) -> Self {
        Self {
            timestep,
            pose,
            label_slots,
            points: Vec::new(),
        }
    }
}

/// Label slots whose values are counted into voxels during integration.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotSelection(SmallVec<[usize; 2]>);

impl SlotSelection {
    /// No labels integrated, occupancy only.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(slot: usize) -> Self {
        Self(SmallVec::from_slice(&[slot]))
    }

    pub fn new(slots: &[usize]) -> Self {
        Self(SmallVec::from_slice(slots))
    }

    pub fn slots(&self) -> &[usize] {
        &self.0
    }

    pub fn validate(&self, label_slots: u8) -> Result<(), MapError> {
        match self.0.iter().find(|&&s| s >= usize::from(label_slots)) {
            Some(&slot) => Err(MapError::UnknownSlot {
                slot,
                available: usize::from(label_slots),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pose_line() {
        let p = Pose::from_row_major(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(p, Pose::identity());
        p.validate().unwrap();
    }

    #[test]
    fn row_major_roundtrip() {
        let p = Pose::from_yaw(0.3, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(Pose::from_row_major(&p.to_row_major()), p);
    }

    #[test]
    fn rejects_reflection_and_scale() {
        let mut p = Pose::identity();
        p.rotation[(2, 2)] = -1.0;
        assert!(p.validate().is_err());
        let mut p = Pose::identity();
        p.rotation *= 1.01;
        assert!(p.validate().is_err());
    }
}
