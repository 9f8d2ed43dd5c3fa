//! Incremental grid traversal (3D DDA).
//!
//! Cells are half-open, so a point on a face belongs to the cell with the
//! larger index. When a segment crosses several planes at the same parameter
//! the crossing point itself is visited: axes moving in the positive
//! direction step first (the point already lies in their upper cell), then
//! axes moving negatively (the point still lies in their upper cell).

use std::ops::ControlFlow;

use nalgebra::Point3;

use crate::error::MapError;
use crate::octree::{MapConfig, NodeCode};

/// Visits every cell of the unit grid that contains a point of the segment
/// `[u0, u1]`, in order of first contact, except the cell containing `u1`.
///
/// Coordinates are in cell units. Returns `Break` if the visitor stopped.
pub(crate) fn walk_grid<F>(u0: [f64; 3], u1: [f64; 3], mut visit: F) -> ControlFlow<()>
where
    F: FnMut([i64; 3]) -> ControlFlow<()>,
{
    let start = u0.map(|v| v.floor() as i64);
    let end = u1.map(|v| v.floor() as i64);
    if start == end {
        return ControlFlow::Continue(());
    }

    let mut step = [0i64; 3];
    let mut remaining = [0i64; 3];
    let mut plane = [0i64; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut dir = [0.0f64; 3];
    for a in 0..3 {
        dir[a] = u1[a] - u0[a];
        if end[a] > start[a] {
            step[a] = 1;
            remaining[a] = end[a] - start[a];
            plane[a] = start[a] + 1;
        } else if end[a] < start[a] {
            step[a] = -1;
            remaining[a] = start[a] - end[a];
            plane[a] = start[a];
        } else {
            continue;
        }
        t_next[a] = (plane[a] as f64 - u0[a]) / dir[a];
    }

    let mut cell = start;
    visit(cell)?;
    while remaining.iter().any(|&r| r > 0) {
        let t = (0..3)
            .filter(|&a| remaining[a] > 0)
            .map(|a| t_next[a])
            .fold(f64::INFINITY, f64::min);
        for sign in [1i64, -1] {
            let mut moved = false;
            for a in 0..3 {
                if remaining[a] > 0 && step[a] == sign && t_next[a] == t {
                    cell[a] += sign;
                    remaining[a] -= 1;
                    plane[a] += sign;
                    t_next[a] = (plane[a] as f64 - u0[a]) / dir[a];
                    moved = true;
                }
            }
            if moved && cell != end {
                visit(cell)?;
            }
        }
    }
    debug_assert_eq!(cell, end);
    ControlFlow::Continue(())
}

/// Grid coordinates of `p` in units of the voxel size at `depth`.
#[inline]
pub(crate) fn grid_at_depth(config: &MapConfig, p: &Point3<f64>, depth: u8) -> [f64; 3] {
    let scale = (1u64 << depth) as f64;
    config.to_grid(p).map(|g| g / scale)
}

#[inline]
pub(crate) fn level_cell_code(cell: [i64; 3], depth: u8) -> NodeCode {
    NodeCode::from_index(cell.map(|c| (c as u32) << depth), depth)
}

/// Voxels at `depth` crossed by the segment from `origin` to `endpoint`,
/// ordered from the origin, excluding the endpoint's voxel.
pub fn raycast(
    config: &MapConfig,
    origin: &Point3<f64>,
    endpoint: &Point3<f64>,
    depth: u8,
) -> Result<Vec<NodeCode>, MapError> {
    config.check_depth(depth)?;
    if !config.contains(origin) || !config.contains(endpoint) {
        return Err(MapError::OutOfBounds);
    }
    let mut out = Vec::new();
    let _ = walk_grid(
        grid_at_depth(config, origin, depth),
        grid_at_depth(config, endpoint, depth),
        |cell| {
            out.push(level_cell_code(cell, depth));
            ControlFlow::Continue(())
        },
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(u0: [f64; 3], u1: [f64; 3]) -> Vec<[i64; 3]> {
        let mut v = Vec::new();
        let _ = walk_grid(u0, u1, |c| {
            v.push(c);
            ControlFlow::Continue(())
        });
        v
    }

    #[test]
    fn degenerate_ray_is_empty() {
        let c = MapConfig::default();
        let p = Point3::new(0.05, 0.05, 0.05);
        assert!(raycast(&c, &p, &p, 0).unwrap().is_empty());
    }

    #[test]
    fn straight_ray_along_x() {
        let c = MapConfig::default();
        let origin = Point3::new(0.05, 0.05, 0.05);
        let end = Point3::new(0.55, 0.05, 0.05);
        let codes = raycast(&c, &origin, &end, 0).unwrap();
        let first = c.code_from_point(&origin, 0).unwrap().index();
        let xs: Vec<u32> = codes.iter().map(|code| code.index()[0]).collect();
        assert_eq!(xs, (0..5).map(|i| first[0] + i).collect::<Vec<_>>());
        assert!(codes.iter().all(|code| code.index()[1] == first[1] && code.index()[2] == first[2]));
    }

    #[test]
    fn diagonal_through_corner_visits_corner_cell() {
        // x moves up, y moves down. The corner point (1, 1) lies in cell (1, 1).
        assert_eq!(
            cells([0.5, 1.5, 0.5], [1.5, 0.5, 0.5]),
            vec![[0, 1, 0], [1, 1, 0]]
        );
        // Both axes positive: corner point lies in the diagonal neighbour.
        assert_eq!(cells([0.5, 0.5, 0.5], [1.5, 1.5, 0.5]), vec![[0, 0, 0]]);
        // Both negative: corner point is still in the start cell.
        assert_eq!(cells([1.5, 1.5, 0.5], [0.5, 0.5, 0.5]), vec![[1, 1, 0]]);
        // Mixed with the corner cell distinct from both ends.
        assert_eq!(
            cells([1.5, 0.5, 0.5], [0.5, 1.5, 0.5]),
            vec![[1, 0, 0], [1, 1, 0]]
        );
    }

    #[test]
    fn ray_in_face_plane_stays_in_upper_cells() {
        // y == 2 exactly: every point belongs to row y = 2.
        assert_eq!(
            cells([0.5, 2.0, 0.5], [3.5, 2.0, 0.5]),
            vec![[0, 2, 0], [1, 2, 0], [2, 2, 0]]
        );
    }

    #[test]
    fn origin_on_face_moving_down() {
        assert_eq!(cells([2.0, 0.5, 0.5], [0.5, 0.5, 0.5]), vec![[2, 0, 0], [1, 0, 0]]);
    }

    #[test]
    fn endpoint_on_face() {
        // Endpoint x = 2.0 lies in cell 2, which is excluded.
        assert_eq!(cells([0.5, 0.5, 0.5], [2.0, 0.5, 0.5]), vec![[0, 0, 0], [1, 0, 0]]);
        // Moving down onto x = 1.0: endpoint cell is 1.
        assert_eq!(cells([3.5, 0.5, 0.5], [1.0, 0.5, 0.5]), vec![[3, 0, 0], [2, 0, 0]]);
    }
}
