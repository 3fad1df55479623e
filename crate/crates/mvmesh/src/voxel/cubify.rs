//! Thresholded occupancy grid to triangle mesh conversion.

use super::grid::OccupancyGrid;
use crate::error::{Error, Result};
use crate::geom::TriangleMesh;
use std::collections::HashMap;

/// Corner offsets of each exposed face, listed counterclockwise as seen
/// from outside the occupied voxel, per face direction (-x,+x,-y,+y,-z,+z).
const FACE_CORNERS: [[[usize; 3]; 4]; 6] = [
    [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 0]],
    [[1, 0, 0], [1, 1, 0], [1, 1, 1], [1, 0, 1]],
    [[0, 0, 0], [1, 0, 0], [1, 0, 1], [0, 0, 1]],
    [[0, 1, 0], [0, 1, 1], [1, 1, 1], [1, 1, 0]],
    [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 0, 0]],
    [[0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
];

const FACE_DIRS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Converts every voxel with p >= threshold into a cube, drops faces
/// shared by two occupied voxels, welds shared corners, and splits each
/// remaining quad into two triangles wound outward. Vertex numbering
/// follows the first encounter in x-fastest voxel scan order, so equal
/// grids produce identical meshes.
pub fn cubify(grid: &OccupancyGrid, threshold: f64) -> Result<TriangleMesh> {
    let geom = grid.geometry();
    let [dx, dy, dz] = geom.dims;
    let occupied = |ix: i64, iy: i64, iz: i64| -> bool {
        if ix < 0 || iy < 0 || iz < 0 {
            return false;
        }
        let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
        if ix >= dx || iy >= dy || iz >= dz {
            return false;
        }
        grid.value_at(ix, iy, iz) >= threshold
    };

    let mut corner_index: HashMap<[usize; 3], u32> = HashMap::new();
    let mut vertices: Vec<[f32; 3]> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut intern = |corner: [usize; 3], vertices: &mut Vec<[f32; 3]>| -> u32 {
        *corner_index.entry(corner).or_insert_with(|| {
            vertices.push([
                (geom.origin[0] as f64 + corner[0] as f64 * geom.spacing as f64) as f32,
                (geom.origin[1] as f64 + corner[1] as f64 * geom.spacing as f64) as f32,
                (geom.origin[2] as f64 + corner[2] as f64 * geom.spacing as f64) as f32,
            ]);
            (vertices.len() - 1) as u32
        })
    };

    for iz in 0..dz {
        for iy in 0..dy {
            for ix in 0..dx {
                if !occupied(ix as i64, iy as i64, iz as i64) {
                    continue;
                }
                for (dir, corners) in FACE_DIRS.iter().zip(&FACE_CORNERS) {
                    if occupied(
                        ix as i64 + dir[0],
                        iy as i64 + dir[1],
                        iz as i64 + dir[2],
                    ) {
                        continue;
                    }
                    let q: Vec<u32> = corners
                        .iter()
                        .map(|c| intern([ix + c[0], iy + c[1], iz + c[2]], &mut vertices))
                        .collect();
                    faces.push([q[0], q[1], q[2]]);
                    faces.push([q[0], q[2], q[3]]);
                }
            }
        }
    }

    if faces.is_empty() {
        return Err(Error::Geometry(format!(
            "no voxel reaches threshold {threshold}; cannot build a mesh"
        )));
    }
    TriangleMesh::new(vertices, faces)
}
