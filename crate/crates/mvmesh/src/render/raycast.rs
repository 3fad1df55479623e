//! Brute-force ray-casting reference renderer.

use super::depthmap::DepthMap;
use crate::geom::{mat3_transpose, mat3_vec, ray_triangle, CameraView, TriangleMesh, NEAR_PLANE};

/// Casts one ray per pixel center and intersects it against every
/// triangle. Exact but O(pixels * faces); used to validate the rasterizer
/// and in tests that want a second opinion. The ray direction is scaled so
/// its camera-frame z component is 1, making the ray parameter equal to
/// camera depth.
pub fn raycast_depth(mesh: &TriangleMesh, cam: &CameraView) -> DepthMap {
    let origin = cam.center();
    let rt = mat3_transpose(&cam.r);
    let mut depth = DepthMap::new(cam.width, cam.height);
    let faces: Vec<([f64; 3], [f64; 3], [f64; 3])> = mesh
        .faces()
        .iter()
        .map(|f| {
            let v = |i: u32| {
                let p = mesh.vertices()[i as usize];
                [p[0] as f64, p[1] as f64, p[2] as f64]
            };
            (v(f[0]), v(f[1]), v(f[2]))
        })
        .collect();

    for row in 0..cam.height {
        for col in 0..cam.width {
            let dir_cam = [
                (col as f64 + 0.5 - cam.cx()) / cam.fx(),
                (row as f64 + 0.5 - cam.cy()) / cam.fy(),
                1.0,
            ];
            let dir = mat3_vec(&rt, &dir_cam);
            let mut best = f64::INFINITY;
            for (a, b, c) in &faces {
                if let Some(t) = ray_triangle(&origin, &dir, a, b, c) {
                    if t > NEAR_PLANE && t < best {
                        best = t;
                    }
                }
            }
            if best.is_finite() {
                depth.set(row, col, best as f32);
            }
        }
    }
    depth
}
