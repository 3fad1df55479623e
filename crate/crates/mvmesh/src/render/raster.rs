//! Z-buffer depth rasterization.

use super::depthmap::DepthMap;
use crate::autodiff::Tensor;
use crate::geom::{CameraView, Projection, TriangleMesh};

/// Depth gap below which two fragments count as the same surface; the
/// lower face index wins such ties.
const DEPTH_TIE: f64 = 1e-9;

/// Sentinel face id for background pixels.
pub const NO_FACE: u32 = u32::MAX;

/// Rasterizes the mesh to per-pixel nearest camera-frame depth. Pixels a
/// ray misses stay 0.0. Faces with any vertex at or behind the near plane
/// are skipped; both windings are drawn.
pub fn rasterize_depth(mesh: &TriangleMesh, cam: &CameraView) -> DepthMap {
    rasterize_faces(mesh, cam).0
}

/// As `rasterize_depth`, also returning the face index visible at each
/// pixel (`NO_FACE` for background).
pub fn rasterize_faces(mesh: &TriangleMesh, cam: &CameraView) -> (DepthMap, Vec<u32>) {
    let (w, h) = (cam.width, cam.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut fbuf = vec![NO_FACE; w * h];

    for (fi, face) in mesh.faces().iter().enumerate() {
        let mut pts = [[0.0f64; 3]; 3];
        let mut in_front = true;
        for (k, &vi) in face.iter().enumerate() {
            let v = mesh.vertices()[vi as usize];
            match cam.project(&[v[0] as f64, v[1] as f64, v[2] as f64]) {
                Projection::InFront { u, v, depth } => pts[k] = [u, v, depth],
                Projection::Behind => {
                    in_front = false;
                    break;
                }
            }
        }
        if !in_front {
            continue;
        }
        let area = edge(&pts[0], &pts[1], &pts[2]);
        if area == 0.0 {
            continue;
        }

        let umin = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let umax = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let vmin = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let vmax = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let c_lo = (umin - 0.5).floor().max(0.0) as usize;
        let c_hi = ((umax - 0.5).ceil() as isize).min(w as isize - 1);
        let r_lo = (vmin - 0.5).floor().max(0.0) as usize;
        let r_hi = ((vmax - 0.5).ceil() as isize).min(h as isize - 1);
        if c_hi < c_lo as isize || r_hi < r_lo as isize {
            continue;
        }

        for row in r_lo..=r_hi as usize {
            for col in c_lo..=c_hi as usize {
                let q = [col as f64 + 0.5, row as f64 + 0.5, 0.0];
                let w0 = edge(&pts[1], &pts[2], &q) / area;
                let w1 = edge(&pts[2], &pts[0], &q) / area;
                let w2 = edge(&pts[0], &pts[1], &q) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let inv_z = w0 / pts[0][2] + w1 / pts[1][2] + w2 / pts[2][2];
                let z = 1.0 / inv_z;
                let px = row * w + col;
                if z < zbuf[px] - DEPTH_TIE {
                    zbuf[px] = z;
                    fbuf[px] = fi as u32;
                }
            }
        }
    }

    let mut depth = DepthMap::new(w, h);
    for row in 0..h {
        for col in 0..w {
            let z = zbuf[row * w + col];
            if z.is_finite() {
                depth.set(row, col, z as f32);
            }
        }
    }
    (depth, fbuf)
}

/// Renders the mesh as a shaded normal image: each covered pixel holds the
/// visible face's unit world normal remapped to [0,1] per channel, shape
/// [3,H,W]. Background pixels are 0.
pub fn render_normal_image(mesh: &TriangleMesh, cam: &CameraView) -> Tensor<f32> {
    let (w, h) = (cam.width, cam.height);
    let (_, fbuf) = rasterize_faces(mesh, cam);
    let mut data = vec![0.0f32; 3 * h * w];
    for px in 0..h * w {
        let fi = fbuf[px];
        if fi == NO_FACE {
            continue;
        }
        let n = mesh.face_normal_raw(fi as usize);
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(1e-30);
        for ch in 0..3 {
            data[ch * h * w + px] = ((n[ch] / len + 1.0) * 0.5) as f32;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("sized buffer")
}

fn edge(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}
