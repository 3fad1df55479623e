//! Differentiable projection of vertex positions into a view's image plane
//! and bilinear sampling of per-vertex features from its feature pyramid.

use crate::autodiff::{lit, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::{CameraView, NEAR_PLANE};

/// Coordinate written for vertices at or behind the near plane. Far enough
/// outside any feature map that bilinear sampling reads zero with zero
/// coordinate gradient.
const OFFSCREEN: f64 = -1e9;

/// Projects world-space vertices `[V,3]` to continuous pixel coordinates
/// `[V,2]` in the camera's image, differentiably in the vertex positions.
/// The boolean per vertex is false where the vertex sits at or behind the
/// near plane; such rows get a far-offscreen coordinate and zero gradient.
pub fn project_vertices<T: Real>(
    tape: &mut Tape<T>,
    verts: Var,
    cam: &CameraView,
) -> Result<(Var, Vec<bool>)> {
    let shape = tape.shape(verts).to_vec();
    if shape.len() != 2 || shape[1] != 3 {
        return Err(Error::BadShape {
            op: "project_vertices",
            shape,
            reason: "expects [V,3] vertex positions".into(),
        });
    }
    let n = shape[0];
    let (fx, fy, cx, cy) = (cam.fx(), cam.fy(), cam.cx(), cam.cy());
    let r = cam.r;

    let vd = tape.value(verts).data();
    let mut coords = vec![T::zero(); n * 2];
    let mut in_front = vec![false; n];
    let mut cam_pts = vec![[0.0f64; 3]; n];
    for i in 0..n {
        let w = [
            vd[i * 3].to_f64().expect("finite vertex"),
            vd[i * 3 + 1].to_f64().expect("finite vertex"),
            vd[i * 3 + 2].to_f64().expect("finite vertex"),
        ];
        let p = cam.world_to_camera(&w);
        cam_pts[i] = p;
        if p[2] > NEAR_PLANE {
            in_front[i] = true;
            coords[i * 2] = lit(fx * p[0] / p[2] + cx);
            coords[i * 2 + 1] = lit(fy * p[1] / p[2] + cy);
        } else {
            coords[i * 2] = lit(OFFSCREEN);
            coords[i * 2 + 1] = lit(OFFSCREEN);
        }
    }

    let out = Tensor::new(vec![n, 2], coords)?;
    let mask = in_front.clone();
    let var = tape.push_op(&[verts], out, move |ctx| {
        let g = ctx.out_grad().data();
        let mut gv = vec![T::zero(); n * 3];
        for i in 0..n {
            if !in_front[i] {
                continue;
            }
            let [x, y, z] = cam_pts[i];
            let (gu, gvp) = (
                g[i * 2].to_f64().expect("finite grad"),
                g[i * 2 + 1].to_f64().expect("finite grad"),
            );
            for j in 0..3 {
                let du = fx * (r[0][j] * z - x * r[2][j]) / (z * z);
                let dv = fy * (r[1][j] * z - y * r[2][j]) / (z * z);
                gv[i * 3 + j] = lit(gu * du + gvp * dv);
            }
        }
        vec![Some(Tensor::new(vec![n, 3], gv).expect("sized"))]
    });
    Ok((var, mask))
}

/// Samples one pyramid level `[C,h,w]` at pixel coordinates expressed in
/// the full-resolution image of `image_size` (width, height), rescaling
/// the coordinates to the level's own texel grid.
pub fn sample_level<T: Real>(
    tape: &mut Tape<T>,
    level: Var,
    coords_px: Var,
    image_size: (usize, usize),
) -> Result<Var> {
    let ls = tape.shape(level).to_vec();
    if ls.len() != 3 {
        return Err(Error::BadShape {
            op: "sample_level",
            shape: ls,
            reason: "pyramid level expects [C,h,w]".into(),
        });
    }
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    let sx = ls[2] as f64 / w;
    let sy = ls[1] as f64 / h;
    let scale = tape.constant(Tensor::new(vec![2], vec![lit(sx), lit(sy)])?);
    let scaled = tape.mul(coords_px, scale)?;
    let texel = tape.add_scalar(scaled, lit(-0.5));
    tape.grid_sample2d(level, texel)
}

/// Per-vertex feature vectors `[V,D]` for one view: every pyramid level is
/// sampled at the projected vertex positions and the levels concatenate.
/// Vertices behind the camera contribute zero vectors.
pub fn vertex_view_features<T: Real>(
    tape: &mut Tape<T>,
    verts: Var,
    cam: &CameraView,
    pyramid: &[Var],
) -> Result<Var> {
    if pyramid.is_empty() {
        return Err(Error::BadArgument {
            op: "vertex_view_features",
            reason: "empty feature pyramid".into(),
        });
    }
    let (coords, mask) = project_vertices(tape, verts, cam)?;
    let levels: Vec<Var> = pyramid
        .iter()
        .map(|&l| sample_level(tape, l, coords, (cam.width, cam.height)))
        .collect::<Result<_>>()?;
    let stacked = tape.concat(&levels, 1)?;
    if mask.iter().all(|&m| m) {
        return Ok(stacked);
    }
    let n = mask.len();
    let gate = Tensor::new(
        vec![n, 1],
        mask.iter().map(|&m| if m { T::one() } else { T::zero() }).collect(),
    )?;
    let gate = tape.constant(gate);
    tape.mul(stacked, gate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use crate::geom::Projection;

    fn grid_map(c: usize, h: usize, w: usize) -> Tensor<f32> {
        Tensor::new(
            vec![c, h, w],
            (0..c * h * w).map(|i| i as f32 * 0.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn projection_matches_camera_oracle() {
        let cam = CameraView::look_at(
            [0.4, -0.2, -0.9],
            [0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
            48.0,
            64,
            48,
        )
        .unwrap();
        let pts = [[0.1, 0.05, -0.02], [-0.2, 0.1, 0.15], [0.0, 0.0, 0.0]];
        let mut tape = Tape::<f64>::new();
        let verts = tape.leaf(Tensor::new(vec![3, 3], pts.concat()).unwrap());
        let (coords, mask) = project_vertices(&mut tape, verts, &cam).unwrap();
        let cd = tape.value(coords).data();
        for (i, p) in pts.iter().enumerate() {
            assert!(mask[i]);
            match cam.project(p) {
                Projection::InFront { u, v, .. } => {
                    assert!((cd[i * 2] - u).abs() < 1e-12);
                    assert!((cd[i * 2 + 1] - v).abs() < 1e-12);
                }
                Projection::Behind => panic!("fixture point should be visible"),
            }
        }
    }

    #[test]
    fn behind_camera_vertices_are_masked_and_sample_zero() {
        let cam = CameraView::standard(8.0, 8, 8).unwrap();
        let mut tape = Tape::<f32>::new();
        let verts = tape.leaf(
            Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.5, 0.0, 0.0, -0.5]).unwrap(),
        );
        let level = tape.constant(grid_map(2, 4, 4));
        let feats = vertex_view_features(&mut tape, verts, &cam, &[level]).unwrap();
        let (_, mask) = project_vertices(&mut tape, verts, &cam).unwrap();
        assert_eq!(mask, vec![true, false]);
        let fd = tape.value(feats).data();
        assert_eq!(tape.shape(feats), [2, 2]);
        assert!(fd[..2].iter().any(|&x| x != 0.0));
        assert!(fd[2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_map_samples_the_constant_anywhere_inside() {
        let cam = CameraView::standard(8.0, 8, 8).unwrap();
        let mut tape = Tape::<f32>::new();
        let verts = tape.leaf(Tensor::new(vec![1, 3], vec![0.07, -0.11, 0.6]).unwrap());
        let level = tape.constant(Tensor::full(vec![3, 4, 4], 2.5));
        let feats = vertex_view_features(&mut tape, verts, &cam, &[level]).unwrap();
        for &x in tape.value(feats).data() {
            assert!((x - 2.5).abs() < 1e-6);
        }
    }

    #[test]
    fn midpoint_between_texels_reads_their_average() {
        // Full-res 8x8, level 4x4: pixel coords scale by 0.5. A vertex at
        // u=3, v=1 lands on texel coords (1.0, 0.0): the exact midpoint of
        // texels x=0.5 apart does not arise on integer grids, so aim at
        // x=2.0 px -> texel 0.5 between texels 0 and 1 on row 0.
        let cam = CameraView::standard(8.0, 8, 8).unwrap();
        let z = 0.5;
        let u = 2.0;
        let v = 1.0;
        let world = cam.unproject(u, v, z);
        let mut tape = Tape::<f32>::new();
        let verts = tape.leaf(
            Tensor::new(vec![1, 3], world.iter().map(|&x| x as f32).collect()).unwrap(),
        );
        let mut vals = vec![0.0f32; 16];
        vals[0] = 3.0;
        vals[1] = 5.0;
        let level = tape.constant(Tensor::new(vec![1, 4, 4], vals).unwrap());
        let feats = vertex_view_features(&mut tape, verts, &cam, &[level]).unwrap();
        assert!((tape.value(feats).data()[0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn pyramid_levels_concatenate_per_vertex() {
        let cam = CameraView::standard(8.0, 8, 8).unwrap();
        let mut tape = Tape::<f32>::new();
        let verts = tape.leaf(
            Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.5, 0.01, 0.0, 0.5]).unwrap(),
        );
        let l0 = tape.constant(Tensor::full(vec![2, 4, 4], 1.0));
        let l1 = tape.constant(Tensor::full(vec![3, 2, 2], 2.0));
        let feats = vertex_view_features(&mut tape, verts, &cam, &[l0, l1]).unwrap();
        assert_eq!(tape.shape(feats), [2, 5]);
        let fd = tape.value(feats).data();
        for v in 0..2 {
            assert!((fd[v * 5] - 1.0).abs() < 1e-6);
            assert!((fd[v * 5 + 4] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn feature_gradient_w_r_t_vertices_and_maps_matches_fd() {
        let cam = CameraView::look_at(
            [0.1, 0.2, -0.8],
            [0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
            8.0,
            8,
            8,
        )
        .unwrap();
        let verts = Tensor::new(
            vec![3, 3],
            vec![0.05, 0.02, 0.0, -0.08, 0.04, 0.1, 0.02, -0.06, -0.05],
        )
        .unwrap();
        let level0 = grid_map(2, 4, 4).cast::<f64>();
        let level1 = grid_map(1, 2, 2).cast::<f64>();
        let report = check_gradients(
            "vertex_features",
            &[verts, level0, level1],
            move |tape, vars| {
                let f = vertex_view_features(tape, vars[0], &cam, &[vars[1], vars[2]])?;
                let sq = tape.square(f);
                Ok(tape.sum_all(sq))
            },
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
