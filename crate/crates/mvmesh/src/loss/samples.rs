//! Differentiable recomputation of surface samples. Barycentric sample
//! references stay fixed while vertex positions flow through the tape, so
//! point losses backpropagate into the mesh being refined.

use crate::autodiff::{lit, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::{SurfaceRef, TriangleMesh};

/// Smallest face-normal magnitude treated as nonzero when normalizing.
const NORMAL_FLOOR: f64 = 1e-12;

/// Sample positions and unit normals recomputed from a `[V,3]` vertex
/// variable, both `[S,3]`.
pub struct SurfacePoints {
    pub positions: Var,
    pub normals: Var,
}

fn corner_indices(mesh: &TriangleMesh, refs: &[SurfaceRef]) -> Result<[Vec<usize>; 3]> {
    let mut idx = [
        Vec::with_capacity(refs.len()),
        Vec::with_capacity(refs.len()),
        Vec::with_capacity(refs.len()),
    ];
    for r in refs {
        let fi = r.face as usize;
        if fi >= mesh.face_count() {
            return Err(Error::BadArgument {
                op: "surface_points",
                reason: format!("sample references face {fi} of a {}-face mesh", mesh.face_count()),
            });
        }
        let f = mesh.faces()[fi];
        for k in 0..3 {
            idx[k].push(f[k] as usize);
        }
    }
    Ok(idx)
}

fn weight_column<T: Real>(tape: &mut Tape<T>, refs: &[SurfaceRef], k: usize) -> Var {
    let data = refs
        .iter()
        .map(|r| T::from_f64(r.weights[k]).expect("finite weight"))
        .collect();
    tape.constant(Tensor::new(vec![refs.len(), 1], data).expect("column shape"))
}

/// Recomputes sample positions and unit face normals on the tape from
/// current vertex coordinates and fixed barycentric references.
pub fn surface_points<T: Real>(
    tape: &mut Tape<T>,
    verts: Var,
    mesh: &TriangleMesh,
    refs: &[SurfaceRef],
) -> Result<SurfacePoints> {
    let vs = tape.shape(verts).to_vec();
    if vs.len() != 2 || vs[1] != 3 {
        return Err(Error::BadShape {
            op: "surface_points",
            shape: vs,
            reason: "expected [V,3] vertices".into(),
        });
    }
    if vs[0] != mesh.vertex_count() {
        return Err(Error::BadArgument {
            op: "surface_points",
            reason: format!(
                "vertex variable has {} rows but the mesh has {} vertices",
                vs[0],
                mesh.vertex_count()
            ),
        });
    }
    if refs.is_empty() {
        return Err(Error::BadArgument {
            op: "surface_points",
            reason: "no surface samples given".into(),
        });
    }

    let idx = corner_indices(mesh, refs)?;
    let corners: Vec<Var> = idx
        .iter()
        .map(|ix| tape.gather_rows(verts, ix))
        .collect::<Result<_>>()?;

    let mut positions = None;
    for k in 0..3 {
        let w = weight_column(tape, refs, k);
        let term = tape.mul(corners[k], w)?;
        positions = Some(match positions {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }

    let e1 = tape.sub(corners[1], corners[0])?;
    let e2 = tape.sub(corners[2], corners[0])?;
    let raw = tape.cross3(e1, e2)?;
    let sq = tape.square(raw);
    let sumsq = tape.sum_axis(sq, 1, true)?;
    let norm = tape.sqrt(sumsq);
    let safe = tape.clamp(norm, lit(NORMAL_FLOOR), T::infinity());
    let normals = tape.div(raw, safe)?;

    Ok(SurfacePoints {
        positions: positions.expect("three corners"),
        normals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use crate::geom::{make_box, sample_surface, sample_surface_refs};

    fn vertex_var(tape: &mut Tape<f64>, mesh: &TriangleMesh) -> Var {
        let data: Vec<f64> = mesh.vertices().iter().flatten().map(|&x| x as f64).collect();
        tape.leaf(Tensor::new(vec![mesh.vertex_count(), 3], data).unwrap())
    }

    #[test]
    fn recomputed_positions_match_direct_sampling() {
        let mesh = make_box(0.4, 0.3, 0.2);
        let refs = sample_surface_refs(&mesh, 64, 9).unwrap();
        let direct = sample_surface(&mesh, 64, 9).unwrap();

        let mut tape = Tape::<f64>::new();
        let verts = vertex_var(&mut tape, &mesh);
        let pts = surface_points(&mut tape, verts, &mesh, &refs).unwrap();
        let pos = tape.value(pts.positions).data().to_vec();
        for (i, s) in direct.iter().enumerate() {
            for k in 0..3 {
                assert!(
                    (pos[i * 3 + k] - s.position[k] as f64).abs() < 1e-6,
                    "sample {i} axis {k}"
                );
            }
        }
    }

    #[test]
    fn normals_are_unit_length_and_match_face_normals() {
        let mesh = make_box(0.4, 0.3, 0.2);
        let refs = sample_surface_refs(&mesh, 32, 5).unwrap();

        let mut tape = Tape::<f64>::new();
        let verts = vertex_var(&mut tape, &mesh);
        let pts = surface_points(&mut tape, verts, &mesh, &refs).unwrap();
        let normals = tape.value(pts.normals).data().to_vec();
        for (i, r) in refs.iter().enumerate() {
            let n = &normals[i * 3..i * 3 + 3];
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-12, "sample {i} has length {len}");

            let raw = mesh.face_normal_raw(r.face as usize);
            let mag = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
            for k in 0..3 {
                assert!((n[k] - raw[k] / mag).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_vertices_scales_positions_but_not_normals() {
        let mesh = make_box(0.2, 0.2, 0.2);
        let refs = sample_surface_refs(&mesh, 16, 2).unwrap();

        let mut tape = Tape::<f64>::new();
        let verts = vertex_var(&mut tape, &mesh);
        let doubled = tape.scale(verts, 2.0);
        let base = surface_points(&mut tape, verts, &mesh, &refs).unwrap();
        let big = surface_points(&mut tape, doubled, &mesh, &refs).unwrap();

        let p0 = tape.value(base.positions).data().to_vec();
        let p1 = tape.value(big.positions).data().to_vec();
        for (a, b) in p0.iter().zip(&p1) {
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
        let n0 = tape.value(base.normals).data().to_vec();
        let n1 = tape.value(big.normals).data().to_vec();
        for (a, b) in n0.iter().zip(&n1) {
            assert!((b - a).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_face_reference_is_rejected() {
        let mesh = make_box(0.2, 0.2, 0.2);
        let bad = [SurfaceRef {
            face: mesh.face_count() as u32,
            weights: [1.0, 0.0, 0.0],
        }];
        let mut tape = Tape::<f64>::new();
        let verts = vertex_var(&mut tape, &mesh);
        assert!(surface_points(&mut tape, verts, &mesh, &bad).is_err());
    }

    #[test]
    fn position_and_normal_gradients_match_finite_differences() {
        let mesh = make_box(0.3, 0.25, 0.35);
        let refs = sample_surface_refs(&mesh, 12, 7).unwrap();
        let data: Vec<f64> = mesh.vertices().iter().flatten().map(|&x| x as f64).collect();
        let verts = Tensor::new(vec![mesh.vertex_count(), 3], data).unwrap();

        let mesh2 = mesh.clone();
        let refs2 = refs.clone();
        let report = check_gradients("surface_positions", &[verts.clone()], move |tape, vars| {
            let pts = surface_points(tape, vars[0], &mesh2, &refs2)?;
            let sq = tape.square(pts.positions);
            Ok(tape.sum_all(sq))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");

        let report = check_gradients("surface_normals", &[verts], move |tape, vars| {
            let pts = surface_points(tape, vars[0], &mesh, &refs)?;
            let probe = tape.constant(
                Tensor::new(
                    vec![1, 3],
                    vec![0.3, 0.5, 0.7],
                )
                .unwrap(),
            );
            let prod = tape.mul(pts.normals, probe)?;
            let s = tape.sum_all(prod);
            Ok(tape.square(s))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
