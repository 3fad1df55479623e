//! Edge length regularizer: mean squared length over the unique edges of a
//! mesh, computed from an on-tape vertex variable.

use crate::autodiff::{lit, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::geom::TriangleMesh;

/// Mean squared edge length of `mesh` with vertex positions taken from the
/// `[V,3]` variable `verts`.
pub fn edge_loss<T: Real>(tape: &mut Tape<T>, verts: Var, mesh: &TriangleMesh) -> Result<Var> {
    let s = tape.shape(verts).to_vec();
    if s.len() != 2 || s[1] != 3 {
        return Err(Error::BadShape {
            op: "edge_loss",
            shape: s,
            reason: "expected [V,3] vertices".into(),
        });
    }
    if s[0] != mesh.vertex_count() {
        return Err(Error::BadArgument {
            op: "edge_loss",
            reason: format!(
                "vertex variable has {} rows but the mesh has {} vertices",
                s[0],
                mesh.vertex_count()
            ),
        });
    }
    let edges = mesh.edges();
    if edges.is_empty() {
        return Err(Error::BadArgument {
            op: "edge_loss",
            reason: "mesh has no edges".into(),
        });
    }

    let i0: Vec<usize> = edges.iter().map(|e| e[0] as usize).collect();
    let i1: Vec<usize> = edges.iter().map(|e| e[1] as usize).collect();
    let a = tape.gather_rows(verts, &i0)?;
    let b = tape.gather_rows(verts, &i1)?;
    let d = tape.sub(a, b)?;
    let sq = tape.square(d);
    let total = tape.sum_all(sq);
    Ok(tape.scale(total, lit(1.0 / edges.len() as f64)))
}
