//! Graph convolution over mesh vertices and the bounded vertex refinement
//! step that displaces positions from learned features.

use crate::autodiff::{Csr, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::geom::TriangleMesh;
use std::rc::Rc;

/// CSR adjacency over the mesh's vertex neighborhoods, ready for repeated
/// `neighbor_sum` calls on a tape.
pub fn mesh_adjacency(mesh: &TriangleMesh) -> Rc<Csr> {
    Rc::new(Csr::from_neighbors(mesh.neighbors()))
}

/// One graph convolution: `ReLU(f W0 + (sum of neighbor features) W1 + b)`
/// on per-vertex rows. An isolated vertex sees only its own term.
pub fn graph_conv<T: Real>(
    tape: &mut Tape<T>,
    features: Var,
    adj: &Rc<Csr>,
    w0: Var,
    w1: Var,
    bias: Var,
) -> Result<Var> {
    let fs = tape.shape(features).to_vec();
    if fs.len() != 2 || fs[0] != adj.rows() {
        return Err(Error::BadShape {
            op: "graph_conv",
            shape: fs,
            reason: format!("expected [{},D] vertex features", adj.rows()),
        });
    }
    let own = tape.matmul(features, w0)?;
    let neigh = tape.neighbor_sum(features, adj.clone())?;
    let mixed = tape.matmul(neigh, w1)?;
    let sum = tape.add(own, mixed)?;
    let sum = tape.add(sum, bias)?;
    Ok(tape.relu(sum))
}

/// Vertex refinement `v' = v + tanh([f;v] W_vert)`: per-axis displacement
/// bounded to (-1, 1).
pub fn vertex_refine<T: Real>(
    tape: &mut Tape<T>,
    verts: Var,
    features: Var,
    w_vert: Var,
) -> Result<Var> {
    let vs = tape.shape(verts).to_vec();
    if vs.len() != 2 || vs[1] != 3 {
        return Err(Error::BadShape {
            op: "vertex_refine",
            shape: vs,
            reason: "expected [V,3] vertex positions".into(),
        });
    }
    let joined = tape.concat(&[features, verts], 1)?;
    let raw = tape.matmul(joined, w_vert)?;
    let step = tape.tanh(raw);
    tape.add(verts, step)
}
