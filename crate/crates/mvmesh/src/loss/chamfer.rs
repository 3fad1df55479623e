//! Symmetric chamfer distance and normal agreement over nearest-neighbor
//! matches between two point sets. Matches are rebuilt from the current
//! values on every call and treated as fixed during backpropagation.

use crate::autodiff::{lit, Real, Tape, Var};
use crate::error::{Error, Result};

/// Nearest-neighbor assignment in both directions. Ties resolve to the
/// lowest index so gradient routing is deterministic.
pub struct Matches {
    pub p_to_q: Vec<usize>,
    pub q_to_p: Vec<usize>,
}

fn check_points<T: Real>(tape: &Tape<T>, v: Var, op: &'static str) -> Result<usize> {
    let s = tape.shape(v);
    if s.len() != 2 || s[1] != 3 {
        return Err(Error::BadShape {
            op,
            shape: s.to_vec(),
            reason: "expected [N,3] points".into(),
        });
    }
    if s[0] == 0 {
        return Err(Error::BadArgument {
            op,
            reason: "point set is empty".into(),
        });
    }
    Ok(s[0])
}

fn nearest_rows<T: Real>(a: &[T], b: &[T]) -> Vec<usize> {
    let n = a.len() / 3;
    let m = b.len() / 3;
    let mut out = vec![0usize; n];
    for i in 0..n {
        let ax = a[i * 3].to_f64().expect("finite point");
        let ay = a[i * 3 + 1].to_f64().expect("finite point");
        let az = a[i * 3 + 2].to_f64().expect("finite point");
        let mut best = f64::INFINITY;
        let mut best_j = 0usize;
        for j in 0..m {
            let dx = ax - b[j * 3].to_f64().expect("finite point");
            let dy = ay - b[j * 3 + 1].to_f64().expect("finite point");
            let dz = az - b[j * 3 + 2].to_f64().expect("finite point");
            let d = dx * dx + dy * dy + dz * dz;
            if d < best {
                best = d;
                best_j = j;
            }
        }
        out[i] = best_j;
    }
    out
}

/// Builds the two-directional nearest-neighbor assignment between `[N,3]`
/// point sets from their current values.
pub fn nearest_matches<T: Real>(tape: &Tape<T>, p: Var, q: Var) -> Result<Matches> {
    check_points(tape, p, "nearest_matches")?;
    check_points(tape, q, "nearest_matches")?;
    let pd = tape.value(p).data();
    let qd = tape.value(q).data();
    Ok(Matches {
        p_to_q: nearest_rows(pd, qd),
        q_to_p: nearest_rows(qd, pd),
    })
}

fn mean_sq_dist<T: Real>(tape: &mut Tape<T>, from: Var, to: Var, idx: &[usize]) -> Result<Var> {
    let n = idx.len();
    let matched = tape.gather_rows(to, idx)?;
    let diff = tape.sub(from, matched)?;
    let sq = tape.square(diff);
    let total = tape.sum_all(sq);
    Ok(tape.scale(total, lit(1.0 / n as f64)))
}

/// Chamfer loss for a fixed assignment: mean squared nearest-neighbor
/// distance from P into Q plus the same from Q into P.
pub fn chamfer_from<T: Real>(tape: &mut Tape<T>, p: Var, q: Var, m: &Matches) -> Result<Var> {
    let pq = mean_sq_dist(tape, p, q, &m.p_to_q)?;
    let qp = mean_sq_dist(tape, q, p, &m.q_to_p)?;
    tape.add(pq, qp)
}

/// Symmetric chamfer loss between `[N,3]` point sets, rebuilding the
/// nearest-neighbor assignment from current values.
pub fn chamfer<T: Real>(tape: &mut Tape<T>, p: Var, q: Var) -> Result<Var> {
    let m = nearest_matches(tape, p, q)?;
    chamfer_from(tape, p, q, &m)
}

fn mean_abs_dot<T: Real>(tape: &mut Tape<T>, from: Var, to: Var, idx: &[usize]) -> Result<Var> {
    let n = idx.len();
    let matched = tape.gather_rows(to, idx)?;
    let prod = tape.mul(from, matched)?;
    let dots = tape.sum_axis(prod, 1, false)?;
    let mag = tape.abs(dots);
    let total = tape.sum_all(mag);
    Ok(tape.scale(total, lit(1.0 / n as f64)))
}

/// Normal agreement over an existing chamfer assignment: the negated mean
/// absolute dot product between unit normals of matched pairs, both
/// directions. Identical sets with identical normals give -2.
pub fn normal_loss_from<T: Real>(
    tape: &mut Tape<T>,
    p_normals: Var,
    q_normals: Var,
    m: &Matches,
) -> Result<Var> {
    check_points(tape, p_normals, "normal_loss")?;
    check_points(tape, q_normals, "normal_loss")?;
    let pq = mean_abs_dot(tape, p_normals, q_normals, &m.p_to_q)?;
    let qp = mean_abs_dot(tape, q_normals, p_normals, &m.q_to_p)?;
    let sum = tape.add(pq, qp)?;
    Ok(tape.neg(sum))
}

/// Chamfer-matched normal loss from positions and unit normals.
pub fn normal_loss<T: Real>(
    tape: &mut Tape<T>,
    p: Var,
    p_normals: Var,
    q: Var,
    q_normals: Var,
) -> Result<Var> {
    let m = nearest_matches(tape, p, q)?;
    normal_loss_from(tape, p_normals, q_normals, &m)
}
