//! Binary cross-entropy between predicted occupancy probabilities and a
//! 0/1 target grid. Probabilities are clamped away from the endpoints so
//! the logs stay finite.

use crate::autodiff::{lit, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::voxel::PROB_EPS;

/// Mean binary cross-entropy of an occupancy probability variable against
/// a same-shaped target of zeros and ones.
pub fn voxel_bce<T: Real>(tape: &mut Tape<T>, probs: Var, target: &Tensor<T>) -> Result<Var> {
    let shape = tape.shape(probs).to_vec();
    if shape != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "voxel_bce",
            left: shape,
            right: target.shape().to_vec(),
        });
    }
    let n: usize = shape.iter().product();
    if n == 0 {
        return Err(Error::BadArgument {
            op: "voxel_bce",
            reason: "empty grid".into(),
        });
    }
    for &y in target.data() {
        let y = y.to_f64().expect("finite target");
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::BadArgument {
                op: "voxel_bce",
                reason: format!("target value {y} outside [0,1]"),
            });
        }
    }

    let lo = lit::<T>(PROB_EPS);
    let hi = lit::<T>(1.0 - PROB_EPS);
    let y = tape.constant(target.clone());
    let y_flip = tape.affine(y, lit(-1.0), lit(1.0));

    let p = tape.clamp(probs, lo, hi);
    let log_p = tape.log(p);
    let p_flip = tape.affine(probs, lit(-1.0), lit(1.0));
    let p_flip = tape.clamp(p_flip, lo, hi);
    let log_flip = tape.log(p_flip);

    let pos = tape.mul(y, log_p)?;
    let neg = tape.mul(y_flip, log_flip)?;
    let sum = tape.add(pos, neg)?;
    let mean = tape.mean_all(sum);
    Ok(tape.neg(mean))
}
