//! Reverse Huber penalty for depth residuals: linear near zero, quadratic
//! in the tails, continuous where the branches meet. Includes the masking
//! step that drops background pixels before the penalty is applied.

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Smallest allowed cutoff so an all-zero residual batch stays finite.
pub const MIN_CUTOFF: f64 = 1e-6;

/// Fraction of the largest absolute residual used as the adaptive cutoff.
pub const CUTOFF_FRACTION: f64 = 0.2;

/// Mean reverse Huber penalty of `residuals` with cutoff `c`: |x| where
/// |x| <= c, (x^2 + c^2) / (2c) beyond. Both branches equal c at |x| = c.
pub fn berhu<T: Real>(tape: &mut Tape<T>, residuals: Var, c: f64) -> Result<Var> {
    if !(c > 0.0) {
        return Err(Error::BadArgument {
            op: "berhu",
            reason: format!("cutoff must be positive, got {c}"),
        });
    }
    let shape = tape.shape(residuals).to_vec();
    let n: usize = shape.iter().product();
    if n == 0 {
        return Err(Error::BadArgument {
            op: "berhu",
            reason: "no residuals".into(),
        });
    }

    let data = tape.value(residuals).data();
    let mut total = 0.0f64;
    for &x in data {
        let x = x.to_f64().expect("finite residual");
        let a = x.abs();
        total += if a <= c { a } else { (x * x + c * c) / (2.0 * c) };
    }
    let value = Tensor::new(
        vec![1],
        vec![T::from_f64(total / n as f64).expect("finite loss")],
    )?;

    let inv_n = 1.0 / n as f64;
    Ok(tape.push_op(&[residuals], value, move |ctx| {
        let g = ctx.out_grad().data()[0].to_f64().expect("finite grad");
        let xs = ctx.input(0).data();
        let gk: Vec<T> = xs
            .iter()
            .map(|&x| {
                let x = x.to_f64().expect("finite residual");
                let slope = if x.abs() <= c { x.signum() } else { x / c };
                T::from_f64(g * inv_n * slope).expect("finite grad")
            })
            .collect();
        vec![Some(Tensor::new(shape.clone(), gk).expect("sized"))]
    }))
}

/// Cutoff tied to the current residual scale: a fifth of the largest
/// absolute residual, floored so it never reaches zero. Computed from
/// values only; the cutoff does not backpropagate.
pub fn adaptive_cutoff<T: Real>(residuals: &[T]) -> f64 {
    let peak = residuals
        .iter()
        .map(|x| x.to_f64().expect("finite residual").abs())
        .fold(0.0f64, f64::max);
    (CUTOFF_FRACTION * peak).max(MIN_CUTOFF)
}

/// Differences between two same-shaped depth maps at pixels where both
/// carry depth. A zero in either map marks background and is skipped.
/// Errors when the maps share no valid pixel.
pub fn masked_residuals<T: Real>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let sp = tape.shape(pred).to_vec();
    let st = tape.shape(target).to_vec();
    if sp != st {
        return Err(Error::ShapeMismatch {
            op: "masked_residuals",
            left: sp,
            right: st,
        });
    }
    let n: usize = sp.iter().product();
    let valid: Vec<usize> = {
        let a = tape.value(pred).data();
        let b = tape.value(target).data();
        (0..n)
            .filter(|&i| a[i] != T::zero() && b[i] != T::zero())
            .collect()
    };
    if valid.is_empty() {
        return Err(Error::BadArgument {
            op: "masked_residuals",
            reason: "no pixel carries depth in both maps".into(),
        });
    }
    let pc = tape.reshape(pred, vec![n, 1])?;
    let tc = tape.reshape(target, vec![n, 1])?;
    let pg = tape.gather_rows(pc, &valid)?;
    let tg = tape.gather_rows(tc, &valid)?;
    tape.sub(pg, tg)
}

/// Masked reverse Huber distance between a predicted and a target depth
/// map, with the cutoff adapted to the current residual scale.
pub fn depth_loss<T: Real>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let res = masked_residuals(tape, pred, target)?;
    let c = adaptive_cutoff(tape.value(res).data());
    berhu(tape, res, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;

    fn residual_var(tape: &mut Tape<f64>, xs: &[f64]) -> Var {
        tape.leaf(Tensor::new(vec![xs.len()], xs.to_vec()).unwrap())
    }

    #[test]
    fn linear_branch_returns_the_absolute_value() {
        let mut tape = Tape::<f64>::new();
        let r = residual_var(&mut tape, &[0.5]);
        let l = berhu(&mut tape, r, 1.0).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.5);
    }

    #[test]
    fn quadratic_branch_matches_the_closed_form() {
        let mut tape = Tape::<f64>::new();
        let r = residual_var(&mut tape, &[2.0]);
        let l = berhu(&mut tape, r, 1.0).unwrap();
        assert_eq!(tape.value(l).data()[0], 2.5);
    }

    #[test]
    fn branches_agree_at_the_cutoff() {
        for c in [0.3, 1.0, 2.5] {
            let mut tape = Tape::<f64>::new();
            let lo = residual_var(&mut tape, &[c - 1e-9]);
            let hi = residual_var(&mut tape, &[c + 1e-9]);
            let a = berhu(&mut tape, lo, c).unwrap();
            let b = berhu(&mut tape, hi, c).unwrap();
            let gap = (tape.value(a).data()[0] - tape.value(b).data()[0]).abs();
            assert!(gap < 1e-8, "c={c} gap={gap}");
        }
    }

    #[test]
    fn penalty_is_convex_on_a_residual_grid() {
        let c = 0.7;
        let eval = |x: f64| {
            let mut tape = Tape::<f64>::new();
            let r = residual_var(&mut tape, &[x]);
            let l = berhu(&mut tape, r, c).unwrap();
            tape.value(l).data()[0]
        };
        let xs: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.05).collect();
        for w in xs.windows(3) {
            let mid = eval(w[1]);
            let chord = 0.5 * (eval(w[0]) + eval(w[2]));
            assert!(mid <= chord + 1e-12, "not convex at {}", w[1]);
        }
    }

    #[test]
    fn cutoff_tracks_the_largest_residual_with_a_floor() {
        assert_eq!(adaptive_cutoff(&[0.0f64, -5.0, 3.0]), 1.0);
        assert_eq!(adaptive_cutoff(&[0.0f64, 0.0]), MIN_CUTOFF);
    }

    #[test]
    fn nonpositive_cutoff_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let r = residual_var(&mut tape, &[1.0]);
        assert!(berhu(&mut tape, r, 0.0).is_err());
        assert!(berhu(&mut tape, r, -1.0).is_err());
    }

    #[test]
    fn background_pixels_are_excluded_from_the_residuals() {
        let mut tape = Tape::<f64>::new();
        let pred = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 2.0, 3.0]).unwrap());
        let target = tape.leaf(Tensor::new(vec![2, 2], vec![1.5, 2.0, 0.0, 2.0]).unwrap());
        let res = masked_residuals(&mut tape, pred, target).unwrap();
        assert_eq!(tape.shape(res), &[2, 1]);
        assert_eq!(tape.value(res).data(), &[-0.5, 1.0]);
    }

    #[test]
    fn disjoint_coverage_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let pred = tape.leaf(Tensor::new(vec![2], vec![1.0, 0.0]).unwrap());
        let target = tape.leaf(Tensor::new(vec![2], vec![0.0, 2.0]).unwrap());
        assert!(masked_residuals(&mut tape, pred, target).is_err());
    }

    #[test]
    fn depth_loss_of_identical_maps_is_zero() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 0.0, 3.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 0.0, 3.0]).unwrap());
        let l = depth_loss(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);
    }

    #[test]
    fn berhu_gradients_match_finite_differences_off_the_kink() {
        let res = Tensor::new(vec![5], vec![0.31, -0.72, 1.4, -2.1, 0.05]).unwrap();
        let report = check_gradients("berhu", &[res], |tape, vars| berhu(tape, vars[0], 0.6))
            .unwrap();
        assert!(report.passed(), "{report:?}");

        let pred = Tensor::new(vec![4], vec![1.2, 0.8, 2.4, 0.9]).unwrap();
        let target = Tensor::new(vec![4], vec![1.0, 0.0, 2.0, 1.3]).unwrap();
        let report = check_gradients("depth_loss", &[pred], move |tape, vars| {
            let t = tape.constant(target.clone());
            let res = masked_residuals(tape, vars[0], t)?;
            berhu(tape, res, 0.5)
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
