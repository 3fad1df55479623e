//! Central finite-difference verification of tape gradients.
//!
//! Checks run in `f64` with step h = 1e-5. The comparison is the relative
//! error |analytic - numeric| / max(|analytic| + |numeric|, 1e-3); the floor
//! keeps near-zero gradients from amplifying finite-difference noise.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
const REL_FLOOR: f64 = 1e-3;

/// Outcome of checking one scalar-valued graph against finite differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// (input index, element index) where the worst error occurred.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= FD_TOLERANCE
    }
}

/// Verifies the gradient of `build` (a scalar-valued graph over the given
/// leaf inputs) against central finite differences, perturbing every element
/// of every input.
pub fn check_gradients<F>(name: &str, inputs: &[Tensor<f64>], build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    // Analytic pass.
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Option<Tensor<f64>>> =
        vars.iter().map(|&v| tape.grad(v).cloned()).collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut checked = 0usize;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for e in 0..input.numel() {
            let orig = input.data()[e];
            work[k].data_mut()[e] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[k].data_mut()[e] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[k].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[k].as_ref().map_or(0.0, |g| g.data()[e]);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_FLOOR);
            checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = Some((k, e));
            }
        }
    }
    Ok(GradCheck {
        name: name.to_string(),
        max_rel_err: max_rel,
        worst,
        checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catches_a_wrong_gradient() {
        // Forward is x^2 but the recorded backward pretends it is 3x.
        let inputs = [Tensor::from_vec(vec![0.7f64, -1.3])];
        let check = check_gradients("broken", &inputs, |tape, vars| {
            let x = vars[0];
            let y = tape.push_op(&[x], tape.value(x).map(|v| v * v), |ctx| {
                let x = ctx.input(0).data();
                let og = ctx.out_grad().data();
                let g = og
                    .iter()
                    .zip(x.iter())
                    .map(|(&g, &x)| g * 3.0 * x)
                    .collect();
                vec![Some(
                    Tensor::new(ctx.input(0).shape().to_vec(), g).unwrap(),
                )]
            });
            Ok(tape.sum_all(y))
        })
        .unwrap();
        assert!(!check.passed());
    }

    #[test]
    fn passes_a_correct_composite() {
        let inputs = [
            Tensor::from_vec(vec![0.4f64, -0.9, 1.7]),
            Tensor::from_vec(vec![0.2f64, 1.1, -0.6]),
        ];
        let check = check_gradients("tanh-mul", &inputs, |tape, vars| {
            let t = tape.tanh(vars[0]);
            let p = tape.mul(t, vars[1])?;
            Ok(tape.sum_all(p))
        })
        .unwrap();
        assert!(check.passed(), "max rel err {}", check.max_rel_err);
        assert_eq!(check.checked, 6);
    }
}
