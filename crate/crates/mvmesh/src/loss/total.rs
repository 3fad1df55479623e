//! Weighted combination of all training loss terms. Mesh-side terms are
//! collected per refinement stage and summed (optionally averaged) before
//! weighting.

use crate::autodiff::{lit, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Scalar weights for each loss term. The two shipped profiles differ only
/// in the edge weight: `best` optimizes raw accuracy, `pretty` trades a
/// little accuracy for smoother, more regular triangles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub chamfer: f64,
    pub normal: f64,
    pub edge: f64,
    pub depth: f64,
    pub contrastive: f64,
    pub voxel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::best()
    }
}

impl LossWeights {
    /// Accuracy-first profile: no edge regularization.
    pub fn best() -> Self {
        LossWeights {
            chamfer: 1.0,
            normal: 1.6e-4,
            edge: 0.0,
            depth: 0.1,
            contrastive: 1e-3,
            voxel: 1.0,
        }
    }

    /// Smoothness profile: identical to `best` except for the edge term.
    pub fn pretty() -> Self {
        LossWeights {
            edge: 0.2,
            ..Self::best()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("chamfer", self.chamfer),
            ("normal", self.normal),
            ("edge", self.edge),
            ("depth", self.depth),
            ("contrastive", self.contrastive),
            ("voxel", self.voxel),
        ];
        for (name, w) in named {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!(
                    "loss weight {name} must be finite and nonnegative, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Scalar loss variables gathered from one training step. The per-stage
/// vectors hold one entry per refinement stage; empty vectors and `None`
/// simply contribute nothing.
#[derive(Default)]
pub struct LossTerms {
    pub chamfer: Vec<Var>,
    pub normal: Vec<Var>,
    pub edge: Vec<Var>,
    pub contrastive: Vec<Var>,
    pub depth: Option<Var>,
    pub voxel: Option<Var>,
}

fn combine_stages<T: Real>(
    tape: &mut Tape<T>,
    stages: &[Var],
    average: bool,
) -> Result<Option<Var>> {
    let Some((&first, rest)) = stages.split_first() else {
        return Ok(None);
    };
    let mut acc = first;
    for &s in rest {
        acc = tape.add(acc, s)?;
    }
    if average && stages.len() > 1 {
        acc = tape.scale(acc, lit(1.0 / stages.len() as f64));
    }
    Ok(Some(acc))
}

/// Weighted sum of every present term. Stage vectors are summed across
/// stages, or averaged when `average_stages` is set. Zero-weight terms are
/// skipped, so an absent branch never perturbs the total. The edge term is
/// accumulated last, making totals that differ only in the edge weight
/// differ by exactly that weighted edge sum.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    terms: &LossTerms,
    weights: &LossWeights,
    average_stages: bool,
) -> Result<Var> {
    weights.validate()?;
    for (v, name) in [
        (terms.depth, "depth"),
        (terms.voxel, "voxel"),
    ] {
        if let Some(v) = v {
            let s = tape.shape(v);
            if s.iter().product::<usize>() != 1 {
                return Err(Error::BadShape {
                    op: "total_loss",
                    shape: s.to_vec(),
                    reason: format!("{name} term must be scalar"),
                });
            }
        }
    }

    let mut total = tape.constant(Tensor::new(vec![1], vec![T::zero()])?);
    let mut accumulate = |tape: &mut Tape<T>, term: Option<Var>, w: f64| -> Result<()> {
        if let Some(t) = term {
            if w != 0.0 {
                let scaled = tape.scale(t, lit(w));
                total = tape.add(total, scaled)?;
            }
        }
        Ok(())
    };

    let chamfer = combine_stages(tape, &terms.chamfer, average_stages)?;
    let normal = combine_stages(tape, &terms.normal, average_stages)?;
    let contrastive = combine_stages(tape, &terms.contrastive, average_stages)?;
    let edge = combine_stages(tape, &terms.edge, average_stages)?;

    accumulate(tape, chamfer, weights.chamfer)?;
    accumulate(tape, normal, weights.normal)?;
    accumulate(tape, terms.depth, weights.depth)?;
    accumulate(tape, contrastive, weights.contrastive)?;
    accumulate(tape, terms.voxel, weights.voxel)?;
    accumulate(tape, edge, weights.edge)?;
    Ok(total)
}
