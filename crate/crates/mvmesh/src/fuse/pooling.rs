//! Pooling of per-view vertex features into one view-count-independent
//! vector per vertex: multi-head attention against the mean-feature query,
//! a single learned softmax weighting, or mean/max/std statistics.

use crate::autodiff::{lit, ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::mvs::variance_over;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    MultiHead,
    Simple,
    Stats,
}

/// Denominator of the attention score scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionScale {
    /// sqrt of the number of views.
    ViewCount,
    /// sqrt of the per-head key dimension.
    KeyDim,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub mode: PoolingMode,
    pub heads: usize,
    pub head_dim: usize,
    pub pooled_dim: usize,
    pub scale: AttentionScale,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            mode: PoolingMode::MultiHead,
            heads: 5,
            head_dim: 16,
            pooled_dim: 64,
            scale: AttentionScale::ViewCount,
        }
    }
}

/// Pooled per-vertex features plus, where the mode defines them, the
/// per-view weights actually used (rows sum to 1 per vertex).
pub struct Pooled {
    pub features: Var,
    pub attention: Option<Var>,
}

/// View-pooling operator over per-vertex feature matrices. `in_dim` is the
/// per-view feature dimension the pool is built for.
#[derive(Clone, Debug)]
pub struct FeaturePool {
    cfg: PoolConfig,
    in_dim: usize,
}

impl FeaturePool {
    pub fn new(cfg: PoolConfig, in_dim: usize) -> Result<Self> {
        if in_dim == 0 {
            return Err(Error::Config("pooling input dimension must be positive".into()));
        }
        if cfg.mode == PoolingMode::MultiHead
            && (cfg.heads == 0 || cfg.head_dim == 0 || cfg.pooled_dim == 0)
        {
            return Err(Error::Config(
                "multi-head pooling needs positive heads, head_dim, and pooled_dim".into(),
            ));
        }
        Ok(FeaturePool { cfg, in_dim })
    }

    pub fn config(&self) -> &PoolConfig {
        &self.cfg
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Dimension of the pooled vector; independent of the view count.
    pub fn out_dim(&self) -> usize {
        match self.cfg.mode {
            PoolingMode::MultiHead => self.cfg.pooled_dim,
            PoolingMode::Simple => self.in_dim,
            PoolingMode::Stats => 3 * self.in_dim,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self.cfg.mode {
            PoolingMode::MultiHead => {
                let mut names: Vec<String> = (0..self.cfg.heads)
                    .flat_map(|i| {
                        [
                            format!("pool.mh.head{i}.q"),
                            format!("pool.mh.head{i}.k"),
                            format!("pool.mh.head{i}.v"),
                        ]
                    })
                    .collect();
                names.push("pool.mh.out".into());
                names
            }
            PoolingMode::Simple => vec!["pool.simple.score".into()],
            PoolingMode::Stats => vec![],
        }
    }

    pub fn register(&self, params: &mut ParamSet, seed: u64) {
        match self.cfg.mode {
            PoolingMode::MultiHead => {
                let (d, hd) = (self.in_dim, self.cfg.head_dim);
                for i in 0..self.cfg.heads {
                    for role in ["q", "k", "v"] {
                        params.register_xavier(
                            &format!("pool.mh.head{i}.{role}"),
                            vec![d, hd],
                            d,
                            hd,
                            seed,
                        );
                    }
                }
                let concat = self.cfg.heads * hd;
                params.register_xavier(
                    "pool.mh.out",
                    vec![concat, self.cfg.pooled_dim],
                    concat,
                    self.cfg.pooled_dim,
                    seed,
                );
            }
            PoolingMode::Simple => {
                params.register_xavier("pool.simple.score", vec![self.in_dim, 1], self.in_dim, 1, seed);
            }
            PoolingMode::Stats => {}
        }
    }

    /// Pools per-view `[V,D]` feature matrices into `[V,out_dim]`.
    pub fn pool<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        views: &[Var],
    ) -> Result<Pooled> {
        if views.is_empty() {
            return Err(Error::BadArgument {
                op: "pool",
                reason: "needs at least 1 view".into(),
            });
        }
        let shape = tape.shape(views[0]).to_vec();
        if shape.len() != 2 || shape[1] != self.in_dim {
            return Err(Error::BadShape {
                op: "pool",
                shape,
                reason: format!("expected [V,{}] per-view features", self.in_dim),
            });
        }
        for &v in &views[1..] {
            if tape.shape(v) != shape {
                return Err(Error::ShapeMismatch {
                    op: "pool",
                    left: shape,
                    right: tape.shape(v).to_vec(),
                });
            }
        }
        match self.cfg.mode {
            PoolingMode::MultiHead => self.pool_multihead(tape, vars, views),
            PoolingMode::Simple => self.pool_simple(tape, vars, views),
            PoolingMode::Stats => self.pool_stats(tape, views),
        }
    }

    fn pool_multihead<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        views: &[Var],
    ) -> Result<Pooled> {
        let n = views.len();
        let query = mean_of(tape, views)?;
        let denom = match self.cfg.scale {
            AttentionScale::ViewCount => (n as f64).sqrt(),
            AttentionScale::KeyDim => (self.cfg.head_dim as f64).sqrt(),
        };
        let inv_scale: T = lit(1.0 / denom);

        let mut heads = Vec::with_capacity(self.cfg.heads);
        let mut weight_sum: Option<Var> = None;
        for i in 0..self.cfg.heads {
            let wq = lookup(vars, &format!("pool.mh.head{i}.q"))?;
            let wk = lookup(vars, &format!("pool.mh.head{i}.k"))?;
            let wv = lookup(vars, &format!("pool.mh.head{i}.v"))?;
            let q = tape.matmul(query, wq)?;
            let mut cols = Vec::with_capacity(n);
            for &f in views {
                let k = tape.matmul(f, wk)?;
                let qk = tape.mul(q, k)?;
                let s = tape.sum_axis(qk, 1, true)?;
                cols.push(tape.scale(s, inv_scale));
            }
            let scores = tape.concat(&cols, 1)?;
            let attn = tape.softmax(scores, 1)?;
            let mut head: Option<Var> = None;
            for (v, &f) in views.iter().enumerate() {
                let val = tape.matmul(f, wv)?;
                let w = tape.slice(attn, 1, v, 1)?;
                let contrib = tape.mul(w, val)?;
                head = Some(match head {
                    Some(acc) => tape.add(acc, contrib)?,
                    None => contrib,
                });
            }
            heads.push(head.expect("n >= 1"));
            weight_sum = Some(match weight_sum {
                Some(acc) => tape.add(acc, attn)?,
                None => attn,
            });
        }
        let stacked = tape.concat(&heads, 1)?;
        let w0 = lookup(vars, "pool.mh.out")?;
        let features = tape.matmul(stacked, w0)?;
        let attention = tape.scale(weight_sum.expect("heads >= 1"), lit(1.0 / self.cfg.heads as f64));
        Ok(Pooled {
            features,
            attention: Some(attention),
        })
    }

    fn pool_simple<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        views: &[Var],
    ) -> Result<Pooled> {
        let w = lookup(vars, "pool.simple.score")?;
        let cols: Vec<Var> = views
            .iter()
            .map(|&f| tape.matmul(f, w))
            .collect::<Result<_>>()?;
        let scores = tape.concat(&cols, 1)?;
        let attn = tape.softmax(scores, 1)?;
        let mut pooled: Option<Var> = None;
        for (v, &f) in views.iter().enumerate() {
            let wv = tape.slice(attn, 1, v, 1)?;
            let contrib = tape.mul(wv, f)?;
            pooled = Some(match pooled {
                Some(acc) => tape.add(acc, contrib)?,
                None => contrib,
            });
        }
        Ok(Pooled {
            features: pooled.expect("n >= 1"),
            attention: Some(attn),
        })
    }

    fn pool_stats<T: Real>(&self, tape: &mut Tape<T>, views: &[Var]) -> Result<Pooled> {
        let mean = mean_of(tape, views)?;
        let max = if views.len() == 1 {
            views[0]
        } else {
            let shape = tape.shape(views[0]).to_vec();
            let rows: Vec<Var> = views
                .iter()
                .map(|&f| {
                    let mut s = vec![1];
                    s.extend_from_slice(&shape);
                    tape.reshape(f, s)
                })
                .collect::<Result<_>>()?;
            let stacked = tape.concat(&rows, 0)?;
            tape.max_axis(stacked, 0, false)?
        };
        let std = if views.len() == 1 {
            tape.constant(Tensor::zeros(tape.shape(views[0]).to_vec()))
        } else {
            let var = variance_over(tape, views)?;
            tape.sqrt(var)
        };
        let features = tape.concat(&[mean, max, std], 1)?;
        Ok(Pooled {
            features,
            attention: None,
        })
    }
}

fn mean_of<T: Real>(tape: &mut Tape<T>, views: &[Var]) -> Result<Var> {
    let mut acc = views[0];
    for &v in &views[1..] {
        acc = tape.add(acc, v)?;
    }
    Ok(tape.scale(acc, lit(1.0 / views.len() as f64)))
}

fn lookup(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name).copied().ok_or_else(|| Error::UnknownParameter {
        name: name.to_string(),
    })
}

/// Formats per-vertex per-view attention weights `[V,N]` as a plain text
/// table for inspection.
pub fn attention_table<T: Real>(weights: &Tensor<T>) -> Result<String> {
    let shape = weights.shape();
    if shape.len() != 2 {
        return Err(Error::BadShape {
            op: "attention_table",
            shape: shape.to_vec(),
            reason: "expects [V,N] weights".into(),
        });
    }
    let (v, n) = (shape[0], shape[1]);
    let mut out = String::from("vertex");
    for j in 0..n {
        let _ = write!(out, " {:>8}", format!("view{j}"));
    }
    out.push('\n');
    let data = weights.data();
    for i in 0..v {
        let _ = write!(out, "{i:>6}");
        for j in 0..n {
            let x = data[i * n + j].to_f64().unwrap_or(f64::NAN);
            let _ = write!(out, " {x:>8.4}");
        }
        out.push('\n');
    }
    Ok(out)
}
