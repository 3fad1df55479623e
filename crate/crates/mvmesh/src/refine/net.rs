//! Staged vertex deformation: each stage runs a stack of graph
//! convolutions over pooled per-vertex features (with the vertex
//! coordinates appended) and applies one bounded refinement step. Stages
//! have their own weights; the feature input is rebuilt between stages by
//! the caller from re-rendered depth.

use super::gcn::{graph_conv, vertex_refine};
use crate::autodiff::{Csr, ParamSet, Real, Tape, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::rc::Rc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Number of coarse-to-fine deformation stages.
    pub stages: usize,
    /// Graph convolutions per stage.
    pub gcn_layers: usize,
    /// Feature width inside a stage.
    pub hidden_dim: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            stages: 3,
            gcn_layers: 3,
            hidden_dim: 128,
        }
    }
}

/// Per-stage GCN weights plus the refinement projection. The refinement
/// weights start at zero so an untrained stage leaves the mesh unchanged.
#[derive(Clone, Debug)]
pub struct RefineNet {
    cfg: RefineConfig,
    /// Per-vertex input width: pooled features plus the 3 coordinates.
    in_dim: usize,
}

impl RefineNet {
    pub fn new(cfg: RefineConfig, pooled_dim: usize) -> Result<Self> {
        if cfg.stages == 0 || cfg.gcn_layers == 0 || cfg.hidden_dim == 0 {
            return Err(Error::Config(
                "refinement stages, layers, and hidden width must be positive".into(),
            ));
        }
        if pooled_dim == 0 {
            return Err(Error::Config("pooled feature dimension must be positive".into()));
        }
        Ok(RefineNet {
            cfg,
            in_dim: pooled_dim + 3,
        })
    }

    pub fn config(&self) -> &RefineConfig {
        &self.cfg
    }

    pub fn stages(&self) -> usize {
        self.cfg.stages
    }

    fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let din = if layer == 0 { self.in_dim } else { self.cfg.hidden_dim };
        (din, self.cfg.hidden_dim)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for s in 0..self.cfg.stages {
            for l in 0..self.cfg.gcn_layers {
                names.push(format!("refine.stage{s}.gcn{l}.w0"));
                names.push(format!("refine.stage{s}.gcn{l}.w1"));
                names.push(format!("refine.stage{s}.gcn{l}.bias"));
            }
            names.push(format!("refine.stage{s}.vert"));
        }
        names
    }

    pub fn register(&self, params: &mut ParamSet, seed: u64) {
        for s in 0..self.cfg.stages {
            for l in 0..self.cfg.gcn_layers {
                let (din, dout) = self.layer_dims(l);
                params.register_xavier(
                    &format!("refine.stage{s}.gcn{l}.w0"),
                    vec![din, dout],
                    din,
                    dout,
                    seed,
                );
                params.register_xavier(
                    &format!("refine.stage{s}.gcn{l}.w1"),
                    vec![din, dout],
                    din,
                    dout,
                    seed,
                );
                params.register_zeros(&format!("refine.stage{s}.gcn{l}.bias"), vec![dout]);
            }
            params.register_zeros(
                &format!("refine.stage{s}.vert"),
                vec![self.cfg.hidden_dim + 3, 3],
            );
        }
    }

    /// Runs stage `stage` on current vertex positions `[V,3]` with pooled
    /// per-vertex features `[V,pooled_dim]`, returning displaced positions.
    pub fn stage<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        stage: usize,
        verts: Var,
        pooled: Var,
        adj: &Rc<Csr>,
    ) -> Result<Var> {
        if stage >= self.cfg.stages {
            return Err(Error::BadArgument {
                op: "refine_stage",
                reason: format!("stage {stage} out of {}", self.cfg.stages),
            });
        }
        let ps = tape.shape(pooled).to_vec();
        if ps.len() != 2 || ps[1] != self.in_dim - 3 {
            return Err(Error::BadShape {
                op: "refine_stage",
                shape: ps,
                reason: format!("expected [V,{}] pooled features", self.in_dim - 3),
            });
        }
        let mut x = tape.concat(&[pooled, verts], 1)?;
        for l in 0..self.cfg.gcn_layers {
            let w0 = lookup(vars, &format!("refine.stage{stage}.gcn{l}.w0"))?;
            let w1 = lookup(vars, &format!("refine.stage{stage}.gcn{l}.w1"))?;
            let b = lookup(vars, &format!("refine.stage{stage}.gcn{l}.bias"))?;
            x = graph_conv(tape, x, adj, w0, w1, b)?;
        }
        let wv = lookup(vars, &format!("refine.stage{stage}.vert"))?;
        vertex_refine(tape, verts, x, wv)
    }
}

fn lookup(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name).copied().ok_or_else(|| Error::UnknownParameter {
        name: name.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradients, Tensor};
    use crate::geom::make_box;
    use crate::refine::gcn::mesh_adjacency;

    fn tiny_net() -> RefineNet {
        RefineNet::new(
            RefineConfig {
                stages: 2,
                gcn_layers: 2,
                hidden_dim: 4,
            },
            5,
        )
        .unwrap()
    }

    fn bind_f64(tape: &mut Tape<f64>, params: &ParamSet) -> BTreeMap<String, Var> {
        params
            .iter()
            .map(|(n, t)| (n.to_string(), tape.leaf(t.cast::<f64>())))
            .collect()
    }

    #[test]
    fn freshly_registered_stage_leaves_vertices_unchanged() {
        let net = tiny_net();
        let mut params = ParamSet::new();
        net.register(&mut params, 3);
        let mesh = make_box(0.4, 0.4, 0.4);
        let adj = mesh_adjacency(&mesh);
        let mut tape = Tape::<f64>::new();
        let vars = bind_f64(&mut tape, &params);
        let v: Vec<f64> = mesh
            .vertices()
            .iter()
            .flat_map(|p| p.iter().map(|&x| x as f64))
            .collect();
        let verts = tape.leaf(Tensor::new(vec![8, 3], v).unwrap());
        let pooled = tape.leaf(Tensor::new(
            vec![8, 5],
            (0..40).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap());
        for s in 0..2 {
            let out = net.stage(&mut tape, &vars, s, verts, pooled, &adj).unwrap();
            assert_eq!(tape.value(out).data(), tape.value(verts).data());
        }
    }

    #[test]
    fn stage_index_and_feature_width_are_validated() {
        let net = tiny_net();
        let mut params = ParamSet::new();
        net.register(&mut params, 1);
        let mesh = make_box(1.0, 1.0, 1.0);
        let adj = mesh_adjacency(&mesh);
        let mut tape = Tape::<f64>::new();
        let vars = bind_f64(&mut tape, &params);
        let verts = tape.leaf(Tensor::zeros(vec![8, 3]));
        let pooled = tape.leaf(Tensor::zeros(vec![8, 5]));
        assert!(net.stage(&mut tape, &vars, 2, verts, pooled, &adj).is_err());
        let narrow = tape.leaf(Tensor::zeros(vec![8, 4]));
        assert!(net.stage(&mut tape, &vars, 0, verts, narrow, &adj).is_err());
    }

    #[test]
    fn trained_stage_gradients_match_finite_differences() {
        let net = RefineNet::new(
            RefineConfig {
                stages: 1,
                gcn_layers: 2,
                hidden_dim: 3,
            },
            2,
        )
        .unwrap();
        let mut params = ParamSet::new();
        net.register(&mut params, 7);
        // Zero-initialized refinement weights sit exactly on the tanh
        // plateau boundary; nudge them off zero for a meaningful check.
        {
            let w = params.get_mut("refine.stage0.vert").unwrap();
            for (i, x) in w.data_mut().iter_mut().enumerate() {
                *x = 0.05 * ((i % 7) as f32) - 0.15;
            }
        }
        let names = net.param_names();
        let mut inputs: Vec<Tensor<f64>> = names
            .iter()
            .map(|n| params.get(n).unwrap().cast::<f64>())
            .collect();
        let n_params = inputs.len();
        inputs.push(
            Tensor::new(vec![4, 3], (0..12).map(|i| 0.1 * i as f64 - 0.5).collect()).unwrap(),
        );
        inputs.push(
            Tensor::new(vec![4, 2], (0..8).map(|i| (i as f64 * 0.43).cos()).collect()).unwrap(),
        );
        let report = check_gradients("refine_stage", &inputs, move |tape, vars| {
            let map: BTreeMap<String, Var> = names
                .iter()
                .cloned()
                .zip(vars[..n_params].iter().copied())
                .collect();
            let adj = Rc::new(Csr::from_neighbors(&[
                vec![1, 3],
                vec![0, 2],
                vec![1, 3],
                vec![0, 2],
            ]));
            let out = net.stage(tape, &map, 0, vars[n_params], vars[n_params + 1], &adj)?;
            let sq = tape.square(out);
            Ok(tape.sum_all(sq))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
