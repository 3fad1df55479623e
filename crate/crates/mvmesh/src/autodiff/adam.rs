//! Named parameter store and the Adam optimizer.
//!
//! Parameters are keyed by dotted names ("depth.feat.c0.w"). Iteration is
//! always in sorted name order and initialization derives each tensor's RNG
//! stream from the global seed plus the name, so results never depend on
//! registration order.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Stable 64-bit hash (FNV-1a) used to derive per-name RNG streams.
pub fn name_seed(global_seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ global_seed;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Training parameters keyed by dotted names.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor<f32>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor; re-registering a name is a bug.
    pub fn register(&mut self, name: &str, tensor: Tensor<f32>) {
        let prev = self.entries.insert(name.to_string(), tensor);
        assert!(prev.is_none(), "parameter '{name}' registered twice");
    }

    /// Registers a tensor drawn from U(-limit, limit), seeded by name.
    pub fn register_uniform(&mut self, name: &str, shape: Vec<usize>, limit: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, name));
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| rng.gen_range(-limit..limit) as f32)
            .collect();
        self.register(name, Tensor::new(shape, data).expect("sized"));
    }

    /// Registers a weight with the uniform Xavier/Glorot limit
    /// sqrt(6 / (fan_in + fan_out)).
    pub fn register_xavier(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        seed: u64,
    ) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.register_uniform(name, shape, limit, seed);
    }

    pub fn register_zeros(&mut self, name: &str, shape: Vec<usize>) {
        self.register(name, Tensor::zeros(shape));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.entries.get(name).ok_or_else(|| Error::UnknownParameter {
            name: name.to_string(),
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<f32>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter {
                name: name.to_string(),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted-name iteration.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    /// Total scalar count across all parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }
}

/// Per-step view of a parameter set bound onto a tape. Frozen parameters are
/// bound as constants so no gradient is computed or applied for them.
pub fn bind_params(
    tape: &mut Tape<f32>,
    params: &ParamSet,
    frozen: impl Fn(&str) -> bool,
) -> BTreeMap<String, Var> {
    let mut vars = BTreeMap::new();
    for (name, tensor) in params.iter() {
        let var = if frozen(name) {
            tape.constant(tensor.clone())
        } else {
            tape.leaf(tensor.clone())
        };
        vars.insert(name.to_string(), var);
    }
    vars
}

/// Collects gradients for bound parameters after a backward pass.
pub fn collect_grads(tape: &Tape<f32>, vars: &BTreeMap<String, Var>) -> BTreeMap<String, Tensor<f32>> {
    let mut grads = BTreeMap::new();
    for (name, &var) in vars {
        if let Some(g) = tape.grad(var) {
            grads.insert(name.clone(), g.clone());
        }
    }
    grads
}

/// Adam with bias correction. State is keyed by parameter name so steps are
/// reproducible and checkpointable.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u64,
    m: BTreeMap<String, Tensor<f32>>,
    v: BTreeMap<String, Tensor<f32>>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter present in `grads`. Parameters
    /// without a gradient are left untouched. A non-finite gradient aborts
    /// the step before any parameter is written.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Tensor<f32>>,
    ) -> Result<()> {
        for (name, g) in grads {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { name: name.clone() });
            }
            if !params.contains(name) {
                return Err(Error::UnknownParameter { name: name.clone() });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let (pd, md, vd, gd) = (p.data_mut(), m.data_mut(), v.data_mut(), g.data());
            for i in 0..gd.len() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gd[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let mh = md[i] / bc1;
                let vh = vd[i] / bc2;
                pd[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Serializes optimizer state as named tensors for checkpointing.
    pub fn export_state(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = vec![(
            "optim.step".to_string(),
            Tensor::scalar(self.step as f32),
        )];
        for (name, t) in &self.m {
            out.push((format!("optim.m.{name}"), t.clone()));
        }
        for (name, t) in &self.v {
            out.push((format!("optim.v.{name}"), t.clone()));
        }
        out
    }

    /// Restores state produced by `export_state`.
    pub fn import_state(&mut self, entries: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        self.m.clear();
        self.v.clear();
        self.step = 0;
        for (name, t) in entries {
            if name == "optim.step" {
                self.step = t.item() as u64;
            } else if let Some(p) = name.strip_prefix("optim.m.") {
                self.m.insert(p.to_string(), t.clone());
            } else if let Some(p) = name.strip_prefix("optim.v.") {
                self.v.insert(p.to_string(), t.clone());
            } else {
                return Err(Error::Checkpoint(format!(
                    "unrecognized optimizer entry '{name}'"
                )));
            }
        }
        Ok(())
    }
}
