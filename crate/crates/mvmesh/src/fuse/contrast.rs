//! Contrastive depth feature extraction: a small strided CNN over the
//! rendered and predicted depth maps of a view, combined according to a
//! configurable pairing mode, yielding a multi-resolution feature pyramid.

use crate::autodiff::{ParamSet, Real, Tape, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How the rendered and predicted depth maps are paired before or after
/// feature extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastiveMode {
    /// Stack both maps into one 2-channel extractor input.
    InputConcat,
    /// Feed the difference (rendered minus predicted) as 1 channel.
    InputDiff,
    /// Run the extractor on each map and concatenate channels per level.
    FeatureConcat,
    /// Run the extractor on each map and subtract per level.
    FeatureDiff,
    /// Ignore the rendered map; extract from the predicted depth alone.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub mode: ContrastiveMode,
    /// Output channels of each stride-2 extractor stage.
    pub stage_channels: Vec<usize>,
    /// Indices of the stages whose outputs form the feature pyramid.
    pub feature_stages: Vec<usize>,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            mode: ContrastiveMode::InputConcat,
            stage_channels: vec![16, 32, 64, 96],
            feature_stages: vec![1, 2, 3],
        }
    }
}

/// Depth feature extractor shared across views and stages. The rendered
/// map is expected as a tape constant; gradients flow into the predicted
/// map and the stage weights only.
#[derive(Clone, Debug)]
pub struct ContrastiveNet {
    cfg: ContrastiveConfig,
}

impl ContrastiveNet {
    pub fn new(cfg: ContrastiveConfig) -> Result<Self> {
        if cfg.stage_channels.is_empty() || cfg.stage_channels.contains(&0) {
            return Err(Error::Config(
                "contrastive stage channels must be a nonempty list of positive widths".into(),
            ));
        }
        if cfg.feature_stages.is_empty() {
            return Err(Error::Config(
                "at least one extractor stage must feed the feature pyramid".into(),
            ));
        }
        let n = cfg.stage_channels.len();
        if cfg.feature_stages.iter().any(|&s| s >= n) {
            return Err(Error::Config(format!(
                "feature stage index out of range for a {n}-stage extractor"
            )));
        }
        if cfg.feature_stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "feature stage indices must be strictly increasing".into(),
            ));
        }
        Ok(ContrastiveNet { cfg })
    }

    pub fn config(&self) -> &ContrastiveConfig {
        &self.cfg
    }

    /// Channels of the extractor input after mode pairing.
    pub fn in_channels(&self) -> usize {
        match self.cfg.mode {
            ContrastiveMode::InputConcat => 2,
            _ => 1,
        }
    }

    /// Number of pyramid levels produced per view.
    pub fn level_count(&self) -> usize {
        self.cfg.feature_stages.len()
    }

    /// Channels of pyramid level `l`.
    pub fn level_channels(&self, l: usize) -> usize {
        let base = self.cfg.stage_channels[self.cfg.feature_stages[l]];
        match self.cfg.mode {
            ContrastiveMode::FeatureConcat => 2 * base,
            _ => base,
        }
    }

    /// Total per-view feature dimension once every level is sampled.
    pub fn per_view_dim(&self) -> usize {
        (0..self.level_count()).map(|l| self.level_channels(l)).sum()
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.cfg.stage_channels.len())
            .flat_map(|i| {
                [
                    format!("contrast.stage{i}.weight"),
                    format!("contrast.stage{i}.bias"),
                ]
            })
            .collect()
    }

    pub fn register(&self, params: &mut ParamSet, seed: u64) {
        let mut cin = self.in_channels();
        for (i, &cout) in self.cfg.stage_channels.iter().enumerate() {
            params.register_xavier(
                &format!("contrast.stage{i}.weight"),
                vec![cout, cin, 3, 3],
                cin * 9,
                cout * 9,
                seed,
            );
            params.register_zeros(&format!("contrast.stage{i}.bias"), vec![cout]);
            cin = cout;
        }
    }

    /// Runs the stage chain on one input map and collects the configured
    /// stage outputs, finest resolution first.
    pub fn extract_pyramid<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        input: Var,
    ) -> Result<Vec<Var>> {
        let shape = tape.shape(input).to_vec();
        if shape.len() != 3 || shape[0] != self.in_channels() {
            return Err(Error::BadShape {
                op: "extract_pyramid",
                shape,
                reason: format!("expected [{},H,W] input", self.in_channels()),
            });
        }
        let mut levels = Vec::with_capacity(self.level_count());
        let mut x = input;
        for i in 0..self.cfg.stage_channels.len() {
            let w = lookup(vars, &format!("contrast.stage{i}.weight"))?;
            let b = lookup(vars, &format!("contrast.stage{i}.bias"))?;
            let y = tape.conv2d(x, w, Some(b), 2, 1)?;
            x = tape.relu(y);
            if self.cfg.feature_stages.contains(&i) {
                levels.push(x);
            }
        }
        Ok(levels)
    }

    /// Feature pyramid for one view from its rendered and predicted depth
    /// maps, both `[1,H,W]`, paired according to the configured mode.
    pub fn features<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        rendered: Var,
        predicted: Var,
    ) -> Result<Vec<Var>> {
        let rs = tape.shape(rendered).to_vec();
        let ps = tape.shape(predicted).to_vec();
        if rs != ps {
            return Err(Error::ShapeMismatch {
                op: "contrastive_features",
                left: rs,
                right: ps,
            });
        }
        if rs.len() != 3 || rs[0] != 1 {
            return Err(Error::BadShape {
                op: "contrastive_features",
                shape: rs,
                reason: "depth maps expect [1,H,W]".into(),
            });
        }
        match self.cfg.mode {
            ContrastiveMode::InputConcat => {
                let both = tape.concat(&[rendered, predicted], 0)?;
                self.extract_pyramid(tape, vars, both)
            }
            ContrastiveMode::InputDiff => {
                let diff = tape.sub(rendered, predicted)?;
                self.extract_pyramid(tape, vars, diff)
            }
            ContrastiveMode::None => self.extract_pyramid(tape, vars, predicted),
            ContrastiveMode::FeatureConcat => {
                let pr = self.extract_pyramid(tape, vars, rendered)?;
                let pp = self.extract_pyramid(tape, vars, predicted)?;
                pr.into_iter()
                    .zip(pp)
                    .map(|(a, b)| tape.concat(&[a, b], 0))
                    .collect()
            }
            ContrastiveMode::FeatureDiff => {
                let pr = self.extract_pyramid(tape, vars, rendered)?;
                let pp = self.extract_pyramid(tape, vars, predicted)?;
                pr.into_iter().zip(pp).map(|(a, b)| tape.sub(a, b)).collect()
            }
        }
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
    use crate::autodiff::{bind_params, check_gradients, Tensor};

    fn net(mode: ContrastiveMode) -> ContrastiveNet {
        ContrastiveNet::new(ContrastiveConfig {
            mode,
            ..ContrastiveConfig::default()
        })
        .unwrap()
    }

    fn depth_pair(h: usize, w: usize) -> (Tensor<f32>, Tensor<f32>) {
        let a = Tensor::new(
            vec![1, h, w],
            (0..h * w).map(|i| 0.5 + 0.01 * (i as f32)).collect(),
        )
        .unwrap();
        let b = Tensor::new(
            vec![1, h, w],
            (0..h * w).map(|i| 0.7 + 0.02 * ((i * 7 % 13) as f32)).collect(),
        )
        .unwrap();
        (a, b)
    }

    #[test]
    fn desk_scale_dimension_bookkeeping() {
        assert_eq!(net(ContrastiveMode::InputConcat).per_view_dim(), 192);
        assert_eq!(net(ContrastiveMode::InputDiff).per_view_dim(), 192);
        assert_eq!(net(ContrastiveMode::FeatureDiff).per_view_dim(), 192);
        assert_eq!(net(ContrastiveMode::None).per_view_dim(), 192);
        assert_eq!(net(ContrastiveMode::FeatureConcat).per_view_dim(), 384);
        assert_eq!(net(ContrastiveMode::InputConcat).in_channels(), 2);
        assert_eq!(net(ContrastiveMode::FeatureConcat).in_channels(), 1);
    }

    #[test]
    fn pyramid_levels_halve_resolution_per_stage() {
        let n = net(ContrastiveMode::InputConcat);
        let mut params = ParamSet::new();
        n.register(&mut params, 7);
        let mut tape = Tape::<f32>::new();
        let vars = bind_params(&mut tape, &params, |_| false);
        let (r, p) = depth_pair(64, 64);
        let rendered = tape.constant(r);
        let predicted = tape.constant(p);
        let pyr = n.features(&mut tape, &vars, rendered, predicted).unwrap();
        assert_eq!(pyr.len(), 3);
        assert_eq!(tape.shape(pyr[0]), [32, 16, 16]);
        assert_eq!(tape.shape(pyr[1]), [64, 8, 8]);
        assert_eq!(tape.shape(pyr[2]), [96, 4, 4]);
    }

    #[test]
    fn input_diff_of_identical_maps_sees_zeros() {
        let n = net(ContrastiveMode::InputDiff);
        let mut params = ParamSet::new();
        n.register(&mut params, 3);
        let mut tape = Tape::<f32>::new();
        let vars = bind_params(&mut tape, &params, |_| false);
        let (r, _) = depth_pair(16, 16);
        let a = tape.constant(r.clone());
        let b = tape.constant(r);
        let pyr = n.features(&mut tape, &vars, a, b).unwrap();
        for level in pyr {
            assert!(tape.value(level).data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn feature_diff_of_identical_maps_is_zero() {
        let n = net(ContrastiveMode::FeatureDiff);
        let mut params = ParamSet::new();
        n.register(&mut params, 5);
        let mut tape = Tape::<f32>::new();
        let vars = bind_params(&mut tape, &params, |_| false);
        let (r, _) = depth_pair(16, 16);
        let a = tape.constant(r.clone());
        let b = tape.constant(r);
        let pyr = n.features(&mut tape, &vars, a, b).unwrap();
        for level in pyr {
            assert!(tape.value(level).data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn resolution_mismatch_is_rejected() {
        let n = net(ContrastiveMode::InputConcat);
        let mut params = ParamSet::new();
        n.register(&mut params, 1);
        let mut tape = Tape::<f32>::new();
        let vars = bind_params(&mut tape, &params, |_| false);
        let a = tape.constant(Tensor::zeros(vec![1, 16, 16]));
        let b = tape.constant(Tensor::zeros(vec![1, 16, 8]));
        assert!(n.features(&mut tape, &vars, a, b).is_err());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let bad = |cfg: ContrastiveConfig| ContrastiveNet::new(cfg).is_err();
        assert!(bad(ContrastiveConfig {
            stage_channels: vec![],
            ..ContrastiveConfig::default()
        }));
        assert!(bad(ContrastiveConfig {
            feature_stages: vec![4],
            ..ContrastiveConfig::default()
        }));
        assert!(bad(ContrastiveConfig {
            feature_stages: vec![2, 1],
            ..ContrastiveConfig::default()
        }));
    }

    #[test]
    fn seeded_input_concat_activations_are_stable() {
        let n = net(ContrastiveMode::InputConcat);
        let mut params = ParamSet::new();
        n.register(&mut params, 11);
        let mut tape = Tape::<f32>::new();
        let vars = bind_params(&mut tape, &params, |_| false);
        let (r, p) = depth_pair(16, 16);
        let rendered = tape.constant(r);
        let predicted = tape.constant(p);
        let pyr = n.features(&mut tape, &vars, rendered, predicted).unwrap();
        let sums: Vec<f64> = pyr
            .iter()
            .map(|&l| tape.value(l).data().iter().map(|&x| x as f64).sum())
            .collect();
        let expected = [GOLDEN_L0, GOLDEN_L1, GOLDEN_L2];
        for (got, want) in sums.iter().zip(expected) {
            assert!(
                (got - want).abs() <= 1e-4 * want.abs().max(1.0),
                "{got} vs {want}"
            );
        }
    }

    // Level sums of the seed-11 extractor on the fixture pair, frozen from
    // the first run to pin weight init and conv wiring.
    const GOLDEN_L0: f64 = 68.443798;
    const GOLDEN_L1: f64 = 11.753289;
    const GOLDEN_L2: f64 = 2.031063;

    #[test]
    fn extractor_gradient_matches_finite_differences() {
        let n = ContrastiveNet::new(ContrastiveConfig {
            mode: ContrastiveMode::InputConcat,
            stage_channels: vec![2, 3],
            feature_stages: vec![0, 1],
        })
        .unwrap();
        let mut params = ParamSet::new();
        n.register(&mut params, 9);
        let names = n.param_names();
        let mut inputs: Vec<Tensor<f64>> = names
            .iter()
            .map(|nm| params.get(nm).unwrap().cast::<f64>())
            .collect();
        inputs.push(
            Tensor::new(vec![1, 8, 8], (0..64).map(|i| (i as f64 * 0.21).sin()).collect())
                .unwrap(),
        );
        let rendered =
            Tensor::new(vec![1, 8, 8], (0..64).map(|i| (i as f64 * 0.13).cos()).collect())
                .unwrap();
        let report = check_gradients("contrastive", &inputs, move |tape, vars| {
            let map: BTreeMap<String, Var> = names
                .iter()
                .cloned()
                .zip(vars[..names.len()].iter().copied())
                .collect();
            let r = tape.constant(rendered.clone());
            let pyr = n.features(tape, &map, r, vars[names.len()])?;
            let sums: Vec<Var> = pyr
                .into_iter()
                .map(|l| {
                    let sq = tape.square(l);
                    tape.sum_all(sq)
                })
                .collect();
            let mut acc = sums[0];
            for &s in &sums[1..] {
                acc = tape.add(acc, s)?;
            }
            Ok(acc)
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
