//! Plane-sweep stereo network: shared 2D feature extraction, cost volumes
//! from homography-warped features, 3D regularization, and soft-argmin
//! depth regression.

use super::hypotheses::DepthHypotheses;
use super::ops::{soft_argmin, variance_over, warp_with_homography};
use crate::autodiff::{ParamSet, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::geom::{plane_homography, CameraView};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The image-to-feature downsampling factor (two stride-2 convolutions).
pub const FEATURE_STRIDE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvsConfig {
    /// Channels of the input images.
    pub in_channels: usize,
    /// Width of the intermediate extractor layer.
    pub mid_channels: usize,
    /// Channels of the extracted feature maps.
    pub feature_channels: usize,
    /// Width of the 3D regularization layer.
    pub reg_channels: usize,
}

impl Default for MvsConfig {
    fn default() -> Self {
        MvsConfig {
            in_channels: 3,
            mid_channels: 16,
            feature_channels: 8,
            reg_channels: 8,
        }
    }
}

/// Multi-view depth estimator. One parameter set serves every view: the
/// extractor is shared across views and the regularization weights are
/// shared across reference views.
#[derive(Clone, Debug)]
pub struct MvsNet {
    cfg: MvsConfig,
}

impl MvsNet {
    pub fn new(cfg: MvsConfig) -> Result<Self> {
        if cfg.in_channels == 0
            || cfg.mid_channels == 0
            || cfg.feature_channels == 0
            || cfg.reg_channels == 0
        {
            return Err(Error::Config(
                "mvs channel widths must all be positive".into(),
            ));
        }
        Ok(MvsNet { cfg })
    }

    pub fn config(&self) -> &MvsConfig {
        &self.cfg
    }

    pub fn param_names(&self) -> Vec<String> {
        [
            "mvs.feat0.weight",
            "mvs.feat0.bias",
            "mvs.feat1.weight",
            "mvs.feat1.bias",
            "mvs.reg0.weight",
            "mvs.reg0.bias",
            "mvs.reg1.weight",
            "mvs.reg1.bias",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    pub fn register(&self, params: &mut ParamSet, seed: u64) {
        let c = &self.cfg;
        params.register_xavier(
            "mvs.feat0.weight",
            vec![c.mid_channels, c.in_channels, 3, 3],
            c.in_channels * 9,
            c.mid_channels * 9,
            seed,
        );
        params.register_zeros("mvs.feat0.bias", vec![c.mid_channels]);
        params.register_xavier(
            "mvs.feat1.weight",
            vec![c.feature_channels, c.mid_channels, 3, 3],
            c.mid_channels * 9,
            c.feature_channels * 9,
            seed,
        );
        params.register_zeros("mvs.feat1.bias", vec![c.feature_channels]);
        params.register_xavier(
            "mvs.reg0.weight",
            vec![c.reg_channels, c.feature_channels, 3, 3, 3],
            c.feature_channels * 27,
            c.reg_channels * 27,
            seed,
        );
        params.register_zeros("mvs.reg0.bias", vec![c.reg_channels]);
        params.register_xavier(
            "mvs.reg1.weight",
            vec![1, c.reg_channels, 3, 3, 3],
            c.reg_channels * 27,
            27,
            seed,
        );
        params.register_zeros("mvs.reg1.bias", vec![1]);
    }

    /// Image [Cin,H,W] to features [C,H/4,W/4].
    pub fn extract<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        image: Var,
    ) -> Result<Var> {
        let shape = tape.shape(image).to_vec();
        if shape.len() != 3 || shape[0] != self.cfg.in_channels {
            return Err(Error::BadShape {
                op: "mvs_extract",
                shape,
                reason: format!("expected [{},H,W] image", self.cfg.in_channels),
            });
        }
        if shape[1] % FEATURE_STRIDE != 0 || shape[2] % FEATURE_STRIDE != 0 {
            return Err(Error::BadShape {
                op: "mvs_extract",
                shape,
                reason: format!("H and W must be divisible by {FEATURE_STRIDE}"),
            });
        }
        let w0 = lookup(vars, "mvs.feat0.weight")?;
        let b0 = lookup(vars, "mvs.feat0.bias")?;
        let w1 = lookup(vars, "mvs.feat1.weight")?;
        let b1 = lookup(vars, "mvs.feat1.bias")?;
        let x = tape.conv2d(image, w0, Some(b0), 2, 1)?;
        let x = tape.relu(x);
        tape.conv2d(x, w1, Some(b1), 2, 1)
    }

    /// Variance cost volume [C,K,h,w] for one reference view. Every view
    /// (the reference included) is warped into the reference frame at each
    /// hypothesis depth with cameras downscaled to feature resolution.
    pub fn cost_volume<T: Real>(
        &self,
        tape: &mut Tape<T>,
        features: &[Var],
        cams: &[CameraView],
        ref_idx: usize,
        hyps: &DepthHypotheses,
    ) -> Result<Var> {
        if features.len() < 2 {
            return Err(Error::BadArgument {
                op: "cost_volume",
                reason: format!("needs at least 2 views, got {}", features.len()),
            });
        }
        if features.len() != cams.len() {
            return Err(Error::BadArgument {
                op: "cost_volume",
                reason: format!("{} feature maps vs {} cameras", features.len(), cams.len()),
            });
        }
        if ref_idx >= features.len() {
            return Err(Error::BadArgument {
                op: "cost_volume",
                reason: format!("reference index {ref_idx} out of {}", features.len()),
            });
        }
        let small: Vec<CameraView> = cams
            .iter()
            .map(|c| c.downscaled(FEATURE_STRIDE))
            .collect::<Result<_>>()?;
        let c = tape.shape(features[0])[0];
        for (i, &f) in features.iter().enumerate() {
            let shape = tape.shape(f).to_vec();
            if shape != [c, small[i].height, small[i].width] {
                return Err(Error::BadShape {
                    op: "cost_volume",
                    shape,
                    reason: format!(
                        "view {i} features do not match [{c},{},{}]",
                        small[i].height, small[i].width
                    ),
                });
            }
        }

        let (h, w) = (small[ref_idx].height, small[ref_idx].width);
        let mut slabs = Vec::with_capacity(hyps.count());
        for k in 0..hyps.count() {
            let d = hyps.depth(k);
            let mut warped = Vec::with_capacity(features.len());
            for (v, &f) in features.iter().enumerate() {
                let h_mat = plane_homography(&small[v], &small[ref_idx], d)?;
                warped.push(warp_with_homography(tape, f, &h_mat)?);
            }
            let var = variance_over(tape, &warped)?;
            slabs.push(tape.reshape(var, vec![c, 1, h, w])?);
        }
        tape.concat(&slabs, 1)
    }

    /// Regularizes a cost volume [C,K,h,w] into per-hypothesis matching
    /// costs [K,h,w].
    pub fn regularize<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        volume: Var,
    ) -> Result<Var> {
        let w0 = lookup(vars, "mvs.reg0.weight")?;
        let b0 = lookup(vars, "mvs.reg0.bias")?;
        let w1 = lookup(vars, "mvs.reg1.weight")?;
        let b1 = lookup(vars, "mvs.reg1.bias")?;
        let x = tape.conv3d(volume, w0, Some(b0), 1, 1)?;
        let x = tape.relu(x);
        let cost = tape.conv3d(x, w1, Some(b1), 1, 1)?;
        let shape = tape.shape(cost).to_vec();
        tape.reshape(cost, shape[1..].to_vec())
    }

    /// Matching costs [K,h,w] to expected depth [h,w]: softmax over the
    /// negated costs, then the probability-weighted hypothesis average.
    pub fn depth_from_cost<T: Real>(
        &self,
        tape: &mut Tape<T>,
        cost: Var,
        hyps: &DepthHypotheses,
    ) -> Result<Var> {
        let neg = tape.neg(cost);
        let probs = tape.softmax(neg, 0)?;
        soft_argmin(tape, probs, hyps)
    }

    /// Predicts depth at feature resolution for one reference view.
    pub fn predict_depth<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        features: &[Var],
        cams: &[CameraView],
        ref_idx: usize,
        hyps: &DepthHypotheses,
    ) -> Result<Var> {
        let volume = self.cost_volume(tape, features, cams, ref_idx, hyps)?;
        let cost = self.regularize(tape, vars, volume)?;
        self.depth_from_cost(tape, cost, hyps)
    }

    /// Predicts a depth map for every view, reusing the per-view features
    /// across reference choices. Output order matches input order.
    pub fn predict_all_views<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        images: &[Var],
        cams: &[CameraView],
        hyps: &DepthHypotheses,
    ) -> Result<Vec<Var>> {
        if images.len() < 2 {
            return Err(Error::BadArgument {
                op: "predict_all_views",
                reason: format!("needs at least 2 views, got {}", images.len()),
            });
        }
        if images.len() != cams.len() {
            return Err(Error::BadArgument {
                op: "predict_all_views",
                reason: format!("{} images vs {} cameras", images.len(), cams.len()),
            });
        }
        let features: Vec<Var> = images
            .iter()
            .map(|&img| self.extract(tape, vars, img))
            .collect::<Result<_>>()?;
        (0..images.len())
            .map(|r| self.predict_depth(tape, vars, &features, cams, r, hyps))
            .collect()
    }
}

fn lookup(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name).copied().ok_or_else(|| Error::UnknownParameter {
        name: name.to_string(),
    })
}
