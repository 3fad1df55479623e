//! Tape building blocks for plane-sweep stereo: homography warping,
//! cross-view variance, and soft-argmin depth regression.

use super::hypotheses::DepthHypotheses;
use crate::autodiff::{lit, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::{apply_homography, Mat3};

/// Warps a feature map [C,h,w] through a pixel homography: output pixel
/// (r,c) reads the input bilinearly at H * (c+0.5, r+0.5, 1). Samples
/// falling outside the map are zero. The sampling grid is a constant;
/// gradients flow to the feature map only.
pub fn warp_with_homography<T: Real>(
    tape: &mut Tape<T>,
    features: Var,
    h_mat: &Mat3,
) -> Result<Var> {
    let shape = tape.shape(features).to_vec();
    if shape.len() != 3 {
        return Err(Error::BadShape {
            op: "warp_with_homography",
            shape,
            reason: "expected [C,h,w] features".into(),
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut coords = Vec::with_capacity(h * w * 2);
    for r in 0..h {
        for col in 0..w {
            let (u, v) = apply_homography(h_mat, col as f64 + 0.5, r as f64 + 0.5);
            coords.push(lit::<T>(u - 0.5));
            coords.push(lit::<T>(v - 0.5));
        }
    }
    let grid = tape.constant(Tensor::new(vec![h * w, 2], coords)?);
    let sampled = tape.grid_sample2d(features, grid)?;
    let by_channel = tape.transpose(sampled)?;
    tape.reshape(by_channel, vec![c, h, w])
}

/// Elementwise population variance across same-shaped tensors. Both the
/// mean and the squared-deviation sum add their terms in sorted value
/// order, so permuting the inputs gives a bit-identical result, and
/// identical inputs give exactly zero.
pub fn variance_over<T: Real>(tape: &mut Tape<T>, views: &[Var]) -> Result<Var> {
    if views.len() < 2 {
        return Err(Error::BadArgument {
            op: "variance_over",
            reason: format!("needs at least 2 views, got {}", views.len()),
        });
    }
    let shape = tape.shape(views[0]).to_vec();
    for &v in &views[1..] {
        if tape.shape(v) != shape {
            return Err(Error::ShapeMismatch {
                op: "variance_over",
                left: shape,
                right: tape.shape(v).to_vec(),
            });
        }
    }
    let n = views.len();
    let numel: usize = shape.iter().product();
    let inv_n = lit::<T>(1.0 / n as f64);

    let data: Vec<&[T]> = views.iter().map(|&v| tape.value(v).data()).collect();
    let mut means = vec![T::zero(); numel];
    let mut out = vec![T::zero(); numel];
    let mut addends = vec![T::zero(); n];
    for i in 0..numel {
        for (k, view) in data.iter().enumerate() {
            addends[k] = view[i];
        }
        if addends[1..].iter().all(|&x| x == addends[0]) {
            means[i] = addends[0];
            continue;
        }
        addends.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite features"));
        let mean = addends.iter().fold(T::zero(), |s, &x| s + x) * inv_n;
        for a in addends.iter_mut() {
            let d = *a - mean;
            *a = d * d;
        }
        addends.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite features"));
        means[i] = mean;
        out[i] = addends.iter().fold(T::zero(), |s, &x| s + x) * inv_n;
    }
    drop(data);

    let value = Tensor::new(shape.clone(), out)?;
    let two_over_n = lit::<T>(2.0 / n as f64);
    Ok(tape.push_op(views, value, move |ctx| {
        let g = ctx.out_grad().data();
        (0..n)
            .map(|k| {
                let x = ctx.input(k).data();
                let mut gk = vec![T::zero(); numel];
                for i in 0..numel {
                    gk[i] = g[i] * two_over_n * (x[i] - means[i]);
                }
                Some(Tensor::new(shape.clone(), gk).expect("sized"))
            })
            .collect()
    }))
}

/// Expected depth under a probability volume [K,h,w]: sum_k p_k * d_k per
/// pixel. A one-hot volume returns that hypothesis depth exactly; any
/// probability volume stays inside [d_min, d_max].
pub fn soft_argmin<T: Real>(
    tape: &mut Tape<T>,
    probs: Var,
    hyps: &DepthHypotheses,
) -> Result<Var> {
    let shape = tape.shape(probs).to_vec();
    if shape.len() != 3 || shape[0] != hyps.count() {
        return Err(Error::BadShape {
            op: "soft_argmin",
            shape,
            reason: format!("expected [{},h,w] probability volume", hyps.count()),
        });
    }
    let depths: Vec<T> = hyps.values().into_iter().map(lit::<T>).collect();
    let ladder = tape.constant(Tensor::new(vec![hyps.count(), 1, 1], depths)?);
    let weighted = tape.mul(probs, ladder)?;
    tape.sum_axis(weighted, 0, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use crate::geom::{mat3_identity, plane_homography, CameraView};

    #[test]
    fn identity_homography_copies_features() {
        let mut tape = Tape::<f64>::new();
        let feat = tape.leaf(
            Tensor::new(vec![2, 2, 3], (0..12).map(|i| i as f64 * 0.5).collect()).unwrap(),
        );
        let out = warp_with_homography(&mut tape, feat, &mat3_identity()).unwrap();
        assert_eq!(tape.value(out).data(), tape.value(feat).data());
    }

    #[test]
    fn pure_x_translation_shifts_by_whole_texels() {
        // Source camera one unit left along x; for a plane at depth equal
        // to the focal-length/shift ratio the warp is exactly one texel.
        let refc = CameraView::standard(2.0, 4, 4).unwrap();
        let src = CameraView::new(refc.k, mat3_identity(), [1.0, 0.0, 0.0], 4, 4).unwrap();
        let h = plane_homography(&src, &refc, 2.0).unwrap();
        let mut tape = Tape::<f64>::new();
        let feat = tape.leaf(
            Tensor::new(vec![1, 1, 4], vec![10.0, 20.0, 30.0, 40.0]).unwrap(),
        );
        let out = warp_with_homography(&mut tape, feat, &h).unwrap();
        assert_eq!(tape.value(out).data(), &[20.0, 30.0, 40.0, 0.0]);
    }

    #[test]
    fn variance_of_identical_views_is_exactly_zero() {
        let mut tape = Tape::<f32>::new();
        let t = Tensor::new(vec![2, 2], vec![0.3, -1.7, 2.9, 0.01]).unwrap();
        let a = tape.leaf(t.clone());
        let b = tape.leaf(t.clone());
        let c = tape.leaf(t);
        let v = variance_over(&mut tape, &[a, b, c]).unwrap();
        assert!(tape.value(v).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn variance_matches_hand_computation_and_permutation_is_bit_exact() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![4], vec![5.0, 4.0, 1.0, 0.0]).unwrap());
        let ab = variance_over(&mut tape, &[a, b]).unwrap();
        let ba = variance_over(&mut tape, &[b, a]).unwrap();
        // Two-view variance is (a-b)^2 / 4.
        assert_eq!(tape.value(ab).data(), &[4.0, 1.0, 1.0, 4.0]);
        assert_eq!(tape.value(ab).data(), tape.value(ba).data());
    }

    #[test]
    fn variance_gradient_matches_finite_differences() {
        let a = Tensor::new(vec![3], vec![0.4, -0.2, 1.1]).unwrap();
        let b = Tensor::new(vec![3], vec![-0.9, 0.3, 0.8]).unwrap();
        let c = Tensor::new(vec![3], vec![0.1, 0.2, -0.5]).unwrap();
        let report = check_gradients("variance_over", &[a, b, c], |tape, vars| {
            let v = variance_over(tape, vars)?;
            let sq = tape.square(v);
            Ok(tape.sum_all(sq))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn one_hot_probability_returns_that_hypothesis_exactly() {
        let hyps = DepthHypotheses::new(0.1, 0.025, 4).unwrap();
        let mut tape = Tape::<f64>::new();
        let mut p = vec![0.0; 4];
        p[2] = 1.0;
        let probs = tape.leaf(Tensor::new(vec![4, 1, 1], p).unwrap());
        let d = soft_argmin(&mut tape, probs, &hyps).unwrap();
        assert_eq!(tape.value(d).data()[0], hyps.depth(2));
    }

    #[test]
    fn uniform_probability_over_48_hypotheses_averages_the_ladder() {
        let hyps = DepthHypotheses::new(0.1, 0.025, 48).unwrap();
        let mut tape = Tape::<f64>::new();
        let probs = tape.leaf(Tensor::full(vec![48, 1, 1], 1.0 / 48.0));
        let d = soft_argmin(&mut tape, probs, &hyps).unwrap();
        assert!((tape.value(d).data()[0] - 0.6875).abs() < 1e-12);
    }

    #[test]
    fn soft_argmin_stays_inside_the_ladder() {
        let hyps = DepthHypotheses::new(0.35, 0.05, 16).unwrap();
        let mut tape = Tape::<f64>::new();
        let costs: Vec<f64> = (0..16 * 4).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let c = tape.leaf(Tensor::new(vec![16, 2, 2], costs).unwrap());
        let neg = tape.neg(c);
        let probs = tape.softmax(neg, 0).unwrap();
        let d = soft_argmin(&mut tape, probs, &hyps).unwrap();
        for &x in tape.value(d).data() {
            assert!(x >= hyps.d_min() && x <= hyps.d_max());
        }
    }

    #[test]
    fn peaked_cost_recovers_depth_within_one_step() {
        let hyps = DepthHypotheses::new(0.35, 0.05, 16).unwrap();
        let true_k = 9;
        let mut tape = Tape::<f64>::new();
        let costs: Vec<f64> = (0..16)
            .map(|k| if k == true_k { 0.0 } else { 10.0 })
            .collect();
        let c = tape.leaf(Tensor::new(vec![16, 1, 1], costs).unwrap());
        let neg = tape.neg(c);
        let probs = tape.softmax(neg, 0).unwrap();
        let d = soft_argmin(&mut tape, probs, &hyps).unwrap();
        let got = tape.value(d).data()[0];
        assert!((got - hyps.depth(true_k)).abs() < hyps.step(), "{got}");
    }
}
