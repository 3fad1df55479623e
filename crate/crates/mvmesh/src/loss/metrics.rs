//! Point-cloud evaluation metrics: F-score at a squared-distance threshold
//! and chamfer distance. Plain value computations, no tape involved.

use crate::error::{Error, Result};

/// Default squared-distance threshold in square meters. Reports also quote
/// the doubled threshold alongside it.
pub const F_TAU: f64 = 1e-4;

/// Per-scene evaluation summary. Chamfer is scaled by 1000 for readability
/// at desk scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshScore {
    pub f1_tau: f64,
    pub f1_2tau: f64,
    pub chamfer_mm: f64,
}

fn check_nonempty(pred: &[[f64; 3]], gt: &[[f64; 3]], op: &'static str) -> Result<()> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::BadArgument {
            op,
            reason: "point sets must be nonempty".into(),
        });
    }
    Ok(())
}

fn min_sq_dists(from: &[[f64; 3]], to: &[[f64; 3]]) -> Vec<f64> {
    from.iter()
        .map(|p| {
            to.iter()
                .map(|q| {
                    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// F-score in percent at squared-distance threshold `tau`: the harmonic
/// mean of precision (predicted points within `tau` of the reference) and
/// recall (reference points within `tau` of the prediction). Zero when
/// both are zero.
pub fn fscore(pred: &[[f64; 3]], gt: &[[f64; 3]], tau: f64) -> Result<f64> {
    check_nonempty(pred, gt, "fscore")?;
    if !(tau > 0.0) {
        return Err(Error::BadArgument {
            op: "fscore",
            reason: format!("threshold must be positive, got {tau}"),
        });
    }
    let within = |dists: &[f64]| {
        100.0 * dists.iter().filter(|&&d| d <= tau).count() as f64 / dists.len() as f64
    };
    let precision = within(&min_sq_dists(pred, gt));
    let recall = within(&min_sq_dists(gt, pred));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Symmetric chamfer distance: mean squared nearest-neighbor distance in
/// both directions, summed.
pub fn chamfer_distance(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    check_nonempty(pred, gt, "chamfer_distance")?;
    let mean = |dists: Vec<f64>| dists.iter().sum::<f64>() / dists.len() as f64;
    Ok(mean(min_sq_dists(pred, gt)) + mean(min_sq_dists(gt, pred)))
}

/// Scores a predicted point set against a reference set at the default
/// threshold and its double.
pub fn score_points(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<MeshScore> {
    Ok(MeshScore {
        f1_tau: fscore(pred, gt, F_TAU)?,
        f1_2tau: fscore(pred, gt, 2.0 * F_TAU)?,
        chamfer_mm: 1000.0 * chamfer_distance(pred, gt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_sets_score_perfectly() {
        let pts = vec![[0.0, 0.0, 0.0], [0.1, 0.2, 0.3], [-0.4, 0.5, 0.6]];
        assert_eq!(fscore(&pts, &pts, F_TAU).unwrap(), 100.0);
        let s = score_points(&pts, &pts).unwrap();
        assert_eq!(s.f1_tau, 100.0);
        assert_eq!(s.f1_2tau, 100.0);
        assert_eq!(s.chamfer_mm, 0.0);
    }

    #[test]
    fn twenty_millimeters_apart_misses_the_threshold() {
        let p = vec![[0.0, 0.0, 0.0]];
        let q = vec![[0.02, 0.0, 0.0]];
        assert_eq!(fscore(&p, &q, F_TAU).unwrap(), 0.0);
        assert_eq!(fscore(&p, &q, 2.0 * F_TAU).unwrap(), 0.0);
    }

    #[test]
    fn five_millimeters_apart_clears_the_threshold() {
        let p = vec![[0.0, 0.0, 0.0]];
        let q = vec![[0.005, 0.0, 0.0]];
        assert_eq!(fscore(&p, &q, F_TAU).unwrap(), 100.0);
    }

    #[test]
    fn chamfer_metric_is_symmetric_and_scaled() {
        let p = vec![[0.0, 0.0, 0.0]];
        let q = vec![[0.01, 0.0, 0.0]];
        let d = chamfer_distance(&p, &q).unwrap();
        assert!((d - 2e-4).abs() < 1e-16);
        assert_eq!(d, chamfer_distance(&q, &p).unwrap());
        assert!((score_points(&p, &q).unwrap().chamfer_mm - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_sets_and_bad_thresholds_are_rejected() {
        let p = vec![[0.0, 0.0, 0.0]];
        assert!(fscore(&[], &p, F_TAU).is_err());
        assert!(fscore(&p, &[], F_TAU).is_err());
        assert!(fscore(&p, &p, 0.0).is_err());
        assert!(chamfer_distance(&[], &p).is_err());
    }

    fn point_set() -> impl Strategy<Value = Vec<[f64; 3]>> {
        proptest::collection::vec(
            [-0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5].prop_map(|[x, y, z]| [x, y, z]),
            1..16,
        )
    }

    proptest! {
        #[test]
        fn loosening_the_threshold_never_lowers_the_fscore(
            p in point_set(),
            q in point_set(),
        ) {
            let tight = fscore(&p, &q, F_TAU).unwrap();
            let loose = fscore(&p, &q, 2.0 * F_TAU).unwrap();
            prop_assert!(tight <= loose + 1e-12);
        }

        #[test]
        fn chamfer_is_nonnegative_and_symmetric(
            p in point_set(),
            q in point_set(),
        ) {
            let d = chamfer_distance(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - chamfer_distance(&q, &p).unwrap()).abs() < 1e-12);
        }
    }
}
