//! Depth hypothesis ladders for plane-sweep stereo.

use crate::error::{Error, Result};

/// Uniformly spaced candidate depths d_k = d_min + k * step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthHypotheses {
    d_min: f64,
    step: f64,
    count: usize,
}

impl DepthHypotheses {
    pub fn new(d_min: f64, step: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::BadArgument {
                op: "DepthHypotheses::new",
                reason: format!("count must be at least 2, got {count}"),
            });
        }
        if !(d_min > 0.0) || !d_min.is_finite() {
            return Err(Error::BadArgument {
                op: "DepthHypotheses::new",
                reason: format!("d_min must be positive, got {d_min}"),
            });
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::BadArgument {
                op: "DepthHypotheses::new",
                reason: format!("step must be positive, got {step}"),
            });
        }
        Ok(DepthHypotheses { d_min, step, count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn depth(&self, k: usize) -> f64 {
        debug_assert!(k < self.count);
        self.d_min + k as f64 * self.step
    }

    pub fn d_max(&self) -> f64 {
        self.depth(self.count - 1)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.depth(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_is_strictly_increasing() {
        let h = DepthHypotheses::new(0.1, 0.025, 48).unwrap();
        assert_eq!(h.count(), 48);
        assert!((h.depth(0) - 0.1).abs() < 1e-15);
        assert!((h.depth(1) - 0.125).abs() < 1e-15);
        assert!((h.d_max() - 1.275).abs() < 1e-12);
        let v = h.values();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_ladders_are_rejected() {
        assert!(DepthHypotheses::new(0.1, 0.025, 1).is_err());
        assert!(DepthHypotheses::new(0.0, 0.025, 4).is_err());
        assert!(DepthHypotheses::new(0.1, 0.0, 4).is_err());
        assert!(DepthHypotheses::new(0.1, -0.1, 4).is_err());
    }
}
