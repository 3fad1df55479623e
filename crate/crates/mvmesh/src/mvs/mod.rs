//! Multi-view plane-sweep depth estimation.
//!
//! Images from each view pass through a shared convolutional extractor.
//! For a chosen reference view, every view's feature map is warped into
//! the reference frame via fronto-parallel plane homographies at a ladder
//! of depth hypotheses; the per-hypothesis variance across views forms a
//! cost volume that a small 3D convolutional stack regularizes. Depth is
//! the softmax-weighted average of the hypothesis depths.

pub mod hypotheses;
pub mod net;
pub mod ops;

pub use hypotheses::DepthHypotheses;
pub use net::{MvsConfig, MvsNet, FEATURE_STRIDE};
pub use ops::{soft_argmin, variance_over, warp_with_homography};
