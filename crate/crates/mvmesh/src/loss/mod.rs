//! Training losses and evaluation metrics: chamfer and normal agreement
//! over nearest-neighbor matches, edge regularization, reverse Huber depth
//! penalties, occupancy cross-entropy, their weighted total, and F-score
//! reporting.

pub mod berhu;
pub mod chamfer;
pub mod edge;
pub mod metrics;
pub mod samples;
pub mod total;
pub mod voxel;

pub use berhu::{adaptive_cutoff, berhu, depth_loss, masked_residuals, CUTOFF_FRACTION, MIN_CUTOFF};
pub use chamfer::{chamfer, chamfer_from, nearest_matches, normal_loss, normal_loss_from, Matches};
pub use edge::edge_loss;
pub use metrics::{chamfer_distance, fscore, score_points, MeshScore, F_TAU};
pub use samples::{surface_points, SurfacePoints};
pub use total::{total_loss, LossTerms, LossWeights};
pub use voxel::voxel_bce;
