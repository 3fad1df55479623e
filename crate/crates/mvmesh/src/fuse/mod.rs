//! Per-vertex feature construction from multiple views: contrastive depth
//! feature pyramids, projection of vertices into the feature planes, and
//! pooling across views into a view-count-independent vector per vertex.

pub mod contrast;
pub mod pooling;
pub mod project;

pub use contrast::{ContrastiveConfig, ContrastiveMode, ContrastiveNet};
pub use pooling::{attention_table, AttentionScale, FeaturePool, PoolConfig, Pooled, PoolingMode};
pub use project::{project_vertices, sample_level, vertex_view_features};
