//! Coarse-to-fine mesh deformation with graph convolutions over vertex
//! neighborhoods and bounded per-vertex refinement steps.

pub mod gcn;
pub mod net;

pub use gcn::{graph_conv, mesh_adjacency, vertex_refine};
pub use net::{RefineConfig, RefineNet};
