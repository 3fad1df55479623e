//! Depth rendering: a z-buffer rasterizer, a shaded normal-image renderer,
//! and a brute-force ray-casting reference.
//!
//! Rasterized depth is not differentiable; losses and feature extraction
//! treat rendered depth maps as constants. Gradient flow to mesh vertices
//! is carried by the geometric losses and by feature sampling at projected
//! vertex locations instead.

pub mod depthmap;
pub mod raster;
pub mod raycast;

pub use depthmap::DepthMap;
pub use raster::{rasterize_depth, rasterize_faces, render_normal_image, NO_FACE};
pub use raycast::raycast_depth;
