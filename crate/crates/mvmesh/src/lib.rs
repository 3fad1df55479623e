//! Multi-view 3D mesh reconstruction toolkit.
//!
//! The library reconstructs a triangle mesh of a desk-scale object from a
//! handful of calibrated RGB views. The stages mirror the runtime pipeline:
//!
//! 1. [`voxel`] — per-view occupancy prediction, log-odds fusion across
//!    views, and cubify (occupied voxels to a closed triangle mesh).
//! 2. [`mvs`] — plane-sweep multi-view stereo: homography warping, a
//!    variance cost volume, and soft-argmin depth regression.
//! 3. [`render`] — z-buffer depth rasterization used both for dataset
//!    ground truth and for re-rendering intermediate meshes.
//! 4. [`fuse`] — contrastive depth features (rendered vs. predicted depth),
//!    per-vertex feature sampling, and multi-view attention pooling.
//! 5. [`refine`] — staged graph-convolutional vertex refinement.
//! 6. [`loss`] — chamfer/normal/edge/depth/voxel losses and F-score metrics.
//! 7. [`pipeline`] — synthetic dataset generation, two-phase training,
//!    checkpoints, evaluation, and prediction.
//!
//! [`autodiff`] supplies the tape-based reverse-mode differentiation that all
//! trainable parts share, and [`geom`] the camera/mesh plumbing.
//!
//! # Runnable examples
//!
//! Each major capability has a runnable example (`cargo run --release -p
//! mvmesh --example <name>`):
//!
//! - `fuse_occupancy` — probabilistic merging of per-view occupancy grids
//! - `cubify_grid` — occupancy grid to a closed triangle mesh, saved as OBJ
//! - `render_depth` — rasterize a mesh into a depth map and verify it
//!   against a ray-casting oracle
//! - `mvs_depth` — plane-sweep depth estimation on a synthetic two-view rig
//! - `attention_pooling` — multi-view feature pooling modes side by side
//! - `refine_mesh` — one graph-convolutional refinement pass over a cubified
//!   mesh
//! - `gen_dataset` — generate a synthetic multi-view dataset
//! - `train_overfit` — end-to-end overfit on a tiny dataset with staged
//!   evaluation
//! - `gradcheck` — finite-difference verification of the autodiff ops
//!
//! The `mvmesh` binary wraps the same entry points as subcommands
//! (`gen-data`, `train`, `eval`, `predict`, `render-depth`, `fuse-voxels`,
//! `gradcheck`) for scripted use.

pub mod autodiff;
pub mod error;
pub mod fuse;
pub mod geom;
pub mod loss;
pub mod mvs;
pub mod pipeline;
pub mod refine;
pub mod render;
pub mod voxel;

pub use error::{Error, Result};
