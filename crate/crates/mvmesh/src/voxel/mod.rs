//! Voxel occupancy grids: prediction, probabilistic merging, world-frame
//! resampling, and mesh extraction.

pub mod cubify;
pub mod grid;
pub mod head;
pub mod resample;

pub use cubify::cubify;
pub use grid::{
    logit, merge_views, sigmoid, GridFrame, GridGeometry, LogOddsGrid, OccupancyGrid, PROB_EPS,
};
pub use head::VoxelHead;
pub use resample::{resample_on_tape, resample_to_world, ResamplePlan};
