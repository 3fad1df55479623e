//! Trilinear resampling of camera-local log-odds grids into a world-frame
//! lattice.

use super::grid::{GridFrame, GridGeometry, LogOddsGrid};
use crate::autodiff::{lit, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::CameraView;
use std::rc::Rc;

/// Precomputed interpolation taps: for each world voxel, the flat indices
/// into the local grid and their trilinear weights. Corners outside the
/// local volume are dropped, which is equivalent to reading log-odds 0
/// there (an uninformative prior).
#[derive(Clone, Debug)]
pub struct ResamplePlan {
    local_dims: [usize; 3],
    world_dims: [usize; 3],
    offsets: Vec<u32>,
    taps: Vec<(u32, f64)>,
}

impl ResamplePlan {
    /// Maps each world voxel center into the view's local frame and
    /// records the trilinear footprint there.
    pub fn build(local: &GridGeometry, cam: &CameraView, world: &GridGeometry) -> Result<Self> {
        local.validate()?;
        world.validate()?;
        let [dx, dy, dz] = local.dims;
        let mut offsets = Vec::with_capacity(world.voxel_count() + 1);
        let mut taps = Vec::new();
        offsets.push(0u32);
        for iz in 0..world.dims[2] {
            for iy in 0..world.dims[1] {
                for ix in 0..world.dims[0] {
                    let p = cam.world_to_camera(&world.voxel_center(ix, iy, iz));
                    let gx = (p[0] - local.origin[0] as f64) / local.spacing as f64 - 0.5;
                    let gy = (p[1] - local.origin[1] as f64) / local.spacing as f64 - 0.5;
                    let gz = (p[2] - local.origin[2] as f64) / local.spacing as f64 - 0.5;
                    let (x0, fx) = split(gx);
                    let (y0, fy) = split(gy);
                    let (z0, fz) = split(gz);
                    for (cz, wz) in [(z0, 1.0 - fz), (z0 + 1, fz)] {
                        for (cy, wy) in [(y0, 1.0 - fy), (y0 + 1, fy)] {
                            for (cx, wx) in [(x0, 1.0 - fx), (x0 + 1, fx)] {
                                let w = wx * wy * wz;
                                if w == 0.0 {
                                    continue;
                                }
                                if cx < 0 || cy < 0 || cz < 0 {
                                    continue;
                                }
                                let (cx, cy, cz) = (cx as usize, cy as usize, cz as usize);
                                if cx >= dx || cy >= dy || cz >= dz {
                                    continue;
                                }
                                taps.push((local.flat_index(cx, cy, cz) as u32, w));
                            }
                        }
                    }
                    offsets.push(taps.len() as u32);
                }
            }
        }
        Ok(ResamplePlan {
            local_dims: local.dims,
            world_dims: world.dims,
            offsets,
            taps,
        })
    }

    pub fn world_voxel_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn local_voxel_count(&self) -> usize {
        self.local_dims[0] * self.local_dims[1] * self.local_dims[2]
    }

    pub fn world_dims(&self) -> [usize; 3] {
        self.world_dims
    }

    /// Applies the plan to a flat local value array.
    pub fn apply(&self, local_values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.world_voxel_count());
        for v in 0..self.world_voxel_count() {
            let (a, b) = (self.offsets[v] as usize, self.offsets[v + 1] as usize);
            out.push(
                self.taps[a..b]
                    .iter()
                    .map(|&(i, w)| local_values[i as usize] * w)
                    .sum(),
            );
        }
        out
    }
}

fn split(g: f64) -> (i64, f64) {
    let f = g.floor();
    (f as i64, g - f)
}

/// Resamples a camera-local log-odds grid onto a world-frame geometry.
pub fn resample_to_world(
    local: &LogOddsGrid,
    cam: &CameraView,
    world: &GridGeometry,
) -> Result<LogOddsGrid> {
    if local.frame() != GridFrame::CameraLocal {
        return Err(Error::Geometry(
            "resample_to_world expects a camera-local grid".into(),
        ));
    }
    let plan = ResamplePlan::build(local.geometry(), cam, world)?;
    LogOddsGrid::new(*world, GridFrame::World, plan.apply(local.values()))
}

/// Tape op applying a `ResamplePlan` to a local log-odds tensor of shape
/// [Dz,Dy,Dx] (flat layout matches the grid's x-fastest order). The
/// backward pass scatter-adds each tap's weight back to its source voxel.
pub fn resample_on_tape<T: Real>(
    tape: &mut Tape<T>,
    local: Var,
    plan: &Rc<ResamplePlan>,
) -> Result<Var> {
    let shape = tape.shape(local).to_vec();
    let numel: usize = shape.iter().product();
    if numel != plan.local_voxel_count() {
        return Err(Error::BadShape {
            op: "resample_on_tape",
            shape,
            reason: format!("plan expects {} local voxels", plan.local_voxel_count()),
        });
    }
    let [wx, wy, wz] = plan.world_dims;
    let x = tape.value(local).data();
    let mut out = Vec::with_capacity(plan.world_voxel_count());
    for v in 0..plan.world_voxel_count() {
        let (a, b) = (plan.offsets[v] as usize, plan.offsets[v + 1] as usize);
        let mut acc = T::zero();
        for &(i, w) in &plan.taps[a..b] {
            acc += x[i as usize] * lit::<T>(w);
        }
        out.push(acc);
    }
    let value = Tensor::new(vec![wz, wy, wx], out)?;
    let plan = Rc::clone(plan);
    let local_shape = tape.shape(local).to_vec();
    Ok(tape.push_op(&[local], value, move |ctx| {
        let g = ctx.out_grad().data();
        let mut gx = Tensor::zeros(local_shape.clone());
        {
            let gd = gx.data_mut();
            for v in 0..plan.world_voxel_count() {
                let (a, b) = (plan.offsets[v] as usize, plan.offsets[v + 1] as usize);
                for &(i, w) in &plan.taps[a..b] {
                    gd[i as usize] += g[v] * lit::<T>(w);
                }
            }
        }
        vec![Some(gx)]
    }))
}
