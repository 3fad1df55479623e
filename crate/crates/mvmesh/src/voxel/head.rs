//! Fully convolutional per-view occupancy prediction network.

use super::grid::{sigmoid, GridFrame, GridGeometry, OccupancyGrid};
use crate::autodiff::{ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Predicts a camera-local occupancy grid from a shaded input image. A
/// chain of stride-2 3x3 convolutions brings the image down to the grid's
/// (y,x) footprint; a final 3x3 convolution emits one channel per depth
/// slice. Flattened output order matches the grid layout: the tensor is
/// [Dz,Dy,Dx], x-fastest. All views share this single parameter set.
#[derive(Clone, Debug)]
pub struct VoxelHead {
    in_channels: usize,
    image_size: (usize, usize),
    grid_dims: [usize; 3],
    encoder_channels: Vec<usize>,
}

impl VoxelHead {
    pub fn new(
        in_channels: usize,
        image_size: (usize, usize),
        grid_dims: [usize; 3],
        encoder_channels: Vec<usize>,
    ) -> Result<Self> {
        if encoder_channels.is_empty() {
            return Err(Error::Config(
                "voxel head needs at least one encoder stage".into(),
            ));
        }
        let (h, w) = image_size;
        let k = encoder_channels.len() as u32;
        let (oh, ow) = (h >> k, w >> k);
        if oh << k != h || ow << k != w {
            return Err(Error::Config(format!(
                "image {h}x{w} is not divisible by 2^{k} encoder stages"
            )));
        }
        if oh != grid_dims[1] || ow != grid_dims[0] {
            return Err(Error::Config(format!(
                "{} encoder stages map {h}x{w} to {oh}x{ow}, but the grid is {}x{} in (y,x)",
                k, grid_dims[1], grid_dims[0]
            )));
        }
        Ok(VoxelHead {
            in_channels,
            image_size,
            grid_dims,
            encoder_channels,
        })
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.grid_dims
    }

    /// Parameter names in the order `param_tensors` expects.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.encoder_channels.len() {
            names.push(format!("voxel.enc{i}.weight"));
            names.push(format!("voxel.enc{i}.bias"));
        }
        names.push("voxel.out.weight".into());
        names.push("voxel.out.bias".into());
        names
    }

    pub fn register(&self, params: &mut ParamSet, seed: u64) {
        let mut cin = self.in_channels;
        for (i, &cout) in self.encoder_channels.iter().enumerate() {
            params.register_xavier(
                &format!("voxel.enc{i}.weight"),
                vec![cout, cin, 3, 3],
                cin * 9,
                cout * 9,
                seed,
            );
            params.register_zeros(&format!("voxel.enc{i}.bias"), vec![cout]);
            cin = cout;
        }
        let dz = self.grid_dims[2];
        params.register_xavier(
            "voxel.out.weight",
            vec![dz, cin, 3, 3],
            cin * 9,
            dz * 9,
            seed,
        );
        params.register_zeros("voxel.out.bias", vec![dz]);
    }

    /// Runs the network on one image [Cin,H,W] and returns occupancy
    /// logits shaped [Dz,Dy,Dx].
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &BTreeMap<String, Var>,
        image: Var,
    ) -> Result<Var> {
        let shape = tape.shape(image).to_vec();
        let want = [self.in_channels, self.image_size.0, self.image_size.1];
        if shape != want {
            return Err(Error::BadShape {
                op: "voxel_head",
                shape,
                reason: format!("expected image {want:?}"),
            });
        }
        let mut x = image;
        for i in 0..self.encoder_channels.len() {
            let w = lookup(vars, &format!("voxel.enc{i}.weight"))?;
            let b = lookup(vars, &format!("voxel.enc{i}.bias"))?;
            x = tape.conv2d(x, w, Some(b), 2, 1)?;
            x = tape.relu(x);
        }
        let w = lookup(vars, "voxel.out.weight")?;
        let b = lookup(vars, "voxel.out.bias")?;
        let logits = tape.conv2d(x, w, Some(b), 1, 1)?;
        let [dx, dy, dz] = self.grid_dims;
        tape.reshape(logits, vec![dz, dy, dx])
    }

    /// Converts a logits tensor into a camera-local probability grid.
    pub fn logits_to_grid(
        &self,
        logits: &Tensor<f32>,
        geometry: GridGeometry,
    ) -> Result<OccupancyGrid> {
        let [dx, dy, dz] = self.grid_dims;
        if logits.shape() != [dz, dy, dx] {
            return Err(Error::BadShape {
                op: "logits_to_grid",
                shape: logits.shape().to_vec(),
                reason: format!("expected [{dz}, {dy}, {dx}]"),
            });
        }
        if geometry.dims != self.grid_dims {
            return Err(Error::Geometry(format!(
                "geometry dims {:?} do not match head grid {:?}",
                geometry.dims, self.grid_dims
            )));
        }
        let values = logits.data().iter().map(|&z| sigmoid(z as f64)).collect();
        OccupancyGrid::new(geometry, GridFrame::CameraLocal, values)
    }
}

fn lookup(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name).copied().ok_or_else(|| Error::UnknownParameter {
        name: name.to_string(),
    })
}
