//! Occupancy and log-odds grids with probabilistic multi-view merging.

use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

/// Probability clamp applied before any logit conversion.
pub const PROB_EPS: f64 = 1e-6;

/// The frame a grid's voxel centers are expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridFrame {
    CameraLocal,
    World,
}

/// Axis-aligned voxel lattice. `origin` is the minimum corner of the
/// volume; voxel (ix,iy,iz) spans `origin + [i, i+1] * spacing` per axis
/// and its center sits at `origin + (i + 0.5) * spacing`. Values are laid
/// out x-fastest: flat index = ix + dims.x * (iy + dims.y * iz).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub dims: [usize; 3],
    pub origin: [f32; 3],
    pub spacing: f32,
}

impl GridGeometry {
    pub fn new(dims: [usize; 3], origin: [f32; 3], spacing: f32) -> Result<Self> {
        let g = GridGeometry {
            dims,
            origin,
            spacing,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Geometry(format!(
                "grid dims must be positive, got {:?}",
                self.dims
            )));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::Geometry(format!(
                "grid spacing must be positive and finite, got {}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Geometry(format!(
                "grid origin must be finite, got {:?}",
                self.origin
            )));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn flat_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        debug_assert!(ix < self.dims[0] && iy < self.dims[1] && iz < self.dims[2]);
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [
            self.origin[0] as f64 + (ix as f64 + 0.5) * self.spacing as f64,
            self.origin[1] as f64 + (iy as f64 + 0.5) * self.spacing as f64,
            self.origin[2] as f64 + (iz as f64 + 0.5) * self.spacing as f64,
        ]
    }
}

/// log(p / (1-p)) with the probability clamped to [PROB_EPS, 1-PROB_EPS].
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

/// Numerically stable 1 / (1 + e^-l).
pub fn sigmoid(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// Per-voxel occupancy probabilities. Stored values are always inside
/// [PROB_EPS, 1-PROB_EPS].
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    geometry: GridGeometry,
    frame: GridFrame,
    values: Vec<f64>,
}

impl OccupancyGrid {
    pub fn new(
        geometry: GridGeometry,
        frame: GridFrame,
        values: Vec<f64>,
    ) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.voxel_count() {
            return Err(Error::Geometry(format!(
                "grid wants {} values for dims {:?}, got {}",
                geometry.voxel_count(),
                geometry.dims,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("occupancy values must be finite".into()));
        }
        let values = values
            .into_iter()
            .map(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS))
            .collect();
        Ok(OccupancyGrid {
            geometry,
            frame,
            values,
        })
    }

    /// Grid filled with one probability everywhere.
    pub fn uniform(geometry: GridGeometry, frame: GridFrame, p: f64) -> Result<Self> {
        let n = geometry.voxel_count();
        OccupancyGrid::new(geometry, frame, vec![p; n])
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn frame(&self) -> GridFrame {
        self.frame
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.geometry.flat_index(ix, iy, iz)]
    }

    /// Elementwise logit.
    pub fn to_logodds(&self) -> LogOddsGrid {
        LogOddsGrid {
            geometry: self.geometry,
            frame: self.frame,
            values: self.values.iter().map(|&p| logit(p)).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let g = &self.geometry;
        let mut bytes = Vec::with_capacity(4 + 12 + 12 + 4 + 4 * self.values.len());
        bytes.extend_from_slice(b"VOXP");
        for d in g.dims {
            bytes.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for o in g.origin {
            bytes.extend_from_slice(&o.to_le_bytes());
        }
        bytes.extend_from_slice(&g.spacing.to_le_bytes());
        for v in &self.values {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Loads a `.voxp` file. The format carries no frame tag; grids on disk
    /// are treated as world-frame.
    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut file =
            std::fs::File::open(path).map_err(|e| Error::io(name.clone(), e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)
            .map_err(|e| Error::io(name.clone(), e))?;
        if bytes.len() < 32 {
            return Err(Error::format(name, "truncated header"));
        }
        if &bytes[0..4] != b"VOXP" {
            return Err(Error::format(
                name,
                format!("bad magic {:?}, expected \"VOXP\"", &bytes[0..4]),
            ));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let dims = [u32_at(4) as usize, u32_at(8) as usize, u32_at(12) as usize];
        let origin = [f32_at(16), f32_at(20), f32_at(24)];
        let spacing = f32_at(28);
        let geometry =
            GridGeometry::new(dims, origin, spacing).map_err(|e| Error::format(&name, e.to_string()))?;
        let n = geometry.voxel_count();
        if bytes.len() != 32 + 4 * n {
            return Err(Error::format(
                name,
                format!("expected {} value bytes, found {}", 4 * n, bytes.len() - 32),
            ));
        }
        let values = (0..n).map(|i| f32_at(32 + 4 * i) as f64).collect();
        OccupancyGrid::new(geometry, GridFrame::World, values)
    }
}

/// Per-voxel log-odds l(x) = logit(p(x)).
#[derive(Clone, Debug, PartialEq)]
pub struct LogOddsGrid {
    geometry: GridGeometry,
    frame: GridFrame,
    values: Vec<f64>,
}

impl LogOddsGrid {
    pub fn new(geometry: GridGeometry, frame: GridFrame, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.voxel_count() {
            return Err(Error::Geometry(format!(
                "grid wants {} values for dims {:?}, got {}",
                geometry.voxel_count(),
                geometry.dims,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("log-odds values must be finite".into()));
        }
        Ok(LogOddsGrid {
            geometry,
            frame,
            values,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn frame(&self) -> GridFrame {
        self.frame
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.geometry.flat_index(ix, iy, iz)]
    }

    /// Elementwise sigmoid back to probabilities.
    pub fn to_probabilities(&self) -> OccupancyGrid {
        OccupancyGrid::new(
            self.geometry,
            self.frame,
            self.values.iter().map(|&l| sigmoid(l)).collect(),
        )
        .expect("sigmoid output is finite and in range")
    }
}

/// Merges per-view evidence by summing log-odds voxelwise, then converting
/// back to probabilities. The addends are sorted by value before summation
/// so any view order produces a bit-identical result.
pub fn merge_views(grids: &[LogOddsGrid]) -> Result<OccupancyGrid> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Geometry("merge_views needs at least one grid".into()))?;
    for (i, g) in grids.iter().enumerate().skip(1) {
        if g.geometry != first.geometry {
            return Err(Error::Geometry(format!(
                "grid {} geometry {:?} does not match grid 0 geometry {:?}",
                i, g.geometry, first.geometry
            )));
        }
        if g.frame != first.frame {
            return Err(Error::Geometry(format!(
                "grid {} frame {:?} does not match grid 0 frame {:?}",
                i, g.frame, first.frame
            )));
        }
    }
    let n = first.geometry.voxel_count();
    let mut addends = vec![0.0f64; grids.len()];
    let mut probs = Vec::with_capacity(n);
    for v in 0..n {
        for (k, g) in grids.iter().enumerate() {
            addends[k] = g.values[v];
        }
        addends.sort_unstable_by(f64::total_cmp);
        probs.push(sigmoid(addends.iter().sum()));
    }
    OccupancyGrid::new(first.geometry, first.frame, probs)
}
