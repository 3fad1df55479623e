//! Depth images with background sentinel 0.0 and `.dpth` I/O.

use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

/// Row-major depth image in meters. 0.0 marks pixels with no surface.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::BadArgument {
                op: "DepthMap::from_values",
                reason: format!(
                    "{}x{} wants {} values, got {}",
                    width,
                    height,
                    width * height,
                    values.len()
                ),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::BadArgument {
                op: "DepthMap::from_values",
                reason: "depths must be finite and non-negative".into(),
            });
        }
        Ok(DepthMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, depth: f32) {
        self.values[row * self.width + col] = depth;
    }

    /// Fraction of pixels with a surface hit.
    pub fn coverage(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|&&v| v > 0.0).count() as f64 / self.values.len() as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(12 + 4 * self.values.len());
        bytes.extend_from_slice(b"DPTH");
        bytes.extend_from_slice(&(self.width as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(name.clone(), e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)
            .map_err(|e| Error::io(name.clone(), e))?;
        if bytes.len() < 12 {
            return Err(Error::format(name, "truncated header"));
        }
        if &bytes[0..4] != b"DPTH" {
            return Err(Error::format(
                name,
                format!("bad magic {:?}, expected \"DPTH\"", &bytes[0..4]),
            ));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = width * height;
        if bytes.len() != 12 + 4 * n {
            return Err(Error::format(
                name,
                format!("expected {} value bytes, found {}", 4 * n, bytes.len() - 12),
            ));
        }
        let values = (0..n)
            .map(|i| f32::from_le_bytes(bytes[12 + 4 * i..16 + 4 * i].try_into().unwrap()))
            .collect();
        Self::from_values(width, height, values).map_err(|e| Error::format(&name, e.to_string()))
    }
}
