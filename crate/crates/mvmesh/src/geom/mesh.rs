//! Triangle meshes with derived connectivity, plus OBJ I/O.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Indexed triangle mesh. Edges and vertex neighbor lists are derived at
/// construction and kept sorted so downstream iteration is deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<[f32; 3]>,
    faces: Vec<[u32; 3]>,
    edges: Vec<[u32; 2]>,
    neighbors: Vec<Vec<u32>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f32; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::Geometry(format!(
                    "face {fi} references vertex {} of {n}",
                    f.iter().max().unwrap()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Geometry(format!(
                    "face {fi} is degenerate: [{}, {}, {}]",
                    f[0], f[1], f[2]
                )));
            }
        }
        let (edges, neighbors) = derive_connectivity(vertices.len(), &faces);
        Ok(TriangleMesh {
            vertices,
            faces,
            edges,
            neighbors,
        })
    }

    pub fn vertices(&self) -> &[[f32; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Unique undirected edges as sorted index pairs, lexicographic order.
    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    /// Sorted neighbor vertex lists (one per vertex).
    pub fn neighbors(&self) -> &[Vec<u32>] {
        &self.neighbors
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Same topology with replaced vertex positions.
    pub fn with_vertices(&self, vertices: Vec<[f32; 3]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Geometry(format!(
                "vertex count {} != {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Ok(TriangleMesh {
            vertices,
            faces: self.faces.clone(),
            edges: self.edges.clone(),
            neighbors: self.neighbors.clone(),
        })
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// True when every edge borders exactly two faces (3F = 2E and no edge
    /// is used more or less than twice).
    pub fn is_closed(&self) -> bool {
        if 3 * self.faces.len() != 2 * self.edges.len() {
            return false;
        }
        let mut use_count = std::collections::BTreeMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = if a < b { (a, b) } else { (b, a) };
                *use_count.entry(key).or_insert(0u32) += 1;
            }
        }
        use_count.values().all(|&c| c == 2)
    }

    /// Unnormalized face normal (cross product of edge vectors).
    pub fn face_normal_raw(&self, fi: usize) -> [f64; 3] {
        let [a, b, c] = self.faces[fi];
        let (va, vb, vc) = (
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        );
        let e1 = [
            (vb[0] - va[0]) as f64,
            (vb[1] - va[1]) as f64,
            (vb[2] - va[2]) as f64,
        ];
        let e2 = [
            (vc[0] - va[0]) as f64,
            (vc[1] - va[1]) as f64,
            (vc[2] - va[2]) as f64,
        ];
        [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ]
    }

    pub fn face_area(&self, fi: usize) -> f64 {
        let n = self.face_normal_raw(fi);
        0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }

    /// Signed volume via the divergence theorem; positive for outward-wound
    /// closed meshes.
    pub fn signed_volume(&self) -> f64 {
        let mut vol = 0.0;
        for f in &self.faces {
            let (a, b, c) = (
                self.vertices[f[0] as usize],
                self.vertices[f[1] as usize],
                self.vertices[f[2] as usize],
            );
            let a = [a[0] as f64, a[1] as f64, a[2] as f64];
            let b = [b[0] as f64, b[1] as f64, b[2] as f64];
            let c = [c[0] as f64, c[1] as f64, c[2] as f64];
            vol += a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]);
        }
        vol / 6.0
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounds(&self) -> ([f32; 3], [f32; 3]) {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for v in &self.vertices {
            for i in 0..3 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (lo, hi)
    }

    /// Applies `p -> R p + t` to every vertex.
    pub fn transformed(&self, r: &crate::geom::Mat3, t: &crate::geom::Vec3) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|v| {
                let p = [v[0] as f64, v[1] as f64, v[2] as f64];
                let q = crate::geom::mat3_vec(r, &p);
                [
                    (q[0] + t[0]) as f32,
                    (q[1] + t[1]) as f32,
                    (q[2] + t[2]) as f32,
                ]
            })
            .collect();
        TriangleMesh {
            vertices,
            faces: self.faces.clone(),
            edges: self.edges.clone(),
            neighbors: self.neighbors.clone(),
        }
    }

    // ── OBJ subset ───────────────────────────────────────────────────────

    /// Serializes as the OBJ subset used throughout: `v` and triangle `f`
    /// lines with 1-based indices.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn from_obj(text: &str, path: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let nums: Vec<f32> = parts
                        .map(|w| {
                            w.parse::<f32>().map_err(|_| {
                                Error::parse(path, lineno, format!("bad coordinate '{w}'"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    if nums.len() != 3 {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("vertex wants 3 coordinates, got {}", nums.len()),
                        ));
                    }
                    vertices.push([nums[0], nums[1], nums[2]]);
                }
                Some("f") => {
                    let idxs: Vec<i64> = parts
                        .map(|w| {
                            // Accept the common `i/..` form but only plain
                            // vertex indices.
                            let head = w.split('/').next().unwrap_or(w);
                            head.parse::<i64>().map_err(|_| {
                                Error::parse(path, lineno, format!("bad face index '{w}'"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    if idxs.len() != 3 {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("only triangles are supported, face has {} indices", idxs.len()),
                        ));
                    }
                    let mut face = [0u32; 3];
                    for (k, &i) in idxs.iter().enumerate() {
                        if i == 0 {
                            return Err(Error::parse(
                                path,
                                lineno,
                                "face index 0: OBJ indices are 1-based",
                            ));
                        }
                        if i < 0 || i as usize > vertices.len() {
                            return Err(Error::parse(
                                path,
                                lineno,
                                format!("face index {i} out of range 1..={}", vertices.len()),
                            ));
                        }
                        face[k] = (i - 1) as u32;
                    }
                    faces.push(face);
                }
                Some(other) => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("unsupported OBJ element '{other}'"),
                    ));
                }
                None => {}
            }
        }
        TriangleMesh::new(vertices, faces).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_obj(&text, &path.display().to_string())
    }
}

fn derive_connectivity(
    vertex_count: usize,
    faces: &[[u32; 3]],
) -> (Vec<[u32; 2]>, Vec<Vec<u32>>) {
    let mut edges: Vec<[u32; 2]> = Vec::with_capacity(faces.len() * 3);
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            edges.push(if a < b { [a, b] } else { [b, a] });
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let mut neighbors = vec![Vec::new(); vertex_count];
    for &[a, b] in &edges {
        neighbors[a as usize].push(b);
        neighbors[b as usize].push(a);
    }
    for ns in &mut neighbors {
        ns.sort_unstable();
    }
    (edges, neighbors)
}
