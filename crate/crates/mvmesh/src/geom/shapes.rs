//! Procedural primitives with outward winding.

use super::mesh::TriangleMesh;
use crate::error::Result;
use std::collections::HashMap;

/// Axis-aligned box centered at the origin.
pub fn make_box(sx: f32, sy: f32, sz: f32) -> TriangleMesh {
    let (hx, hy, hz) = (sx * 0.5, sy * 0.5, sz * 0.5);
    let vertices = vec![
        [-hx, -hy, -hz],
        [hx, -hy, -hz],
        [-hx, hy, -hz],
        [hx, hy, -hz],
        [-hx, -hy, hz],
        [hx, -hy, hz],
        [-hx, hy, hz],
        [hx, hy, hz],
    ];
    let faces = vec![
        // -z
        [0, 2, 1],
        [1, 2, 3],
        // +z
        [4, 5, 6],
        [5, 7, 6],
        // -y
        [0, 1, 4],
        [1, 5, 4],
        // +y
        [2, 6, 3],
        [3, 6, 7],
        // -x
        [0, 4, 2],
        [2, 4, 6],
        // +x
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriangleMesh::new(vertices, faces).expect("box construction is well formed")
}

/// Capped cylinder along the z axis, centered at the origin.
pub fn make_cylinder(radius: f32, height: f32, segments: usize) -> Result<TriangleMesh> {
    if segments < 3 {
        return Err(crate::Error::Geometry(format!(
            "cylinder needs at least 3 segments, got {segments}"
        )));
    }
    let h = height * 0.5;
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for ring in [-h, h] {
        for i in 0..segments {
            let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            vertices.push([
                radius * a.cos() as f32,
                radius * a.sin() as f32,
                ring,
            ]);
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push([0.0, 0.0, -h]);
    let top_center = vertices.len() as u32;
    vertices.push([0.0, 0.0, h]);

    let n = segments as u32;
    let mut faces = Vec::with_capacity(4 * segments);
    for i in 0..n {
        let j = (i + 1) % n;
        // Side quad between bottom ring (0..n) and top ring (n..2n).
        faces.push([i, j, n + i]);
        faces.push([j, n + j, n + i]);
        // Bottom cap faces -z, so wind clockwise seen from +z.
        faces.push([bottom_center, j, i]);
        // Top cap faces +z.
        faces.push([top_center, n + i, n + j]);
    }
    TriangleMesh::new(vertices, faces)
}

/// Icosphere: regular icosahedron subdivided `subdivisions` times, vertices
/// projected to the given radius.
pub fn make_icosphere(radius: f32, subdivisions: usize) -> TriangleMesh {
    // Golden-ratio icosahedron.
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let base: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut verts: Vec<[f64; 3]> = base
        .into_iter()
        .map(|v| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        })
        .collect();

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for (k, (a, b)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                .into_iter()
                .enumerate()
            {
                let key = if a < b { (a, b) } else { (b, a) };
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let (va, vb) = (verts[a as usize], verts[b as usize]);
                    let m = [
                        (va[0] + vb[0]) * 0.5,
                        (va[1] + vb[1]) * 0.5,
                        (va[2] + vb[2]) * 0.5,
                    ];
                    let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                    verts.push([m[0] / n, m[1] / n, m[2] / n]);
                    (verts.len() - 1) as u32
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }

    let vertices = verts
        .into_iter()
        .map(|v| {
            [
                (v[0] * radius as f64) as f32,
                (v[1] * radius as f64) as f32,
                (v[2] * radius as f64) as f32,
            ]
        })
        .collect();
    TriangleMesh::new(vertices, faces).expect("icosphere construction is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_is_closed_with_positive_volume() {
        let m = make_box(1.0, 1.0, 1.0);
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.face_count(), 12);
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn box_respects_extents() {
        let m = make_box(2.0, 4.0, 6.0);
        let (lo, hi) = m.bounds();
        assert_eq!(lo, [-1.0, -2.0, -3.0]);
        assert_eq!(hi, [1.0, 2.0, 3.0]);
        assert!((m.signed_volume() - 48.0).abs() < 1e-4);
    }

    #[test]
    fn cylinder_is_closed_with_near_exact_volume() {
        let m = make_cylinder(0.5, 2.0, 64).unwrap();
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
        // Inscribed prism volume approaches pi r^2 h from below.
        let exact = std::f64::consts::PI * 0.25 * 2.0;
        let vol = m.signed_volume();
        assert!(vol > 0.95 * exact && vol < exact, "{vol} vs {exact}");
    }

    #[test]
    fn cylinder_rejects_too_few_segments() {
        assert!(make_cylinder(1.0, 1.0, 2).is_err());
    }

    #[test]
    fn icosphere_counts_follow_subdivision() {
        // F = 20 * 4^s, closed, Euler characteristic 2.
        for s in 0..3 {
            let m = make_icosphere(1.0, s);
            assert_eq!(m.face_count(), 20 << (2 * s));
            assert!(m.is_closed());
            assert_eq!(m.euler_characteristic(), 2);
        }
        assert_eq!(make_icosphere(1.0, 0).vertex_count(), 12);
        assert_eq!(make_icosphere(1.0, 1).vertex_count(), 42);
        assert_eq!(make_icosphere(1.0, 2).vertex_count(), 162);
    }

    #[test]
    fn icosphere_vertices_sit_on_radius() {
        let m = make_icosphere(0.5, 2);
        for v in m.vertices() {
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((r - 0.5).abs() < 1e-5);
        }
        assert!(m.signed_volume() > 0.0);
    }
}
