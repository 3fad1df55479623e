//! Ray/triangle intersection and point-in-mesh queries.

use super::mesh::TriangleMesh;

const EPS: f64 = 1e-12;

/// Moller-Trumbore. Returns the ray parameter t (may be negative) where
/// `origin + t * dir` hits the triangle, or None for a miss or a ray
/// parallel to the triangle plane. `dir` need not be unit length.
pub fn ray_triangle(
    origin: &[f64; 3],
    dir: &[f64; 3],
    a: &[f64; 3],
    b: &[f64; 3],
    c: &[f64; 3],
) -> Option<f64> {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let p = cross(dir, &e2);
    let det = dot(&e1, &p);
    if det.abs() < EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = sub(origin, a);
    let u = dot(&s, &p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = cross(&s, &e1);
    let v = dot(dir, &q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(dot(&e2, &q) * inv)
}

/// Crossing-parity containment test for closed meshes. Casts along a fixed
/// direction chosen to avoid axis-aligned edge and face coincidences.
pub fn point_in_mesh(point: &[f64; 3], mesh: &TriangleMesh) -> bool {
    let dir = [0.577_215_664_901_532_9, 0.318_309_886_183_790_7, 0.754_877_666_246_692_9];
    let mut crossings = 0u32;
    for fi in 0..mesh.face_count() {
        let f = mesh.faces()[fi];
        let a = vec64(&mesh.vertices()[f[0] as usize]);
        let b = vec64(&mesh.vertices()[f[1] as usize]);
        let c = vec64(&mesh.vertices()[f[2] as usize]);
        if let Some(t) = ray_triangle(point, &dir, &a, &b, &c) {
            if t > EPS {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

fn vec64(v: &[f32; 3]) -> [f64; 3] {
    [v[0] as f64, v[1] as f64, v[2] as f64]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes::{make_box, make_icosphere};

    #[test]
    fn ray_hits_triangle_at_expected_depth() {
        let a = [-1.0, -1.0, 2.0];
        let b = [1.0, -1.0, 2.0];
        let c = [0.0, 1.0, 2.0];
        let t = ray_triangle(&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &a, &b, &c).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ray_misses_outside_barycentric_range() {
        let a = [-1.0, -1.0, 2.0];
        let b = [1.0, -1.0, 2.0];
        let c = [0.0, 1.0, 2.0];
        assert!(ray_triangle(&[5.0, 5.0, 0.0], &[0.0, 0.0, 1.0], &a, &b, &c).is_none());
    }

    #[test]
    fn parallel_ray_is_a_miss() {
        let a = [-1.0, -1.0, 2.0];
        let b = [1.0, -1.0, 2.0];
        let c = [0.0, 1.0, 2.0];
        assert!(ray_triangle(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &a, &b, &c).is_none());
    }

    #[test]
    fn unnormalized_direction_scales_t() {
        let a = [-1.0, -1.0, 2.0];
        let b = [1.0, -1.0, 2.0];
        let c = [0.0, 1.0, 2.0];
        let t = ray_triangle(&[0.0, 0.0, 0.0], &[0.0, 0.0, 2.0], &a, &b, &c).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_containment() {
        let m = make_box(1.0, 1.0, 1.0);
        assert!(point_in_mesh(&[0.0, 0.0, 0.0], &m));
        assert!(point_in_mesh(&[0.49, 0.49, 0.49], &m));
        assert!(!point_in_mesh(&[0.51, 0.0, 0.0], &m));
        assert!(!point_in_mesh(&[2.0, 2.0, 2.0], &m));
    }

    #[test]
    fn sphere_containment_matches_radius() {
        let m = make_icosphere(0.5, 2);
        assert!(point_in_mesh(&[0.0, 0.0, 0.0], &m));
        assert!(point_in_mesh(&[0.3, 0.0, 0.0], &m));
        assert!(!point_in_mesh(&[0.0, 0.55, 0.0], &m));
    }
}
