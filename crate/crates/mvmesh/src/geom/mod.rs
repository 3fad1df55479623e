//! Cameras, triangle meshes, procedural shapes, intersection queries, and
//! surface sampling.

pub mod camera;
pub mod intersect;
pub mod mesh;
pub mod sampling;
pub mod shapes;

pub use camera::{
    apply_homography, mat3_det, mat3_identity, mat3_inv, mat3_mul, mat3_transpose, mat3_vec,
    plane_homography, vec3_cross, vec3_dot, vec3_norm, vec3_normalize, vec3_sub, CameraView,
    Mat3, Projection, Vec3, NEAR_PLANE,
};
pub use intersect::{point_in_mesh, ray_triangle};
pub use mesh::TriangleMesh;
pub use sampling::{sample_surface, sample_surface_refs, PointSample, SurfaceRef};
pub use shapes::{make_box, make_cylinder, make_icosphere};
