//! Pinhole cameras, projection, and plane-induced homographies.
//!
//! Conventions: camera frame is x right, y down, z forward (depth). Extrinsics
//! map world to camera: `X_c = R X_w + t`. Continuous image coordinates put
//! pixel (row r, col c) over the square [c, c+1) x [r, r+1), so its center is
//! (c + 0.5, r + 0.5) and intrinsics scale linearly under resolution changes.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

/// Depth below which a point counts as behind the camera.
pub const NEAR_PLANE: f64 = 1e-6;

// ── Small fixed-size linear algebra ──────────────────────────────────────

pub fn mat3_identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat3_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat3_det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn mat3_inv(a: &Mat3) -> Result<Mat3> {
    let det = mat3_det(a);
    if det.abs() < 1e-15 {
        return Err(Error::Geometry("singular 3x3 matrix".into()));
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // Cofactor expansion; note the (j, i) transpose for the adjugate.
            let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
            let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
            out[j][i] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) * inv_det;
        }
    }
    Ok(out)
}

pub fn vec3_sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn vec3_cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn vec3_dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn vec3_norm(a: &Vec3) -> f64 {
    vec3_dot(a, a).sqrt()
}

pub fn vec3_normalize(a: &Vec3) -> Result<Vec3> {
    let n = vec3_norm(a);
    if n < 1e-12 {
        return Err(Error::Geometry("cannot normalize zero vector".into()));
    }
    Ok([a[0] / n, a[1] / n, a[2] / n])
}

// ── Camera ───────────────────────────────────────────────────────────────

/// Result of projecting a world point through a camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    /// Continuous pixel coordinates and camera-frame depth.
    InFront { u: f64, v: f64, depth: f64 },
    /// The point sits at or behind the near plane.
    Behind,
}

/// Calibrated pinhole view: intrinsics, world-to-camera extrinsics, and the
/// image size the intrinsics are expressed in.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    pub k: Mat3,
    pub r: Mat3,
    pub t: Vec3,
    pub width: usize,
    pub height: usize,
}

impl CameraView {
    pub fn new(k: Mat3, r: Mat3, t: Vec3, width: usize, height: usize) -> Result<Self> {
        let cam = CameraView { k, r, t, width, height };
        cam.validate()?;
        Ok(cam)
    }

    fn validate(&self) -> Result<()> {
        let (fx, fy) = (self.k[0][0], self.k[1][1]);
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Geometry(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        let (cx, cy) = (self.k[0][2], self.k[1][2]);
        if cx < 0.0 || cx >= self.width as f64 || cy < 0.0 || cy >= self.height as f64 {
            return Err(Error::Geometry(format!(
                "principal point ({cx}, {cy}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let det = mat3_det(&self.r);
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::Geometry(format!(
                "extrinsic rotation determinant {det} != 1"
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Geometry("image size must be positive".into()));
        }
        Ok(())
    }

    /// Camera with identity extrinsics and a centered principal point.
    pub fn standard(focal: f64, width: usize, height: usize) -> Result<Self> {
        let k = [
            [focal, 0.0, width as f64 / 2.0],
            [0.0, focal, height as f64 / 2.0],
            [0.0, 0.0, 1.0],
        ];
        CameraView::new(k, mat3_identity(), [0.0; 3], width, height)
    }

    /// Camera at `eye` looking toward `target`, with `up` fixing the roll.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let z = vec3_normalize(&vec3_sub(&target, &eye))?;
        let x = vec3_normalize(&vec3_cross(&z, &up)).map_err(|_| {
            Error::Geometry("look_at: view direction parallel to up".into())
        })?;
        let y = vec3_cross(&z, &x);
        let r = [x, y, z];
        let rc = mat3_vec(&r, &eye);
        let t = [-rc[0], -rc[1], -rc[2]];
        let k = [
            [focal, 0.0, width as f64 / 2.0],
            [0.0, focal, height as f64 / 2.0],
            [0.0, 0.0, 1.0],
        ];
        CameraView::new(k, r, t, width, height)
    }

    pub fn fx(&self) -> f64 {
        self.k[0][0]
    }

    pub fn fy(&self) -> f64 {
        self.k[1][1]
    }

    pub fn cx(&self) -> f64 {
        self.k[0][2]
    }

    pub fn cy(&self) -> f64 {
        self.k[1][2]
    }

    /// Camera center in world coordinates, -Rᵀ t.
    pub fn center(&self) -> Vec3 {
        let rt = mat3_transpose(&self.r);
        let c = mat3_vec(&rt, &self.t);
        [-c[0], -c[1], -c[2]]
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        let rp = mat3_vec(&self.r, p);
        [rp[0] + self.t[0], rp[1] + self.t[1], rp[2] + self.t[2]]
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        let rt = mat3_transpose(&self.r);
        mat3_vec(&rt, &vec3_sub(p, &self.t))
    }

    /// Projects a world point to continuous pixel coordinates.
    pub fn project(&self, p: &Vec3) -> Projection {
        let c = self.world_to_camera(p);
        if c[2] <= NEAR_PLANE {
            return Projection::Behind;
        }
        Projection::InFront {
            u: self.fx() * c[0] / c[2] + self.cx(),
            v: self.fy() * c[1] / c[2] + self.cy(),
            depth: c[2],
        }
    }

    /// Inverse of `project`: pixel plus camera-frame depth to a world point.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let cam = [
            (u - self.cx()) / self.fx() * depth,
            (v - self.cy()) / self.fy() * depth,
            depth,
        ];
        self.camera_to_world(&cam)
    }

    /// Same pose with intrinsics and image size scaled by `1/divisor`
    /// (continuous coordinates scale linearly, so K scales linearly too).
    pub fn downscaled(&self, divisor: usize) -> Result<CameraView> {
        if divisor == 0 || self.width % divisor != 0 || self.height % divisor != 0 {
            return Err(Error::Geometry(format!(
                "image {}x{} not divisible by {divisor}",
                self.width, self.height
            )));
        }
        let s = 1.0 / divisor as f64;
        let k = [
            [self.k[0][0] * s, self.k[0][1] * s, self.k[0][2] * s],
            [0.0, self.k[1][1] * s, self.k[1][2] * s],
            [0.0, 0.0, 1.0],
        ];
        CameraView::new(k, self.r, self.t, self.width / divisor, self.height / divisor)
    }

    // ── Text format ──────────────────────────────────────────────────────

    /// Serializes as three lines: K row-major (9 numbers), [R|t] row-major
    /// (12 numbers), then image width and height.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let k = &self.k;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            k[0][0], k[0][1], k[0][2], k[1][0], k[1][1], k[1][2], k[2][0], k[2][1], k[2][2]
        );
        let (r, t) = (&self.r, &self.t);
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1],
            r[2][2], t[2]
        );
        let _ = writeln!(s, "{} {}", self.width, self.height);
        s
    }

    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_line = |entry: Option<(usize, &str)>, want: usize, what: &str| -> Result<Vec<f64>> {
            let (idx, line) = entry.ok_or_else(|| {
                Error::parse(path, 0, format!("missing {what} line"))
            })?;
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|w| {
                    w.parse::<f64>().map_err(|_| {
                        Error::parse(path, idx + 1, format!("bad number '{w}' in {what}"))
                    })
                })
                .collect::<Result<_>>()?;
            if nums.len() != want {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("{what} wants {want} numbers, got {}", nums.len()),
                ));
            }
            Ok(nums)
        };
        let kv = parse_line(lines.next(), 9, "intrinsics")?;
        let rt = parse_line(lines.next(), 12, "extrinsics")?;
        let wh = parse_line(lines.next(), 2, "image size")?;
        let k = [
            [kv[0], kv[1], kv[2]],
            [kv[3], kv[4], kv[5]],
            [kv[6], kv[7], kv[8]],
        ];
        let r = [
            [rt[0], rt[1], rt[2]],
            [rt[4], rt[5], rt[6]],
            [rt[8], rt[9], rt[10]],
        ];
        let t = [rt[3], rt[7], rt[11]];
        CameraView::new(k, r, t, wh[0] as usize, wh[1] as usize)
            .map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

// ── Plane-sweep homography ───────────────────────────────────────────────

/// Homography mapping `dst` pixels onto `src` pixels induced by the
/// fronto-parallel plane at `depth` in the `dst` camera frame:
/// `H = K_src (R_rel + t_rel nᵀ / depth) K_dst⁻¹` with `n = (0,0,1)`.
pub fn plane_homography(src: &CameraView, dst: &CameraView, depth: f64) -> Result<Mat3> {
    if depth <= 0.0 {
        return Err(Error::BadArgument {
            op: "plane_homography",
            reason: format!("depth must be positive, got {depth}"),
        });
    }
    let r_rel = mat3_mul(&src.r, &mat3_transpose(&dst.r));
    let rt = mat3_vec(&r_rel, &dst.t);
    let t_rel = [src.t[0] - rt[0], src.t[1] - rt[1], src.t[2] - rt[2]];
    let mut mid = r_rel;
    for i in 0..3 {
        // t_rel nᵀ / depth adds into the z column only.
        mid[i][2] += t_rel[i] / depth;
    }
    let k_dst_inv = mat3_inv(&dst.k)?;
    Ok(mat3_mul(&src.k, &mat3_mul(&mid, &k_dst_inv)))
}

/// Applies a homography to continuous pixel coordinates.
pub fn apply_homography(h: &Mat3, u: f64, v: f64) -> (f64, f64) {
    let p = mat3_vec(h, &[u, v, 1.0]);
    let w = if p[2].abs() < 1e-12 {
        1e-12_f64.copysign(p[2])
    } else {
        p[2]
    };
    (p[0] / w, p[1] / w)
}
