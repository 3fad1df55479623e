//! Synthetic multi-view dataset: primitive scenes rendered from a camera
//! ring, written to disk with everything training needs (images, cameras,
//! ground-truth depth, occupancy, and surface samples).

use super::config::{DatasetConfig, GridConfig, RunConfig, SceneKind};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geom::{
    make_box, make_cylinder, make_icosphere, point_in_mesh, sample_surface, CameraView,
    PointSample, TriangleMesh,
};
use crate::mvs::FEATURE_STRIDE;
use crate::render::{rasterize_depth, render_normal_image, DepthMap};
use crate::voxel::{GridFrame, GridGeometry, OccupancyGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::{Path, PathBuf};

/// Writes a float image tensor [C,H,W] as an `.imgf` file.
pub fn save_image(image: &Tensor<f32>, path: &Path) -> Result<()> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::BadShape {
            op: "save_image",
            shape: s.to_vec(),
            reason: "expected [C,H,W]".into(),
        });
    }
    let mut bytes = Vec::with_capacity(16 + 4 * image.numel());
    bytes.extend_from_slice(b"IMGF");
    for d in s {
        bytes.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in image.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads an `.imgf` float image written by `save_image`.
pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let name = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(name.clone(), e))?;
    if bytes.len() < 16 {
        return Err(Error::format(name, "truncated header"));
    }
    if &bytes[0..4] != b"IMGF" {
        return Err(Error::format(
            name,
            format!("bad magic {:?}, expected \"IMGF\"", &bytes[0..4]),
        ));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let shape = vec![u32_at(4), u32_at(8), u32_at(12)];
    let n: usize = shape.iter().product();
    if bytes.len() != 16 + 4 * n {
        return Err(Error::format(
            name,
            format!("expected {} value bytes, found {}", 4 * n, bytes.len() - 16),
        ));
    }
    let data = (0..n)
        .map(|i| f32::from_le_bytes(bytes[16 + 4 * i..20 + 4 * i].try_into().unwrap()))
        .collect();
    Tensor::new(shape, data)
}

/// Writes surface samples (position and unit normal per point) as a
/// `.pnts` file.
pub fn save_points(points: &[PointSample], path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 24 * points.len());
    bytes.extend_from_slice(b"PNTS");
    bytes.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        for v in p.position.iter().chain(&p.normal) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a `.pnts` surface-sample file written by `save_points`.
pub fn load_points(path: &Path) -> Result<Vec<PointSample>> {
    let name = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(name.clone(), e))?;
    if bytes.len() < 8 {
        return Err(Error::format(name, "truncated header"));
    }
    if &bytes[0..4] != b"PNTS" {
        return Err(Error::format(
            name,
            format!("bad magic {:?}, expected \"PNTS\"", &bytes[0..4]),
        ));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 24 * count {
        return Err(Error::format(
            name,
            format!("expected {} point bytes, found {}", 24 * count, bytes.len() - 8),
        ));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    Ok((0..count)
        .map(|i| {
            let o = 8 + 24 * i;
            PointSample {
                position: [f(o), f(o + 4), f(o + 8)],
                normal: [f(o + 12), f(o + 16), f(o + 20)],
            }
        })
        .collect())
}

/// Rasterizes per-voxel occupancy of a multi-part solid: a voxel is
/// occupied when its center lies inside any part. For world grids the
/// centers are used directly; for camera-local grids they are first mapped
/// into world coordinates through the camera.
pub fn occupancy_from_parts(
    parts: &[TriangleMesh],
    geometry: &GridGeometry,
    frame: GridFrame,
    cam: Option<&CameraView>,
) -> Result<OccupancyGrid> {
    if parts.is_empty() {
        return Err(Error::Geometry("occupancy needs at least one part".into()));
    }
    if (frame == GridFrame::CameraLocal) != cam.is_some() {
        return Err(Error::Geometry(
            "camera-local occupancy needs a camera; world occupancy takes none".into(),
        ));
    }
    let [dx, dy, dz] = geometry.dims;
    let mut values = Vec::with_capacity(geometry.voxel_count());
    for iz in 0..dz {
        for iy in 0..dy {
            for ix in 0..dx {
                let mut center = geometry.voxel_center(ix, iy, iz);
                if let Some(cam) = cam {
                    center = cam.camera_to_world(&center);
                }
                let inside = parts.iter().any(|p| point_in_mesh(&center, p));
                values.push(if inside { 1.0 } else { 0.0 });
            }
        }
    }
    OccupancyGrid::new(*geometry, frame, values)
}

/// One generated object: the render mesh plus the solid parts it was
/// assembled from (kept separate so inside tests stay parity-safe).
pub struct SceneSolid {
    pub kind: SceneKind,
    pub mesh: TriangleMesh,
    pub parts: Vec<TriangleMesh>,
}

fn concat_meshes(parts: &[TriangleMesh]) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for p in parts {
        let base = vertices.len() as u32;
        vertices.extend_from_slice(p.vertices());
        faces.extend(p.faces().iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }
    TriangleMesh::new(vertices, faces)
}

fn translated(mesh: &TriangleMesh, offset: [f32; 3]) -> Result<TriangleMesh> {
    let verts = mesh
        .vertices()
        .iter()
        .map(|v| [v[0] + offset[0], v[1] + offset[1], v[2] + offset[2]])
        .collect();
    mesh.with_vertices(verts)
}

/// Builds one primitive solid with dimensions drawn from the rng.
pub fn make_scene_solid(kind: SceneKind, rng: &mut ChaCha8Rng) -> Result<SceneSolid> {
    let parts: Vec<TriangleMesh> = match kind {
        SceneKind::Box => vec![make_box(
            rng.gen_range(0.16..0.3),
            rng.gen_range(0.16..0.3),
            rng.gen_range(0.16..0.3),
        )],
        SceneKind::Icosphere => vec![make_icosphere(rng.gen_range(0.1..0.16), 2)],
        SceneKind::Cylinder => vec![make_cylinder(
            rng.gen_range(0.08..0.13),
            rng.gen_range(0.16..0.28),
            12,
        )?],
        SceneKind::TwoBox => {
            let a = make_box(
                rng.gen_range(0.12..0.18),
                rng.gen_range(0.12..0.18),
                rng.gen_range(0.12..0.18),
            );
            let b = make_box(
                rng.gen_range(0.08..0.12),
                rng.gen_range(0.08..0.12),
                rng.gen_range(0.08..0.12),
            );
            // Shift each box along x so the pair stays disjoint and the
            // composite stays centered near the origin.
            vec![translated(&a, [-0.06, 0.0, 0.0])?, translated(&b, [0.1, 0.0, 0.0])?]
        }
    };
    let mesh = concat_meshes(&parts)?;
    Ok(SceneSolid { kind, mesh, parts })
}

/// Deterministic camera ring: cameras spread in azimuth with jittered
/// elevation, all at the configured radius looking at the origin.
pub fn camera_ring(cfg: &DatasetConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CameraView>> {
    let n = cfg.views;
    let focal = cfg.focal_scale * cfg.image_size as f64;
    (0..n)
        .map(|v| {
            let azimuth = 2.0 * std::f64::consts::PI * v as f64 / n as f64
                + rng.gen_range(-0.2..0.2);
            let elevation = rng.gen_range(-0.25..0.45);
            let (se, ce) = elevation.sin_cos();
            let (sa, ca) = azimuth.sin_cos();
            let eye = [
                cfg.camera_radius * ce * sa,
                cfg.camera_radius * se,
                -cfg.camera_radius * ce * ca,
            ];
            CameraView::look_at(
                eye,
                [0.0, 0.0, 0.0],
                [0.0, -1.0, 0.0],
                focal,
                cfg.image_size,
                cfg.image_size,
            )
        })
        .collect()
}

/// Manifest entry for one scene directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    pub kind: SceneKind,
    pub views: usize,
}

/// Dataset manifest written alongside the scene directories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub image_size: usize,
    pub scenes: Vec<SceneEntry>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn scene_seed(seed: u64, index: usize) -> u64 {
    // Splitmix-style decorrelation so neighboring scenes share nothing.
    let mut z = seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates the dataset under `out_dir` and returns the manifest. Every
/// artifact is a pure function of the config and seed.
pub fn generate_dataset(cfg: &RunConfig, seed: u64, out_dir: &Path) -> Result<Manifest> {
    let d = &cfg.dataset;
    let world = cfg.grid.world_geometry()?;
    let local = cfg.grid.local_geometry()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let mut scenes = Vec::with_capacity(d.scenes);
    for i in 0..d.scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(seed, i));
        let kind = d.kinds[i % d.kinds.len()];
        let solid = make_scene_solid(kind, &mut rng)?;
        let cams = camera_ring(d, &mut rng)?;

        let name = format!("scene_{i:03}");
        let dir = out_dir.join(&name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

        solid.mesh.save_obj(&dir.join("mesh.obj"))?;
        for (v, cam) in cams.iter().enumerate() {
            cam.save(&dir.join(format!("view_{v}.cam")))?;
            let image = render_normal_image(&solid.mesh, cam);
            save_image(&image, &dir.join(format!("view_{v}.imgf")))?;
            let quarter = cam.downscaled(FEATURE_STRIDE)?;
            rasterize_depth(&solid.mesh, &quarter).save(&dir.join(format!("view_{v}.dpth")))?;
            let local_occ =
                occupancy_from_parts(&solid.parts, &local, GridFrame::CameraLocal, Some(cam))?;
            local_occ.save(&dir.join(format!("view_{v}.voxp")))?;
        }
        occupancy_from_parts(&solid.parts, &world, GridFrame::World, None)?
            .save(&dir.join("occupancy.voxp"))?;
        let samples = sample_surface(&solid.mesh, d.gt_samples, scene_seed(seed, i) ^ 0x5AA5)?;
        save_points(&samples, &dir.join("samples.pnts"))?;

        scenes.push(SceneEntry {
            name,
            kind,
            views: d.views,
        });
    }

    let manifest = Manifest {
        seed,
        image_size: d.image_size,
        scenes,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// One view loaded back from disk.
pub struct ViewData {
    pub cam: CameraView,
    pub image: Tensor<f32>,
    pub gt_depth: DepthMap,
}

/// One scene loaded back from disk.
pub struct Scene {
    pub name: String,
    pub dir: PathBuf,
    pub views: Vec<ViewData>,
    pub gt_mesh: TriangleMesh,
    pub gt_occupancy: OccupancyGrid,
    pub gt_samples: Vec<PointSample>,
}

impl Scene {
    pub fn load(dir: &Path, views: usize) -> Result<Self> {
        let mut view_data = Vec::with_capacity(views);
        for v in 0..views {
            view_data.push(ViewData {
                cam: CameraView::load(&dir.join(format!("view_{v}.cam")))?,
                image: load_image(&dir.join(format!("view_{v}.imgf")))?,
                gt_depth: DepthMap::load(&dir.join(format!("view_{v}.dpth")))?,
            });
        }
        Ok(Scene {
            name: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string()),
            dir: dir.to_path_buf(),
            views: view_data,
            gt_mesh: TriangleMesh::load_obj(&dir.join("mesh.obj"))?,
            gt_occupancy: OccupancyGrid::load(&dir.join("occupancy.voxp"))?,
            gt_samples: load_points(&dir.join("samples.pnts"))?,
        })
    }

    /// Ground-truth sample positions as the point-loss tensors expect.
    pub fn gt_positions(&self) -> Vec<[f64; 3]> {
        self.gt_samples
            .iter()
            .map(|p| [p.position[0] as f64, p.position[1] as f64, p.position[2] as f64])
            .collect()
    }
}

/// Loads every scene listed in a dataset manifest, truncating each to
/// `views` views when an override is given.
pub fn load_dataset(dir: &Path, views_override: Option<usize>) -> Result<Vec<Scene>> {
    let manifest = Manifest::load(&dir.join("manifest.json"))?;
    manifest
        .scenes
        .iter()
        .map(|e| {
            let views = match views_override {
                Some(v) if v <= e.views => v,
                Some(v) => {
                    return Err(Error::Config(format!(
                        "view override {v} exceeds the {} views stored for {}",
                        e.views, e.name
                    )))
                }
                None => e.views,
            };
            Scene::load(&dir.join(&e.name), views)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Projection;

    fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().display().to_string();
                    out.push((rel, std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    fn tiny_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dataset.scenes = 2;
        cfg.dataset.views = 2;
        cfg.dataset.image_size = 16;
        cfg.dataset.gt_samples = 32;
        cfg.grid.dims = [4, 4, 4];
        cfg.grid.spacing = 0.15;
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn image_and_point_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::new(vec![3, 2, 2], (0..12).map(|i| i as f32 * 0.5).collect()).unwrap();
        let ipath = dir.path().join("a.imgf");
        save_image(&img, &ipath).unwrap();
        assert_eq!(load_image(&ipath).unwrap(), img);

        let pts = vec![
            PointSample {
                position: [0.1, 0.2, 0.3],
                normal: [0.0, 0.0, 1.0],
            },
            PointSample {
                position: [-0.4, 0.5, -0.6],
                normal: [1.0, 0.0, 0.0],
            },
        ];
        let ppath = dir.path().join("a.pnts");
        save_points(&pts, &ppath).unwrap();
        assert_eq!(load_points(&ppath).unwrap(), pts);
    }

    #[test]
    fn corrupt_files_are_reported_with_their_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.imgf");
        std::fs::write(&path, b"IMGX").unwrap();
        let err = load_image(&path).unwrap_err().to_string();
        assert!(err.contains("bad.imgf"), "{err}");
        let path = dir.path().join("bad.pnts");
        std::fs::write(&path, b"PNTS\x02\x00\x00\x00").unwrap();
        let err = load_points(&path).unwrap_err().to_string();
        assert!(err.contains("point bytes"), "{err}");
    }

    #[test]
    fn unit_box_occupancy_fills_the_analytic_voxel_count() {
        let mesh = make_box(1.0, 1.0, 1.0);
        let geom = GridGeometry::new([16, 16, 16], [-1.0, -1.0, -1.0], 0.125).unwrap();
        let grid =
            occupancy_from_parts(&[mesh], &geom, GridFrame::World, None).unwrap();
        let filled = grid.values().iter().filter(|&&v| v > 0.5).count();
        assert_eq!(filled, 512);
    }

    #[test]
    fn two_box_parts_stay_disjoint_so_parity_tests_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..8 {
            let solid = make_scene_solid(SceneKind::TwoBox, &mut rng).unwrap();
            let [a, b] = [&solid.parts[0], &solid.parts[1]];
            let (amin, amax) = a.bounds();
            let (bmin, bmax) = b.bounds();
            assert!(amax[0] < bmin[0], "{amax:?} vs {bmin:?}");
            let inside_union = |p: &[f64; 3]| solid.parts.iter().any(|m| point_in_mesh(p, m));
            let ca = [
                ((amin[0] + amax[0]) / 2.0) as f64,
                ((amin[1] + amax[1]) / 2.0) as f64,
                ((amin[2] + amax[2]) / 2.0) as f64,
            ];
            let cb = [
                ((bmin[0] + bmax[0]) / 2.0) as f64,
                ((bmin[1] + bmax[1]) / 2.0) as f64,
                ((bmin[2] + bmax[2]) / 2.0) as f64,
            ];
            assert!(inside_union(&ca) && inside_union(&cb));
        }
    }

    #[test]
    fn cameras_sit_on_the_ring_and_see_the_origin() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cams = camera_ring(&cfg.dataset, &mut rng).unwrap();
        assert_eq!(cams.len(), cfg.dataset.views);
        for cam in &cams {
            let c = cam.center();
            let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            assert!((r - cfg.dataset.camera_radius).abs() < 1e-9);
            match cam.project(&[0.0, 0.0, 0.0]) {
                Projection::InFront { u, v, depth } => {
                    assert!((depth - cfg.dataset.camera_radius).abs() < 1e-9);
                    assert!((u - cam.cx()).abs() < 1e-6);
                    assert!((v - cam.cy()).abs() < 1e-6);
                }
                Projection::Behind => panic!("origin behind camera"),
            }
        }
    }

    #[test]
    fn same_seed_gives_a_byte_identical_dataset() {
        let cfg = tiny_config();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, 11, d1.path()).unwrap();
        generate_dataset(&cfg, 11, d2.path()).unwrap();
        assert_eq!(read_tree(d1.path()), read_tree(d2.path()));

        let d3 = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, 12, d3.path()).unwrap();
        assert_ne!(read_tree(d1.path()), read_tree(d3.path()));
    }

    #[test]
    fn generated_scenes_load_back_consistently() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(&cfg, 5, dir.path()).unwrap();
        assert_eq!(manifest.scenes.len(), 2);
        assert!(manifest.scenes.iter().all(|s| s.views == 2));

        let scenes = load_dataset(dir.path(), None).unwrap();
        assert_eq!(scenes.len(), 2);
        for scene in &scenes {
            assert_eq!(scene.views.len(), 2);
            assert_eq!(scene.gt_samples.len(), 32);
            for view in &scene.views {
                assert_eq!(view.image.shape(), [3, 16, 16]);
                assert_eq!(view.gt_depth.width(), 4);
                let redepth = rasterize_depth(
                    &scene.gt_mesh,
                    &view.cam.downscaled(FEATURE_STRIDE).unwrap(),
                );
                assert_eq!(redepth.values(), view.gt_depth.values());
            }
        }

        let truncated = load_dataset(dir.path(), Some(1)).unwrap();
        assert_eq!(truncated[0].views.len(), 1);
        assert!(load_dataset(dir.path(), Some(3)).is_err());
    }
}
