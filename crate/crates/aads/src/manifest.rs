//! Dataset manifests: a JSON index tying view rasters, cameras, the scene
//! point cloud, and optional lane/bank files together, plus a generator for
//! the bundled synthetic demo dataset every end-to-end test runs on.

use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::formats::{self, ViewCamera};
use crate::ply::{self, CloudPoint};
use crate::raster::ViewSample;
use crate::scene::{Albedo, PrimitiveKind, SceneSpec, ScenePrimitive};
use crate::traffic::{
    AgentClass, Lane, LaneMap, Trajectory, TrajectoryRecord, read_lane_map, read_trajectory,
    write_lane_map, write_trajectory,
};

/// One view's file references, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestView {
    pub image: String,
    pub depth: String,
    pub labels: String,
    pub camera: String,
}

/// The dataset index. All paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub views: Vec<ManifestView>,
    pub cloud: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lanes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<String>,
}

/// A fully loaded dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    /// Directory the manifest lives in; all paths resolve against it.
    pub root: PathBuf,
    pub views: Vec<ViewSample>,
    pub cloud: Vec<CloudPoint>,
    pub lanes: Option<LaneMap>,
    pub bank: Option<Trajectory>,
}

impl Dataset {
    /// Reads and validates everything the manifest references: files must
    /// exist and parse, and every view must share raster dimensions.
    pub fn load(manifest_path: &Path) -> Result<Dataset> {
        let manifest: Manifest = formats::read_json(manifest_path)?;
        if manifest.views.is_empty() {
            return Err(Error::parse(manifest_path, "manifest lists no views"));
        }
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut views = Vec::with_capacity(manifest.views.len());
        for (i, v) in manifest.views.iter().enumerate() {
            let image = formats::read_image(&root.join(&v.image))?;
            let depth = formats::read_depth(&root.join(&v.depth))?;
            let labels = formats::read_labels(&root.join(&v.labels))?;
            let camera = formats::read_camera(&root.join(&v.camera))?;
            let view = ViewSample::new(image, depth, labels, camera.intrinsics, camera.pose)
                .map_err(|e| Error::parse(manifest_path, format!("view {i}: {e}")))?;
            views.push(view);
        }
        let (w, h) = (views[0].image.width(), views[0].image.height());
        for (i, v) in views.iter().enumerate() {
            if v.image.width() != w || v.image.height() != h {
                return Err(Error::parse(
                    manifest_path,
                    format!(
                        "view {i} is {}x{}, expected the shared {w}x{h}",
                        v.image.width(),
                        v.image.height()
                    ),
                ));
            }
        }
        let cloud = ply::read_point_cloud(&root.join(&manifest.cloud))?;
        let lanes = manifest
            .lanes
            .as_ref()
            .map(|p| read_lane_map(&root.join(p)))
            .transpose()?;
        let bank = manifest
            .bank
            .as_ref()
            .map(|p| read_trajectory(&root.join(p)))
            .transpose()?;
        Ok(Dataset { manifest, root, views, cloud, lanes, bank })
    }
}

// ---------------------------------------------------------------------------
// demo dataset

/// Classes the demo pipeline treats as movable (parked cars in the captured
/// views, simulated agents in the output).
pub const DEMO_MOVABLE_CLASSES: [u16; 3] = [10, 11, 12];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoOptions {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Scene point-cloud sampling spacing, meters.
    pub cloud_spacing: f64,
    pub reference_count: usize,
    pub target_count: usize,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            width: 160,
            height: 120,
            seed: 7,
            cloud_spacing: 0.15,
            reference_count: 4,
            target_count: 2,
        }
    }
}

/// Paths produced by [`write_demo_dataset`].
#[derive(Debug, Clone)]
pub struct DemoDataset {
    pub manifest: PathBuf,
    pub scene: PathBuf,
    pub targets: Vec<PathBuf>,
}

/// The demo world: a checkerboard street flanked by walls and buildings,
/// one sphere prop, and two parked cars (class 10) that the pipeline should
/// remove. Ground is z = 0, the road runs along +x.
pub fn demo_scene() -> SceneSpec {
    let solid = |color: [f64; 3]| Albedo::Solid { color };
    SceneSpec {
        primitives: vec![
            ScenePrimitive {
                kind: PrimitiveKind::Plane {
                    origin: [-10.0, -12.0, 0.0],
                    edge_u: [70.0, 0.0, 0.0],
                    edge_v: [0.0, 24.0, 0.0],
                },
                albedo: Albedo::Checker { a: [0.46, 0.46, 0.48], b: [0.28, 0.28, 0.30], scale: 2.0 },
                class_id: 1,
            },
            // Tall canyon walls and end caps close the world so no camera
            // ray or LiDAR beam escapes to the sky.
            ScenePrimitive {
                kind: PrimitiveKind::Plane {
                    origin: [-10.0, 12.0, 0.0],
                    edge_u: [70.0, 0.0, 0.0],
                    edge_v: [0.0, 0.0, 30.0],
                },
                albedo: Albedo::Checker { a: [0.75, 0.70, 0.60], b: [0.65, 0.60, 0.52], scale: 4.0 },
                class_id: 2,
            },
            ScenePrimitive {
                kind: PrimitiveKind::Plane {
                    origin: [-10.0, -12.0, 0.0],
                    edge_u: [70.0, 0.0, 0.0],
                    edge_v: [0.0, 0.0, 30.0],
                },
                albedo: Albedo::Checker { a: [0.58, 0.64, 0.70], b: [0.48, 0.54, 0.62], scale: 4.0 },
                class_id: 3,
            },
            ScenePrimitive {
                kind: PrimitiveKind::Plane {
                    origin: [60.0, -12.0, 0.0],
                    edge_u: [0.0, 24.0, 0.0],
                    edge_v: [0.0, 0.0, 30.0],
                },
                albedo: Albedo::Checker { a: [0.62, 0.62, 0.68], b: [0.52, 0.52, 0.58], scale: 4.0 },
                class_id: 6,
            },
            ScenePrimitive {
                kind: PrimitiveKind::Plane {
                    origin: [-10.0, -12.0, 0.0],
                    edge_u: [0.0, 24.0, 0.0],
                    edge_v: [0.0, 0.0, 30.0],
                },
                albedo: Albedo::Solid { color: [0.55, 0.55, 0.6] },
                class_id: 7,
            },
            ScenePrimitive {
                kind: PrimitiveKind::Box { center: [14.0, 9.8, 1.5], size: [6.0, 3.0, 3.0], yaw: 0.0 },
                albedo: solid([0.78, 0.48, 0.40]),
                class_id: 4,
            },
            ScenePrimitive {
                kind: PrimitiveKind::Box { center: [30.0, -9.6, 2.0], size: [8.0, 3.0, 4.0], yaw: 0.15 },
                albedo: solid([0.48, 0.66, 0.48]),
                class_id: 4,
            },
            ScenePrimitive {
                kind: PrimitiveKind::Sphere { center: [22.0, 9.0, 1.0], radius: 1.0 },
                albedo: solid([0.88, 0.82, 0.32]),
                class_id: 5,
            },
            ScenePrimitive {
                kind: PrimitiveKind::Box { center: [15.0, -5.25, 0.75], size: [4.2, 1.8, 1.5], yaw: 0.0 },
                albedo: solid([0.80, 0.12, 0.10]),
                class_id: 10,
            },
            ScenePrimitive {
                kind: PrimitiveKind::Box {
                    center: [24.0, 5.25, 0.75],
                    size: [4.2, 1.8, 1.5],
                    yaw: std::f64::consts::PI,
                },
                albedo: solid([0.12, 0.25, 0.75]),
                class_id: 10,
            },
        ],
    }
}

/// Four straight lanes along +x (Fig. 4-style road): the two right lanes
/// run with +x, the two left lanes against it.
pub fn demo_lanes() -> LaneMap {
    let lane = |y: f64, direction: i8| Lane {
        centerline: vec![[-5.0, y], [55.0, y]],
        width: 3.5,
        direction,
    };
    LaneMap {
        lanes: vec![
            lane(-5.25, 1),
            lane(-1.75, 1),
            lane(1.75, -1),
            lane(5.25, -1),
        ],
    }
}

/// Synthesizes a "recorded" trajectory log whose finite differences form
/// the demo velocity bank: car speeds from a two-mode mixture, cyclist and
/// pedestrian speeds from single Gaussians, both travel directions.
pub fn demo_bank_trajectory(seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x42414e4b); // "BANK"
    let dt = 0.1;
    let frames = 25u64;
    let mut records = Vec::new();
    let mut agent_id = 0u64;
    let car_slow = Normal::new(8.0, 1.0).unwrap();
    let car_fast = Normal::new(13.0, 1.2).unwrap();
    let cyclist = Normal::new(4.5, 0.7).unwrap();
    let pedestrian = Normal::new(1.3, 0.25).unwrap();
    let wiggle = Normal::new(0.0, 0.08).unwrap();
    let mut push_agent = |rng: &mut ChaCha8Rng, class: AgentClass, base_speed: f64| {
        let dir = if agent_id.is_multiple_of(2) { 1.0 } else { -1.0 };
        let speed = base_speed.clamp(0.2, class.max_speed() - 0.5);
        let mut position = Vector2::new(agent_id as f64 * 2.0 - 20.0, rng.gen_range(-7.0..7.0));
        for frame in 0..frames {
            let velocity = Vector2::new(
                dir * (speed + wiggle.sample(rng)),
                0.3 * wiggle.sample(rng),
            );
            records.push(TrajectoryRecord {
                frame_id: frame,
                agent_id,
                class,
                position,
                heading: if dir > 0.0 { 0.0 } else { std::f64::consts::PI },
                velocity,
            });
            position += velocity * dt;
        }
        agent_id += 1;
    };
    for i in 0..20 {
        let speed = if i % 5 < 3 {
            car_slow.sample(&mut rng)
        } else {
            car_fast.sample(&mut rng)
        };
        push_agent(&mut rng, AgentClass::Car, speed);
    }
    for _ in 0..8 {
        let s = cyclist.sample(&mut rng);
        push_agent(&mut rng, AgentClass::Cyclist, s);
    }
    for _ in 0..8 {
        let s = pedestrian.sample(&mut rng);
        push_agent(&mut rng, AgentClass::Pedestrian, s);
    }
    Trajectory { records, dt }
}

/// Reference and target camera rigs: a forward-facing row of cameras one
/// meter apart at road center, targets offset half a meter (the last target
/// extrapolates past the rig).
pub fn demo_cameras(opts: &DemoOptions) -> Result<(Vec<ViewCamera>, Vec<ViewCamera>)> {
    let intrinsics = CameraIntrinsics::new(
        0.8 * opts.width as f64,
        0.8 * opts.width as f64,
        (opts.width as f64 - 1.0) / 2.0,
        (opts.height as f64 - 1.0) / 2.0,
        opts.width,
        opts.height,
    )?;
    let rig_pose = |x: f64| -> Result<Pose> {
        Pose::look_at(
            Vector3::new(x, 0.0, 1.6),
            Vector3::new(x + 100.0, 0.0, 1.6),
            Vector3::new(0.0, 0.0, 1.0),
        )
    };
    let mut references = Vec::new();
    for i in 0..opts.reference_count {
        references.push(ViewCamera { intrinsics, pose: rig_pose(i as f64)? });
    }
    let mut targets = Vec::new();
    for i in 0..opts.target_count {
        let x = if i + 1 == opts.target_count {
            opts.reference_count as f64 - 0.5
        } else {
            i as f64 + 1.5
        };
        targets.push(ViewCamera { intrinsics, pose: rig_pose(x)? });
    }
    Ok((references, targets))
}

/// Renders and writes the full demo dataset into `dir`: traced reference
/// views, the static-scene point cloud, lane map, velocity-bank log, target
/// cameras, the scene description, and the manifest tying them together.
pub fn write_demo_dataset(dir: &Path, opts: &DemoOptions) -> Result<DemoDataset> {
    if opts.reference_count < 2 {
        return Err(Error::invalid_argument("demo needs at least 2 reference views"));
    }
    if opts.target_count == 0 {
        return Err(Error::invalid_argument("demo needs at least 1 target view"));
    }
    formats::create_dir_all(dir)?;
    let scene = demo_scene();
    let scene_path = dir.join("scene.json");
    formats::write_json(&scene_path, &scene)?;

    let (references, targets) = demo_cameras(opts)?;
    let mut views = Vec::new();
    for (i, cam) in references.iter().enumerate() {
        let view = crate::scene::trace_view(&scene, &cam.intrinsics, &cam.pose)?;
        let entry = ManifestView {
            image: format!("image_{i}.png"),
            depth: format!("depth_{i}.drf"),
            labels: format!("labels_{i}.png"),
            camera: format!("camera_{i}.json"),
        };
        formats::write_image(&dir.join(&entry.image), &view.image)?;
        formats::write_depth(&dir.join(&entry.depth), &view.depth)?;
        formats::write_labels(&dir.join(&entry.labels), &view.labels)?;
        formats::write_camera(&dir.join(&entry.camera), cam)?;
        views.push(entry);
    }

    let mut target_paths = Vec::new();
    for (i, cam) in targets.iter().enumerate() {
        let path = dir.join(format!("target_{i}.json"));
        formats::write_camera(&path, cam)?;
        target_paths.push(path);
    }

    let static_scene = scene.without_classes(&DEMO_MOVABLE_CLASSES);
    let cloud = crate::scene::sample_points(&static_scene, opts.cloud_spacing)?;
    ply::write_point_cloud(&dir.join("cloud.ply"), &cloud)?;

    write_lane_map(&dir.join("lanes.json"), &demo_lanes())?;
    write_trajectory(&dir.join("bank.csv"), &demo_bank_trajectory(opts.seed))?;

    let manifest = Manifest {
        views,
        cloud: "cloud.ply".into(),
        lanes: Some("lanes.json".into()),
        bank: Some("bank.csv".into()),
    };
    let manifest_path = dir.join("manifest.json");
    formats::write_json(&manifest_path, &manifest)?;
    Ok(DemoDataset { manifest: manifest_path, scene: scene_path, targets: target_paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::load_velocity_bank;

    fn small_opts() -> DemoOptions {
        DemoOptions {
            width: 64,
            height: 48,
            cloud_spacing: 0.5,
            reference_count: 2,
            target_count: 1,
            ..DemoOptions::default()
        }
    }

    #[test]
    fn demo_dataset_writes_and_loads() {
        let dir = tempfile::tempdir().unwrap();
        let demo = write_demo_dataset(dir.path(), &small_opts()).unwrap();
        let dataset = Dataset::load(&demo.manifest).unwrap();
        assert_eq!(dataset.views.len(), 2);
        assert!(!dataset.cloud.is_empty());
        assert_eq!(dataset.lanes.as_ref().unwrap().lanes.len(), 4);

        // The canyon closes every view: dense depth, no sky labels.
        for v in &dataset.views {
            assert_eq!(v.depth.valid_count(), v.depth.len());
            assert!(v.labels.data().iter().all(|&l| l != 0));
        }

        // The captured views must show the parked cars (class 10) so the
        // removal stage has something to do.
        let has_car = dataset
            .views
            .iter()
            .any(|v| v.labels.data().contains(&10));
        assert!(has_car);

        // The static cloud must not contain movable classes.
        assert!(dataset.cloud.iter().all(|p| !DEMO_MOVABLE_CLASSES.contains(&p.class_id)));

        // The bank parses into non-empty per-class pools.
        let bank = load_velocity_bank(dataset.bank.as_ref().unwrap()).unwrap();
        assert!(!bank.car.is_empty());
        assert!(!bank.cyclist.is_empty());
        assert!(!bank.pedestrian.is_empty());

        // Target cameras parse.
        for t in &demo.targets {
            formats::read_camera(t).unwrap();
        }

        // Scene file parses and validates.
        let scene: SceneSpec = formats::read_json(&demo.scene).unwrap();
        scene.validate().unwrap();
    }

    #[test]
    fn manifest_load_names_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let demo = write_demo_dataset(dir.path(), &small_opts()).unwrap();
        std::fs::remove_file(dir.path().join("depth_1.drf")).unwrap();
        let err = Dataset::load(&demo.manifest).unwrap_err();
        assert!(err.to_string().contains("depth_1.drf"), "{err}");
    }

    #[test]
    fn manifest_rejects_mismatched_view_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let demo = write_demo_dataset(dir.path(), &small_opts()).unwrap();
        // Shrink one view's rasters coherently, then reload.
        let mut opts = small_opts();
        opts.width = 32;
        opts.height = 24;
        let other = tempfile::tempdir().unwrap();
        write_demo_dataset(other.path(), &opts).unwrap();
        for f in ["image_1.png", "depth_1.drf", "labels_1.png", "camera_1.json"] {
            std::fs::copy(other.path().join(f), dir.path().join(f)).unwrap();
        }
        let err = Dataset::load(&demo.manifest).unwrap_err();
        assert!(err.to_string().contains("view 1"), "{err}");
    }

    #[test]
    fn demo_bank_is_deterministic_and_mixed() {
        let a = demo_bank_trajectory(7);
        let b = demo_bank_trajectory(7);
        assert_eq!(a, b);
        let c = demo_bank_trajectory(8);
        assert_ne!(a, c);
        let bank = load_velocity_bank(&a).unwrap();
        // Both travel directions are represented.
        assert!(bank.car.iter().any(|v| v.x > 0.0));
        assert!(bank.car.iter().any(|v| v.x < 0.0));
        // Speeds respect class caps.
        for class in AgentClass::ALL {
            assert!(bank
                .samples(class)
                .iter()
                .all(|v| v.norm() <= class.max_speed()));
        }
    }
}
