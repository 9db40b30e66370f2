//! The end-to-end pipeline behind `aads run`.
//!
//! One call chains every stage over a captured dataset: the reference views
//! are cleaned of movable objects and their depth is re-refined from the
//! static cloud, traffic is simulated on the lane map, and for every target
//! camera a background view is synthesized, agents are composited in, and a
//! LiDAR scan of the augmented world is cast. All artifacts land in a single
//! output directory along with a manifest of SHA-256 hashes, so reruns with
//! the same seed can be compared byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    agent_class_id, compose_frame, diffusion_inpaint, remove_moving_objects, FrameAnnotations,
    PlacedObject,
};
use crate::camera::Pose;
use crate::depth::{refine_depth, RefineConfig};
use crate::error::{Error, Result};
use crate::formats::{self, ViewCamera};
use crate::lidar::{cast_scan, render_cube_map, BeamModel, LidarScene, SceneTriangle};
use crate::manifest::Dataset;
use crate::ply;
use crate::raster::ViewSample;
use crate::scene::{self, SceneSpec};
use crate::stitch::{synthesize_view, EnergyWeights, StitchConfig};
use crate::traffic::{
    init_agents, load_velocity_bank, step, write_trajectory, AgentCounts, AgentState,
    TrafficConfig, Trajectory, TrajectoryRecord,
};

/// Classes treated as movable when the config does not say otherwise:
/// car, cyclist, pedestrian.
pub const DEFAULT_MOVABLE_CLASSES: [u16; 3] = [10, 11, 12];

const DEFAULT_SEED: u64 = 7;
const DEFAULT_CUBE_RESOLUTION: usize = 512;
const DEFAULT_STEPS_PER_FRAME: usize = 3;

/// Traffic portion of a [`RunConfig`]. Present only when the run should
/// place simulated agents into the synthesized frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub counts: AgentCounts,
    /// Simulation steps taken between consecutive rendered frames.
    pub steps_per_frame: usize,
    pub config: TrafficConfig,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            counts: AgentCounts::default(),
            steps_per_frame: DEFAULT_STEPS_PER_FRAME,
            config: TrafficConfig::default(),
        }
    }
}

/// Everything `aads run` needs. Paths are relative to the directory the
/// config file lives in.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest path.
    pub dataset: String,
    /// Target camera files, one rendered frame each.
    pub targets: Vec<String>,
    /// Scene description used as LiDAR geometry. When absent, scans fall
    /// back to the dataset point cloud.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Label classes removed from the references and excluded from the
    /// static LiDAR geometry.
    #[serde(default = "default_movable_classes")]
    pub movable_classes: Vec<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficSection>,
    #[serde(default)]
    pub weights: EnergyWeights,
    #[serde(default)]
    pub stitch: StitchConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub beam_model: BeamModel,
    #[serde(default = "default_cube_resolution")]
    pub cube_resolution: usize,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_movable_classes() -> Vec<u16> {
    DEFAULT_MOVABLE_CLASSES.to_vec()
}

fn default_cube_resolution() -> usize {
    DEFAULT_CUBE_RESOLUTION
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::invalid_argument("run config lists no targets"));
        }
        if self.cube_resolution < 2 {
            return Err(Error::invalid_argument(format!(
                "cube_resolution must be at least 2, got {}",
                self.cube_resolution
            )));
        }
        if let Some(traffic) = &self.traffic {
            if traffic.counts.total() == 0 {
                return Err(Error::invalid_argument(
                    "traffic is enabled but traffic.counts requests no agents",
                ));
            }
            if traffic.steps_per_frame == 0 {
                return Err(Error::invalid_argument(
                    "traffic.steps_per_frame must be at least 1",
                ));
            }
            traffic.config.validate()?;
        }
        Ok(())
    }
}

/// Output manifest written at the end of a run: the seed, the frame count,
/// and a SHA-256 hash per artifact (keyed by path relative to the output
/// directory). Identical seeds must reproduce identical hashes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutManifest {
    pub seed: u64,
    pub frames: usize,
    pub artifacts: BTreeMap<String, String>,
}

/// What [`run_pipeline`] hands back.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub frames: usize,
    /// Relative artifact path -> SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn stage_frame(stage: &str, frame: usize) -> String {
    format!("stage {stage}, frame {frame}")
}

/// Cleans one reference view in place: movable pixels are masked out, the
/// image is diffusion-inpainted, and the depth channel is replaced by a
/// refinement of the static point cloud guided by the cleaned image.
fn prepare_reference(
    view: &mut ViewSample,
    cloud: &[crate::ply::CloudPoint],
    movable: &[u16],
    refine: &RefineConfig,
) -> Result<()> {
    let mask = remove_moving_objects(view, movable);
    if mask.count() > 0 {
        view.image = diffusion_inpaint(&view.image, &mask)?;
    }
    let camera = ViewCamera {
        intrinsics: view.intrinsics,
        pose: view.pose,
    };
    view.depth = refine_depth(cloud, &camera, Some(&view.image), refine)?;
    Ok(())
}

/// Advances the traffic simulation and snapshots agent states, one snapshot
/// per rendered frame. Frame 0 is the initial placement; each later frame is
/// `steps_per_frame` simulation steps after the previous one.
fn simulate_traffic(
    dataset: &Dataset,
    section: &TrafficSection,
    run_seed: u64,
    frames: usize,
) -> Result<(Vec<Vec<AgentState>>, Trajectory)> {
    let lanes = dataset.lanes.as_ref().ok_or_else(|| {
        Error::invalid_argument(
            "traffic is enabled but the dataset manifest has no \"lanes\" entry",
        )
    })?;
    let bank_trajectory = dataset.bank.as_ref().ok_or_else(|| {
        Error::invalid_argument(
            "traffic is enabled but the dataset manifest has no \"bank\" entry",
        )
    })?;
    let bank = load_velocity_bank(bank_trajectory)?;

    // Decorrelate the run seed from the traffic sub-seed so overriding either
    // reshuffles the simulation.
    let mut cfg = section.config;
    cfg.seed ^= run_seed;

    let mut agents = init_agents(lanes, &section.counts, Some(&bank), &cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut snapshots = Vec::with_capacity(frames);
    let mut records = Vec::new();
    for frame in 0..frames {
        if frame > 0 {
            for _ in 0..section.steps_per_frame {
                step(&mut agents, &bank, lanes, &cfg, &mut rng)
                    .map_err(|e| e.context(&stage_frame("traffic", frame)))?;
            }
        }
        for a in &agents {
            records.push(TrajectoryRecord {
                frame_id: frame as u64,
                agent_id: a.id,
                class: a.class,
                position: a.position,
                heading: a.heading,
                velocity: a.velocity,
            });
        }
        snapshots.push(agents.clone());
    }
    let trajectory = Trajectory {
        records,
        dt: cfg.dt * section.steps_per_frame as f64,
    };
    Ok((snapshots, trajectory))
}

/// Renders one target frame end to end and writes its artifacts. Returns the
/// artifact paths relative to `out_dir`.
#[allow(clippy::too_many_arguments)]
fn render_frame(
    frame: usize,
    target: &ViewCamera,
    references: &[ViewSample],
    agents: &[AgentState],
    static_scene: &LidarScene,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<Vec<String>> {
    let synth = synthesize_view(target, references, &config.weights, &config.stitch)
        .map_err(|e| e.context(&stage_frame("synth-view", frame)))?;

    let objects: Vec<PlacedObject> = agents.iter().map(PlacedObject::from_agent).collect();
    let composed = compose_frame(
        &synth.image,
        &synth.depth,
        &target.intrinsics,
        &target.pose,
        &objects,
    )
    .map_err(|e| e.context(&stage_frame("compose", frame)))?;

    // LiDAR sees the static geometry plus one box per agent.
    let mut frame_scene = static_scene.clone();
    for agent in agents {
        let object = PlacedObject::from_agent(agent);
        frame_scene.triangles.extend(scene::box_triangles(
            object.center,
            object.size,
            object.yaw,
            agent_class_id(agent.class),
        ));
    }
    let sensor = Pose::new(Matrix3::identity(), target.pose.center())
        .map_err(|e| e.context(&stage_frame("lidar-sim", frame)))?;
    let mut model = config.beam_model.clone();
    model.rng_seed = config.seed ^ frame as u64;
    let cube = render_cube_map(&frame_scene, &sensor, config.cube_resolution)
        .map_err(|e| e.context(&stage_frame("lidar-sim", frame)))?;
    let scan = cast_scan(&model, &cube, &sensor, frame as u64)
        .map_err(|e| e.context(&stage_frame("lidar-sim", frame)))?;

    let annotations = FrameAnnotations {
        frame: frame as u64,
        objects: composed.annotations,
    };

    let mut written = Vec::new();
    let mut emit = |name: String, write: &mut dyn FnMut(&Path) -> Result<()>| -> Result<()> {
        let path = out_dir.join(&name);
        write(&path).map_err(|e| e.context(&stage_frame("write", frame)))?;
        written.push(name);
        Ok(())
    };
    emit(format!("synth_{frame}.png"), &mut |p| {
        formats::write_image(p, &synth.image)
    })?;
    emit(format!("synth_depth_{frame}.drf"), &mut |p| {
        formats::write_depth(p, &synth.depth)
    })?;
    emit(format!("provenance_{frame}.png"), &mut |p| {
        formats::write_labels(p, &synth.provenance)
    })?;
    emit(format!("composed_{frame}.png"), &mut |p| {
        formats::write_image(p, &composed.image)
    })?;
    emit(format!("composed_depth_{frame}.drf"), &mut |p| {
        formats::write_depth(p, &composed.depth)
    })?;
    emit(format!("masks_{frame}.png"), &mut |p| {
        formats::write_labels(p, &composed.masks)
    })?;
    emit(format!("annotations_{frame}.json"), &mut |p| {
        formats::write_json(p, &annotations)
    })?;
    emit(format!("scan_{frame}.ply"), &mut |p| {
        ply::write_scan(p, &scan.points)
    })?;
    Ok(written)
}

/// Runs the full pipeline. `base_dir` anchors the relative paths in
/// `config`; everything is written under `out_dir`.
pub fn run_pipeline(config: &RunConfig, base_dir: &Path, out_dir: &Path) -> Result<RunReport> {
    config.validate()?;
    formats::create_dir_all(out_dir)?;

    let dataset = Dataset::load(&base_dir.join(&config.dataset))
        .map_err(|e| e.context("stage load"))?;
    let targets: Vec<ViewCamera> = config
        .targets
        .iter()
        .map(|t| {
            formats::read_camera(&base_dir.join(t))
                .map_err(|e| e.context(&format!("stage load, target {t:?}")))
        })
        .collect::<Result<_>>()?;

    // Static LiDAR geometry: the scene mesh minus movable classes when a
    // scene file is given, otherwise the (filtered) dataset point cloud.
    let static_scene = match &config.scene {
        Some(rel) => {
            let path = base_dir.join(rel);
            let spec: SceneSpec =
                formats::read_json(&path).map_err(|e| e.context("stage load"))?;
            let triangles: Vec<SceneTriangle> =
                scene::scene_triangles(&spec.without_classes(&config.movable_classes))
                    .map_err(|e| e.context("stage load"))?;
            LidarScene {
                points: Vec::new(),
                triangles,
            }
        }
        None => LidarScene {
            points: dataset
                .cloud
                .iter()
                .filter(|p| !config.movable_classes.contains(&p.class_id))
                .cloned()
                .collect(),
            triangles: Vec::new(),
        },
    };

    // Clean every reference: remove movables, inpaint, refine depth.
    let mut references = dataset.views.clone();
    references
        .par_iter_mut()
        .enumerate()
        .map(|(i, view)| {
            prepare_reference(view, &dataset.cloud, &config.movable_classes, &config.refine)
                .map_err(|e| e.context(&format!("stage refine, reference {i}")))
        })
        .collect::<Result<()>>()?;

    // Traffic runs sequentially (each step depends on the previous one).
    let (agent_frames, trajectory) = match &config.traffic {
        Some(section) => {
            let (frames, traj) = simulate_traffic(&dataset, section, config.seed, targets.len())?;
            (frames, Some(traj))
        }
        None => (vec![Vec::new(); targets.len()], None),
    };

    // Frames are independent once traffic is fixed; render them in parallel.
    let frame_artifacts: Vec<Vec<String>> = targets
        .par_iter()
        .enumerate()
        .map(|(frame, target)| {
            render_frame(
                frame,
                target,
                &references,
                &agent_frames[frame],
                &static_scene,
                config,
                out_dir,
            )
        })
        .collect::<Result<_>>()?;

    let mut names: Vec<String> = frame_artifacts.into_iter().flatten().collect();
    if let Some(traj) = &trajectory {
        let name = "trajectory.csv".to_string();
        write_trajectory(&out_dir.join(&name), traj)
            .map_err(|e| e.context("stage write"))?;
        names.push(format!("{name}.json"));
        names.push(name);
    }

    let mut artifacts = BTreeMap::new();
    for name in names {
        let digest = sha256_file(&out_dir.join(&name))?;
        artifacts.insert(name, digest);
    }
    let manifest = OutManifest {
        seed: config.seed,
        frames: targets.len(),
        artifacts: artifacts.clone(),
    };
    let manifest_path = out_dir.join("out_manifest.json");
    formats::write_json(&manifest_path, &manifest)?;

    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        manifest_path,
        frames: targets.len(),
        artifacts,
    })
}



/// Loads a run config from disk and executes it. Relative paths resolve
/// against the config file's directory; `out_dir` defaults to `out/` next to
/// the config.
pub fn run_from_config_file(config_path: &Path, out_dir: Option<&Path>) -> Result<RunReport> {
    let config: RunConfig = formats::read_json(config_path)?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let out = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| base.join("out"));
    run_pipeline(&config, base, &out)
}

/// Writes a ready-to-run config next to a generated demo dataset and returns
/// its path. The config references the demo manifest, scene, and targets by
/// their file names.
pub fn write_demo_run_config(
    dir: &Path,
    demo: &crate::manifest::DemoDataset,
) -> Result<PathBuf> {
    let rel = |p: &Path| -> String {
        p.strip_prefix(dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    let config = RunConfig {
        dataset: rel(&demo.manifest),
        targets: demo.targets.iter().map(|t| rel(t)).collect(),
        scene: Some(rel(&demo.scene)),
        seed: DEFAULT_SEED,
        movable_classes: DEFAULT_MOVABLE_CLASSES.to_vec(),
        traffic: Some(TrafficSection {
            counts: AgentCounts {
                car: 4,
                cyclist: 2,
                pedestrian: 2,
            },
            steps_per_frame: DEFAULT_STEPS_PER_FRAME,
            config: TrafficConfig::default(),
        }),
        weights: EnergyWeights::default(),
        stitch: StitchConfig::default(),
        refine: RefineConfig::default(),
        beam_model: BeamModel::default(),
        cube_resolution: 256,
    };
    let path = dir.join("run_config.json");
    formats::write_json(&path, &config)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{write_demo_dataset, DemoOptions, Manifest};
    use crate::traffic::read_trajectory;
    use tempfile::tempdir;

    fn small_demo(dir: &Path) -> crate::manifest::DemoDataset {
        write_demo_dataset(
            dir,
            &DemoOptions {
                width: 96,
                height: 72,
                seed: 11,
                cloud_spacing: 0.3,
                reference_count: 3,
                target_count: 1,
            },
        )
        .unwrap()
    }

    fn small_config(demo: &crate::manifest::DemoDataset, dir: &Path) -> RunConfig {
        let rel = |p: &Path| p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        RunConfig {
            dataset: rel(&demo.manifest),
            targets: demo.targets.iter().map(|t| rel(t)).collect(),
            scene: None,
            seed: 3,
            movable_classes: DEFAULT_MOVABLE_CLASSES.to_vec(),
            traffic: Some(TrafficSection {
                counts: AgentCounts {
                    car: 2,
                    cyclist: 0,
                    pedestrian: 1,
                },
                steps_per_frame: 2,
                config: TrafficConfig::default(),
            }),
            weights: EnergyWeights::default(),
            stitch: StitchConfig::default(),
            refine: RefineConfig::default(),
            beam_model: BeamModel::default(),
            cube_resolution: 48,
        }
    }

    /// A small demo run produces every per-frame artifact, a trajectory, and
    /// a hash manifest that matches the files on disk.
    #[test]
    fn demo_run_end_to_end() {
        let dir = tempdir().unwrap();
        let demo = small_demo(dir.path());
        let config = small_config(&demo, dir.path());
        let config_path = dir.path().join("cfg.json");
        formats::write_json(&config_path, &config).unwrap();

        let out = dir.path().join("out");
        let report = run_from_config_file(&config_path, Some(&out)).unwrap();
        assert_eq!(report.frames, 1);
        for name in [
            "synth_0.png",
            "synth_depth_0.drf",
            "provenance_0.png",
            "composed_0.png",
            "composed_depth_0.drf",
            "masks_0.png",
            "annotations_0.json",
            "scan_0.ply",
            "trajectory.csv",
            "trajectory.csv.json",
        ] {
            assert!(report.artifacts.contains_key(name), "missing artifact {name}");
            assert!(out.join(name).exists(), "file {name} not on disk");
        }

        // Hashes in the manifest match a recomputation from disk.
        let manifest: OutManifest = formats::read_json(&report.manifest_path).unwrap();
        assert_eq!(manifest.artifacts, report.artifacts);
        for (name, digest) in &manifest.artifacts {
            assert_eq!(&sha256_file(&out.join(name)).unwrap(), digest, "{name}");
        }

        // The trajectory holds one record per agent per frame at the
        // coarse timestep, and the scan has actual returns.
        let traj = read_trajectory(&out.join("trajectory.csv")).unwrap();
        assert_eq!(traj.records.len(), 3);
        assert!((traj.dt - 0.2).abs() < 1e-12);
        let scan = ply::read_scan(&out.join("scan_0.ply")).unwrap();
        assert!(!scan.is_empty());
        let ann: FrameAnnotations =
            formats::read_json(&out.join("annotations_0.json")).unwrap();
        assert_eq!(ann.frame, 0);
    }

    /// Enabling traffic on a dataset without a lane map names the missing
    /// manifest field.
    #[test]
    fn traffic_without_lanes_names_field() {
        let dir = tempdir().unwrap();
        let demo = small_demo(dir.path());
        let mut manifest: Manifest = formats::read_json(&demo.manifest).unwrap();
        manifest.lanes = None;
        manifest.bank = None;
        let stripped = dir.path().join("manifest_nolanes.json");
        formats::write_json(&stripped, &manifest).unwrap();

        let mut config = small_config(&demo, dir.path());
        config.dataset = "manifest_nolanes.json".into();
        let err = run_pipeline(&config, dir.path(), &dir.path().join("out")).unwrap_err();
        assert!(err.to_string().contains("\"lanes\""), "got: {err}");
    }

    /// A failure inside a frame stage reports the stage name and frame id.
    #[test]
    fn frame_errors_name_stage_and_frame() {
        let dir = tempdir().unwrap();
        let demo = small_demo(dir.path());
        let mut config = small_config(&demo, dir.path());
        config.beam_model.beams.clear();
        let err = run_pipeline(&config, dir.path(), &dir.path().join("out")).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("stage lidar-sim, frame 0"),
            "got: {msg}"
        );
    }
}
