//! Command-line front end. See the crate docs for the library API.
//!
//! One `aads` binary with nine subcommands covering the pipeline stages:
//! `refine-depth`, `warp`, `synth-view`, `lidar-sim`, `traffic-sim`,
//! `eval-dist`, `compose`, `run`, and `make-scene`. Exit codes: 0 success,
//! 1 usage error, 2 input parse/IO failure, 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::augment::{compose_frame, FrameAnnotations, PlacedObject};
use crate::camera::Pose;
use crate::depth::{refine_depth, RefineConfig};
use crate::error::{Error, Result};
use crate::formats;
use crate::lidar::{cast_scan, render_cube_map, BeamModel, LidarScene};
use crate::manifest::{write_demo_dataset, Dataset, DemoOptions};
use crate::pipeline::{run_pipeline, write_demo_run_config, RunConfig};
use crate::ply;
use crate::raster::{ImageRaster, Rgb};
use crate::scene::{scene_triangles, SceneSpec};
use crate::stitch::{synthesize_view, EnergyWeights, StitchConfig};
use crate::traffic::{
    compare_samples, eval_distributions, load_velocity_bank, min_distance_samples, read_lane_map,
    read_trajectory, simulate, speed_samples, write_trajectory, AgentCounts, DistributionSummary,
    Histogram, TrafficConfig,
};
use crate::view::warp_reference;

const DEFAULT_CUBE_RESOLUTION: usize = 512;

/// Scan-to-simulation toolkit: depth refinement, novel-view synthesis,
/// LiDAR simulation, and data-driven traffic.
#[derive(Debug, Parser)]
#[command(name = "aads", version, disable_help_subcommand = true)]
struct Cli {
    /// Seed override for randomized subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores, or the AADS_THREADS env var).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Defaults file; a JSON object with optional sections `refine`,
    /// `weights`, `stitch`, `beam_model`, `traffic`, `cube_resolution`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a point cloud into a camera and refine it to a dense depth map.
    RefineDepth(RefineDepthArgs),
    /// Warp every reference of a dataset into a target camera.
    Warp(WarpArgs),
    /// Synthesize a novel background view of a dataset.
    SynthView(SynthViewArgs),
    /// Cast LiDAR scans of a scene along a sensor trajectory.
    LidarSim(LidarSimArgs),
    /// Simulate lane-constrained traffic seeded from a velocity bank.
    TrafficSim(TrafficSimArgs),
    /// Histogram a trajectory and optionally compare it with a reference.
    EvalDist(EvalDistArgs),
    /// Composite flat-shaded agent boxes over a background view.
    Compose(ComposeArgs),
    /// Execute a full pipeline run from a config file.
    Run(RunArgs),
    /// Generate the synthetic demo dataset plus a ready-to-run config.
    MakeScene(MakeSceneArgs),
}

/// Optional sections of the global `--config` defaults file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ToolConfig {
    refine: Option<RefineConfig>,
    weights: Option<EnergyWeights>,
    stitch: Option<StitchConfig>,
    beam_model: Option<BeamModel>,
    traffic: Option<TrafficConfig>,
    cube_resolution: Option<usize>,
}

#[derive(Debug, Args)]
struct RefineDepthArgs {
    /// Input point cloud (PLY).
    #[arg(long)]
    cloud: PathBuf,
    /// Camera file of the view to refine.
    #[arg(long)]
    view: PathBuf,
    /// Refinement parameters JSON (defaults when absent).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Guide image for edge-aware filtering.
    #[arg(long)]
    guide: Option<PathBuf>,
    /// Output depth map (DRF1).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WarpArgs {
    /// Dataset manifest whose views are warped.
    #[arg(long)]
    refs: PathBuf,
    /// Target camera file.
    #[arg(long)]
    target: PathBuf,
    /// Output directory; gets one (color, proxy depth, mask) triple per view.
    #[arg(long)]
    out_dir: PathBuf,
    /// Occlusion depth tolerance in meters.
    #[arg(long)]
    depth_tol: Option<f64>,
    /// Largest proxy hole (pixels) closed by inpainting.
    #[arg(long)]
    max_hole_px: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthViewArgs {
    /// Dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Target camera file.
    #[arg(long)]
    target: PathBuf,
    /// Stitch energy weights JSON (paper defaults when absent).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output image.
    #[arg(long)]
    out: PathBuf,
    /// Output stitched depth (DRF1).
    #[arg(long)]
    out_depth: Option<PathBuf>,
    /// Output per-pixel source-index map (16-bit PNG).
    #[arg(long)]
    out_src: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LidarSimArgs {
    /// Scene description JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Sensor trajectory: JSON array of {rotation: [9], translation: [3]}.
    #[arg(long)]
    traj: PathBuf,
    /// Beam model JSON (64-beam default when absent).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory; gets scan_<frame>.ply per pose.
    #[arg(long)]
    out_dir: PathBuf,
    /// Cube map face resolution.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Debug, Args)]
struct TrafficSimArgs {
    /// Lane map JSON.
    #[arg(long)]
    lanes: PathBuf,
    /// Velocity bank trajectory CSV.
    #[arg(long)]
    bank: PathBuf,
    /// Agent counts, e.g. `car=20,cyclist=4,ped=5`.
    #[arg(long)]
    counts: String,
    /// Simulation steps to run.
    #[arg(long)]
    steps: usize,
    /// Output trajectory CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalDistArgs {
    /// Trajectory CSV to evaluate.
    #[arg(long)]
    traj: PathBuf,
    /// Reference trajectory CSV to compare against.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Histogram bin count.
    #[arg(long, default_value_t = 30)]
    bins: usize,
    /// Output report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output bar-chart image (PPM or PNG).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ComposeArgs {
    /// Background image.
    #[arg(long)]
    bg: PathBuf,
    /// Background depth (DRF1).
    #[arg(long)]
    bg_depth: PathBuf,
    /// Objects to place: JSON array of boxes.
    #[arg(long)]
    agents: PathBuf,
    /// Camera file.
    #[arg(long)]
    cam: PathBuf,
    /// Output composited image.
    #[arg(long)]
    out: PathBuf,
    /// Output annotations JSON.
    #[arg(long)]
    ann: Option<PathBuf>,
    /// Output instance masks (16-bit PNG).
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Output composited depth (DRF1).
    #[arg(long)]
    out_depth: Option<PathBuf>,
    /// Frame id written into the annotations.
    #[arg(long, default_value_t = 0)]
    frame: u64,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: `out/` beside the config).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MakeSceneArgs {
    /// Directory for the generated dataset.
    #[arg(long)]
    out_dir: PathBuf,
    /// Rendered view width in pixels.
    #[arg(long)]
    width: Option<usize>,
    /// Rendered view height in pixels.
    #[arg(long)]
    height: Option<usize>,
    /// Number of reference views.
    #[arg(long)]
    refs: Option<usize>,
    /// Number of target cameras.
    #[arg(long)]
    targets: Option<usize>,
    /// Point cloud sampling spacing in meters.
    #[arg(long)]
    cloud_spacing: Option<f64>,
}

/// Parses `std::env::args`, runs the requested subcommand and returns the
/// process exit code.
pub fn run_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and succeed; anything else is
            // a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("AADS_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::usage(format!("AADS_THREADS must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::usage(format!("failed to size the thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let tool: ToolConfig = match &cli.config {
        Some(path) => formats::read_json(path)?,
        None => ToolConfig::default(),
    };
    match cli.command {
        Command::RefineDepth(args) => cmd_refine_depth(args, &tool),
        Command::Warp(args) => cmd_warp(args, &tool),
        Command::SynthView(args) => cmd_synth_view(args, &tool),
        Command::LidarSim(args) => cmd_lidar_sim(args, &tool, cli.seed),
        Command::TrafficSim(args) => cmd_traffic_sim(args, &tool, cli.seed),
        Command::EvalDist(args) => cmd_eval_dist(args),
        Command::Compose(args) => cmd_compose(args),
        Command::Run(args) => cmd_run(args, cli.config.as_deref(), cli.seed),
        Command::MakeScene(args) => cmd_make_scene(args, cli.seed),
    }
}

fn cmd_refine_depth(args: RefineDepthArgs, tool: &ToolConfig) -> Result<()> {
    let cloud = ply::read_point_cloud(&args.cloud)?;
    let camera = formats::read_camera(&args.view)?;
    let config = match &args.config {
        Some(path) => formats::read_json(path)?,
        None => tool.refine.unwrap_or_default(),
    };
    let guide = args.guide.as_deref().map(formats::read_image).transpose()?;
    let depth = refine_depth(&cloud, &camera, guide.as_ref(), &config)?;
    formats::write_depth(&args.out, &depth)?;
    println!(
        "wrote {} ({} of {} pixels valid)",
        args.out.display(),
        depth.valid_count(),
        depth.len()
    );
    Ok(())
}

fn cmd_warp(args: WarpArgs, tool: &ToolConfig) -> Result<()> {
    let dataset = Dataset::load(&args.refs)?;
    let target = formats::read_camera(&args.target)?;
    let stitch = tool.stitch.unwrap_or_default();
    let depth_tol = args.depth_tol.unwrap_or(stitch.depth_tol);
    let max_hole_px = args.max_hole_px.unwrap_or(stitch.max_hole_px);
    formats::create_dir_all(&args.out_dir)?;
    for (i, view) in dataset.views.iter().enumerate() {
        let warped = warp_reference(view, &target, depth_tol, max_hole_px, i)?;
        formats::write_image(&args.out_dir.join(format!("warp_{i}.png")), &warped.color)?;
        formats::write_depth(
            &args.out_dir.join(format!("warp_{i}.drf")),
            &warped.depth_proxy,
        )?;
        formats::write_mask(
            &args.out_dir.join(format!("warp_{i}_mask.png")),
            &warped.occlusion_mask,
        )?;
    }
    println!(
        "warped {} references into {}",
        dataset.views.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_synth_view(args: SynthViewArgs, tool: &ToolConfig) -> Result<()> {
    let dataset = Dataset::load(&args.dataset)?;
    let target = formats::read_camera(&args.target)?;
    let weights = match &args.weights {
        Some(path) => formats::read_json(path)?,
        None => tool.weights.unwrap_or_default(),
    };
    let stitch = tool.stitch.unwrap_or_default();
    let synth = synthesize_view(&target, &dataset.views, &weights, &stitch)?;
    formats::write_image(&args.out, &synth.image)?;
    if let Some(path) = &args.out_depth {
        formats::write_depth(path, &synth.depth)?;
    }
    if let Some(path) = &args.out_src {
        formats::write_labels(path, &synth.provenance)?;
    }
    println!(
        "wrote {} from references {:?}",
        args.out.display(),
        synth.sources
    );
    Ok(())
}

/// One sensor pose of a `lidar-sim` trajectory file: a row-major rotation
/// matrix and a translation, sensor-to-world.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl PoseEntry {
    pub fn to_pose(&self) -> Result<Pose> {
        Pose::new(
            Matrix3::from_row_slice(&self.rotation),
            nalgebra::Vector3::from(self.translation),
        )
    }

    pub fn from_pose(pose: &Pose) -> PoseEntry {
        let r = pose.rotation();
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        PoseEntry {
            rotation,
            translation: pose.center().into(),
        }
    }
}

fn cmd_lidar_sim(args: LidarSimArgs, tool: &ToolConfig, seed: Option<u64>) -> Result<()> {
    let spec: SceneSpec = formats::read_json(&args.scene)?;
    let scene = LidarScene {
        points: Vec::new(),
        triangles: scene_triangles(&spec)?,
    };
    let entries: Vec<PoseEntry> = formats::read_json(&args.traj)?;
    if entries.is_empty() {
        return Err(Error::invalid_argument("trajectory lists no poses"));
    }
    let mut model = match &args.model {
        Some(path) => formats::read_json(path)?,
        None => tool.beam_model.clone().unwrap_or_default(),
    };
    if let Some(seed) = seed {
        model.rng_seed = seed;
    }
    let resolution = args
        .resolution
        .or(tool.cube_resolution)
        .unwrap_or(DEFAULT_CUBE_RESOLUTION);
    formats::create_dir_all(&args.out_dir)?;
    let mut total = 0usize;
    for (frame, entry) in entries.iter().enumerate() {
        let pose = entry
            .to_pose()
            .map_err(|e| e.context(&format!("pose {frame}")))?;
        let cube = render_cube_map(&scene, &pose, resolution)?;
        let scan = cast_scan(&model, &cube, &pose, frame as u64)?;
        total += scan.points.len();
        ply::write_scan(&args.out_dir.join(format!("scan_{frame}.ply")), &scan.points)?;
    }
    println!(
        "wrote {} scans ({} returns) into {}",
        entries.len(),
        total,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_traffic_sim(args: TrafficSimArgs, tool: &ToolConfig, seed: Option<u64>) -> Result<()> {
    let lanes = read_lane_map(&args.lanes)?;
    let bank_trajectory = read_trajectory(&args.bank)?;
    let bank = load_velocity_bank(&bank_trajectory)?;
    let counts = AgentCounts::parse(&args.counts)?;
    let mut config = tool.traffic.unwrap_or_default();
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let trajectory = simulate(&lanes, &bank, &counts, args.steps, &config)?;
    write_trajectory(&args.out, &trajectory)?;
    println!(
        "simulated {} agents for {} steps -> {}",
        counts.total(),
        args.steps,
        args.out.display()
    );
    Ok(())
}

/// `eval-dist` report: per-trajectory summaries plus, when a reference is
/// given, histograms over a shared range and their L1 distances.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub bins: usize,
    pub trajectory: DistributionSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<DistributionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub speed: ComparedPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_distance: Option<ComparedPair>,
}

/// Two histograms binned over one shared `[0, max]` range and their L1
/// distance.
#[derive(Debug, Serialize, Deserialize)]
pub struct ComparedPair {
    pub trajectory: Histogram,
    pub reference: Histogram,
    pub l1: f64,
}

fn cmd_eval_dist(args: EvalDistArgs) -> Result<()> {
    let trajectory = read_trajectory(&args.traj)?;
    let summary = eval_distributions(&trajectory, args.bins)?;
    let mut report = EvalReport {
        bins: args.bins,
        trajectory: summary,
        reference: None,
        comparison: None,
    };
    if let Some(ref_path) = &args.reference {
        let reference = read_trajectory(ref_path)?;
        report.reference = Some(eval_distributions(&reference, args.bins)?);
        let (h_sim, h_ref, l1) = compare_samples(
            &speed_samples(&trajectory),
            &speed_samples(&reference),
            args.bins,
        )?;
        println!("speed L1 distance: {l1:.4}");
        let sim_dist = min_distance_samples(&trajectory);
        let ref_dist = min_distance_samples(&reference);
        let min_distance = if sim_dist.is_empty() || ref_dist.is_empty() {
            None
        } else {
            let (a, b, l1) = compare_samples(&sim_dist, &ref_dist, args.bins)?;
            println!("min-distance L1 distance: {l1:.4}");
            Some(ComparedPair {
                trajectory: a,
                reference: b,
                l1,
            })
        };
        report.comparison = Some(Comparison {
            speed: ComparedPair {
                trajectory: h_sim,
                reference: h_ref,
                l1,
            },
            min_distance,
        });
    }
    if let Some(out) = &args.out {
        formats::write_json(out, &report)?;
        println!("wrote {}", out.display());
    }
    if let Some(plot) = &args.plot {
        let image = plot_histograms(
            &report.comparison.as_ref().map_or_else(
                || vec![(report.trajectory.speed.clone(), BAR_PRIMARY)],
                |c| {
                    vec![
                        (c.speed.trajectory.clone(), BAR_PRIMARY),
                        (c.speed.reference.clone(), BAR_SECONDARY),
                    ]
                },
            ),
        );
        formats::write_image(plot, &image)?;
        println!("wrote {}", plot.display());
    }
    Ok(())
}

const BAR_PRIMARY: Rgb = [0.17, 0.35, 0.78];
const BAR_SECONDARY: Rgb = [0.85, 0.33, 0.16];
const PLOT_HEIGHT: usize = 200;
const PLOT_BAR_WIDTH: usize = 10;
const PLOT_MARGIN: usize = 8;

/// Renders grouped vertical bars, one group per bin, one bar per series.
/// Mass axis is scaled to the tallest bar.
fn plot_histograms(series: &[(Histogram, Rgb)]) -> ImageRaster {
    let bins = series.iter().map(|(h, _)| h.mass.len()).max().unwrap_or(0);
    let groups = series.len().max(1);
    let width = 2 * PLOT_MARGIN + bins * (groups * PLOT_BAR_WIDTH + 4);
    let height = 2 * PLOT_MARGIN + PLOT_HEIGHT;
    let mut image = ImageRaster::filled(width.max(1), height, [1.0, 1.0, 1.0]);
    let peak = series
        .iter()
        .flat_map(|(h, _)| h.mass.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    for (s, (hist, color)) in series.iter().enumerate() {
        for (bin, &mass) in hist.mass.iter().enumerate() {
            let bar = ((mass / peak) * PLOT_HEIGHT as f64).round() as usize;
            let x0 = PLOT_MARGIN + bin * (groups * PLOT_BAR_WIDTH + 4) + s * PLOT_BAR_WIDTH;
            for x in x0..x0 + PLOT_BAR_WIDTH {
                for y in (height - PLOT_MARGIN - bar)..(height - PLOT_MARGIN) {
                    image.set(x, y, *color);
                }
            }
        }
    }
    image
}

fn cmd_compose(args: ComposeArgs) -> Result<()> {
    let background = formats::read_image(&args.bg)?;
    let depth = formats::read_depth(&args.bg_depth)?;
    let camera = formats::read_camera(&args.cam)?;
    let objects: Vec<PlacedObject> = formats::read_json(&args.agents)?;
    let composed = compose_frame(&background, &depth, &camera.intrinsics, &camera.pose, &objects)?;
    formats::write_image(&args.out, &composed.image)?;
    if let Some(path) = &args.out_depth {
        formats::write_depth(path, &composed.depth)?;
    }
    if let Some(path) = &args.masks {
        formats::write_labels(path, &composed.masks)?;
    }
    if let Some(path) = &args.ann {
        let annotations = FrameAnnotations {
            frame: args.frame,
            objects: composed.annotations.clone(),
        };
        formats::write_json(path, &annotations)?;
    }
    println!(
        "composed {} of {} objects -> {}",
        composed.annotations.len(),
        objects.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs, global_config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let config_path = args
        .config
        .as_deref()
        .or(global_config)
        .ok_or_else(|| Error::usage("run requires --config pointing at a run config JSON"))?;
    let mut config: RunConfig = formats::read_json(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| base.join("out"));
    let report = run_pipeline(&config, base, &out_dir)?;
    println!(
        "run complete: {} frames, {} artifacts, manifest {}",
        report.frames,
        report.artifacts.len(),
        report.manifest_path.display()
    );
    Ok(())
}

fn cmd_make_scene(args: MakeSceneArgs, seed: Option<u64>) -> Result<()> {
    let defaults = DemoOptions::default();
    let options = DemoOptions {
        width: args.width.unwrap_or(defaults.width),
        height: args.height.unwrap_or(defaults.height),
        seed: seed.unwrap_or(defaults.seed),
        cloud_spacing: args.cloud_spacing.unwrap_or(defaults.cloud_spacing),
        reference_count: args.refs.unwrap_or(defaults.reference_count),
        target_count: args.targets.unwrap_or(defaults.target_count),
    };
    let demo = write_demo_dataset(&args.out_dir, &options)?;
    let config = write_demo_run_config(&args.out_dir, &demo)?;
    println!(
        "wrote demo dataset to {} (run config {})",
        args.out_dir.display(),
        config.display()
    );
    Ok(())
}
