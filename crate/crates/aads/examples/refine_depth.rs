//! Depth refinement: render a sparse point cloud into a camera, then prune
//! outliers, smooth edge-aware, and fill holes into a dense depth map.
//!
//! The demo street scene provides both the cloud and — via the exact ray
//! tracer — ground-truth depth to measure against.
//!
//! Run with `cargo run --release --example refine_depth`.

use std::path::Path;

use aads::camera::{CameraIntrinsics, Pose};
use aads::depth::{refine_depth, RefineConfig};
use aads::formats::{self, ViewCamera};
use aads::manifest::{demo_scene, DEMO_MOVABLE_CLASSES};
use aads::scene::{sample_points, trace_view};
use nalgebra::Vector3;

fn main() -> aads::Result<()> {
    let out = Path::new("target/example-out/refine_depth");
    formats::create_dir_all(out)?;

    // The static demo world (parked cars removed) and a camera on the road.
    let scene = demo_scene().without_classes(&DEMO_MOVABLE_CLASSES);
    let intrinsics = CameraIntrinsics::new(160.0, 160.0, 99.5, 74.5, 200, 150)?;
    let pose = Pose::look_at(
        Vector3::new(2.0, 0.0, 1.6),
        Vector3::new(60.0, 0.0, 1.6),
        Vector3::new(0.0, 0.0, 1.0),
    )?;
    let camera = ViewCamera { intrinsics, pose };

    // Sparse capture: one point every 25 cm on every surface.
    let cloud = sample_points(&scene, 0.25)?;
    println!("cloud: {} points", cloud.len());

    // Ground truth and guide image from the exact ray tracer.
    let truth = trace_view(&scene, &intrinsics, &pose)?;

    let refined = refine_depth(&cloud, &camera, Some(&truth.image), &RefineConfig::default())?;

    let mut errors: Vec<f64> = refined
        .coords()
        .filter_map(|(x, y)| {
            let (r, t) = (refined.get(x, y), truth.depth.get(x, y));
            (r.is_finite() && t.is_finite()).then(|| (r - t).abs())
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let quantile = |q: f64| errors[((errors.len() - 1) as f64 * q) as usize];
    println!(
        "refined: {}/{} pixels valid; |depth error| median {:.3} m, p90 {:.3} m, max {:.2} m",
        refined.valid_count(),
        refined.len(),
        quantile(0.5),
        quantile(0.9),
        errors.last().unwrap()
    );

    formats::write_depth(&out.join("refined.drf"), &refined)?;
    formats::write_depth(&out.join("truth.drf"), &truth.depth)?;
    formats::write_image(&out.join("guide.png"), &truth.image)?;
    println!("outputs in {}", out.display());
    Ok(())
}
