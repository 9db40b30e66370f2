//! Novel background view synthesis: warp the reference captures into a new
//! camera, stitch them with the MRF seam optimizer, and blend gradients.
//!
//! Synthesizes a view between two demo reference cameras and reports PSNR
//! against the exact ray trace of the same camera.
//!
//! Run with `cargo run --release --example novel_view`.

use std::path::Path;

use aads::formats;
use aads::manifest::{demo_scene, write_demo_dataset, Dataset, DemoOptions};
use aads::scene::trace_view;
use aads::stitch::{synthesize_view, EnergyWeights, StitchConfig};

fn main() -> aads::Result<()> {
    let out = Path::new("target/example-out/novel_view");
    formats::create_dir_all(out)?;

    // Generate and load a small demo dataset: 4 reference captures along
    // the street plus 2 target cameras the references never saw.
    let options = DemoOptions {
        width: 160,
        height: 120,
        ..DemoOptions::default()
    };
    let demo = write_demo_dataset(&out.join("dataset"), &options)?;
    let dataset = Dataset::load(&demo.manifest)?;
    let target = formats::read_camera(&demo.targets[0])?;

    let synth = synthesize_view(
        &target,
        &dataset.views,
        &EnergyWeights::default(),
        &StitchConfig::default(),
    )?;
    println!("stitched from references {:?}", synth.sources);

    // Ground truth for the same camera from the ray tracer.
    let truth = trace_view(&demo_scene(), &target.intrinsics, &target.pose)?;
    let mut sq_sum = 0.0;
    for (x, y) in synth.image.coords() {
        let (a, b) = (synth.image.get(x, y), truth.image.get(x, y));
        for c in 0..3 {
            sq_sum += (a[c] - b[c]) * (a[c] - b[c]);
        }
    }
    let mse = sq_sum / (3 * synth.image.len()) as f64;
    println!("PSNR vs ray-traced ground truth: {:.2} dB", -10.0 * mse.log10());

    formats::write_image(&out.join("synthesized.png"), &synth.image)?;
    formats::write_image(&out.join("ground_truth.png"), &truth.image)?;
    formats::write_depth(&out.join("synthesized.drf"), &synth.depth)?;
    formats::write_labels(&out.join("provenance.png"), &synth.provenance)?;
    println!("outputs in {}", out.display());
    Ok(())
}
