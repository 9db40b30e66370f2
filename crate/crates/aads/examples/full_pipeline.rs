//! The whole scan-to-simulation loop in one call: clean references, refine
//! depth, simulate traffic, synthesize each target view, composite agents,
//! and cast LiDAR scans — then run it again to show hash-stable determinism.
//!
//! Run with `cargo run --release --example full_pipeline`.

use std::path::Path;

use aads::formats;
use aads::manifest::{write_demo_dataset, DemoOptions};
use aads::pipeline::{run_pipeline, write_demo_run_config, RunConfig};

fn main() -> aads::Result<()> {
    let out = Path::new("target/example-out/full_pipeline");
    formats::create_dir_all(out)?;

    // A compact demo capture: 4 reference views, 2 target cameras.
    let options = DemoOptions {
        width: 128,
        height: 96,
        cloud_spacing: 0.2,
        ..DemoOptions::default()
    };
    let demo = write_demo_dataset(&out.join("dataset"), &options)?;
    let config_path = write_demo_run_config(&out.join("dataset"), &demo)?;
    let config: RunConfig = formats::read_json(&config_path)?;
    println!(
        "run config: {} targets, traffic {:?}, seed {}",
        config.targets.len(),
        config.traffic.as_ref().map(|t| t.counts),
        config.seed
    );

    let base = out.join("dataset");
    let first = run_pipeline(&config, &base, &out.join("run_a"))?;
    println!("first run: {} artifacts", first.artifacts.len());
    for (name, hash) in &first.artifacts {
        println!("  {name}: {}", &hash[..16]);
    }

    let second = run_pipeline(&config, &base, &out.join("run_b"))?;
    println!(
        "second run with the same seed is {}",
        if second.artifacts == first.artifacts {
            "bit-identical"
        } else {
            "DIFFERENT (bug!)"
        }
    );
    println!("outputs in {}", out.display());
    Ok(())
}
