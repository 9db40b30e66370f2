//! Moving-object composition: drop flat-shaded agent boxes into a
//! synthesized background with z-buffered occlusion, instance masks, and
//! 2D/3D box annotations.
//!
//! Run with `cargo run --release --example compose_frame`.

use std::path::Path;

use aads::augment::{compose_frame, FrameAnnotations, PlacedObject};
use aads::formats;
use aads::manifest::{write_demo_dataset, Dataset, DemoOptions};
use aads::raster::LABEL_UNKNOWN;
use aads::stitch::{synthesize_view, EnergyWeights, StitchConfig};

fn main() -> aads::Result<()> {
    let out = Path::new("target/example-out/compose_frame");
    formats::create_dir_all(out)?;

    // Background: a synthesized novel view of the demo street.
    let demo = write_demo_dataset(&out.join("dataset"), &DemoOptions::default())?;
    let dataset = Dataset::load(&demo.manifest)?;
    let target = formats::read_camera(&demo.targets[0])?;
    let background = synthesize_view(
        &target,
        &dataset.views,
        &EnergyWeights::default(),
        &StitchConfig::default(),
    )?;

    // Three agents at increasing distance; the nearest partially occludes
    // the middle one.
    let objects = vec![
        PlacedObject {
            class: "car".into(),
            center: [8.0, -1.2, 0.75],
            size: [4.2, 1.8, 1.5],
            yaw: 0.05,
            color: [0.75, 0.15, 0.1],
        },
        PlacedObject {
            class: "car".into(),
            center: [14.0, 0.4, 0.75],
            size: [4.2, 1.8, 1.5],
            yaw: -0.1,
            color: [0.1, 0.3, 0.75],
        },
        PlacedObject {
            class: "pedestrian".into(),
            center: [11.0, 2.4, 0.875],
            size: [0.5, 0.5, 1.75],
            yaw: 1.2,
            color: [0.9, 0.7, 0.2],
        },
    ];

    let frame = compose_frame(
        &background.image,
        &background.depth,
        &target.intrinsics,
        &target.pose,
        &objects,
    )?;

    for a in &frame.annotations {
        println!(
            "{}: mask id {}, 2D box [{:.1}, {:.1}, {:.1}, {:.1}], yaw {:.2}",
            a.class, a.mask_id, a.box2d[0], a.box2d[1], a.box2d[2], a.box2d[3], a.box3d.yaw
        );
    }
    let covered = frame
        .masks
        .data()
        .iter()
        .filter(|&&m| m != LABEL_UNKNOWN)
        .count();
    println!(
        "{} of {} pixels covered by agents",
        covered,
        frame.masks.len()
    );

    formats::write_image(&out.join("composed.png"), &frame.image)?;
    formats::write_depth(&out.join("composed.drf"), &frame.depth)?;
    formats::write_labels(&out.join("masks.png"), &frame.masks)?;
    formats::write_json(
        &out.join("annotations.json"),
        &FrameAnnotations {
            frame: 0,
            objects: frame.annotations.clone(),
        },
    )?;
    println!("outputs in {}", out.display());
    Ok(())
}
