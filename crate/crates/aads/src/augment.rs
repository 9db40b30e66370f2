//! Scene augmentation: strip moving objects out of a captured view, inpaint
//! the exposed holes by diffusion, and composite simulated agents back in as
//! flat-shaded boxes with pixel masks and 2D/3D box annotations.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{self, CameraIntrinsics, Pose};
use crate::depth::poisson_fill;
use crate::error::{Error, Result};
use crate::raster::{
    DepthMap, ImageRaster, LabelRaster, MaskRaster, Raster, Rgb, ViewSample, LABEL_UNKNOWN,
};
use crate::rasterize::rasterize_triangle;
use crate::traffic::{AgentClass, AgentState};

/// An instance needs at least this many visible pixels to earn an
/// annotation; smaller slivers keep their painted pixels but lose their
/// mask and annotation.
pub const MIN_VISIBLE_PIXELS: usize = 8;

/// Diffusion fill used when a mask covers the entire raster and no boundary
/// values exist.
pub const FULL_FRAME_FILL: Rgb = [0.5, 0.5, 0.5];

const INPAINT_TOL: f64 = 1e-6;
const INPAINT_MAX_ITER: usize = 20_000;

/// Blanks every pixel whose label is in `movable_classes`: color to black,
/// depth to invalid, label to unknown. Returns the removal mask. A view
/// with no movable pixels comes back untouched with an empty mask.
pub fn remove_moving_objects(view: &mut ViewSample, movable_classes: &[u16]) -> MaskRaster {
    let mut mask = MaskRaster::filled(view.labels.width(), view.labels.height(), false);
    for (x, y) in view.labels.coords() {
        if movable_classes.contains(&view.labels.get(x, y)) {
            mask.set(x, y, true);
            view.image.set(x, y, [0.0, 0.0, 0.0]);
            view.depth.set(x, y, f64::NAN);
            view.labels.set(x, y, LABEL_UNKNOWN);
        }
    }
    mask
}

/// Fills masked pixels per channel by solving the discrete Laplace equation
/// with the surrounding pixels as Dirichlet constraints (same contract as
/// depth completion: unmasked pixels are never altered, filled values obey
/// the boundary's min/max). A mask covering the whole raster has no
/// boundary and falls back to a constant mid-gray fill.
pub fn diffusion_inpaint(image: &ImageRaster, mask: &MaskRaster) -> Result<ImageRaster> {
    if !image.same_size(mask) {
        return Err(Error::invalid_argument(format!(
            "image {}x{} and mask {}x{} differ in size",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    let holes: Vec<(usize, usize)> = image.coords().filter(|&(x, y)| mask.get(x, y)).collect();
    if holes.len() == image.len() {
        return Ok(ImageRaster::filled(image.width(), image.height(), FULL_FRAME_FILL));
    }
    let mut out = image.clone();
    for channel in 0..3 {
        let mut plane = Raster::filled(image.width(), image.height(), f64::NAN);
        for (x, y) in image.coords() {
            if !mask.get(x, y) {
                plane.set(x, y, image.get(x, y)[channel]);
            }
        }
        poisson_fill(&mut plane, &holes, INPAINT_TOL, INPAINT_MAX_ITER)?;
        for &(x, y) in &holes {
            let mut px = out.get(x, y);
            px[channel] = plane.get(x, y);
            out.set(x, y, px);
        }
    }
    Ok(out)
}

/// A simulated agent to composite: an upright box (yaw about world +z) with
/// a flat shade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacedObject {
    pub class: String,
    pub center: [f64; 3],
    /// Full extents along the box's local x, y, z before yaw.
    pub size: [f64; 3],
    /// Radians about world +z.
    pub yaw: f64,
    pub color: Rgb,
}

/// Box extents for an agent class, meters (length, width, height).
pub fn agent_box_size(class: AgentClass) -> [f64; 3] {
    match class {
        AgentClass::Car => [4.2, 1.8, 1.5],
        AgentClass::Cyclist => [1.8, 0.6, 1.6],
        AgentClass::Pedestrian => [0.5, 0.5, 1.75],
    }
}

/// Label raster id for an agent class.
pub fn agent_class_id(class: AgentClass) -> u16 {
    match class {
        AgentClass::Car => 10,
        AgentClass::Cyclist => 11,
        AgentClass::Pedestrian => 12,
    }
}

/// Flat shade for an agent class.
pub fn agent_color(class: AgentClass) -> Rgb {
    match class {
        AgentClass::Car => [0.85, 0.15, 0.1],
        AgentClass::Cyclist => [0.1, 0.55, 0.85],
        AgentClass::Pedestrian => [0.95, 0.8, 0.15],
    }
}

impl PlacedObject {
    /// Lifts a ground-plane agent to its 3D box: center at half height,
    /// yaw from heading.
    pub fn from_agent(agent: &AgentState) -> PlacedObject {
        let size = agent_box_size(agent.class);
        PlacedObject {
            class: agent.class.name().to_string(),
            center: [agent.position.x, agent.position.y, size[2] / 2.0],
            size,
            yaw: agent.heading,
            color: agent_color(agent.class),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let finite =
            self.center.iter().chain(&self.size).chain(&self.color).all(|v| v.is_finite())
                && self.yaw.is_finite();
        if !finite {
            return Err(Error::invalid_argument(format!(
                "object {index}: box has non-finite parameters"
            )));
        }
        if self.size.iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid_argument(format!(
                "object {index}: degenerate box size [{}, {}, {}]",
                self.size[0], self.size[1], self.size[2]
            )));
        }
        Ok(())
    }

    /// The 8 world-frame corners; bit k of the index selects the sign of
    /// local axis k.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (s, c) = self.yaw.sin_cos();
        let half = Vector3::new(self.size[0] / 2.0, self.size[1] / 2.0, self.size[2] / 2.0);
        let center = Vector3::from(self.center);
        std::array::from_fn(|i| {
            let local = Vector3::new(
                if i & 1 == 0 { -half.x } else { half.x },
                if i & 2 == 0 { -half.y } else { half.y },
                if i & 4 == 0 { -half.z } else { half.z },
            );
            center + Vector3::new(c * local.x - s * local.y, s * local.x + c * local.y, local.z)
        })
    }
}

/// Quad per box face, as corner indices; each splits into two triangles.
const BOX_FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 3, 7, 6],
    [0, 1, 3, 2],
    [4, 5, 7, 6],
];

/// The result of compositing agents over a background view.
#[derive(Debug, Clone)]
pub struct ComposedFrame {
    pub image: ImageRaster,
    /// Background depth with object depths where objects won.
    pub depth: DepthMap,
    /// Per-pixel instance ids: 0 background, `i + 1` for input object `i`.
    pub masks: LabelRaster,
    pub annotations: Vec<Annotation>,
}

/// 3D box parameters carried into the annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Box3d {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

/// One annotated instance of a composed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub class: String,
    /// `[x0, y0, x1, y1]`: the tight pixel bound of the projected in-front
    /// box corners, intersected with the raster.
    pub box2d: [f64; 4],
    pub box3d: Box3d,
    /// Instance id in the mask raster.
    pub mask_id: u16,
}

/// Annotation sidecar for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameAnnotations {
    pub frame: u64,
    pub objects: Vec<Annotation>,
}

/// Tight bound of the projected in-front corners, clipped to the raster.
/// `None` when every corner is behind the camera or the bound misses the
/// raster entirely.
fn project_box2d(
    object: &PlacedObject,
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
) -> Option<[f64; 4]> {
    let mut lo = Vector2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for corner in object.corners() {
        if let Some((pixel, _)) = camera::project(corner, intrinsics, pose).in_front() {
            lo = lo.inf(&pixel);
            hi = hi.sup(&pixel);
            any = true;
        }
    }
    if !any {
        return None;
    }
    let x0 = lo.x.max(0.0);
    let y0 = lo.y.max(0.0);
    let x1 = hi.x.min(intrinsics.width as f64 - 1.0);
    let y1 = hi.y.min(intrinsics.height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some([x0, y0, x1, y1])
}

/// Composites flat-shaded agent boxes over a background image/depth pair.
///
/// Boxes are z-tested against the background (invalid background depth is
/// infinitely far) and against each other, nearer surface winning, so
/// partially occluded agents show exactly their visible pixels. Objects
/// that end up fully behind the camera or fully occluded are omitted from
/// masks and annotations; instances with fewer than [`MIN_VISIBLE_PIXELS`]
/// visible pixels keep their painted pixels but get no mask or annotation.
pub fn compose_frame(
    background: &ImageRaster,
    background_depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
    objects: &[PlacedObject],
) -> Result<ComposedFrame> {
    if !background.same_size(background_depth) {
        return Err(Error::invalid_argument(
            "background image and depth differ in size",
        ));
    }
    if background.width() != intrinsics.width || background.height() != intrinsics.height {
        return Err(Error::invalid_argument(format!(
            "background {}x{} does not match intrinsics {}x{}",
            background.width(),
            background.height(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    if objects.len() >= u16::MAX as usize {
        return Err(Error::invalid_argument("too many objects for 16-bit instance ids"));
    }
    for (i, o) in objects.iter().enumerate() {
        o.validate(i)?;
    }

    let mut image = background.clone();
    let mut depth = background_depth.clone();
    let mut masks = LabelRaster::filled(background.width(), background.height(), 0);
    // Separate z-buffer so invalid background depth reads as infinitely far.
    let mut zbuf = Raster::filled(background.width(), background.height(), f64::INFINITY);
    for (x, y) in background_depth.coords() {
        let d = background_depth.get(x, y);
        if !d.is_nan() {
            zbuf.set(x, y, d);
        }
    }

    for (i, object) in objects.iter().enumerate() {
        let corners = object.corners();
        let instance = (i + 1) as u16;
        for face in BOX_FACES {
            for tri in [[face[0], face[1], face[2]], [face[0], face[2], face[3]]] {
                let triangle = [corners[tri[0]], corners[tri[1]], corners[tri[2]]];
                rasterize_triangle(intrinsics, pose, &triangle, &mut |x, y, z| {
                    if z < zbuf.get(x, y) {
                        zbuf.set(x, y, z);
                        image.set(x, y, object.color);
                        depth.set(x, y, z);
                        masks.set(x, y, instance);
                    }
                });
            }
        }
    }

    let mut visible = vec![0usize; objects.len()];
    for (x, y) in masks.coords() {
        let id = masks.get(x, y);
        if id > 0 {
            visible[id as usize - 1] += 1;
        }
    }

    let mut annotations = Vec::new();
    for (i, object) in objects.iter().enumerate() {
        let box2d = project_box2d(object, intrinsics, pose);
        if visible[i] >= MIN_VISIBLE_PIXELS {
            if let Some(box2d) = box2d {
                annotations.push(Annotation {
                    class: object.class.clone(),
                    box2d,
                    box3d: Box3d {
                        center: object.center,
                        size: object.size,
                        yaw: object.yaw,
                    },
                    mask_id: (i + 1) as u16,
                });
                continue;
            }
        }
        if visible[i] > 0 {
            // Sliver: keep the pixels, drop the instance.
            let id = (i + 1) as u16;
            for (x, y) in image.coords() {
                if masks.get(x, y) == id {
                    masks.set(x, y, 0);
                }
            }
        }
    }

    Ok(ComposedFrame { image, depth, masks, annotations })
}
