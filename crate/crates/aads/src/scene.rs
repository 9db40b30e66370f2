//! Synthetic scenes: planes, boxes, and spheres with flat or checkerboard
//! albedo, an exact ray tracer for ground-truth images/depths/ranges, plus
//! point sampling and meshing so the same geometry can feed the depth
//! refiner (as a cloud) and the LiDAR simulator (as triangles).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::lidar::SceneTriangle;
use crate::ply::CloudPoint;
use crate::raster::{DepthMap, ImageRaster, LabelRaster, Rgb, ViewSample};

/// Color of rays that escape the scene.
pub const SKY_COLOR: Rgb = [0.53, 0.76, 0.92];

/// Rays must travel at least this far before a hit counts.
const RAY_EPS: f64 = 1e-9;

const SPHERE_STACKS: usize = 24;
const SPHERE_SLICES: usize = 48;

/// Surface color model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Albedo {
    Solid { color: Rgb },
    /// Checkerboard over the surface's own parametrization, cell side
    /// `scale` meters.
    Checker { a: Rgb, b: Rgb, scale: f64 },
}

/// Closed-form checker lookup at surface coordinates (u, v) in meters.
pub fn checker_color(a: Rgb, b: Rgb, scale: f64, u: f64, v: f64) -> Rgb {
    let cell = ((u / scale).floor() + (v / scale).floor()) as i64;
    if cell.rem_euclid(2) == 0 {
        a
    } else {
        b
    }
}

impl Albedo {
    pub fn color_at(&self, u: f64, v: f64) -> Rgb {
        match *self {
            Albedo::Solid { color } => color,
            Albedo::Checker { a, b, scale } => checker_color(a, b, scale, u, v),
        }
    }
}

/// Geometry of one primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimitiveKind {
    /// Finite parallelogram: `origin + s*edge_u + t*edge_v`, s,t in [0,1].
    Plane {
        origin: [f64; 3],
        edge_u: [f64; 3],
        edge_v: [f64; 3],
    },
    /// Axis-aligned box rotated by `yaw` about world +z.
    Box {
        center: [f64; 3],
        size: [f64; 3],
        yaw: f64,
    },
    Sphere { center: [f64; 3], radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePrimitive {
    pub kind: PrimitiveKind,
    pub albedo: Albedo,
    pub class_id: u16,
}

/// A full synthetic scene; the JSON form is the `scene.json` interchange
/// format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub primitives: Vec<ScenePrimitive>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::invalid_argument("scene has no primitives"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let bad = |msg: String| Error::invalid_argument(format!("primitive {i}: {msg}"));
            if p.class_id == 0 {
                return Err(bad("class_id 0 is reserved for unknown/sky".into()));
            }
            match &p.kind {
                PrimitiveKind::Plane { origin, edge_u, edge_v } => {
                    if origin.iter().chain(edge_u).chain(edge_v).any(|v| !v.is_finite()) {
                        return Err(bad("non-finite plane parameters".into()));
                    }
                    let n = Vector3::from(*edge_u).cross(&Vector3::from(*edge_v));
                    if n.norm() < 1e-12 {
                        return Err(bad("plane edges are parallel or zero".into()));
                    }
                }
                PrimitiveKind::Box { center, size, yaw } => {
                    if center.iter().chain(size).any(|v| !v.is_finite()) || !yaw.is_finite() {
                        return Err(bad("non-finite box parameters".into()));
                    }
                    if size.iter().any(|&s| s <= 0.0) {
                        return Err(bad(format!("box size must be positive, got {size:?}")));
                    }
                }
                PrimitiveKind::Sphere { center, radius } => {
                    if center.iter().any(|v| !v.is_finite()) || !radius.is_finite() {
                        return Err(bad("non-finite sphere parameters".into()));
                    }
                    if *radius <= 0.0 {
                        return Err(bad(format!("sphere radius must be positive, got {radius}")));
                    }
                }
            }
            if let Albedo::Checker { scale, .. } = p.albedo {
                if !(scale > 0.0) {
                    return Err(bad(format!("checker scale must be positive, got {scale}")));
                }
            }
        }
        Ok(())
    }

    /// The scene without the listed classes (e.g. to build the static-only
    /// geometry backing depth refinement).
    pub fn without_classes(&self, skip: &[u16]) -> SceneSpec {
        SceneSpec {
            primitives: self
                .primitives
                .iter()
                .filter(|p| !skip.contains(&p.class_id))
                .cloned()
                .collect(),
        }
    }
}

/// The 8 corners of a yawed box; bit k of the index selects the sign along
/// local axis k.
pub fn box_corners(center: [f64; 3], size: [f64; 3], yaw: f64) -> [Vector3<f64>; 8] {
    let (s, c) = yaw.sin_cos();
    let half = Vector3::new(size[0] / 2.0, size[1] / 2.0, size[2] / 2.0);
    let center = Vector3::from(center);
    std::array::from_fn(|i| {
        let local = Vector3::new(
            if i & 1 == 0 { -half.x } else { half.x },
            if i & 2 == 0 { -half.y } else { half.y },
            if i & 4 == 0 { -half.z } else { half.z },
        );
        center + Vector3::new(c * local.x - s * local.y, s * local.x + c * local.y, local.z)
    })
}

const BOX_FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 3, 7, 6],
    [0, 1, 3, 2],
    [4, 5, 7, 6],
];

/// The 12 triangles of a yawed box, tagged with a class id.
pub fn box_triangles(center: [f64; 3], size: [f64; 3], yaw: f64, class_id: u16) -> Vec<SceneTriangle> {
    let corners = box_corners(center, size, yaw);
    let mut tris = Vec::with_capacity(12);
    for face in BOX_FACES {
        tris.push(SceneTriangle {
            vertices: [corners[face[0]], corners[face[1]], corners[face[2]]],
            class_id,
        });
        tris.push(SceneTriangle {
            vertices: [corners[face[0]], corners[face[2]], corners[face[3]]],
            class_id,
        });
    }
    tris
}

fn rotate_z(v: Vector3<f64>, yaw: f64) -> Vector3<f64> {
    let (s, c) = yaw.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Ray/primitive intersection: Euclidean distance along the unit direction
/// plus the surface (u, v) in meters for albedo lookup.
fn intersect(kind: &PrimitiveKind, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<(f64, (f64, f64))> {
    match kind {
        PrimitiveKind::Plane { origin: p0, edge_u, edge_v } => {
            let p0 = Vector3::from(*p0);
            let eu = Vector3::from(*edge_u);
            let ev = Vector3::from(*edge_v);
            let n = eu.cross(&ev);
            let denom = dir.dot(&n);
            if denom.abs() < 1e-14 {
                return None;
            }
            let t = (p0 - origin).dot(&n) / denom;
            if t < RAY_EPS {
                return None;
            }
            let q = origin + dir * t - p0;
            let (lu, lv) = (eu.norm(), ev.norm());
            let u = q.dot(&eu) / lu;
            let v = q.dot(&ev) / lv;
            if u < 0.0 || u > lu || v < 0.0 || v > lv {
                return None;
            }
            Some((t, (u, v)))
        }
        PrimitiveKind::Box { center, size, yaw } => {
            let o = rotate_z(origin - Vector3::from(*center), -yaw);
            let d = rotate_z(dir, -yaw);
            let half = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
            let mut t_enter = f64::NEG_INFINITY;
            let mut t_exit = f64::INFINITY;
            let mut enter_axis = 0usize;
            let mut exit_axis = 0usize;
            for a in 0..3 {
                if d[a].abs() < 1e-14 {
                    if o[a].abs() > half[a] {
                        return None;
                    }
                    continue;
                }
                let (mut t1, mut t2) = ((-half[a] - o[a]) / d[a], (half[a] - o[a]) / d[a]);
                if t1 > t2 {
                    std::mem::swap(&mut t1, &mut t2);
                }
                if t1 > t_enter {
                    t_enter = t1;
                    enter_axis = a;
                }
                if t2 < t_exit {
                    t_exit = t2;
                    exit_axis = a;
                }
            }
            if t_enter > t_exit || t_exit < RAY_EPS {
                return None;
            }
            // From inside the box the exit face is the visible surface.
            let (t, axis) = if t_enter >= RAY_EPS {
                (t_enter, enter_axis)
            } else {
                (t_exit, exit_axis)
            };
            let h = o + d * t;
            let (b, c) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            Some((t, (h[b] + half[b], h[c] + half[c])))
        }
        PrimitiveKind::Sphere { center, radius } => {
            let oc = origin - Vector3::from(*center);
            let b = 2.0 * oc.dot(&dir);
            let c = oc.norm_squared() - radius * radius;
            let disc = b * b - 4.0 * c;
            if disc < 0.0 {
                return None;
            }
            let sqrt = disc.sqrt();
            let mut t = (-b - sqrt) / 2.0;
            if t < RAY_EPS {
                t = (-b + sqrt) / 2.0;
            }
            if t < RAY_EPS {
                return None;
            }
            let h = (oc + dir * t) / *radius;
            let lon = h.y.atan2(h.x);
            let lat = h.z.clamp(-1.0, 1.0).asin();
            Some((t, ((lon + std::f64::consts::PI) * radius, (lat + std::f64::consts::FRAC_PI_2) * radius)))
        }
    }
}

/// A ray's nearest surface hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Euclidean distance along the unit ray.
    pub t: f64,
    pub point: Vector3<f64>,
    pub color: Rgb,
    pub class_id: u16,
}

/// Traces one unit-direction ray through the scene; ties go to the earliest
/// primitive.
pub fn trace_ray(scene: &SceneSpec, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<Hit> {
    let mut best: Option<(f64, (f64, f64), &ScenePrimitive)> = None;
    for p in &scene.primitives {
        if let Some((t, uv)) = intersect(&p.kind, origin, dir) {
            if best.as_ref().is_none_or(|&(bt, _, _)| t < bt) {
                best = Some((t, uv, p));
            }
        }
    }
    best.map(|(t, (u, v), p)| Hit {
        t,
        point: origin + dir * t,
        color: p.albedo.color_at(u, v),
        class_id: p.class_id,
    })
}

/// Renders an exact ground-truth view: flat albedo colors, camera-frame
/// z depth (invalid on sky), and class labels (0 on sky).
pub fn trace_view(scene: &SceneSpec, intrinsics: &CameraIntrinsics, pose: &Pose) -> Result<ViewSample> {
    scene.validate()?;
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut image = ImageRaster::filled(w, h, SKY_COLOR);
    let mut depth = DepthMap::invalid(w, h);
    let mut labels = LabelRaster::filled(w, h, 0);
    let origin = pose.center();
    for y in 0..h {
        for x in 0..w {
            let raw = Vector3::new(
                (x as f64 - intrinsics.cx) / intrinsics.fx,
                (y as f64 - intrinsics.cy) / intrinsics.fy,
                1.0,
            );
            let norm = raw.norm();
            let dir = pose.rotation() * (raw / norm);
            if let Some(hit) = trace_ray(scene, origin, dir) {
                image.set(x, y, hit.color);
                depth.set(x, y, hit.t / norm);
                labels.set(x, y, hit.class_id);
            }
        }
    }
    ViewSample::new(image, depth, labels, *intrinsics, *pose)
}

/// Ground-truth range image seen from `pose` (Euclidean hit distances, NaN
/// on sky), e.g. to validate LiDAR casts.
pub fn trace_ranges(scene: &SceneSpec, intrinsics: &CameraIntrinsics, pose: &Pose) -> Result<DepthMap> {
    scene.validate()?;
    let mut ranges = DepthMap::invalid(intrinsics.width, intrinsics.height);
    let origin = pose.center();
    for (x, y) in ranges.coords() {
        let raw = Vector3::new(
            (x as f64 - intrinsics.cx) / intrinsics.fx,
            (y as f64 - intrinsics.cy) / intrinsics.fy,
            1.0,
        );
        let dir = pose.rotation() * raw.normalize();
        if let Some(hit) = trace_ray(scene, origin, dir) {
            ranges.set(x, y, hit.t);
        }
    }
    Ok(ranges)
}

/// Deterministically samples surface points at roughly `spacing` meters:
/// centered grids on planes and box faces, a Fibonacci spiral on spheres.
pub fn sample_points(scene: &SceneSpec, spacing: f64) -> Result<Vec<CloudPoint>> {
    scene.validate()?;
    if !(spacing > 0.0) {
        return Err(Error::invalid_argument(format!(
            "sample spacing must be positive, got {spacing}"
        )));
    }
    let mut cloud = Vec::new();
    for p in &scene.primitives {
        match &p.kind {
            PrimitiveKind::Plane { origin, edge_u, edge_v } => {
                let p0 = Vector3::from(*origin);
                let eu = Vector3::from(*edge_u);
                let ev = Vector3::from(*edge_v);
                let nu = (eu.norm() / spacing).ceil() as usize;
                let nv = (ev.norm() / spacing).ceil() as usize;
                for j in 0..nv {
                    for i in 0..nu {
                        let s = (i as f64 + 0.5) / nu as f64;
                        let t = (j as f64 + 0.5) / nv as f64;
                        cloud.push(CloudPoint {
                            position: p0 + eu * s + ev * t,
                            class_id: p.class_id,
                        });
                    }
                }
            }
            PrimitiveKind::Box { center, size, yaw } => {
                let half = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
                for axis in 0..3usize {
                    let (b, c) = match axis {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    let nb = (size[b] / spacing).ceil() as usize;
                    let nc = (size[c] / spacing).ceil() as usize;
                    for sign in [-1.0, 1.0] {
                        for j in 0..nc {
                            for i in 0..nb {
                                let mut local = Vector3::zeros();
                                local[axis] = sign * half[axis];
                                local[b] = ((i as f64 + 0.5) / nb as f64 - 0.5) * size[b];
                                local[c] = ((j as f64 + 0.5) / nc as f64 - 0.5) * size[c];
                                cloud.push(CloudPoint {
                                    position: Vector3::from(*center) + rotate_z(local, *yaw),
                                    class_id: p.class_id,
                                });
                            }
                        }
                    }
                }
            }
            PrimitiveKind::Sphere { center, radius } => {
                let area = 4.0 * std::f64::consts::PI * radius * radius;
                let n = ((area / (spacing * spacing)).ceil() as usize).max(8);
                let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
                for i in 0..n {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r_xy = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    cloud.push(CloudPoint {
                        position: Vector3::from(*center)
                            + *radius * Vector3::new(r_xy * phi.cos(), r_xy * phi.sin(), z),
                        class_id: p.class_id,
                    });
                }
            }
        }
    }
    Ok(cloud)
}

/// Meshes the scene for the rasterizing LiDAR cube-map renderer: planes as
/// two triangles, boxes as twelve, spheres as UV meshes.
pub fn scene_triangles(scene: &SceneSpec) -> Result<Vec<SceneTriangle>> {
    scene.validate()?;
    let mut tris = Vec::new();
    for p in &scene.primitives {
        match &p.kind {
            PrimitiveKind::Plane { origin, edge_u, edge_v } => {
                let p0 = Vector3::from(*origin);
                let eu = Vector3::from(*edge_u);
                let ev = Vector3::from(*edge_v);
                tris.push(SceneTriangle { vertices: [p0, p0 + eu, p0 + eu + ev], class_id: p.class_id });
                tris.push(SceneTriangle { vertices: [p0, p0 + eu + ev, p0 + ev], class_id: p.class_id });
            }
            PrimitiveKind::Box { center, size, yaw } => {
                tris.extend(box_triangles(*center, *size, *yaw, p.class_id));
            }
            PrimitiveKind::Sphere { center, radius } => {
                let c = Vector3::from(*center);
                let vertex = |i: usize, j: usize| -> Vector3<f64> {
                    let theta = std::f64::consts::PI * i as f64 / SPHERE_STACKS as f64;
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / SPHERE_SLICES as f64;
                    c + *radius
                        * Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
                };
                for i in 0..SPHERE_STACKS {
                    for j in 0..SPHERE_SLICES {
                        let a = vertex(i, j);
                        let b = vertex(i + 1, j);
                        let c2 = vertex(i + 1, (j + 1) % SPHERE_SLICES);
                        let d = vertex(i, (j + 1) % SPHERE_SLICES);
                        if i > 0 {
                            tris.push(SceneTriangle { vertices: [a, b, c2], class_id: p.class_id });
                        }
                        if i + 1 < SPHERE_STACKS {
                            tris.push(SceneTriangle { vertices: [a, c2, d], class_id: p.class_id });
                        }
                    }
                }
            }
        }
    }
    Ok(tris)
}

/// Meshes the scene into a ready-to-cast LiDAR world.
pub fn lidar_scene(scene: &SceneSpec) -> Result<crate::lidar::LidarScene> {
    Ok(crate::lidar::LidarScene {
        points: Vec::new(),
        triangles: scene_triangles(scene)?,
    })
}
