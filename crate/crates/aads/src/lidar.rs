//! Parametric spinning-LiDAR simulation.
//!
//! The sensor is modeled as a cone fan: a list of fixed vertical (elevation)
//! angles spinning about the sensor's +z axis, firing every `azimuth_step`
//! degrees. Scene geometry (points + classed triangles) is rendered once per
//! pose into a six-face cube map of depths, and each firing looks up its
//! range there, so scan cost is independent of scene complexity.
//!
//! Sensor frame: +z is the spin axis (up), elevation is measured from the
//! x/y plane toward +z, azimuth rotates from +x toward +y. Returned points
//! are in the sensor frame; [`LidarScan::pose`] places them in the world.
//!
//! Noise is counter-based: every firing derives an independent RNG from
//! `(rng_seed, frame, beam, azimuth index)`, so scans are bit-reproducible
//! regardless of evaluation order or parallelism.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::ply::{CloudPoint, ScanPoint};
use crate::raster::{DepthMap, LabelRaster};
use crate::rasterize::{rasterize_triangle, splat_point};

/// Default horizontal resolution, degrees per firing (HDL-64E class).
pub const DEFAULT_AZIMUTH_STEP: f64 = 0.16;
/// Default range noise standard deviation, meters (0.5 cm).
pub const DEFAULT_SIGMA_RANGE: f64 = 0.005;
/// Default azimuth noise standard deviation, degrees.
pub const DEFAULT_SIGMA_AZIMUTH: f64 = 0.05;
/// Default maximum usable range, meters.
pub const DEFAULT_MAX_RANGE: f64 = 120.0;
/// Vertical span of the default 64-beam model, degrees.
pub const DEFAULT_BEAM_MIN: f64 = -24.33;
/// See [`DEFAULT_BEAM_MIN`].
pub const DEFAULT_BEAM_MAX: f64 = 2.0;
/// Beam count of the default model.
pub const DEFAULT_BEAM_COUNT: usize = 64;

/// Cube-map face resolution used when none is configured.
pub const DEFAULT_CUBE_RESOLUTION: usize = 1024;

/// Minimum points per beam accepted by [`fit_beam_model`].
pub const MIN_POINTS_PER_BEAM: usize = 10;

/// Spinning-LiDAR description: vertical beam angles plus firing geometry and
/// per-firing Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamModel {
    /// Vertical angles in degrees, sorted ascending.
    pub beams: Vec<f64>,
    /// Degrees of rotation between consecutive firings.
    pub azimuth_step: f64,
    /// Range noise standard deviation, meters.
    pub sigma_range: f64,
    /// Azimuth noise standard deviation, degrees.
    pub sigma_azimuth: f64,
    /// Returns beyond this range are dropped, meters.
    pub max_range: f64,
    /// Seed for the counter-based noise stream.
    pub rng_seed: u64,
}

impl Default for BeamModel {
    fn default() -> Self {
        Self::hdl64(0)
    }
}

impl BeamModel {
    /// The default 64-beam model: angles evenly spanning -24.33 to 2 degrees.
    pub fn hdl64(rng_seed: u64) -> Self {
        let beams = (0..DEFAULT_BEAM_COUNT)
            .map(|i| {
                let t = i as f64 / (DEFAULT_BEAM_COUNT - 1) as f64;
                DEFAULT_BEAM_MIN + t * (DEFAULT_BEAM_MAX - DEFAULT_BEAM_MIN)
            })
            .collect();
        BeamModel {
            beams,
            azimuth_step: DEFAULT_AZIMUTH_STEP,
            sigma_range: DEFAULT_SIGMA_RANGE,
            sigma_azimuth: DEFAULT_SIGMA_AZIMUTH,
            max_range: DEFAULT_MAX_RANGE,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beams.is_empty() {
            return Err(Error::invalid_argument("beam model has no beams"));
        }
        if self.beams.len() > 256 {
            return Err(Error::invalid_argument(format!(
                "{} beams exceed the 256 encodable as uint8 beam ids",
                self.beams.len()
            )));
        }
        if self.beams.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid_argument("beam angles must be finite"));
        }
        if self.beams.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid_argument("beam angles must be sorted ascending"));
        }
        if !(self.azimuth_step > 0.0 && self.azimuth_step <= 360.0) {
            return Err(Error::invalid_argument(format!(
                "azimuth_step must be in (0, 360], got {}",
                self.azimuth_step
            )));
        }
        if !(self.sigma_range >= 0.0) || !(self.sigma_azimuth >= 0.0) {
            return Err(Error::invalid_argument("noise sigmas must be >= 0"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::invalid_argument("max_range must be positive"));
        }
        Ok(())
    }

    /// Firings per full rotation.
    pub fn firings_per_rotation(&self) -> usize {
        (360.0 / self.azimuth_step).ceil() as usize
    }
}

/// Unit ray direction in the sensor frame for the given angles (degrees).
pub fn beam_direction(elevation_deg: f64, azimuth_deg: f64) -> Vector3<f64> {
    let el = elevation_deg.to_radians();
    let az = azimuth_deg.to_radians();
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Triangle with a semantic class, world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTriangle {
    pub vertices: [Vector3<f64>; 3],
    pub class_id: u16,
}

/// Mixed scene geometry consumed by the simulator: a labeled point cloud
/// plus labeled triangle meshes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LidarScene {
    pub points: Vec<CloudPoint>,
    pub triangles: Vec<SceneTriangle>,
}

impl LidarScene {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.triangles.is_empty()
    }
}

/// One depth+class face of the cube map.
#[derive(Debug, Clone)]
pub struct CubeFace {
    pub depth: DepthMap,
    pub class: LabelRaster,
}

/// Six 90-degree pinhole depth renders around a sensor position, axes
/// aligned with the sensor frame. Face order: +x, -x, +y, -y, +z, -z.
#[derive(Debug, Clone)]
pub struct CubeMapDepth {
    pub faces: Vec<CubeFace>,
    pub resolution: usize,
}

/// Rotation-only pose of face `face` expressed in the sensor frame: columns
/// are the face camera's (right, down, forward) axes.
pub fn face_pose(face: usize) -> Pose {
    let (right, down, fwd) = match face {
        0 => ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),
        1 => ((0.0, -1.0, 0.0), (0.0, 0.0, 1.0), (-1.0, 0.0, 0.0)),
        2 => ((-1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
        3 => ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, -1.0, 0.0)),
        4 => ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
        5 => ((1.0, 0.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, -1.0)),
        _ => panic!("cube face index {face} out of range"),
    };
    let m = nalgebra::Matrix3::from_columns(&[
        Vector3::new(right.0, right.1, right.2),
        Vector3::new(down.0, down.1, down.2),
        Vector3::new(fwd.0, fwd.1, fwd.2),
    ]);
    Pose::new(m, Vector3::zeros()).expect("face rotations are orthonormal")
}

/// Intrinsics of a 90-degree cube face: the raster footprint spans tangent
/// [-1, 1] exactly.
pub fn face_intrinsics(resolution: usize) -> Result<CameraIntrinsics> {
    let f = resolution as f64 / 2.0;
    let c = (resolution as f64 - 1.0) / 2.0;
    CameraIntrinsics::new(f, f, c, c, resolution, resolution)
}

impl CubeMapDepth {
    /// Looks up the nearest-texel depth along `direction` (sensor frame) and
    /// converts it to a range. `None` when the cube map has no surface
    /// there. Bilinear interpolation is deliberately avoided: averaging
    /// depths across silhouettes would hallucinate surfaces.
    pub fn sample(&self, direction: Vector3<f64>) -> Option<(f64, u16)> {
        let d = direction.try_normalize(1e-12)?;
        let a = d.abs();
        let face = if a.x >= a.y && a.x >= a.z {
            if d.x >= 0.0 {
                0
            } else {
                1
            }
        } else if a.y >= a.z {
            if d.y >= 0.0 {
                2
            } else {
                3
            }
        } else if d.z >= 0.0 {
            4
        } else {
            5
        };
        let cam = face_pose(face);
        let dc = cam.rotation().transpose() * d;
        debug_assert!(dc.z > 0.0);
        let res = self.resolution as f64;
        let f = res / 2.0;
        let c = (res - 1.0) / 2.0;
        let px = (f * dc.x / dc.z + c).round().clamp(0.0, res - 1.0) as usize;
        let py = (f * dc.y / dc.z + c).round().clamp(0.0, res - 1.0) as usize;
        let depth = self.faces[face].depth.get(px, py);
        if depth.is_nan() {
            return None;
        }
        Some((depth / dc.z, self.faces[face].class.get(px, py)))
    }
}

/// Renders the scene into a cube map centered on `origin` (faces aligned
/// with the sensor frame). Points splat 2x2 and triangles rasterize with
/// perspective-correct depth into a shared z-buffer; the nearest primitive's
/// class wins each texel.
pub fn render_cube_map(
    scene: &LidarScene,
    origin: &Pose,
    resolution: usize,
) -> Result<CubeMapDepth> {
    if scene.is_empty() {
        return Err(Error::invalid_argument("cube map render requires a non-empty scene"));
    }
    if resolution < 2 {
        return Err(Error::invalid_argument("cube map resolution must be at least 2"));
    }
    let intrinsics = face_intrinsics(resolution)?;
    let faces: Vec<CubeFace> = (0..6)
        .into_par_iter()
        .map(|face| {
            let cam = origin.compose(&face_pose(face));
            let mut depth = DepthMap::invalid(resolution, resolution);
            let mut class = LabelRaster::filled(resolution, resolution, 0);
            {
                let mut write = |x: usize, y: usize, z: f64, id: u16| {
                    let cur = depth.get(x, y);
                    if cur.is_nan() || z < cur {
                        depth.set(x, y, z);
                        class.set(x, y, id);
                    }
                };
                for tri in &scene.triangles {
                    rasterize_triangle(&intrinsics, &cam, &tri.vertices, &mut |x, y, z| {
                        write(x, y, z, tri.class_id)
                    });
                }
                for pt in &scene.points {
                    splat_point(&intrinsics, &cam, pt.position, &mut |x, y, z| {
                        write(x, y, z, pt.class_id)
                    });
                }
            }
            CubeFace { depth, class }
        })
        .collect();
    Ok(CubeMapDepth { faces, resolution })
}

/// One simulated sweep: returns in the sensor frame plus the pose that
/// placed the sensor in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub frame_id: u64,
    pub pose: Pose,
    pub points: Vec<ScanPoint>,
}

/// splitmix64 finalizer; decorrelates the firing counter into an RNG seed.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-firing RNG seed from `(seed, frame, beam, azimuth index)`. Counter
/// based so firings can be evaluated in any order without changing the
/// stream each one sees.
fn firing_seed(seed: u64, frame: u64, beam: u64, azimuth_index: u64) -> u64 {
    let mut h = mix64(seed ^ 0x9E37_79B9_7F4A_7C15);
    h = mix64(h ^ frame.wrapping_mul(0xA24B_AED4_963E_E407));
    h = mix64(h ^ beam.wrapping_mul(0x9FB2_1C65_1E98_DF25));
    h = mix64(h ^ azimuth_index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    h
}

/// Spins the beam fan through one rotation against a pre-rendered cube map.
///
/// Per firing: the azimuth is perturbed by N(0, sigma_azimuth), the cube map
/// supplies the range along the perturbed ray, and the range is perturbed by
/// N(0, sigma_range). Misses, non-positive ranges, and ranges beyond
/// `max_range` are dropped. Stored azimuths are the nominal grid angles;
/// the perturbed direction is recoverable from the point position.
pub fn cast_scan(
    model: &BeamModel,
    cube: &CubeMapDepth,
    pose: &Pose,
    frame_id: u64,
) -> Result<LidarScan> {
    model.validate()?;
    let firings = model.firings_per_rotation();
    let mut points = Vec::new();
    for (beam_idx, &elevation) in model.beams.iter().enumerate() {
        for az_idx in 0..firings {
            let nominal_az = az_idx as f64 * model.azimuth_step;
            let mut rng = ChaCha8Rng::seed_from_u64(firing_seed(
                model.rng_seed,
                frame_id,
                beam_idx as u64,
                az_idx as u64,
            ));
            // Both normals are always drawn so the stream layout does not
            // depend on which sigmas are zero.
            let az_noise: f64 = rng.sample::<f64, _>(StandardNormal) * model.sigma_azimuth;
            let range_noise: f64 = rng.sample::<f64, _>(StandardNormal) * model.sigma_range;
            let dir = beam_direction(elevation, nominal_az + az_noise);
            let Some((range, class_id)) = cube.sample(dir) else {
                continue;
            };
            let range = range + range_noise;
            if !(range > 0.0 && range <= model.max_range) {
                continue;
            }
            points.push(ScanPoint {
                position: dir * range,
                range,
                beam_id: beam_idx as u8,
                azimuth: nominal_az,
                class_id,
            });
        }
    }
    Ok(LidarScan {
        frame_id,
        pose: *pose,
        points,
    })
}

/// Renders a cube map and casts one scan per trajectory pose; frame ids are
/// the trajectory indices, which also key the noise stream.
pub fn simulate_sequence(
    scene: &LidarScene,
    trajectory: &[Pose],
    model: &BeamModel,
    resolution: usize,
) -> Result<Vec<LidarScan>> {
    if trajectory.is_empty() {
        return Err(Error::invalid_argument("LiDAR trajectory is empty"));
    }
    model.validate()?;
    trajectory
        .par_iter()
        .enumerate()
        .map(|(frame, pose)| {
            let cube = render_cube_map(scene, pose, resolution)?;
            cast_scan(model, &cube, pose, frame as u64)
        })
        .collect()
}

/// Fits a [`BeamModel`] from per-beam point sets in the sensor frame.
///
/// Each beam's vertical angle is the mean point elevation; the angular noise
/// is the dof-pooled standard deviation of elevation residuals, and the
/// range noise is estimated from first differences of ranges along the
/// azimuth sweep (which cancels slowly varying scene structure). Firing
/// geometry (azimuth step, max range) keeps library defaults: it is not
/// observable from an unordered point set.
pub fn fit_beam_model(labeled_beams: &[Vec<Vector3<f64>>]) -> Result<BeamModel> {
    if labeled_beams.is_empty() {
        return Err(Error::invalid_argument("no beams to fit"));
    }
    let mut angles = Vec::with_capacity(labeled_beams.len());
    let mut elev_ss = 0.0; // pooled sum of squared elevation residuals
    let mut elev_dof = 0usize;
    let mut range_ss = 0.0;
    let mut range_dof = 0usize;
    for (i, pts) in labeled_beams.iter().enumerate() {
        if pts.len() < MIN_POINTS_PER_BEAM {
            return Err(Error::invalid_argument(format!(
                "beam {i}: {} points, need at least {MIN_POINTS_PER_BEAM}",
                pts.len()
            )));
        }
        let mut samples: Vec<(f64, f64, f64)> = pts
            .iter()
            .map(|p| {
                let azimuth = p.y.atan2(p.x);
                let elevation = p.z.atan2(p.x.hypot(p.y)).to_degrees();
                (azimuth, elevation, p.norm())
            })
            .collect();
        let mean_elev = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
        angles.push(mean_elev);
        elev_ss += samples.iter().map(|s| (s.1 - mean_elev).powi(2)).sum::<f64>();
        elev_dof += samples.len() - 1;

        // Range noise: difference consecutive returns along the sweep. For
        // independent noise on a locally linear range trend, the mean-
        // subtracted first differences have variance 2 sigma^2.
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let diffs: Vec<f64> = samples.windows(2).map(|w| w[1].2 - w[0].2).collect();
        let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
        range_ss += diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / 2.0;
        range_dof += diffs.len() - 1;
    }
    angles.sort_by(f64::total_cmp);
    Ok(BeamModel {
        beams: angles,
        sigma_azimuth: (elev_ss / elev_dof.max(1) as f64).sqrt(),
        sigma_range: (range_ss / range_dof.max(1) as f64).sqrt(),
        ..BeamModel::hdl64(0)
    })
}
