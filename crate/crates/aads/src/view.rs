//! Novel-view warping: pick reference captures for a target pose, forward
//! map their refined depth into the target to obtain a depth proxy, then
//! backward warp reference color along the proxy with an occlusion test.

use crate::camera::{self, Pose, Projection};
use crate::depth;
use crate::error::{Error, Result};
use crate::formats::ViewCamera;
use crate::raster::{DepthMap, ImageRaster, MaskRaster, Raster, ViewSample};

/// Default number of reference views fused per target.
pub const DEFAULT_REFERENCE_COUNT: usize = 4;
/// Default occlusion tolerance in meters for the backward depth test.
pub const DEFAULT_DEPTH_TOL: f64 = 0.2;
/// Default upper bound on inpaintable proxy hole area, in pixels.
pub const DEFAULT_MAX_HOLE_PX: usize = 64;

/// One reference capture resampled into the target view.
#[derive(Debug, Clone)]
pub struct WarpedView {
    pub color: ImageRaster,
    /// Target-frame depth; invalid (NaN) wherever `occlusion_mask` is set.
    pub depth_proxy: DepthMap,
    /// True where the reference cannot vouch for this pixel: no proxy,
    /// projection outside the reference raster, or failed depth test.
    pub occlusion_mask: MaskRaster,
    pub source_index: usize,
}

/// Ranks `dataset` for the target pose by
/// `distance(centers) * (1 + angle(optical axes)/pi)` and returns the
/// indices of the best `min(k, |dataset|)` views, ascending by score.
pub fn select_references(target: &Pose, dataset: &[ViewSample], k: usize) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::invalid_argument("reference dataset is empty"));
    }
    let mut scored: Vec<(f64, usize)> = dataset
        .iter()
        .enumerate()
        .map(|(i, sample)| (reference_score(target, &sample.pose), i))
        .collect();
    scored.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Scoring function behind [`select_references`].
pub fn reference_score(target: &Pose, reference: &Pose) -> f64 {
    let distance = (reference.center() - target.center()).norm();
    let angle = camera::angle_between(reference.optical_axis(), target.optical_axis());
    distance * (1.0 + angle / std::f64::consts::PI)
}

/// Unprojects every valid reference depth pixel and re-projects it into the
/// target view, z-buffering a 2x2 splat per point. Uncovered target pixels
/// stay invalid.
pub fn forward_map_depth(reference: &ViewSample, target: &ViewCamera) -> DepthMap {
    let mut proxy = DepthMap::invalid(target.intrinsics.width, target.intrinsics.height);
    let (tw, th) = (proxy.width() as isize, proxy.height() as isize);
    for (x, y) in reference.depth.coords() {
        let d = reference.depth.get(x, y);
        if d.is_nan() {
            continue;
        }
        let world = camera::unproject(
            nalgebra::Vector2::new(x as f64, y as f64),
            d,
            &reference.intrinsics,
            &reference.pose,
        )
        .expect("valid depth is positive");
        let Some((pixel, z)) = camera::project(world, &target.intrinsics, &target.pose).in_front()
        else {
            continue;
        };
        let x0 = pixel.x.floor() as isize;
        let y0 = pixel.y.floor() as isize;
        for (sx, sy) in [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)] {
            if sx < 0 || sy < 0 || sx >= tw || sy >= th {
                continue;
            }
            let (sx, sy) = (sx as usize, sy as usize);
            let current = proxy.get(sx, sy);
            if current.is_nan() || z < current {
                proxy.set(sx, sy, z);
            }
        }
    }
    proxy
}

/// Fills connected invalid proxy regions of at most `max_hole_px` pixels by
/// the Poisson fill; larger holes (true disocclusions) are left invalid for
/// other references or the stitch stage to cover.
pub fn inpaint_proxy_holes(proxy: &DepthMap, max_hole_px: usize) -> Result<DepthMap> {
    let (w, h) = (proxy.width(), proxy.height());
    let mut out = proxy.clone();
    let mut visited = Raster::filled(w, h, false);
    let mut fill = Vec::new();
    for (x, y) in proxy.coords() {
        if !proxy.get(x, y).is_nan() || visited.get(x, y) {
            continue;
        }
        // flood-fill one 4-connected invalid component
        let mut component = vec![(x, y)];
        let mut touches_only_holes = true;
        visited.set(x, y, true);
        let mut head = 0;
        while head < component.len() {
            let (cx, cy) = component[head];
            head += 1;
            for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if proxy.get(nx, ny).is_nan() {
                    if !visited.get(nx, ny) {
                        visited.set(nx, ny, true);
                        component.push((nx, ny));
                    }
                } else {
                    touches_only_holes = false;
                }
            }
        }
        if component.len() <= max_hole_px && !touches_only_holes {
            fill.extend(component);
        }
    }
    depth::poisson_fill(&mut out, &fill, 1e-6, 10_000)?;
    Ok(out)
}

/// Resamples the reference image along the target's depth proxy. A pixel is
/// occluded when it has no proxy depth, projects outside the reference
/// raster or behind the reference camera, lands on invalid reference depth,
/// or fails the depth consistency test `|ref depth - computed depth| <=
/// depth_tol`.
pub fn backward_warp(
    reference: &ViewSample,
    target_proxy: &DepthMap,
    target: &ViewCamera,
    depth_tol: f64,
    source_index: usize,
) -> Result<WarpedView> {
    if !(depth_tol > 0.0) {
        return Err(Error::invalid_argument(format!(
            "depth_tol must be > 0, got {depth_tol}"
        )));
    }
    if target_proxy.width() != target.intrinsics.width
        || target_proxy.height() != target.intrinsics.height
    {
        return Err(Error::invalid_argument(
            "proxy dimensions do not match the target intrinsics",
        ));
    }
    let (w, h) = (target_proxy.width(), target_proxy.height());
    let mut color = ImageRaster::black(w, h);
    let mut depth_proxy = DepthMap::invalid(w, h);
    let mut occluded = MaskRaster::filled(w, h, true);
    for (x, y) in target_proxy.coords() {
        let d = target_proxy.get(x, y);
        if d.is_nan() {
            continue;
        }
        let world = camera::unproject(
            nalgebra::Vector2::new(x as f64, y as f64),
            d,
            &target.intrinsics,
            &target.pose,
        )?;
        let Projection::Visible { pixel, depth: ref_z } =
            camera::project(world, &reference.intrinsics, &reference.pose)
        else {
            continue; // outside the reference frustum: occluded
        };
        let rx = (pixel.x.round() as isize).clamp(0, reference.depth.width() as isize - 1);
        let ry = (pixel.y.round() as isize).clamp(0, reference.depth.height() as isize - 1);
        let ref_d = reference.depth.get(rx as usize, ry as usize);
        if ref_d.is_nan() || (ref_d - ref_z).abs() > depth_tol {
            continue; // the reference sees a different surface here
        }
        color.set(x, y, reference.image.sample_bilinear(pixel.x, pixel.y));
        depth_proxy.set(x, y, d);
        occluded.set(x, y, false);
    }
    Ok(WarpedView {
        color,
        depth_proxy,
        occlusion_mask: occluded,
        source_index,
    })
}

/// Forward map, inpaint, and backward warp one reference.
pub fn warp_reference(
    reference: &ViewSample,
    target: &ViewCamera,
    depth_tol: f64,
    max_hole_px: usize,
    source_index: usize,
) -> Result<WarpedView> {
    let proxy = forward_map_depth(reference, target);
    let proxy = inpaint_proxy_holes(&proxy, max_hole_px)?;
    backward_warp(reference, &proxy, target, depth_tol, source_index)
}
