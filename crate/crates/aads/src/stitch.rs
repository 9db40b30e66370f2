//! Seam-aware fusion of warped reference views.
//!
//! The per-pixel choice among the k warped candidates minimizes the Eq. 1
//! labeling energy: a view-angle data term (E1), an occlusion veto (E2),
//! truncated color and depth seam costs (E3, E4) and a gradient seam cost
//! (E5), solved with TRW-S. The winning mosaic is then fused in the
//! gradient domain by a screened Poisson solve with the nearest reference
//! acting as the color anchor, and disocclusion holes fill harmonically
//! from zero gradients.

use serde::{Deserialize, Serialize};

use crate::camera::{self, Pose};
use crate::depth::poisson_fill;
use crate::error::{Error, Result};
use crate::formats::ViewCamera;
use crate::raster::{DepthMap, ImageRaster, LabelRaster, Raster, Rgb, ViewSample};
use crate::trws::{self, GridProblem, Labeling, TrwsOptions};
use crate::view::{self, WarpedView};

/// Provenance value for pixels no reference could cover.
pub const PROVENANCE_HOLE: u16 = u16::MAX;

/// Weights and truncations of the Eq. 1 stitch energy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    /// Truncation of the squared RGB seam difference, per seam pixel.
    pub tau_c: f64,
    /// Truncation of the absolute depth seam difference in meters.
    pub tau_d: f64,
    /// Floor applied to the view angle so W_label keeps acting near
    /// coincident rays.
    pub angle_hook: f64,
    /// Unit scalers for the label-cost factors D_pos (meters) and D_dir
    /// (radians).
    pub d_pos_scale: f64,
    pub d_dir_scale: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            lambda1: 200.0,
            lambda2: 1.0,
            lambda3: 200.0,
            lambda4: 100.0,
            lambda5: 50.0,
            tau_c: 0.5,
            tau_d: 5.0,
            angle_hook: 0.01,
            d_pos_scale: 1.0,
            d_dir_scale: 1.0,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("lambda5", self.lambda5),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid_argument(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if !(self.tau_c > 0.0) || !(self.tau_d > 0.0) {
            return Err(Error::invalid_argument(
                "tau_c and tau_d must be positive",
            ));
        }
        Ok(())
    }
}

/// Everything the stitch stage needs to know beyond the weights.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchConfig {
    pub reference_count: usize,
    pub depth_tol: f64,
    pub max_hole_px: usize,
    pub trws_max_iter: usize,
    pub trws_bound_tol: f64,
    /// Screened-Poisson weight tying non-hole pixels to the mosaic color.
    pub screen_weight: f64,
    pub blend_tol: f64,
    pub blend_max_iter: usize,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig {
            reference_count: view::DEFAULT_REFERENCE_COUNT,
            depth_tol: view::DEFAULT_DEPTH_TOL,
            max_hole_px: view::DEFAULT_MAX_HOLE_PX,
            trws_max_iter: 100,
            trws_bound_tol: 1e-6,
            screen_weight: 0.01,
            blend_tol: 1e-6,
            blend_max_iter: 10_000,
        }
    }
}

fn rgb_sq_norm(a: Rgb, b: Rgb) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

fn rgb_norm(a: Rgb, b: Rgb) -> f64 {
    rgb_sq_norm(a, b).sqrt()
}

/// Forward-difference gradients of a warped view's color, with replicate
/// borders; a difference into an occluded pixel is treated as zero (the
/// candidate simply ends there, which should not read as a gradient).
fn warp_gradients(warp: &WarpedView) -> (Raster<Rgb>, Raster<Rgb>) {
    let (w, h) = (warp.color.width(), warp.color.height());
    let mut gx = Raster::filled(w, h, [0.0; 3]);
    let mut gy = Raster::filled(w, h, [0.0; 3]);
    for (x, y) in warp.color.coords() {
        if warp.occlusion_mask.get(x, y) {
            continue;
        }
        let c = warp.color.get(x, y);
        if x + 1 < w && !warp.occlusion_mask.get(x + 1, y) {
            let n = warp.color.get(x + 1, y);
            gx.set(x, y, [n[0] - c[0], n[1] - c[1], n[2] - c[2]]);
        }
        if y + 1 < h && !warp.occlusion_mask.get(x, y + 1) {
            let n = warp.color.get(x, y + 1);
            gy.set(x, y, [n[0] - c[0], n[1] - c[1], n[2] - c[2]]);
        }
    }
    (gx, gy)
}

/// `lambda1*E1 + lambda2*E2` per pixel and candidate, row-major then
/// candidate-major (`pixel*k + j`). E1 weighs the angle between the target
/// ray and the reference ray at the surface point by the label cost
/// `D_pos*D_dir`; E2 is infinite exactly on occluded pixels.
pub fn unary_costs(
    warps: &[WarpedView],
    ref_poses: &[Pose],
    target: &ViewCamera,
    weights: &EnergyWeights,
) -> Result<Vec<f64>> {
    weights.validate()?;
    if warps.len() != ref_poses.len() {
        return Err(Error::invalid_argument(
            "one reference pose required per warp",
        ));
    }
    let (w, h) = (target.intrinsics.width, target.intrinsics.height);
    for warp in warps {
        if warp.color.width() != w || warp.color.height() != h {
            return Err(Error::invalid_argument(
                "warp dimensions do not match the target",
            ));
        }
    }
    let k = warps.len();
    let target_center = target.pose.center();
    let label_cost: Vec<f64> = ref_poses
        .iter()
        .map(|p| {
            let d_pos = (p.center() - target_center).norm() * weights.d_pos_scale;
            let d_dir = camera::angle_between(p.optical_axis(), target.pose.optical_axis())
                * weights.d_dir_scale;
            d_pos * d_dir
        })
        .collect();

    let mut unary = vec![0.0; w * h * k];
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * k;
            for (j, warp) in warps.iter().enumerate() {
                if warp.occlusion_mask.get(x, y) {
                    unary[base + j] = f64::INFINITY;
                    continue;
                }
                let d = warp.depth_proxy.get(x, y);
                let surface = camera::unproject(
                    nalgebra::Vector2::new(x as f64, y as f64),
                    d,
                    &target.intrinsics,
                    &target.pose,
                )?;
                let e_angle = camera::angle_between(
                    surface - target_center,
                    surface - ref_poses[j].center(),
                );
                let e1 = e_angle.max(weights.angle_hook) * label_cost[j];
                unary[base + j] = weights.lambda1 * e1;
            }
        }
    }
    Ok(unary)
}

/// Seam data one candidate exposes at one pixel.
#[derive(Clone, Copy)]
struct SeamSample {
    color: Option<Rgb>,
    depth: Option<f64>,
    gx: Rgb,
    gy: Rgb,
}

fn seam_sample(warp: &WarpedView, gx: &Raster<Rgb>, gy: &Raster<Rgb>, x: usize, y: usize) -> SeamSample {
    if warp.occlusion_mask.get(x, y) {
        SeamSample {
            color: None,
            depth: None,
            gx: [0.0; 3],
            gy: [0.0; 3],
        }
    } else {
        SeamSample {
            color: Some(warp.color.get(x, y)),
            depth: Some(warp.depth_proxy.get(x, y)),
            gx: gx.get(x, y),
            gy: gy.get(x, y),
        }
    }
}

/// One pixel's contribution to E3 + E4 (truncated color and depth seam
/// terms). Missing candidate data costs the full truncation value: the
/// seam runs against a pixel the candidate cannot vouch for.
fn seam_pixel_cost(a: &SeamSample, b: &SeamSample, weights: &EnergyWeights) -> (f64, f64) {
    let color = match (a.color, b.color) {
        (Some(ca), Some(cb)) => rgb_sq_norm(ca, cb).min(weights.tau_c),
        _ => weights.tau_c,
    };
    let depth = match (a.depth, b.depth) {
        (Some(da), Some(db)) => (da - db).abs().min(weights.tau_d),
        _ => weights.tau_d,
    };
    (color, depth)
}

fn gradient_cost(a: &SeamSample, b: &SeamSample) -> f64 {
    rgb_norm(a.gx, b.gx) + rgb_norm(a.gy, b.gy)
}

/// `lambda3*E3 + lambda4*E4 + lambda5*E5` for labels `(label_a at pixel_i,
/// label_b at pixel_j)` across a 4-neighbor seam; zero when the labels
/// agree.
pub fn pairwise_cost(
    pixel_i: (usize, usize),
    pixel_j: (usize, usize),
    label_a: usize,
    label_b: usize,
    warps: &[WarpedView],
    weights: &EnergyWeights,
) -> f64 {
    if label_a == label_b {
        return 0.0;
    }
    let dist = pixel_i.0.abs_diff(pixel_j.0) + pixel_i.1.abs_diff(pixel_j.1);
    debug_assert_eq!(dist, 1, "pairwise_cost expects 4-neighbors");
    let wa = &warps[label_a];
    let wb = &warps[label_b];
    let (gax, gay) = warp_gradients(wa);
    let (gbx, gby) = warp_gradients(wb);
    let mut e3 = 0.0;
    let mut e4 = 0.0;
    let mut e5 = 0.0;
    for &(x, y) in &[pixel_i, pixel_j] {
        let sa = seam_sample(wa, &gax, &gay, x, y);
        let sb = seam_sample(wb, &gbx, &gby, x, y);
        let (c, d) = seam_pixel_cost(&sa, &sb, weights);
        e3 += c;
        e4 += d;
        e5 += gradient_cost(&sa, &sb);
    }
    weights.lambda3 * e3 + weights.lambda4 * e4 + weights.lambda5 * e5
}

/// Assembles the full Eq. 1 grid problem over the warped candidates.
pub fn build_stitch_problem(
    warps: &[WarpedView],
    ref_poses: &[Pose],
    target: &ViewCamera,
    weights: &EnergyWeights,
) -> Result<GridProblem> {
    if warps.is_empty() {
        return Err(Error::invalid_argument("no warped candidates"));
    }
    let (w, h) = (target.intrinsics.width, target.intrinsics.height);
    let k = warps.len();
    let unary = unary_costs(warps, ref_poses, target, weights)?;

    let gradients: Vec<(Raster<Rgb>, Raster<Rgb>)> =
        warps.iter().map(warp_gradients).collect();
    let samples = |x: usize, y: usize| -> Vec<SeamSample> {
        (0..k)
            .map(|j| seam_sample(&warps[j], &gradients[j].0, &gradients[j].1, x, y))
            .collect()
    };

    let mut horizontal = vec![0.0; w * h * k * k];
    let mut vertical = vec![0.0; w * h * k * k];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let here = samples(x, y);
            if x + 1 < w {
                let there = samples(x + 1, y);
                for la in 0..k {
                    for lb in 0..k {
                        if la == lb {
                            continue;
                        }
                        let mut cost = 0.0;
                        for (sa, sb) in [(&here[la], &here[lb]), (&there[la], &there[lb])] {
                            let (c, d) = seam_pixel_cost(sa, sb, weights);
                            cost += weights.lambda3 * c
                                + weights.lambda4 * d
                                + weights.lambda5 * gradient_cost(sa, sb);
                        }
                        horizontal[(i * k + la) * k + lb] = cost;
                    }
                }
            }
            if y + 1 < h {
                let below = samples(x, y + 1);
                for la in 0..k {
                    for lb in 0..k {
                        if la == lb {
                            continue;
                        }
                        let mut cost = 0.0;
                        for (sa, sb) in [(&here[la], &here[lb]), (&below[la], &below[lb])] {
                            let (c, d) = seam_pixel_cost(sa, sb, weights);
                            cost += weights.lambda3 * c
                                + weights.lambda4 * d
                                + weights.lambda5 * gradient_cost(sa, sb);
                        }
                        vertical[(i * k + la) * k + lb] = cost;
                    }
                }
            }
        }
    }
    GridProblem::new(w, h, k, unary, horizontal, vertical)
}

/// Mosaic of the winning candidates: chosen color per non-hole pixel,
/// black elsewhere.
pub fn compose_mosaic(warps: &[WarpedView], labeling: &Labeling, width: usize, height: usize) -> ImageRaster {
    let mut mosaic = ImageRaster::black(width, height);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !labeling.hole[i] {
                mosaic.set(x, y, warps[labeling.labels[i]].color.get(x, y));
            }
        }
    }
    mosaic
}

/// Screened Poisson fusion of the labeled mosaic.
///
/// The target gradient on a seam edge averages the gradients of the two
/// chosen candidates (one side each when only one has data); edges touching
/// hole pixels get zero gradient so disocclusions fill harmonically.
/// Pixels labeled `nearest_ref_index` that border a differently labeled
/// region are Dirichlet-fixed to the mosaic; every other non-hole pixel is
/// softly screened toward the mosaic. If no pixel is constrained at all,
/// the solution's mean is anchored to the mosaic mean.
pub fn poisson_blend(
    mosaic: &ImageRaster,
    labeling: &Labeling,
    warps: &[WarpedView],
    nearest_ref_index: usize,
    cfg: &StitchConfig,
) -> Result<ImageRaster> {
    let (w, h) = (mosaic.width(), mosaic.height());
    let n = w * h;
    if labeling.labels.len() != n || labeling.hole.len() != n {
        return Err(Error::invalid_argument(
            "labeling does not cover the mosaic",
        ));
    }
    if nearest_ref_index >= warps.len() {
        return Err(Error::invalid_argument("nearest_ref_index out of range"));
    }

    // Dirichlet pixels: nearest-reference pixels on a region boundary.
    let mut dirichlet = vec![false; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labeling.hole[i] || labeling.labels[i] != nearest_ref_index {
                continue;
            }
            let mut boundary = false;
            for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !labeling.hole[j] && labeling.labels[j] != nearest_ref_index {
                    boundary = true;
                    break;
                }
            }
            if boundary {
                dirichlet[i] = true;
            }
        }
    }

    // Per-channel target gradient for the edge from pixel `a` to `b`.
    let edge_gradient = |a: usize, b: usize, channel: usize| -> f64 {
        if labeling.hole[a] || labeling.hole[b] {
            return 0.0;
        }
        let (ax, ay) = (a % w, a / w);
        let (bx, by) = (b % w, b / w);
        let grad_of = |label: usize| -> Option<f64> {
            let warp = &warps[label];
            if warp.occlusion_mask.get(ax, ay) || warp.occlusion_mask.get(bx, by) {
                None
            } else {
                Some(warp.color.get(bx, by)[channel] - warp.color.get(ax, ay)[channel])
            }
        };
        let la = labeling.labels[a];
        let lb = labeling.labels[b];
        if la == lb {
            grad_of(la).unwrap_or(0.0)
        } else {
            match (grad_of(la), grad_of(lb)) {
                (Some(ga), Some(gb)) => 0.5 * (ga + gb),
                (Some(g), None) | (None, Some(g)) => g,
                (None, None) => 0.0,
            }
        }
    };

    let screened = |i: usize| -> f64 {
        if labeling.hole[i] {
            0.0
        } else {
            cfg.screen_weight
        }
    };
    let any_constraint =
        dirichlet.iter().any(|&d| d) || (0..n).any(|i| screened(i) > 0.0);

    let mut out = mosaic.clone();
    for channel in 0..3 {
        if !any_constraint {
            // fully degenerate: nothing pins the potential, anchor the mean
            let mean =
                mosaic.data().iter().map(|c| c[channel]).sum::<f64>() / n as f64;
            for (x, y) in out.coords() {
                let mut px = out.get(x, y);
                px[channel] = mean;
                out.set(x, y, px);
            }
            continue;
        }
        // Assemble A u = b over free pixels: A = Laplacian + diag(screen).
        let mut b = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            if dirichlet[i] {
                continue;
            }
            let s = screened(i);
            diag[i] += s;
            b[i] += s * mosaic.data()[i][channel];
            let (x, y) = (i % w, i / w);
            let mut neighbors = Vec::with_capacity(4);
            if x + 1 < w {
                neighbors.push((i + 1, edge_gradient(i, i + 1, channel)));
            }
            if x > 0 {
                neighbors.push((i - 1, -edge_gradient(i - 1, i, channel)));
            }
            if y + 1 < h {
                neighbors.push((i + w, edge_gradient(i, i + w, channel)));
            }
            if y > 0 {
                neighbors.push((i - w, -edge_gradient(i - w, i, channel)));
            }
            for (j, g) in neighbors {
                diag[i] += 1.0;
                b[i] -= g;
                if dirichlet[j] {
                    b[i] += mosaic.data()[j][channel];
                }
            }
        }

        // Conjugate gradients, matrix-free and in a fixed order.
        let apply = |u: &[f64], out: &mut [f64]| {
            for i in 0..n {
                if dirichlet[i] {
                    out[i] = 0.0;
                    continue;
                }
                let (x, y) = (i % w, i / w);
                let mut v = diag[i] * u[i];
                if x + 1 < w && !dirichlet[i + 1] {
                    v -= u[i + 1];
                }
                if x > 0 && !dirichlet[i - 1] {
                    v -= u[i - 1];
                }
                if y + 1 < h && !dirichlet[i + w] {
                    v -= u[i + w];
                }
                if y > 0 && !dirichlet[i - w] {
                    v -= u[i - w];
                }
                out[i] = v;
            }
        };
        let mut u: Vec<f64> = (0..n)
            .map(|i| {
                if dirichlet[i] {
                    0.0
                } else {
                    mosaic.data()[i][channel]
                }
            })
            .collect();
        let mut r = vec![0.0; n];
        apply(&u, &mut r);
        for i in 0..n {
            r[i] = if dirichlet[i] { 0.0 } else { b[i] - r[i] };
        }
        let mut p = r.clone();
        let mut rs: f64 = r.iter().map(|v| v * v).sum();
        let mut ap = vec![0.0; n];
        let mut converged = r.iter().all(|v| v.abs() <= cfg.blend_tol);
        for _ in 0..cfg.blend_max_iter {
            if converged {
                break;
            }
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break; // numerically exhausted
            }
            let alpha = rs / pap;
            for i in 0..n {
                u[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_next: f64 = r.iter().map(|v| v * v).sum();
            converged = r.iter().all(|v| v.abs() <= cfg.blend_tol);
            let beta = rs_next / rs;
            rs = rs_next;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        if !converged {
            return Err(Error::numerical(format!(
                "poisson blend did not reach residual {} within {} iterations",
                cfg.blend_tol, cfg.blend_max_iter
            )));
        }
        for i in 0..n {
            let value = if dirichlet[i] {
                mosaic.data()[i][channel]
            } else {
                u[i]
            };
            let (x, y) = (i % w, i / w);
            let mut px = out.get(x, y);
            px[channel] = value;
            out.set(x, y, px);
        }
    }
    out.clamp_channels();
    Ok(out)
}

/// A synthesized novel view.
#[derive(Debug, Clone)]
pub struct SynthesizedView {
    pub image: ImageRaster,
    pub depth: DepthMap,
    /// Index into the *dataset* of the reference that won each pixel;
    /// [`PROVENANCE_HOLE`] where nothing covered the pixel.
    pub provenance: LabelRaster,
    pub labeling: Labeling,
    /// Dataset indices of the references used, nearest first.
    pub sources: Vec<usize>,
}

/// Full background synthesis for one target view: reference selection,
/// warping, seam solving and blending.
pub fn synthesize_view(
    target: &ViewCamera,
    dataset: &[ViewSample],
    weights: &EnergyWeights,
    cfg: &StitchConfig,
) -> Result<SynthesizedView> {
    weights.validate()?;
    let sources = view::select_references(&target.pose, dataset, cfg.reference_count)?;
    let mut warps = Vec::with_capacity(sources.len());
    let mut ref_poses = Vec::with_capacity(sources.len());
    for &s in &sources {
        warps.push(view::warp_reference(
            &dataset[s],
            target,
            cfg.depth_tol,
            cfg.max_hole_px,
            s,
        )?);
        ref_poses.push(dataset[s].pose);
    }

    let problem = build_stitch_problem(&warps, &ref_poses, target, weights)?;
    let labeling = trws::solve(
        &problem,
        TrwsOptions {
            max_iter: cfg.trws_max_iter,
            bound_tol: cfg.trws_bound_tol,
        },
    )?;

    let (w, h) = (target.intrinsics.width, target.intrinsics.height);
    let mosaic = compose_mosaic(&warps, &labeling, w, h);
    let image = poisson_blend(&mosaic, &labeling, &warps, 0, cfg)?;

    // stitched depth: the winning candidate's proxy, holes filled
    let mut depth = DepthMap::invalid(w, h);
    let mut provenance = LabelRaster::filled(w, h, PROVENANCE_HOLE);
    let mut holes = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labeling.hole[i] {
                holes.push((x, y));
            } else {
                let label = labeling.labels[i];
                depth.set(x, y, warps[label].depth_proxy.get(x, y));
                provenance.set(x, y, sources[label] as u16);
            }
        }
    }
    if depth.valid_count() == 0 {
        return Err(Error::numerical(
            "no reference covers any pixel of the target view",
        ));
    }
    poisson_fill(&mut depth, &holes, 1e-6, 10_000)?;

    Ok(SynthesizedView {
        image,
        depth,
        provenance,
        labeling,
        sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraIntrinsics;
    use crate::raster::MaskRaster;
    use nalgebra::{DMatrix, DVector, Vector3};

    fn target_camera(size: usize) -> ViewCamera {
        ViewCamera {
            intrinsics: CameraIntrinsics::new(
                100.0,
                100.0,
                (size / 2) as f64,
                (size / 2) as f64,
                size,
                size,
            )
            .unwrap(),
            pose: Pose::identity(),
        }
    }

    fn constant_warp(size: usize, color: Rgb, depth: f64, source_index: usize) -> WarpedView {
        WarpedView {
            color: ImageRaster::filled(size, size, color),
            depth_proxy: DepthMap::filled(size, size, depth),
            occlusion_mask: MaskRaster::filled(size, size, false),
            source_index,
        }
    }

    #[test]
    fn unary_coincident_reference_costs_nothing() {
        let target = target_camera(16);
        let warps = vec![constant_warp(16, [0.5, 0.5, 0.5], 10.0, 0)];
        let poses = vec![target.pose];
        let unary = unary_costs(&warps, &poses, &target, &EnergyWeights::default()).unwrap();
        assert!(unary.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn unary_occluded_candidate_is_infinite() {
        let target = target_camera(8);
        let mut warp = constant_warp(8, [0.5; 3], 10.0, 0);
        warp.occlusion_mask.set(3, 4, true);
        warp.depth_proxy.set(3, 4, f64::NAN);
        let unary = unary_costs(&[warp], &[target.pose], &target, &EnergyWeights::default())
            .unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let c = unary[y * 8 + x];
                if (x, y) == (3, 4) {
                    assert!(c.is_infinite());
                } else {
                    assert!(c.is_finite());
                }
            }
        }
    }

    #[test]
    fn unary_symmetric_references_cost_equally() {
        // references 1 m left/right of the target, yawed symmetrically
        let target = target_camera(17);
        let left = Pose::look_at(
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(-0.5, 0.0, 10.0),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .unwrap();
        let right = Pose::look_at(
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.5, 0.0, 10.0),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .unwrap();
        let warps = vec![
            constant_warp(17, [0.5; 3], 10.0, 0),
            constant_warp(17, [0.5; 3], 10.0, 1),
        ];
        let unary =
            unary_costs(&warps, &[left, right], &target, &EnergyWeights::default()).unwrap();
        // pixel on the optical axis sees the surface point (0,0,10), which
        // lies on the bisector plane of the two reference centers
        let center = (8 * 17 + 8) * 2;
        assert!(unary[center].is_finite() && unary[center] > 0.0);
        assert!(
            (unary[center] - unary[center + 1]).abs() < 1e-9,
            "{} vs {}",
            unary[center],
            unary[center + 1]
        );
    }

    #[test]
    fn pairwise_identical_content_is_free() {
        let warps = vec![
            constant_warp(8, [0.3, 0.6, 0.9], 10.0, 0),
            constant_warp(8, [0.3, 0.6, 0.9], 10.0, 1),
        ];
        let cost = pairwise_cost(
            (2, 2),
            (3, 2),
            0,
            1,
            &warps,
            &EnergyWeights::default(),
        );
        assert_eq!(cost, 0.0);
        assert_eq!(
            pairwise_cost((2, 2), (3, 2), 1, 1, &warps, &EnergyWeights::default()),
            0.0
        );
    }

    #[test]
    fn pairwise_truncates_color_and_depth() {
        // black vs white color (squared distance 3 > tau_c) and 20 m depth
        // separation (> tau_d) on both seam pixels
        let warps = vec![
            constant_warp(8, [0.0; 3], 5.0, 0),
            constant_warp(8, [1.0; 3], 25.0, 1),
        ];
        let weights = EnergyWeights {
            lambda3: 1.0,
            lambda4: 0.0,
            lambda5: 0.0,
            ..EnergyWeights::default()
        };
        let e3 = pairwise_cost((2, 2), (3, 2), 0, 1, &warps, &weights);
        assert!((e3 - 2.0 * weights.tau_c).abs() < 1e-12, "E3 = {e3}");

        let weights = EnergyWeights {
            lambda3: 0.0,
            lambda4: 1.0,
            lambda5: 0.0,
            ..EnergyWeights::default()
        };
        let e4 = pairwise_cost((2, 2), (3, 2), 0, 1, &warps, &weights);
        assert!((e4 - 2.0 * weights.tau_d).abs() < 1e-12, "E4 = {e4}");
    }

    #[test]
    fn scaling_all_lambdas_scales_energy_and_keeps_labels() {
        let target = target_camera(12);
        // two partially-occluded textured candidates forcing a real seam
        let mut a = constant_warp(12, [0.2; 3], 10.0, 0);
        let mut b = constant_warp(12, [0.8; 3], 10.5, 1);
        for y in 0..12 {
            for x in 0..12 {
                a.color.set(x, y, [0.2 + 0.04 * x as f64, 0.3, 0.1]);
                b.color.set(x, y, [0.25 + 0.04 * x as f64, 0.35, 0.12]);
                if x > 8 {
                    a.occlusion_mask.set(x, y, true);
                    a.depth_proxy.set(x, y, f64::NAN);
                }
                if x < 3 {
                    b.occlusion_mask.set(x, y, true);
                    b.depth_proxy.set(x, y, f64::NAN);
                }
            }
        }
        let poses = vec![
            Pose::new(*Pose::identity().rotation(), Vector3::new(-0.5, 0.0, 0.0)).unwrap(),
            Pose::new(*Pose::identity().rotation(), Vector3::new(0.4, 0.0, 0.0)).unwrap(),
        ];
        let warps = vec![a, b];
        let base = EnergyWeights::default();
        let scaled = EnergyWeights {
            lambda1: base.lambda1 * 2.0,
            lambda2: base.lambda2 * 2.0,
            lambda3: base.lambda3 * 2.0,
            lambda4: base.lambda4 * 2.0,
            lambda5: base.lambda5 * 2.0,
            ..base
        };
        let p1 = build_stitch_problem(&warps, &poses, &target, &base).unwrap();
        let p2 = build_stitch_problem(&warps, &poses, &target, &scaled).unwrap();
        let s1 = trws::solve(&p1, TrwsOptions::default()).unwrap();
        let s2 = trws::solve(&p2, TrwsOptions::default()).unwrap();
        assert_eq!(s1.labels, s2.labels);
        assert!((s2.energy - 2.0 * s1.energy).abs() < 1e-6 * s1.energy.max(1.0));
        // no occluded candidate chosen
        for (i, &l) in s1.labels.iter().enumerate() {
            if !s1.hole[i] {
                let (x, y) = (i % 12, i / 12);
                assert!(!warps[l].occlusion_mask.get(x, y));
            }
        }
    }

    #[test]
    fn blend_single_source_is_identity() {
        let size = 16;
        let mut warp = constant_warp(size, [0.0; 3], 10.0, 0);
        for (x, y) in warp.color.coords() {
            warp.color
                .set(x, y, [0.1 + 0.03 * x as f64, 0.5, 0.2 + 0.02 * y as f64]);
        }
        let labeling = Labeling {
            labels: vec![0; size * size],
            hole: vec![false; size * size],
            energy: 0.0,
            lower_bound: 0.0,
            bound_history: vec![0.0],
        };
        let mosaic = compose_mosaic(std::slice::from_ref(&warp), &labeling, size, size);
        let out = poisson_blend(&mosaic, &labeling, &[warp.clone()], 0, &StitchConfig::default())
            .unwrap();
        for (x, y) in out.coords() {
            let got = out.get(x, y);
            let want = warp.color.get(x, y);
            for c in 0..3 {
                assert!(
                    (got[c] - want[c]).abs() < 1e-5,
                    "({x},{y})[{c}]: {} vs {}",
                    got[c],
                    want[c]
                );
            }
        }
    }

    /// Dense direct-solve oracle for the two-half seam case, plus the
    /// qualitative monotone-transition checks.
    #[test]
    fn blend_two_halves_matches_dense_solve() {
        let size = 32;
        let c1 = 0.2;
        let c2 = 0.8;
        let wa = constant_warp(size, [c1; 3], 10.0, 0);
        let wb = constant_warp(size, [c2; 3], 10.0, 1);
        let n = size * size;
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i % size >= size / 2)).collect();
        let labeling = Labeling {
            labels: labels.clone(),
            hole: vec![false; n],
            energy: 0.0,
            lower_bound: 0.0,
            bound_history: vec![0.0],
        };
        let warps = vec![wa, wb];
        let mosaic = compose_mosaic(&warps, &labeling, size, size);
        let cfg = StitchConfig::default();
        let out = poisson_blend(&mosaic, &labeling, &warps, 0, &cfg).unwrap();

        // left boundary values preserved (Dirichlet column)
        let seam_left = size / 2 - 1;
        for y in 0..size {
            assert!((out.get(seam_left, y)[0] - c1).abs() < 1e-9);
        }
        // monotone non-decreasing left-to-right (up to solver residual),
        // approaching c2
        for y in 0..size {
            for x in 1..size {
                assert!(out.get(x, y)[0] >= out.get(x - 1, y)[0] - 1e-6);
            }
        }
        assert!(out.get(size - 1, 0)[0] > c1 + 0.3);

        // dense oracle: assemble the same screened system and solve directly
        let mut dirichlet = vec![false; n];
        for y in 0..size {
            dirichlet[y * size + seam_left] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !dirichlet[i]).collect();
        let index: std::collections::HashMap<usize, usize> =
            free.iter().enumerate().map(|(a, &b)| (b, a)).collect();
        let m = free.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (row, &i) in free.iter().enumerate() {
            let (x, y) = (i % size, i / size);
            let mut diag = cfg.screen_weight;
            rhs[row] += cfg.screen_weight * mosaic.data()[i][0];
            for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= size as isize || ny >= size as isize {
                    continue;
                }
                let j = ny as usize * size + nx as usize;
                diag += 1.0;
                // all target gradients are zero in this configuration
                if dirichlet[j] {
                    rhs[row] += mosaic.data()[j][0];
                } else {
                    a[(row, index[&j])] -= 1.0;
                }
            }
            a[(row, row)] = diag;
        }
        let solution = a.lu().solve(&rhs).expect("dense solve");
        for (row, &i) in free.iter().enumerate() {
            let (x, y) = (i % size, i / size);
            assert!(
                (out.get(x, y)[0] - solution[row]).abs() < 1e-4,
                "({x},{y}): cg {} vs dense {}",
                out.get(x, y)[0],
                solution[row]
            );
        }
    }

    #[test]
    fn blend_fills_hole_with_surrounding_constant() {
        let size = 12;
        let warp = constant_warp(size, [0.4, 0.6, 0.8], 10.0, 0);
        let n = size * size;
        let mut hole = vec![false; n];
        for y in 4..8 {
            for x in 4..8 {
                hole[y * size + x] = true;
            }
        }
        let labeling = Labeling {
            labels: vec![0; n],
            hole,
            energy: 0.0,
            lower_bound: 0.0,
            bound_history: vec![0.0],
        };
        let mosaic = compose_mosaic(std::slice::from_ref(&warp), &labeling, size, size);
        let out = poisson_blend(&mosaic, &labeling, &[warp], 0, &StitchConfig::default())
            .unwrap();
        for (x, y) in out.coords() {
            let px = out.get(x, y);
            assert!((px[0] - 0.4).abs() < 1e-5, "({x},{y}) r={}", px[0]);
            assert!((px[1] - 0.6).abs() < 1e-5);
            assert!((px[2] - 0.8).abs() < 1e-5);
        }
    }

    #[test]
    fn synthesize_from_identical_reference_pose_is_faithful() {
        use crate::raster::LabelRaster;
        // one reference exactly at the target pose, richly textured
        let size = 48;
        let intr = CameraIntrinsics::new(
            80.0,
            80.0,
            (size / 2) as f64,
            (size / 2) as f64,
            size,
            size,
        )
        .unwrap();
        let mut image = ImageRaster::black(size, size);
        for (x, y) in image.coords() {
            image.set(
                x,
                y,
                [
                    0.5 + 0.4 * ((x as f64) * 0.3).sin(),
                    0.5 + 0.4 * ((y as f64) * 0.2).cos(),
                    0.5 + 0.3 * ((x + y) as f64 * 0.15).sin(),
                ],
            );
        }
        let reference = ViewSample::new(
            image.clone(),
            DepthMap::filled(size, size, 12.0),
            LabelRaster::filled(size, size, 0),
            intr,
            Pose::identity(),
        )
        .unwrap();
        let second = ViewSample::new(
            ImageRaster::filled(size, size, [0.5; 3]),
            DepthMap::filled(size, size, 12.0),
            LabelRaster::filled(size, size, 0),
            intr,
            Pose::new(*Pose::identity().rotation(), Vector3::new(0.3, 0.0, 0.0)).unwrap(),
        )
        .unwrap();
        let target = ViewCamera {
            intrinsics: intr,
            pose: Pose::identity(),
        };
        let out = synthesize_view(
            &target,
            &[second, reference],
            &EnergyWeights::default(),
            &StitchConfig::default(),
        )
        .unwrap();
        assert_eq!(out.sources[0], 1, "coincident reference must rank first");

        // PSNR of the synthesized image against the coincident reference
        let mut se = 0.0;
        for (x, y) in out.image.coords() {
            let got = out.image.get(x, y);
            let want = image.get(x, y);
            for c in 0..3 {
                se += (got[c] - want[c]).powi(2);
            }
        }
        let mse = se / (size * size * 3) as f64;
        let psnr = -10.0 * mse.log10();
        assert!(psnr >= 40.0, "psnr {psnr}");
        for (x, y) in out.depth.coords() {
            assert!((out.depth.get(x, y) - 12.0).abs() < 1e-6);
        }
        assert!(out
            .provenance
            .data()
            .iter()
            .all(|&p| p == 1 || p == 0));
    }
}
