//! Software rasterization primitives shared by the cube-map renderer and the
//! frame compositor: perspective-correct triangle fill and 2x2 point splats.
//!
//! Both entry points emit `(x, y, depth)` samples through a caller-supplied
//! closure; the caller owns the z-buffer policy (typically "keep the strictly
//! nearest sample, first writer wins ties"), which keeps the rasterizer free
//! of attribute plumbing.

use nalgebra::{Vector2, Vector3};

use crate::camera::{project, CameraIntrinsics, Pose};

/// Camera-space near plane. Geometry at or behind this depth is clipped.
pub const NEAR_CLIP: f64 = 1e-4;

/// Area below which a screen-space triangle is considered degenerate.
const MIN_SCREEN_AREA: f64 = 1e-12;

/// Rasterizes a world-space triangle into the camera's pixel grid, emitting
/// one sample per covered pixel center with perspective-correct depth
/// (camera z). Triangles are near-clipped against [`NEAR_CLIP`]; both
/// windings rasterize (no backface culling), so closed meshes render from
/// the inside as well.
pub fn rasterize_triangle(
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
    triangle: &[Vector3<f64>; 3],
    emit: &mut impl FnMut(usize, usize, f64),
) {
    let cam: Vec<Vector3<f64>> = triangle.iter().map(|&p| pose.world_to_camera(p)).collect();
    let clipped = clip_near(&cam);
    if clipped.len() < 3 {
        return;
    }
    // Project once; depth interpolates as 1/z, which is affine in screen
    // space and therefore exact for planar geometry.
    let screen: Vec<(Vector2<f64>, f64)> = clipped
        .iter()
        .map(|v| {
            let px = intrinsics.fx * v.x / v.z + intrinsics.cx;
            let py = intrinsics.fy * v.y / v.z + intrinsics.cy;
            (Vector2::new(px, py), 1.0 / v.z)
        })
        .collect();
    for i in 1..screen.len() - 1 {
        fill_screen_triangle(
            intrinsics,
            [screen[0], screen[i], screen[i + 1]],
            emit,
        );
    }
}

/// Splats a world point into the four pixels around its projection (floor and
/// floor+1 in each axis), clipped to the raster. Points behind the camera or
/// outside the raster emit nothing.
pub fn splat_point(
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
    point: Vector3<f64>,
    emit: &mut impl FnMut(usize, usize, f64),
) {
    let Some((pixel, depth)) = project(point, intrinsics, pose).in_front() else {
        return;
    };
    let x0 = pixel.x.floor() as i64;
    let y0 = pixel.y.floor() as i64;
    for y in [y0, y0 + 1] {
        for x in [x0, x0 + 1] {
            if x >= 0 && y >= 0 && (x as usize) < intrinsics.width && (y as usize) < intrinsics.height
            {
                emit(x as usize, y as usize, depth);
            }
        }
    }
}

/// Sutherland-Hodgman clip of a camera-space polygon against z > NEAR_CLIP.
/// Linear interpolation in camera space is exact because the polygon is
/// planar.
fn clip_near(poly: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let a_in = a.z > NEAR_CLIP;
        let b_in = b.z > NEAR_CLIP;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_CLIP - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
    out
}

fn fill_screen_triangle(
    intrinsics: &CameraIntrinsics,
    verts: [(Vector2<f64>, f64); 3],
    emit: &mut impl FnMut(usize, usize, f64),
) {
    let [(a, qa), (b, qb), (c, qc)] = verts;
    let area = edge(a, b, c);
    if area.abs() < MIN_SCREEN_AREA {
        return;
    }
    let min_x = a.x.min(b.x).min(c.x).ceil().max(0.0) as usize;
    let max_x = a.x.max(b.x).max(c.x).floor().min(intrinsics.width as f64 - 1.0);
    let min_y = a.y.min(b.y).min(c.y).ceil().max(0.0) as usize;
    let max_y = a.y.max(b.y).max(c.y).floor().min(intrinsics.height as f64 - 1.0);
    if max_x < 0.0 || max_y < 0.0 {
        return;
    }
    let (max_x, max_y) = (max_x as usize, max_y as usize);
    let sign = area.signum();
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            let p = Vector2::new(x as f64, y as f64);
            let w0 = edge(b, c, p) * sign;
            let w1 = edge(c, a, p) * sign;
            let w2 = edge(a, b, p) * sign;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let inv_area = 1.0 / (area * sign);
            let q = (w0 * qa + w1 * qb + w2 * qc) * inv_area;
            if q > 0.0 {
                emit(x, y, 1.0 / q);
            }
        }
    }
}

/// Twice the signed area of triangle (a, b, p).
fn edge(a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DepthMap;

    fn test_camera(size: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(
            size as f64 / 2.0,
            size as f64 / 2.0,
            (size - 1) as f64 / 2.0,
            (size - 1) as f64 / 2.0,
            size,
            size,
        )
        .unwrap()
    }

    fn render(
        intrinsics: &CameraIntrinsics,
        pose: &Pose,
        triangles: &[[Vector3<f64>; 3]],
    ) -> DepthMap {
        let mut depth = DepthMap::invalid(intrinsics.width, intrinsics.height);
        for tri in triangles {
            rasterize_triangle(intrinsics, pose, tri, &mut |x, y, z| {
                let cur = depth.get(x, y);
                if cur.is_nan() || z < cur {
                    depth.set(x, y, z);
                }
            });
        }
        depth
    }

    /// Two triangles spanning a fronto-parallel quad: every covered pixel has
    /// exactly the plane depth, and the quad is large enough to cover the
    /// whole 90-degree frustum.
    #[test]
    fn fronto_parallel_quad_has_constant_depth() {
        let intr = test_camera(64);
        let pose = Pose::identity();
        let z = 5.0;
        let s = 6.0; // half-size; frustum needs 5 at z=5
        let v = [
            Vector3::new(-s, -s, z),
            Vector3::new(s, -s, z),
            Vector3::new(s, s, z),
            Vector3::new(-s, s, z),
        ];
        let depth = render(&intr, &pose, &[[v[0], v[1], v[2]], [v[0], v[2], v[3]]]);
        assert_eq!(depth.valid_count(), 64 * 64);
        for (x, y) in depth.coords() {
            assert!((depth.get(x, y) - z).abs() < 1e-12, "pixel ({x},{y})");
        }
    }

    /// A slanted plane z = 5 + 0.3 x rendered through the pinhole has the
    /// closed-form per-pixel depth t = 5 / (1 - 0.3 u); perspective-correct
    /// interpolation must reproduce it exactly.
    #[test]
    fn slanted_plane_matches_analytic_depth() {
        let intr = test_camera(32);
        let pose = Pose::identity();
        let plane_pt = |x: f64, y: f64| Vector3::new(x, y, 5.0 + 0.3 * x);
        let s = 20.0;
        let v = [
            plane_pt(-s, -s),
            plane_pt(s, -s),
            plane_pt(s, s),
            plane_pt(-s, s),
        ];
        let depth = render(&intr, &pose, &[[v[0], v[1], v[2]], [v[0], v[2], v[3]]]);
        for (x, y) in depth.coords() {
            let u = (x as f64 - intr.cx) / intr.fx;
            let expected = 5.0 / (1.0 - 0.3 * u);
            assert!(
                (depth.get(x, y) - expected).abs() < 1e-9,
                "pixel ({x},{y}): {} vs {}",
                depth.get(x, y),
                expected
            );
        }
    }

    /// Reversing the winding must not change coverage (no backface culling).
    #[test]
    fn both_windings_rasterize() {
        let intr = test_camera(16);
        let pose = Pose::identity();
        let tri = [
            Vector3::new(-4.0, -4.0, 4.0),
            Vector3::new(4.0, -4.0, 4.0),
            Vector3::new(0.0, 4.0, 4.0),
        ];
        let fwd = render(&intr, &pose, &[tri]);
        let rev = render(&intr, &pose, &[[tri[2], tri[1], tri[0]]]);
        assert!(fwd.valid_count() > 0);
        assert_eq!(fwd.valid_count(), rev.valid_count());
        for (x, y) in fwd.coords() {
            let (a, b) = (fwd.get(x, y), rev.get(x, y));
            assert_eq!(a.is_nan(), b.is_nan());
            if !a.is_nan() {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// A triangle straddling the camera plane is clipped: the part in front
    /// renders, nothing behind the near plane emits, and depths stay
    /// positive.
    #[test]
    fn near_clip_keeps_front_part_only() {
        let intr = test_camera(32);
        let pose = Pose::identity();
        // Spans z from -2 to +6; apex behind the camera.
        let tri = [
            Vector3::new(0.0, 0.0, -2.0),
            Vector3::new(-3.0, 2.0, 6.0),
            Vector3::new(3.0, 2.0, 6.0),
        ];
        let mut count = 0usize;
        rasterize_triangle(&intr, &pose, &tri, &mut |_, _, z| {
            assert!(z > 0.0);
            assert!(z <= 6.0 + 1e-9);
            count += 1;
        });
        assert!(count > 0, "front part must rasterize");

        // Fully behind: nothing.
        let behind = [
            Vector3::new(0.0, 0.0, -2.0),
            Vector3::new(1.0, 0.0, -3.0),
            Vector3::new(0.0, 1.0, -4.0),
        ];
        rasterize_triangle(&intr, &pose, &behind, &mut |_, _, _| {
            panic!("behind-camera triangle must not emit");
        });
    }

    /// Splats land on the 2x2 block around the projection and are clipped at
    /// the raster edge.
    #[test]
    fn splat_covers_two_by_two() {
        let intr = test_camera(16);
        let pose = Pose::identity();
        // Projects to pixel (7.5, 7.5) -> pixels {7,8} x {7,8}.
        let mut hits = Vec::new();
        splat_point(&intr, &pose, Vector3::new(0.0, 0.0, 3.0), &mut |x, y, z| {
            assert!((z - 3.0).abs() < 1e-12);
            hits.push((x, y));
        });
        hits.sort_unstable();
        assert_eq!(hits, vec![(7, 7), (7, 8), (8, 7), (8, 8)]);

        // Behind the camera: nothing.
        splat_point(&intr, &pose, Vector3::new(0.0, 0.0, -3.0), &mut |_, _, _| {
            panic!("behind-camera point must not splat");
        });

        // Near the corner: clipped to in-bounds pixels only.
        let mut corner = Vec::new();
        let p = crate::camera::unproject(
            Vector2::new(-0.4, -0.4),
            2.0,
            &intr,
            &pose,
        )
        .unwrap();
        splat_point(&intr, &pose, p, &mut |x, y, _| corner.push((x, y)));
        corner.sort_unstable();
        assert_eq!(corner, vec![(0, 0)]);
    }
}
