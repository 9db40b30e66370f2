//! Row-major raster containers shared by every stage: metric depth with a
//! NaN invalid sentinel, RGB images in [0,1], per-pixel class labels, and
//! the bundled `ViewSample` capture.

use crate::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};

/// Generic row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "raster data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.idx(x, y);
        self.data[i] = value;
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_size<U: Copy>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// (x, y) pairs in row-major order. The iterator captures only the
    /// dimensions, so the raster may be mutated while iterating.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> {
        let w = self.width;
        (0..self.len()).map(move |i| (i % w, i / w))
    }
}

/// Per-pixel metric depth in meters; NaN marks an invalid pixel so that
/// accidental arithmetic on missing data propagates visibly.
pub type DepthMap = Raster<f64>;

impl DepthMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        Raster::filled(width, height, f64::NAN)
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y).is_finite()
    }

    pub fn valid_count(&self) -> usize {
        self.data().iter().filter(|d| d.is_finite()).count()
    }

    /// Checks every valid value is finite and positive.
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.data().iter().enumerate() {
            if !d.is_nan() && !(d.is_finite() && *d > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "depth value {} at index {} is not positive finite",
                    d, i
                )));
            }
        }
        Ok(())
    }
}

/// RGB pixel with channels in [0,1].
pub type Rgb = [f64; 3];

/// Three-channel image raster, channels in [0,1].
pub type ImageRaster = Raster<Rgb>;

impl ImageRaster {
    pub fn black(width: usize, height: usize) -> Self {
        Raster::filled(width, height, [0.0; 3])
    }

    pub fn clamp_channels(&mut self) {
        for px in self.data_mut() {
            for c in px.iter_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
    }

    /// Rec. 601 luminance.
    pub fn luminance(&self) -> Raster<f64> {
        let data = self
            .data()
            .iter()
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        Raster::from_vec(self.width(), self.height(), data).unwrap()
    }

    /// Bilinear sample at a continuous pixel coordinate; caller must keep
    /// (x, y) within [0, w-1] x [0, h-1].
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Rgb {
        let x = x.clamp(0.0, self.width() as f64 - 1.0);
        let y = y.clamp(0.0, self.height() as f64 - 1.0);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width() - 1);
        let y1 = (y0 + 1).min(self.height() - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let mut out = [0.0; 3];
        let (p00, p10, p01, p11) = (
            self.get(x0, y0),
            self.get(x1, y0),
            self.get(x0, y1),
            self.get(x1, y1),
        );
        for c in 0..3 {
            let top = p00[c] * (1.0 - fx) + p10[c] * fx;
            let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
            out[c] = top * (1.0 - fy) + bot * fy;
        }
        out
    }
}

/// Per-pixel semantic class ids. Id 0 is reserved for "unknown".
pub type LabelRaster = Raster<u16>;

pub const LABEL_UNKNOWN: u16 = 0;

/// Boolean mask raster (true = set).
pub type MaskRaster = Raster<bool>;

impl MaskRaster {
    pub fn count(&self) -> usize {
        self.data().iter().filter(|&&b| b).count()
    }
}

/// One captured reference view: image, depth, labels, and calibration.
#[derive(Debug, Clone)]
pub struct ViewSample {
    pub image: ImageRaster,
    pub depth: DepthMap,
    pub labels: LabelRaster,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl ViewSample {
    pub fn new(
        image: ImageRaster,
        depth: DepthMap,
        labels: LabelRaster,
        intrinsics: CameraIntrinsics,
        pose: Pose,
    ) -> Result<Self> {
        if !image.same_size(&depth) || !image.same_size(&labels) {
            return Err(Error::InvalidArgument(
                "view sample rasters must share dimensions".into(),
            ));
        }
        if image.width() != intrinsics.width || image.height() != intrinsics.height {
            return Err(Error::InvalidArgument(format!(
                "raster {}x{} does not match intrinsics {}x{}",
                image.width(),
                image.height(),
                intrinsics.width,
                intrinsics.height
            )));
        }
        Ok(ViewSample {
            image,
            depth,
            labels,
            intrinsics,
            pose,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_validate_flags_nonpositive() {
        let mut d = DepthMap::invalid(4, 4);
        d.set(1, 1, 3.0);
        assert!(d.validate().is_ok());
        d.set(2, 2, -1.0);
        assert!(d.validate().is_err());
    }

    #[test]
    fn bilinear_at_integer_coords_is_exact() {
        let mut img = ImageRaster::black(3, 3);
        img.set(1, 2, [0.25, 0.5, 0.75]);
        assert_eq!(img.sample_bilinear(1.0, 2.0), [0.25, 0.5, 0.75]);
    }

    #[test]
    fn bilinear_interpolates_midpoint() {
        let mut img = ImageRaster::black(2, 1);
        img.set(0, 0, [0.0, 0.0, 0.0]);
        img.set(1, 0, [1.0, 1.0, 1.0]);
        let s = img.sample_bilinear(0.5, 0.0);
        for c in s {
            assert!((c - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn view_sample_rejects_mismatched_sizes() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let bad = ViewSample::new(
            ImageRaster::black(4, 4),
            DepthMap::invalid(3, 4),
            LabelRaster::filled(4, 4, 0),
            k,
            Pose::identity(),
        );
        assert!(bad.is_err());
    }
}
