//! Image-to-BEV warping, FOV masks and symmetric temporal aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bev_grid::{BevGrid, FovMask, GridSpec, Layout, Mask};
use crate::camera_geometry::{analytic_ground_homography, Homography, PinholeCamera, Pose};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense image-plane tensor, row-major and channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> ImageRaster<T> {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageRaster {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, value: &[T]) -> Self {
        let mut data = Vec::with_capacity(height * width * value.len());
        for _ in 0..height * width {
            data.extend_from_slice(value);
        }
        ImageRaster {
            height,
            width,
            channels: value.len(),
            data,
        }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "raster {height}x{width}x{channels} with {} values",
                data.len()
            )));
        }
        Ok(ImageRaster {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: T) {
        let i = self.index(row, col, ch);
        self.data[i] = v;
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let i = self.index(row, col, 0);
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let i = self.index(row, col, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    /// Bilinear sample at continuous pixel position `(u, v)` into `out`.
    /// Returns `false` (leaving `out` untouched) unless all four neighbours
    /// lie inside the raster.
    pub fn sample_bilinear(&self, u: T, v: T, out: &mut [T]) -> bool {
        if !(u >= T::zero() && v >= T::zero()) {
            return false;
        }
        let max_u = T::from_usize_lossy(self.width - 1);
        let max_v = T::from_usize_lossy(self.height - 1);
        if !(u <= max_u && v <= max_v) {
            return false;
        }
        let c0 = u.floor().to_usize().unwrap_or(0).min(self.width.saturating_sub(2));
        let r0 = v.floor().to_usize().unwrap_or(0).min(self.height.saturating_sub(2));
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let fu = u - T::from_usize_lossy(c0);
        let fv = v - T::from_usize_lossy(r0);
        let (p00, p01) = (self.pixel(r0, c0), self.pixel(r0, c1));
        let (p10, p11) = (self.pixel(r1, c0), self.pixel(r1, c1));
        let one = T::one();
        for (k, o) in out.iter_mut().enumerate().take(self.channels) {
            let top = p00[k] * (one - fu) + p01[k] * fu;
            let bottom = p10[k] * (one - fu) + p11[k] * fu;
            *o = top * (one - fv) + bottom * fv;
        }
        true
    }
}

/// Samples `raster` at the image position of every cell center.
///
/// `warp` maps BEV meters to pixels. Cells whose sample point is behind the
/// camera (non-positive homogeneous depth) or lacks four in-raster
/// neighbours receive the fill value 0.
pub fn warp_to_bev<T: Real>(
    warp: &Homography<T>,
    raster: &ImageRaster<T>,
    layout: impl Into<Layout<T>>,
) -> Result<BevGrid<T>> {
    let det = warp.normalized_det();
    if !(det.abs() > T::lit(crate::camera_geometry::SINGULAR_DET)) {
        return Err(Error::SingularWarp(det.as_f64()));
    }
    if raster.data.is_empty() {
        return Err(Error::ShapeMismatch("empty raster".into()));
    }
    let mut grid = BevGrid::new(layout, raster.channels);
    let spec = *grid.spec();
    let ch = raster.channels;
    grid.data
        .par_chunks_mut(spec.cols * ch)
        .enumerate()
        .for_each(|(row, out)| {
            for col in 0..spec.cols {
                let [x, y] = spec.cell_center(row, col);
                if let Some([u, v]) = warp.apply(x, y) {
                    raster.sample_bilinear(u, v, &mut out[col * ch..(col + 1) * ch]);
                }
            }
        });
    Ok(grid)
}

/// Cells whose center maps inside `[0, width) × [0, height)` with positive depth.
pub fn fov_mask_from_homography<T: Real>(
    warp: &Homography<T>,
    width: usize,
    height: usize,
    spec: &GridSpec<T>,
) -> FovMask {
    let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
    let mut mask = Mask::for_spec(spec, false);
    mask.data
        .par_chunks_mut(spec.cols)
        .enumerate()
        .for_each(|(row, out)| {
            for (col, o) in out.iter_mut().enumerate() {
                let [x, y] = spec.cell_center(row, col);
                *o = match warp.apply(x, y) {
                    Some([u, v]) => u >= T::zero() && v >= T::zero() && u < w && v < h,
                    None => false,
                };
            }
        });
    mask
}

pub fn fov_mask<T: Real>(camera: &PinholeCamera<T>, pose: &Pose<T>, spec: &GridSpec<T>) -> FovMask {
    match analytic_ground_homography(camera, pose, T::zero()) {
        Ok(h) => fov_mask_from_homography(&h, camera.width, camera.height, spec),
        Err(_) => Mask::for_spec(spec, false),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Max,
    Mean,
}

fn check_stack<T: Real>(grids: &[&BevGrid<T>], masks: &[&FovMask]) -> Result<()> {
    let first = grids
        .first()
        .ok_or_else(|| Error::ShapeMismatch("aggregation needs at least one frame".into()))?;
    if grids.len() != masks.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} grids but {} masks",
            grids.len(),
            masks.len()
        )));
    }
    for g in grids {
        if g.layout != first.layout || g.channels != first.channels {
            return Err(Error::ShapeMismatch(
                "aggregated grids differ in spec or channels".into(),
            ));
        }
    }
    let spec = first.spec();
    for m in masks {
        if m.rows != spec.rows || m.cols != spec.cols {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} does not match grid {}x{}",
                m.rows, m.cols, spec.rows, spec.cols
            )));
        }
    }
    Ok(())
}

/// FOV-masked symmetric aggregation over frames.
///
/// * `Max`: `X_ijc = max_t B_tij · G_tijc`.
/// * `Mean`: `X_ijc = Σ_t B_tij G_tijc / max(1, Σ_t B_tij)`.
///
/// Per-cell values are combined in a canonical (sorted) order, so the output
/// is bit-identical for every ordering of the frames.
pub fn aggregate<T: Real>(
    grids: &[&BevGrid<T>],
    masks: &[&FovMask],
    mode: AggregationMode,
) -> Result<BevGrid<T>> {
    check_stack(grids, masks)?;
    let first = grids[0];
    let ch = first.channels;
    let mut out = BevGrid::new(first.layout, ch);
    out.fill_value = first.fill_value;
    let n = grids.len();
    out.data
        .par_chunks_mut(ch.max(1))
        .enumerate()
        .for_each(|(cell, out_cell)| {
            let mut vals: Vec<T> = Vec::with_capacity(n);
            for (c, o) in out_cell.iter_mut().enumerate() {
                vals.clear();
                let mut covered = 0usize;
                for (g, m) in grids.iter().zip(masks) {
                    if m.data[cell] {
                        covered += 1;
                        // `+ 0` folds −0 into +0
                        vals.push(g.data[cell * ch + c] + T::zero());
                    }
                }
                *o = match mode {
                    AggregationMode::Max => {
                        // out-of-FOV frames contribute B·G = 0
                        let floor = if covered < n { T::zero() } else { T::neg_infinity() };
                        let m = vals
                            .iter()
                            .fold(floor, |acc, &v| if v > acc { v } else { acc });
                        if m == T::neg_infinity() {
                            T::zero()
                        } else {
                            m
                        }
                    }
                    AggregationMode::Mean => {
                        vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                        let s: T = vals.iter().copied().sum();
                        s / T::from_usize_lossy(covered.max(1))
                    }
                };
            }
        });
    Ok(out)
}

/// Zeroes every cell outside the mask.
pub fn apply_mask<T: Real>(grid: &BevGrid<T>, mask: &FovMask) -> Result<BevGrid<T>> {
    aggregate(&[grid], &[mask], AggregationMode::Max)
}

/// Temporal aggregated BEV feature map:
/// `[object heatmap | max static heatmaps | max features | reference features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedBevFeatures<T> {
    pub grid: BevGrid<T>,
    pub object_channels: usize,
    pub static_channels: usize,
    pub feature_channels: usize,
}

impl<T: Real> AggregatedBevFeatures<T> {
    pub fn object_block(&self) -> std::ops::Range<usize> {
        0..self.object_channels
    }
    pub fn static_block(&self) -> std::ops::Range<usize> {
        let s = self.object_channels;
        s..s + self.static_channels
    }
    pub fn feature_block(&self) -> std::ops::Range<usize> {
        let s = self.object_channels + self.static_channels;
        s..s + self.feature_channels
    }
    pub fn reference_block(&self) -> std::ops::Range<usize> {
        let s = self.object_channels + self.static_channels + self.feature_channels;
        s..s + self.feature_channels
    }
}

/// Builds the aggregated feature map from already warped per-frame grids.
///
/// `object_heatmap` belongs to the reference frame. Pass `None` for the
/// object heatmap and an empty static stack to omit the heatmap blocks.
pub fn assemble_features<T: Real>(
    object_heatmap: Option<&BevGrid<T>>,
    static_heatmaps: &[&BevGrid<T>],
    feature_grids: &[&BevGrid<T>],
    masks: &[&FovMask],
    reference_index: usize,
) -> Result<AggregatedBevFeatures<T>> {
    let n = feature_grids.len();
    if reference_index >= n {
        return Err(Error::ShapeMismatch(format!(
            "reference index {reference_index} out of {n} frames"
        )));
    }
    if !static_heatmaps.is_empty() && static_heatmaps.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} static heatmaps for {n} frames",
            static_heatmaps.len()
        )));
    }
    let ref_mask = masks
        .get(reference_index)
        .ok_or_else(|| Error::ShapeMismatch("missing reference mask".into()))?;
    let features = aggregate(feature_grids, masks, AggregationMode::Max)?;
    let reference = apply_mask(feature_grids[reference_index], ref_mask)?;
    let mut blocks: Vec<BevGrid<T>> = Vec::with_capacity(4);
    let object_channels = match object_heatmap {
        Some(obj) => {
            blocks.push(apply_mask(obj, ref_mask)?);
            obj.channels
        }
        None => 0,
    };
    let static_channels = if static_heatmaps.is_empty() {
        0
    } else {
        let s = aggregate(static_heatmaps, masks, AggregationMode::Max)?;
        let c = s.channels;
        blocks.push(s);
        c
    };
    let feature_channels = features.channels;
    blocks.push(features);
    blocks.push(reference);
    let refs: Vec<&BevGrid<T>> = blocks.iter().collect();
    Ok(AggregatedBevFeatures {
        grid: BevGrid::concat(&refs)?,
        object_channels,
        static_channels,
        feature_channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev_grid::ClassLayout;
    use crate::linalg::Mat3;

    fn spec() -> GridSpec<f64> {
        GridSpec::new(1.0, [0.0, 4.0], [0.0, 3.0], ClassLayout::default()).unwrap()
    }

    #[test]
    fn constant_raster_warps_to_constant() {
        // identity warp: cell centers (x+0.5, y+0.5) sampled from a 10x10 raster
        let h = Homography::new(Mat3::identity()).unwrap();
        let raster = ImageRaster::filled(10, 10, &[1.0, 0.25]);
        let g = warp_to_bev(&h, &raster, spec()).unwrap();
        assert!(g.data.chunks(2).all(|c| c == [1.0, 0.25]));
    }

    #[test]
    fn out_of_raster_is_fill() {
        let mut m = Mat3::identity();
        m[(0, 2)] = 1000.0;
        let h = Homography::new(m).unwrap();
        let raster = ImageRaster::filled(10, 10, &[1.0]);
        let g = warp_to_bev(&h, &raster, spec()).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
        let behind = Homography::new(Mat3::diag(1.0, 1.0, -1.0)).unwrap();
        let g = warp_to_bev(&behind, &raster, spec()).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_warp_rejected() {
        let h = Homography {
            m: Mat3::diag(1.0, 1.0, 0.0),
        };
        let raster = ImageRaster::filled(4, 4, &[1.0]);
        assert!(matches!(
            warp_to_bev(&h, &raster, spec()),
            Err(Error::SingularWarp(_))
        ));
    }

    #[test]
    fn bilinear_requires_four_neighbours() {
        let mut r = ImageRaster::new(2, 3, 1);
        r.data = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let mut out = [f64::NAN];
        assert!(r.sample_bilinear(0.5, 0.5, &mut out));
        assert_eq!(out[0], 2.0);
        assert!(r.sample_bilinear(2.0, 1.0, &mut out));
        assert_eq!(out[0], 5.0);
        assert!(!r.sample_bilinear(2.01, 0.0, &mut out));
        assert!(!r.sample_bilinear(-0.01, 0.0, &mut out));
    }

    #[test]
    fn two_frame_max_and_mean() {
        let s = spec();
        let mut a = BevGrid::new(s, 1);
        let mut b = BevGrid::new(s, 1);
        a.set(1, 1, 0, 0.2);
        b.set(1, 1, 0, 0.7);
        let m = Mask::for_spec(&s, true);
        let mx = aggregate(&[&a, &b], &[&m, &m], AggregationMode::Max).unwrap();
        assert_eq!(mx.get(1, 1, 0), 0.7);
        let mn = aggregate(&[&a, &b], &[&m, &m], AggregationMode::Mean).unwrap();
        assert!((mn.get(1, 1, 0) - 0.45).abs() < 1e-15);
        // mean divides by covering frames only
        let mut half = Mask::for_spec(&s, true);
        half.set(1, 1, false);
        let mn = aggregate(&[&a, &b], &[&half, &m], AggregationMode::Mean).unwrap();
        assert_eq!(mn.get(1, 1, 0), 0.7);
    }

    #[test]
    fn max_with_out_of_fov_frame_includes_zero() {
        let s = spec();
        let mut a = BevGrid::new(s, 1);
        a.data.fill(-1.0);
        let on = Mask::for_spec(&s, true);
        let off = Mask::for_spec(&s, false);
        let only = aggregate(&[&a], &[&on], AggregationMode::Max).unwrap();
        assert!(only.data.iter().all(|&v| v == -1.0));
        let both = aggregate(&[&a, &a], &[&on, &off], AggregationMode::Max).unwrap();
        assert!(both.data.iter().all(|&v| v == 0.0 && v.is_sign_positive()));
    }

    #[test]
    fn shape_mismatch_detected() {
        let s = spec();
        let a = BevGrid::new(s, 1);
        let b = BevGrid::new(s, 2);
        let m = Mask::for_spec(&s, true);
        assert!(aggregate(&[&a, &b], &[&m, &m], AggregationMode::Max).is_err());
        assert!(aggregate(&[&a], &[&Mask::filled(1, 1, true)], AggregationMode::Max).is_err());
        assert!(aggregate::<f64>(&[], &[], AggregationMode::Max).is_err());
    }

    #[test]
    fn assembled_channel_count() {
        let s = spec();
        let obj = BevGrid::new(s, 4);
        let st = BevGrid::new(s, 4);
        let ft = BevGrid::new(s, 8);
        let m = Mask::for_spec(&s, true);
        let a = assemble_features(Some(&obj), &[&st], &[&ft], &[&m], 0).unwrap();
        assert_eq!(a.grid.channels, 24);
        assert_eq!(a.reference_block(), 16..24);
        assert!(assemble_features(Some(&obj), &[&st], &[&ft], &[&m], 1).is_err());
        let bare = assemble_features(None, &[], &[&ft], &[&m], 0).unwrap();
        assert_eq!(bare.grid.channels, 16);
    }
}
