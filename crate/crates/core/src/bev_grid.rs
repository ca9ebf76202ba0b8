//! Target and extended BEV lattices.
//!
//! Cells carry the coordinates of their centers. Row 0 is the nearest
//! longitudinal band, column 0 the leftmost lateral band:
//! `lateral = lateral_min + (col + ½)·res`, `longitudinal = longitudinal_min + (row + ½)·res`.

use serde::{Deserialize, Serialize};

use crate::camera_geometry::{analytic_ground_homography, PinholeCamera, Pose};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Channel decomposition `C = C_S + C_O + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLayout {
    pub static_classes: usize,
    pub object_classes: usize,
}

impl ClassLayout {
    pub fn total(&self) -> usize {
        self.static_classes + self.object_classes + 1
    }
}

impl Default for ClassLayout {
    fn default() -> Self {
        ClassLayout {
            static_classes: 4,
            object_classes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub resolution: f64,
    pub lateral_min: f64,
    pub lateral_max: f64,
    pub longitudinal_min: f64,
    pub longitudinal_max: f64,
    pub classes: ClassLayout,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            resolution: 0.25,
            lateral_min: -25.0,
            lateral_max: 25.0,
            longitudinal_min: 1.0,
            longitudinal_max: 50.0,
            classes: ClassLayout::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub resolution: T,
    pub lateral_min: T,
    pub lateral_max: T,
    pub longitudinal_min: T,
    pub longitudinal_max: T,
    pub rows: usize,
    pub cols: usize,
    pub classes: ClassLayout,
}

fn round_half_up<T: Real>(v: T) -> T {
    (v + T::lit(0.5)).floor()
}

pub fn make_target_grid<T: Real>(config: &GridConfig) -> Result<GridSpec<T>> {
    GridSpec::new(
        T::lit(config.resolution),
        [T::lit(config.lateral_min), T::lit(config.lateral_max)],
        [T::lit(config.longitudinal_min), T::lit(config.longitudinal_max)],
        config.classes,
    )
}

impl<T: Real> GridSpec<T> {
    pub fn new(
        resolution: T,
        lateral: [T; 2],
        longitudinal: [T; 2],
        classes: ClassLayout,
    ) -> Result<Self> {
        if !(resolution > T::zero()) || !resolution.is_finite() {
            return Err(Error::InvalidExtent(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !(lateral[0] < lateral[1]) || !(longitudinal[0] < longitudinal[1]) {
            return Err(Error::InvalidExtent(format!(
                "extents must be strictly ordered: lateral {lateral:?}, longitudinal {longitudinal:?}"
            )));
        }
        let rows = round_half_up((longitudinal[1] - longitudinal[0]) / resolution)
            .to_usize()
            .unwrap_or(0);
        let cols = round_half_up((lateral[1] - lateral[0]) / resolution)
            .to_usize()
            .unwrap_or(0);
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidExtent(format!(
                "extent smaller than one cell at resolution {resolution}"
            )));
        }
        Ok(GridSpec {
            resolution,
            lateral_min: lateral[0],
            lateral_max: lateral[1],
            longitudinal_min: longitudinal[0],
            longitudinal_max: longitudinal[1],
            rows,
            cols,
            classes,
        })
    }

    /// Lattice anchored at `(lateral_min, longitudinal_min)` with exact cell counts.
    pub fn from_cells(
        resolution: T,
        lateral_min: T,
        longitudinal_min: T,
        rows: usize,
        cols: usize,
        classes: ClassLayout,
    ) -> Self {
        GridSpec {
            resolution,
            lateral_min,
            lateral_max: lateral_min + resolution * T::from_usize_lossy(cols),
            longitudinal_min,
            longitudinal_max: longitudinal_min + resolution * T::from_usize_lossy(rows),
            rows,
            cols,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_to_world(&self, row: usize, col: usize) -> Result<[T; 2]> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Index {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.cell_center(row, col))
    }

    /// Unchecked variant of [`GridSpec::cell_to_world`] for hot loops.
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> [T; 2] {
        let half = T::lit(0.5);
        [
            self.lateral_min + (T::from_usize_lossy(col) + half) * self.resolution,
            self.longitudinal_min + (T::from_usize_lossy(row) + half) * self.resolution,
        ]
    }

    /// Floor binning; `None` outside the lattice.
    pub fn world_to_cell(&self, point: [T; 2]) -> Option<(usize, usize)> {
        let c = ((point[0] - self.lateral_min) / self.resolution).floor();
        let r = ((point[1] - self.longitudinal_min) / self.resolution).floor();
        if !(c >= T::zero() && r >= T::zero()) {
            return None;
        }
        let (r, c) = (r.to_usize()?, c.to_usize()?);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    /// `[lateral_min, lateral_max, longitudinal_min, longitudinal_max]` of the cells.
    pub fn cell_extent(&self) -> [T; 4] {
        let res = self.resolution;
        [
            self.lateral_min,
            self.lateral_min + res * T::from_usize_lossy(self.cols),
            self.longitudinal_min,
            self.longitudinal_min + res * T::from_usize_lossy(self.rows),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedGridSpec<T> {
    pub grid: GridSpec<T>,
    pub target: GridSpec<T>,
    /// `(row, col)` of target cell `(0, 0)` inside the extended lattice.
    pub offset: (usize, usize),
}

impl<T: Real> ExtendedGridSpec<T> {
    /// Extended lattice equal to the target.
    pub fn identity(target: GridSpec<T>) -> Self {
        ExtendedGridSpec {
            grid: target,
            target,
            offset: (0, 0),
        }
    }
}

/// Spec carried by a [`BevGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Layout<T> {
    Target(GridSpec<T>),
    Extended(ExtendedGridSpec<T>),
}

impl<T: Real> Layout<T> {
    pub fn lattice(&self) -> &GridSpec<T> {
        match self {
            Layout::Target(g) => g,
            Layout::Extended(e) => &e.grid,
        }
    }
}

impl<T> From<GridSpec<T>> for Layout<T> {
    fn from(g: GridSpec<T>) -> Self {
        Layout::Target(g)
    }
}

impl<T> From<ExtendedGridSpec<T>> for Layout<T> {
    fn from(e: ExtendedGridSpec<T>) -> Self {
        Layout::Extended(e)
    }
}

/// Dense multi-channel lattice, row-major and channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid<T> {
    pub layout: Layout<T>,
    pub channels: usize,
    pub data: Vec<T>,
    pub fill_value: T,
}

impl<T: Real> BevGrid<T> {
    pub fn new(layout: impl Into<Layout<T>>, channels: usize) -> Self {
        let layout = layout.into();
        let n = layout.lattice().len() * channels;
        BevGrid {
            layout,
            channels,
            data: vec![T::zero(); n],
            fill_value: T::zero(),
        }
    }

    pub fn from_data(layout: impl Into<Layout<T>>, channels: usize, data: Vec<T>) -> Result<Self> {
        let layout = layout.into();
        let expected = layout.lattice().len() * channels;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "grid data has {} values, spec needs {expected}",
                data.len()
            )));
        }
        Ok(BevGrid {
            layout,
            channels,
            data,
            fill_value: T::zero(),
        })
    }

    pub fn spec(&self) -> &GridSpec<T> {
        self.layout.lattice()
    }

    pub fn rows(&self) -> usize {
        self.spec().rows
    }

    pub fn cols(&self) -> usize {
        self.spec().cols
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.cols() + col) * self.channels + ch
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

    pub fn cell(&self, row: usize, col: usize) -> &[T] {
        let i = self.index(row, col, 0);
        &self.data[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let i = self.index(row, col, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    /// Copies channel range `[start, start + count)` into a new grid.
    pub fn select_channels(&self, start: usize, count: usize) -> BevGrid<T> {
        assert!(start + count <= self.channels);
        let data = self
            .data
            .chunks_exact(self.channels)
            .flat_map(|cell| cell[start..start + count].iter().copied())
            .collect();
        BevGrid {
            layout: self.layout,
            channels: count,
            data,
            fill_value: self.fill_value,
        }
    }

    /// Channel-wise concatenation of grids sharing one layout.
    pub fn concat(parts: &[&BevGrid<T>]) -> Result<BevGrid<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.layout != first.layout) {
            return Err(Error::ShapeMismatch(
                "concatenated grids have different specs".into(),
            ));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let cells = first.spec().len();
        let mut data = Vec::with_capacity(cells * channels);
        for i in 0..cells {
            for p in parts {
                data.extend_from_slice(&p.data[i * p.channels..(i + 1) * p.channels]);
            }
        }
        Ok(BevGrid {
            layout: first.layout,
            channels,
            data,
            fill_value: first.fill_value,
        })
    }
}

/// Boolean lattice (FOV, occlusion and evaluation masks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

pub type FovMask = Mask;

impl Mask {
    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        Mask {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn for_spec<T: Real>(spec: &GridSpec<T>, value: bool) -> Self {
        Mask::filled(spec.rows, spec.cols, value)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.cols + col] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a || b)
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "masks {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Mask {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Sub-lattice starting at `offset` with the given dimensions.
    pub fn crop(&self, offset: (usize, usize), rows: usize, cols: usize) -> Mask {
        let mut out = Mask::filled(rows, cols, false);
        for r in 0..rows {
            let src = (r + offset.0) * self.cols + offset.1;
            out.data[r * cols..(r + 1) * cols].copy_from_slice(&self.data[src..src + cols]);
        }
        out
    }
}

/// Axis-aligned bounds `[x_min, x_max, y_min, y_max]` of the ground region a
/// camera sees within `max_range` meters of its ground position.
///
/// The region is bounded by the ground images of the four raster edges
/// (straight segments under the plane homography) and by the range circle,
/// so its extremes lie at clipped segment endpoints, segment/circle
/// intersections or the axis-extreme points of the circle.
pub fn footprint_bounds<T: Real>(
    camera: &PinholeCamera<T>,
    pose: &Pose<T>,
    max_range: T,
) -> Option<[T; 4]> {
    let h = analytic_ground_homography(camera, pose, T::zero()).ok()?;
    let inv = h.m.inverse()?;
    let centre = [pose.translation.x(), pose.translation.y()];
    let w = T::from_usize_lossy(camera.width);
    let hgt = T::from_usize_lossy(camera.height);
    let corners = [
        [T::zero(), T::zero()],
        [w, T::zero()],
        [w, hgt],
        [T::zero(), hgt],
    ];
    let mut pts: Vec<[T; 2]> = Vec::new();
    let in_range = |p: [T; 2]| {
        let (dx, dy) = (p[0] - centre[0], p[1] - centre[1]);
        dx * dx + dy * dy <= max_range * max_range * (T::one() + T::lit(1e-9))
    };
    for k in 0..4 {
        let p0 = corners[k];
        let p1 = corners[(k + 1) % 4];
        let a = inv.mul_vec(&Vec3::new(p0[0], p0[1], T::one()));
        let b = inv.mul_vec(&Vec3::new(p1[0], p1[1], T::one())) - a;
        let at = |s: T| -> Option<[T; 2]> {
            let g = a + b.scale(s);
            (g.z() > T::zero()).then(|| [g.x() / g.z(), g.y() / g.z()])
        };
        let mut candidates = vec![T::zero(), T::one()];
        let (ax, ay) = (a.x() - centre[0] * a.z(), a.y() - centre[1] * a.z());
        let (bx, by) = (b.x() - centre[0] * b.z(), b.y() - centre[1] * b.z());
        let r2 = max_range * max_range;
        let q2 = bx * bx + by * by - r2 * b.z() * b.z();
        let q1 = T::lit(2.0) * (ax * bx + ay * by - r2 * a.z() * b.z());
        let q0 = ax * ax + ay * ay - r2 * a.z() * a.z();
        if q2.abs() > T::epsilon() * (q1.abs() + q0.abs()) {
            let disc = q1 * q1 - T::lit(4.0) * q2 * q0;
            if disc >= T::zero() {
                let sq = disc.sqrt();
                candidates.push((-q1 + sq) / (T::lit(2.0) * q2));
                candidates.push((-q1 - sq) / (T::lit(2.0) * q2));
            }
        } else if q1 != T::zero() {
            candidates.push(-q0 / q1);
        }
        for s in candidates {
            if s >= T::zero() && s <= T::one() {
                if let Some(p) = at(s) {
                    if in_range(p) {
                        pts.push(p);
                    }
                }
            }
        }
    }
    for dir in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
        let p = [
            centre[0] + max_range * T::lit(dir[0]),
            centre[1] + max_range * T::lit(dir[1]),
        ];
        if let Some(px) = h.apply(p[0], p[1]) {
            if camera.contains(px[0], px[1]) {
                pts.push(p);
            }
        }
    }
    let first = *pts.first()?;
    Some(pts.iter().fold(
        [first[0], first[0], first[1], first[1]],
        |b, p| [b[0].min(p[0]), b[1].max(p[0]), b[2].min(p[1]), b[3].max(p[1])],
    ))
}

/// Whole-cell count needed to push `edge` outward past `reach`.
fn cells_beyond<T: Real>(gap: T, resolution: T) -> usize {
    if gap <= T::zero() {
        return 0;
    }
    (gap / resolution - T::lit(1e-9)).ceil().to_usize().unwrap_or(0)
}

/// Lattice spanning the target plus the ground footprints of all frames
/// (each clipped to `max_range`), snapped outward to whole target cells.
pub fn extend_for_frames<T: Real>(
    target: &GridSpec<T>,
    views: &[(PinholeCamera<T>, Pose<T>)],
    max_range: T,
) -> ExtendedGridSpec<T> {
    let [tx0, tx1, ty0, ty1] = target.cell_extent();
    let (mut x0, mut x1, mut y0, mut y1) = (tx0, tx1, ty0, ty1);
    for (camera, pose) in views {
        if let Some(b) = footprint_bounds(camera, pose, max_range) {
            x0 = x0.min(b[0]);
            x1 = x1.max(b[1]);
            y0 = y0.min(b[2]);
            y1 = y1.max(b[3]);
        }
    }
    let res = target.resolution;
    let left = cells_beyond(tx0 - x0, res);
    let right = cells_beyond(x1 - tx1, res);
    let near = cells_beyond(ty0 - y0, res);
    let far = cells_beyond(y1 - ty1, res);
    let grid = GridSpec::from_cells(
        res,
        target.lateral_min - res * T::from_usize_lossy(left),
        target.longitudinal_min - res * T::from_usize_lossy(near),
        target.rows + near + far,
        target.cols + left + right,
        target.classes,
    );
    ExtendedGridSpec {
        grid,
        target: *target,
        offset: (near, left),
    }
}

/// Target-aligned sub-lattice of an extended grid. Grids already on a target
/// layout are returned unchanged.
pub fn crop_to_target<T: Real>(grid: &BevGrid<T>) -> BevGrid<T> {
    let ext = match &grid.layout {
        Layout::Target(_) => return grid.clone(),
        Layout::Extended(e) => e,
    };
    let t = &ext.target;
    let ch = grid.channels;
    let mut data = Vec::with_capacity(t.len() * ch);
    for r in 0..t.rows {
        let start = grid.index(r + ext.offset.0, ext.offset.1, 0);
        data.extend_from_slice(&grid.data[start..start + t.cols * ch]);
    }
    BevGrid {
        layout: Layout::Target(*t),
        channels: ch,
        data,
        fill_value: grid.fill_value,
    }
}

/// Writes a target grid into its slot of an extended lattice; all other
/// cells take the fill value.
pub fn embed_target<T: Real>(grid: &BevGrid<T>, ext: &ExtendedGridSpec<T>) -> Result<BevGrid<T>> {
    if grid.spec() != &ext.target {
        return Err(Error::ShapeMismatch(
            "grid is not on the extended spec's target".into(),
        ));
    }
    let mut out = BevGrid::new(*ext, grid.channels);
    out.fill_value = grid.fill_value;
    out.data.fill(grid.fill_value);
    let ch = grid.channels;
    let t = &ext.target;
    for r in 0..t.rows {
        let dst = out.index(r + ext.offset.0, ext.offset.1, 0);
        let src = grid.index(r, 0, 0);
        out.data[dst..dst + t.cols * ch].copy_from_slice(&grid.data[src..src + t.cols * ch]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> GridSpec<f64> {
        make_target_grid(&GridConfig::default()).unwrap()
    }

    #[test]
    fn default_dimensions() {
        let g = default_grid();
        assert_eq!((g.rows, g.cols), (196, 200));
        assert_eq!(g.classes.total(), 8);
        let small = make_target_grid::<f64>(&GridConfig {
            resolution: 0.5,
            lateral_min: -5.0,
            lateral_max: 5.0,
            longitudinal_min: 1.0,
            longitudinal_max: 11.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!((small.rows, small.cols), (20, 20));
    }

    #[test]
    fn invalid_extents() {
        for cfg in [
            GridConfig {
                lateral_max: -25.0,
                ..Default::default()
            },
            GridConfig {
                resolution: 0.0,
                ..Default::default()
            },
            GridConfig {
                longitudinal_min: 60.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                make_target_grid::<f64>(&cfg),
                Err(Error::InvalidExtent(_))
            ));
        }
    }

    #[test]
    fn non_multiple_extent_rounds_half_up() {
        let g = GridSpec::<f64>::new(1.0, [0.0, 2.5], [0.0, 2.4], ClassLayout::default()).unwrap();
        assert_eq!((g.rows, g.cols), (2, 3));
    }

    #[test]
    fn cell_center_convention() {
        let g = default_grid();
        assert_eq!(g.cell_to_world(0, 0).unwrap(), [-24.875, 1.125]);
        assert_eq!(g.cell_to_world(195, 199).unwrap(), [24.875, 49.875]);
        assert!(matches!(g.cell_to_world(196, 0), Err(Error::Index { .. })));
        assert_eq!(g.world_to_cell([-24.875, 1.125]), Some((0, 0)));
        assert_eq!(g.world_to_cell([0.0, 0.5]), None);
        assert_eq!(g.world_to_cell([25.0, 10.0]), None);
    }

    #[test]
    fn crop_identity_and_sentinel() {
        let target = GridSpec::<f64>::new(0.5, [-2.0, 2.0], [1.0, 4.0], ClassLayout::default()).unwrap();
        let ident = ExtendedGridSpec::identity(target);
        let mut g = BevGrid::new(ident, 2);
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = i as f64;
        }
        assert_eq!(crop_to_target(&g).data, g.data);

        let ext = ExtendedGridSpec {
            grid: GridSpec::from_cells(0.5, -3.0, 0.0, target.rows + 5, target.cols + 4, target.classes),
            target,
            offset: (2, 2),
        };
        let mut g = BevGrid::new(ext, 1);
        g.set(2, 2, 0, 42.0);
        let c = crop_to_target(&g);
        assert_eq!(c.get(0, 0, 0), 42.0);
        assert_eq!(c.data.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn concat_and_select() {
        let t = GridSpec::<f64>::new(1.0, [0.0, 2.0], [0.0, 1.0], ClassLayout::default()).unwrap();
        let a = BevGrid::from_data(t, 1, vec![1.0, 2.0]).unwrap();
        let b = BevGrid::from_data(t, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = BevGrid::concat(&[&a, &b]).unwrap();
        assert_eq!(c.data, vec![1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(c.select_channels(1, 2).data, b.data);
    }

    #[test]
    fn mask_ops() {
        let a = Mask {
            rows: 1,
            cols: 3,
            data: vec![true, false, true],
        };
        let b = Mask {
            rows: 1,
            cols: 3,
            data: vec![true, true, false],
        };
        assert_eq!(a.and(&b).unwrap().data, vec![true, false, false]);
        assert_eq!(a.or(&b).unwrap().count(), 3);
        assert!(a.and(&Mask::filled(3, 1, true)).is_err());
    }
}
