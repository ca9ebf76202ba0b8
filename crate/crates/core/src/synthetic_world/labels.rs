use rayon::prelude::*;

use crate::bev_grid::{BevGrid, Layout, Mask};
use crate::camera_geometry::{Homography, PinholeCamera, Pose};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::warping::ImageRaster;

use super::geometry::{bbox, point_in_polygon, Polygon};
use super::scene::{LayerIndex, Scene, OBJECT_CLASSES, STATIC_CLASSES};

/// Channels: static layers first, then object background and classes.
pub fn bev_labels(
    scene: &Scene,
    reference_pose: &Pose<f64>,
    layout: impl Into<Layout<f64>>,
    timestamp: f64,
) -> Result<BevGrid<f64>> {
    let layout = layout.into();
    let spec = *layout.lattice();
    let cs = STATIC_CLASSES.len();
    if spec.classes.static_classes != cs || spec.classes.object_classes + 1 != OBJECT_CLASSES.len() {
        return Err(Error::InvalidParameter(format!(
            "synthetic scenes carry {cs} static and {} object classes",
            OBJECT_CLASSES.len() - 1
        )));
    }
    let index = LayerIndex::new(scene);
    // smallest footprint first so that it wins overlaps
    let mut objects: Vec<(f64, usize, Polygon, [f64; 4])> = scene
        .objects
        .iter()
        .map(|o| {
            let fp = o.footprint_at(timestamp);
            let b = bbox(&fp);
            (o.area(), o.class_id, fp, b)
        })
        .collect();
    objects.sort_by(|a, b| a.0.total_cmp(&b.0));
    let channels = spec.classes.total();
    let mut grid = BevGrid::new(layout, channels);
    let cols = spec.cols;
    grid.data.par_chunks_mut(cols * channels).enumerate().for_each(|(r, line)| {
        for c in 0..cols {
            let [x, y] = spec.cell_center(r, c);
            let w = reference_pose.transform_point(&Vec3::new(x, y, 0.0));
            let p = [w.x(), w.y()];
            let cell = &mut line[c * channels..(c + 1) * channels];
            for (k, on) in index.classify(scene, p).iter().enumerate() {
                cell[k] = if *on { 1.0 } else { 0.0 };
            }
            let class = objects
                .iter()
                .find(|(_, _, fp, b)| p[0] >= b[0] && p[0] <= b[1] && p[1] >= b[2] && p[1] <= b[3] && point_in_polygon(p, fp))
                .map_or(0, |o| o.1);
            cell[cs + class] = 1.0;
        }
    });
    Ok(grid)
}

/// Nearest-neighbour lookup of BEV labels for every pixel. The mask marks
/// labelled pixels: those whose ground point falls on the grid.
pub fn image_labels(
    labels: &BevGrid<f64>,
    warp: &Homography<f64>,
    camera: &PinholeCamera<f64>,
) -> Result<(ImageRaster<f64>, Mask)> {
    let inv = warp.inverse()?;
    let spec = labels.spec();
    let ch = labels.channels;
    let (h, w) = (camera.height, camera.width);
    let mut img = ImageRaster::new(h, w, ch);
    let mut mask = Mask::filled(h, w, false);
    img.data
        .par_chunks_mut(w * ch)
        .zip(mask.data.par_chunks_mut(w))
        .enumerate()
        .for_each(|(row, (line, valid))| {
            for col in 0..w {
                let Some(g) = inv.apply(col as f64, row as f64) else {
                    continue;
                };
                if let Some((r, c)) = spec.world_to_cell(g) {
                    line[col * ch..(col + 1) * ch].copy_from_slice(labels.cell(r, c));
                    valid[col] = true;
                }
            }
        });
    Ok((img, mask))
}
