use std::path::Path;

use crate::bev_grid::{BevGrid, Mask};
use crate::config::{MaskMode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::evaluation::{argmax_labels, confusion, report, threshold_predictions, Binarization, ConfusionMatrix, IouReport};
use crate::io::{write_grid, write_mask, write_rgb_bytes, Storage};
use crate::model::Lattice;
use crate::synthetic_world::{OBJECT_CLASSES, STATIC_CLASSES};

use super::forward::{predict_sample, Model, Predictions, Selection};
use super::sample::Sample;

pub const STATIC_GROUP: &str = "4-Mean";
pub const ALL_GROUP: &str = "7-Mean";

pub struct SampleEval {
    pub index: usize,
    pub report: IouReport,
    pub confusion: ConfusionMatrix,
    pub predictions: Predictions,
    pub mask: Mask,
}

pub struct EvalOutcome {
    /// IoU over the cells of all samples together.
    pub pooled: IouReport,
    pub confusion: ConfusionMatrix,
    pub samples: Vec<SampleEval>,
}

impl EvalOutcome {
    /// Mean over samples of a per-sample group mean.
    pub fn seed_mean(&self, group: &str) -> f64 {
        let v: Vec<f64> = self.samples.iter().filter_map(|s| s.report.group(group)).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

fn class_names() -> Vec<&'static str> {
    STATIC_CLASSES.iter().chain(&OBJECT_CLASSES[1..]).copied().collect()
}

fn groups() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        (STATIC_GROUP, STATIC_CLASSES.to_vec()),
        (ALL_GROUP, class_names()),
    ]
}

/// Binary maps per class: thresholded statics, then argmax objects
/// without background.
fn binarize(static_probs: &Lattice<f64>, object_probs: &Lattice<f64>, threshold: f64) -> Result<Vec<Vec<bool>>> {
    let mut maps = threshold_predictions(static_probs, &Binarization::Threshold(vec![threshold; static_probs.channels]))?;
    maps.extend(threshold_predictions(object_probs, &Binarization::Argmax)?.into_iter().skip(1));
    Ok(maps)
}

fn split_labels(labels: &BevGrid<f64>, cs: usize) -> (Lattice<f64>, Lattice<f64>) {
    let lat = Lattice::from_grid(labels);
    let mut s = Lattice::zeros(lat.cells, cs);
    let mut o = Lattice::zeros(lat.cells, lat.channels - cs);
    for i in 0..lat.cells {
        s.cell_mut(i).copy_from_slice(&lat.cell(i)[..cs]);
        o.cell_mut(i).copy_from_slice(&lat.cell(i)[cs..]);
    }
    (s, o)
}

pub fn evaluate(
    model: &Model,
    config: &ScenarioConfig,
    samples: &[Sample],
    sel: &Selection,
    mode: MaskMode,
) -> Result<EvalOutcome> {
    let names = class_names();
    let gdefs = groups();
    let grefs: Vec<(&str, &[&str])> = gdefs.iter().map(|(n, m)| (*n, &m[..])).collect();
    let cs = STATIC_CLASSES.len();
    let t = config.eval.static_threshold;
    let mut pooled_p: Vec<Vec<bool>> = vec![Vec::new(); names.len()];
    let mut pooled_g: Vec<Vec<bool>> = vec![Vec::new(); names.len()];
    let mut pooled_m = Vec::new();
    let mut total = ConfusionMatrix::zeros(OBJECT_CLASSES.len());
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let preds = predict_sample(model, config, s, sel)?;
        let mask = s.mask(mode)?;
        let (gs, go) = split_labels(&s.target_labels, cs);
        let p = binarize(&preds.static_probs, &preds.object_probs, t)?;
        let g = binarize(&gs, &go, 0.5)?;
        let rep = report(&p, &g, &mask.data, &names, &grefs)?;
        let conf = confusion(&argmax_labels(&preds.object_probs), &argmax_labels(&go), &mask.data, OBJECT_CLASSES.len())?;
        total.merge(&conf)?;
        for k in 0..names.len() {
            pooled_p[k].extend_from_slice(&p[k]);
            pooled_g[k].extend_from_slice(&g[k]);
        }
        pooled_m.extend_from_slice(&mask.data);
        out.push(SampleEval {
            index: s.index,
            report: rep,
            confusion: conf,
            predictions: preds,
            mask,
        });
    }
    Ok(EvalOutcome {
        pooled: report(&pooled_p, &pooled_g, &pooled_m, &names, &grefs)?,
        confusion: total,
        samples: out,
    })
}

const TP: [u8; 3] = [40, 200, 60];
const FN: [u8; 3] = [40, 80, 230];
const FP: [u8; 3] = [230, 50, 40];
const TN: [u8; 3] = [20, 20, 20];
const OFF: [u8; 3] = [90, 90, 90];

/// Rows flipped so that forward points up.
fn class_pixmap(path: &Path, rows: usize, cols: usize, pred: &[bool], gt: &[bool], mask: &[bool]) -> Result<()> {
    let mut bytes = Vec::with_capacity(rows * cols * 3);
    for r in (0..rows).rev() {
        for c in 0..cols {
            let i = r * cols + c;
            let px = match (mask[i], pred[i], gt[i]) {
                (false, _, _) => OFF,
                (true, true, true) => TP,
                (true, false, true) => FN,
                (true, true, false) => FP,
                (true, false, false) => TN,
            };
            bytes.extend_from_slice(&px);
        }
    }
    write_rgb_bytes(path, &bytes, cols, rows)
}

/// Class colors in drawing order; later entries paint over earlier ones.
const PALETTE: [[u8; 3]; 7] = [
    [70, 70, 75],
    [230, 230, 230],
    [180, 165, 140],
    [115, 115, 140],
    [205, 30, 30],
    [30, 60, 205],
    [235, 205, 30],
];
const CARPARK_SLOT: usize = 3;

fn label_pixmap(path: &Path, rows: usize, cols: usize, maps: &[Vec<bool>]) -> Result<()> {
    // carparks first so road structure stays on top
    let order = [CARPARK_SLOT, 2, 0, 1, 4, 5, 6];
    let mut bytes = Vec::with_capacity(rows * cols * 3);
    for r in (0..rows).rev() {
        for c in 0..cols {
            let i = r * cols + c;
            let mut px = [76, 115, 51];
            for &k in &order {
                if maps[k][i] {
                    px = PALETTE[k];
                }
            }
            bytes.extend_from_slice(&px);
        }
    }
    write_rgb_bytes(path, &bytes, cols, rows)
}

/// CSV reports plus, per sample, the probability grid, the evaluated mask
/// and true/false positive pixmaps per class.
pub fn write_eval_outputs(outcome: &EvalOutcome, samples: &[Sample], config: &ScenarioConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.pooled.save_csv(&dir.join("iou.csv"))?;
    let names = class_names();
    let conf_path = dir.join("confusion.csv");
    let f = std::fs::File::create(&conf_path).map_err(|e| Error::io(&conf_path, e))?;
    outcome.confusion.write_csv(f, &OBJECT_CLASSES)?;

    let per = dir.join("iou_per_sample.csv");
    let f = std::fs::File::create(&per).map_err(|e| Error::io(&per, e))?;
    let mut w = csv::Writer::from_writer(f);
    let fmt = |e: csv::Error| Error::format("per-sample iou", e);
    let mut header = vec!["sample".to_string(), "masked_cells".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    header.extend([STATIC_GROUP.to_string(), ALL_GROUP.to_string()]);
    w.write_record(&header).map_err(fmt)?;
    for s in &outcome.samples {
        let mut row = vec![s.index.to_string(), s.report.masked_cell_count.to_string()];
        row.extend(s.report.per_class.iter().map(|(_, v)| v.to_string()));
        row.extend(s.report.group_means.iter().map(|(_, v)| v.to_string()));
        w.write_record(&row).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::format("per-sample iou", e))?;

    let cs = STATIC_CLASSES.len();
    for (ev, sample) in outcome.samples.iter().zip(samples) {
        let sdir = dir.join(format!("sample_{:03}", ev.index));
        std::fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        let p = &ev.predictions;
        let mut data = Vec::with_capacity(p.static_probs.data.len() + p.object_probs.data.len());
        for i in 0..p.static_probs.cells {
            data.extend_from_slice(p.static_probs.cell(i));
            data.extend_from_slice(p.object_probs.cell(i));
        }
        let grid = BevGrid::from_data(sample.target, p.static_probs.channels + p.object_probs.channels, data)?;
        write_grid(&sdir.join("prediction.bevg"), &grid, Storage::F64)?;
        write_mask(&sdir.join("mask.pgm"), &ev.mask)?;
        let (gs, go) = split_labels(&sample.target_labels, cs);
        let pred = binarize(&p.static_probs, &p.object_probs, config.eval.static_threshold)?;
        let gt = binarize(&gs, &go, 0.5)?;
        label_pixmap(&sdir.join("prediction.ppm"), sample.target.rows, sample.target.cols, &pred)?;
        label_pixmap(&sdir.join("ground_truth.ppm"), sample.target.rows, sample.target.cols, &gt)?;
        for (k, name) in names.iter().enumerate() {
            class_pixmap(
                &sdir.join(format!("diff_{name}.ppm")),
                sample.target.rows,
                sample.target.cols,
                &pred[k],
                &gt[k],
                &ev.mask.data,
            )?;
        }
    }
    Ok(())
}
