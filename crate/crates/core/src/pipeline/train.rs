use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bev_grid::{crop_to_target, BevGrid, Mask};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::model::{
    class_frequency_alpha, focal_loss, HeadGradient, Lattice, LinearHead, OptimizerState,
};
use crate::synthetic_world::{image_labels, random_interval};
use crate::warping::{aggregate, apply_mask, AggregationMode};

use super::forward::{prepare_sequence, warped_heatmap, Model, PreparedSequence, Selection};
use super::sample::{derive_seed, Sample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub image_static: f64,
    pub image_object: f64,
    pub bev: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    /// Row `e` holds the loss after `e` updates (full batch) or the mean
    /// loss seen during pass `e` (mini-batches); row 0 is the initial model.
    pub history: Vec<LossRow>,
    pub alphas: [Vec<f64>; 4],
}

struct ImageData {
    xs: Lattice<f64>,
    ys: Lattice<f64>,
    xo: Lattice<f64>,
    yo: Lattice<f64>,
}

struct BevData {
    /// Kept only when heatmap channels must be rebuilt every epoch.
    seq: Option<PreparedSequence>,
    features: Lattice<f64>,
    ys: Lattice<f64>,
    yo: Lattice<f64>,
    mask: Vec<bool>,
}

fn split_channels(lat: &Lattice<f64>, start: usize, count: usize) -> Lattice<f64> {
    let mut data = Vec::with_capacity(lat.cells * count);
    for i in 0..lat.cells {
        data.extend_from_slice(&lat.cell(i)[start..start + count]);
    }
    Lattice {
        cells: lat.cells,
        channels: count,
        data,
    }
}

fn concat_channels(parts: &[&Lattice<f64>]) -> Lattice<f64> {
    let cells = parts[0].cells;
    let channels: usize = parts.iter().map(|p| p.channels).sum();
    let mut data = Vec::with_capacity(cells * channels);
    for i in 0..cells {
        for p in parts {
            data.extend_from_slice(p.cell(i));
        }
    }
    Lattice { cells, channels, data }
}

fn training_selection(config: &ScenarioConfig, model: &Model, sample: &Sample) -> Selection {
    let seq = &config.sequence;
    let frames = if model.components.temporal { seq.train_frames } else { 1 };
    Selection {
        frames,
        interval: random_interval(seq.train_interval, derive_seed(config.train.seed ^ sample.scene.seed, 0x1417)),
        reference_index: frames - 1,
        noise_std: 0.0,
        noise_seed: 0,
    }
}

fn prepare(config: &ScenarioConfig, model: &Model, sample: &Sample) -> Result<(ImageData, BevData)> {
    let sel = training_selection(config, model, sample);
    let mut seq = prepare_sequence(sample, &model.features, config.extended_range, &sel)?;
    let cs = model.classes.static_classes;
    let co = model.classes.object_classes + 1;
    let stride = config.train.pixel_stride;
    let f = model.features.channels;
    let mut image = ImageData {
        xs: Lattice::zeros(0, f),
        ys: Lattice::zeros(0, cs),
        xo: Lattice::zeros(0, f),
        yo: Lattice::zeros(0, co),
    };
    if model.components.image_branch {
        for (n, frame) in seq.frames.iter().enumerate() {
            let Some(warp) = &frame.warp else { continue };
            let (labels, valid) = image_labels(&sample.labels, warp, &sample.camera)?;
            let mut cells = Vec::new();
            for r in (0..valid.rows).step_by(stride) {
                for c in (0..valid.cols).step_by(stride) {
                    if valid.get(r, c) {
                        cells.push(r * valid.cols + c);
                    }
                }
            }
            let x = Lattice::from_raster(&frame.features).gather(&cells);
            let y = Lattice::from_raster(&labels).gather(&cells);
            image.xs = Lattice::stack(&[&image.xs, &x])?;
            image.ys = Lattice::stack(&[&image.ys, &split_channels(&y, 0, cs)])?;
            if n == seq.reference_index {
                image.xo = x;
                image.yo = split_channels(&y, cs, co);
            }
        }
    }
    let labels = Lattice::from_grid(&sample.target_labels);
    let mask = sample.mask(crate::config::MaskMode::Occlusion)?;
    let masks: Vec<&Mask> = seq.frames.iter().map(|fr| &fr.fov).collect();
    let warped: Vec<&BevGrid<f64>> = seq.frames.iter().map(|fr| &fr.warped).collect();
    let feats = crate::warping::assemble_features(None, &[], &warped, &masks, seq.reference_index)?;
    let features = Lattice::from_grid(&crop_to_target(&feats.grid));
    let keep = model.components.image_branch && model.components.bev_branch;
    for fr in &mut seq.frames {
        // warped features are cached above; only heatmaps are rebuilt
        fr.warped = BevGrid::new(seq.ext, 0);
    }
    Ok((
        image,
        BevData {
            seq: keep.then_some(seq),
            features,
            ys: split_channels(&labels, 0, cs),
            yo: split_channels(&labels, cs, co),
            mask: mask.data,
        },
    ))
}

fn heatmap_blocks(model: &Model, seq: &PreparedSequence) -> Result<Lattice<f64>> {
    let (hs, ho) = (model.image_static.as_ref().unwrap(), model.image_object.as_ref().unwrap());
    let masks: Vec<&Mask> = seq.frames.iter().map(|f| &f.fov).collect();
    let statics = seq
        .frames
        .iter()
        .map(|f| warped_heatmap(hs, f, seq.ext))
        .collect::<Result<Vec<_>>>()?;
    let srefs: Vec<_> = statics.iter().collect();
    let smax = aggregate(&srefs, &masks, AggregationMode::Max)?;
    let r = seq.reference_index;
    let obj = apply_mask(&warped_heatmap(ho, &seq.frames[r], seq.ext)?, masks[r])?;
    let o = Lattice::from_grid(&crop_to_target(&obj));
    let s = Lattice::from_grid(&crop_to_target(&smax));
    Ok(concat_channels(&[&o, &s]))
}

struct Step {
    row: LossRow,
    grads: [Option<HeadGradient<f64>>; 4],
}

fn site_loss(
    head: &LinearHead<f64>,
    x: &Lattice<f64>,
    y: &Lattice<f64>,
    mask: &[bool],
    gamma: f64,
    alpha: &[f64],
    weight: f64,
) -> Result<(f64, HeadGradient<f64>)> {
    let p = head.predict(x)?;
    let fl = focal_loss(&p, y, mask, head.activation, gamma, alpha)?;
    let mut g = head.backward(x, &fl.grad)?;
    g.scale(weight);
    Ok((fl.loss, g))
}

fn evaluate_step(
    model: &Model,
    config: &ScenarioConfig,
    image: &[&ImageData],
    bev: &[&BevData],
    alphas: &[Vec<f64>; 4],
) -> Result<Step> {
    let gamma = config.train.gamma;
    let w = config.train.loss_weights;
    let mut row = LossRow {
        epoch: 0,
        image_static: 0.0,
        image_object: 0.0,
        bev: 0.0,
        total: 0.0,
    };
    let mut grads: [Option<HeadGradient<f64>>; 4] = [None, None, None, None];
    if let (Some(hs), Some(ho)) = (&model.image_static, &model.image_object) {
        let xs = Lattice::stack(&image.iter().map(|d| &d.xs).collect::<Vec<_>>())?;
        let ys = Lattice::stack(&image.iter().map(|d| &d.ys).collect::<Vec<_>>())?;
        let (l, g) = site_loss(hs, &xs, &ys, &vec![true; xs.cells], gamma, &alphas[0], w[0])?;
        row.image_static = l;
        grads[0] = Some(g);
        let xo = Lattice::stack(&image.iter().map(|d| &d.xo).collect::<Vec<_>>())?;
        let yo = Lattice::stack(&image.iter().map(|d| &d.yo).collect::<Vec<_>>())?;
        let (l, g) = site_loss(ho, &xo, &yo, &vec![true; xo.cells], gamma, &alphas[1], w[1])?;
        row.image_object = l;
        grads[1] = Some(g);
    }
    if let (Some(bs), Some(bo)) = (&model.bev_static, &model.bev_object) {
        let inputs = bev
            .iter()
            .map(|d| match &d.seq {
                Some(seq) => Ok(concat_channels(&[&heatmap_blocks(model, seq)?, &d.features])),
                None => Ok(d.features.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        let x = Lattice::stack(&inputs.iter().collect::<Vec<_>>())?;
        let ys = Lattice::stack(&bev.iter().map(|d| &d.ys).collect::<Vec<_>>())?;
        let yo = Lattice::stack(&bev.iter().map(|d| &d.yo).collect::<Vec<_>>())?;
        let mask: Vec<bool> = bev.iter().flat_map(|d| d.mask.iter().copied()).collect();
        let (ls, gs) = site_loss(bs, &x, &ys, &mask, gamma, &alphas[2], w[2])?;
        let (lo, go) = site_loss(bo, &x, &yo, &mask, gamma, &alphas[3], w[2])?;
        row.bev = ls + lo;
        grads[2] = Some(gs);
        grads[3] = Some(go);
    }
    row.total = w[0] * row.image_static + w[1] * row.image_object + w[2] * row.bev;
    Ok(Step { row, grads })
}

fn resolve_alphas(config: &ScenarioConfig, model: &Model, image: &[ImageData], bev: &[BevData]) -> Result<[Vec<f64>; 4]> {
    let cs = model.classes.static_classes;
    let co = model.classes.object_classes + 1;
    let freq = |labels: Vec<&Lattice<f64>>, masks: Vec<Option<&[bool]>>, n: usize| -> Result<Vec<f64>> {
        if labels.iter().all(|l| l.cells == 0) {
            return Ok(vec![0.5; n]);
        }
        class_frequency_alpha(&labels, &masks)
    };
    let image_s = freq(image.iter().map(|d| &d.ys).collect(), vec![None; image.len()], cs)?;
    let image_o = freq(image.iter().map(|d| &d.yo).collect(), vec![None; image.len()], co)?;
    let masks: Vec<Option<&[bool]>> = bev.iter().map(|d| Some(&d.mask[..])).collect();
    let bev_s = freq(bev.iter().map(|d| &d.ys).collect(), masks.clone(), cs)?;
    let bev_o = freq(bev.iter().map(|d| &d.yo).collect(), masks, co)?;
    let t = &config.train;
    let pick = |given: &Option<Vec<f64>>, derived: Vec<f64>, n: usize| -> Result<Vec<f64>> {
        match given {
            Some(a) if a.len() == n => Ok(a.clone()),
            Some(a) => Err(Error::ShapeMismatch(format!("{} alpha values for {n} classes", a.len()))),
            None => Ok(derived),
        }
    };
    Ok([
        pick(&t.static_alpha, image_s, cs)?,
        pick(&t.object_alpha, image_o, co)?,
        pick(&t.static_alpha, bev_s, cs)?,
        pick(&t.object_alpha, bev_o, co)?,
    ])
}

/// Fits all heads jointly on the sum of the weighted focal losses.
pub fn train_model(config: &ScenarioConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("training needs at least one sample".into()));
    }
    let mut model = Model::init(config);
    let mut image = Vec::with_capacity(samples.len());
    let mut bev = Vec::with_capacity(samples.len());
    for s in samples {
        let (i, b) = prepare(config, &model, s)?;
        image.push(i);
        bev.push(b);
    }
    let alphas = resolve_alphas(config, &model, &image, &bev)?;
    let opt = config.train.optimizer();
    let mut states: [OptimizerState<f64>; 4] = Default::default();
    let n = samples.len();
    let batch = if config.train.batch == 0 { n } else { config.train.batch.min(n) };
    let all: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.train.seed, 0xba7c));
    let mut history = Vec::with_capacity(config.train.epochs + 1);

    let step_on = |model: &Model, idx: &[usize]| {
        let im: Vec<&ImageData> = idx.iter().map(|&i| &image[i]).collect();
        let bv: Vec<&BevData> = idx.iter().map(|&i| &bev[i]).collect();
        evaluate_step(model, config, &im, &bv, &alphas)
    };
    let apply = |model: &mut Model, grads: [Option<HeadGradient<f64>>; 4], states: &mut [OptimizerState<f64>; 4]| {
        let heads = [
            &mut model.image_static,
            &mut model.image_object,
            &mut model.bev_static,
            &mut model.bev_object,
        ];
        for ((head, g), st) in heads.into_iter().zip(grads).zip(states.iter_mut()) {
            if let (Some(h), Some(g)) = (head.as_mut(), g) {
                opt.step(h, &g, st);
            }
        }
    };
    let check = |row: LossRow| -> Result<LossRow> {
        if row.total.is_finite() {
            Ok(row)
        } else {
            Err(Error::Divergence {
                epoch: row.epoch,
                loss: row.total,
            })
        }
    };

    if batch == n {
        for epoch in 0..=config.train.epochs {
            let Step { mut row, grads } = step_on(&model, &all)?;
            row.epoch = epoch;
            history.push(check(row)?);
            if epoch < config.train.epochs {
                apply(&mut model, grads, &mut states);
            }
        }
    } else {
        let mut row = step_on(&model, &all)?.row;
        row.epoch = 0;
        history.push(check(row)?);
        for epoch in 1..=config.train.epochs {
            let mut order = all.clone();
            order.shuffle(&mut rng);
            let mut acc = LossRow {
                epoch,
                image_static: 0.0,
                image_object: 0.0,
                bev: 0.0,
                total: 0.0,
            };
            let chunks: Vec<&[usize]> = order.chunks(batch).collect();
            for idx in &chunks {
                let Step { row, grads } = step_on(&model, idx)?;
                acc.image_static += row.image_static;
                acc.image_object += row.image_object;
                acc.bev += row.bev;
                acc.total += row.total;
                apply(&mut model, grads, &mut states);
            }
            let k = chunks.len() as f64;
            acc.image_static /= k;
            acc.image_object /= k;
            acc.bev /= k;
            acc.total /= k;
            history.push(check(acc)?);
        }
    }
    Ok(TrainOutcome { model, history, alphas })
}

pub fn write_loss_csv<W: Write>(out: W, history: &[LossRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| Error::format("loss history", e);
    w.write_record(["epoch", "image_static_loss", "image_object_loss", "bev_loss", "total"])
        .map_err(fmt)?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.image_static.to_string(),
            r.image_object.to_string(),
            r.bev.to_string(),
            r.total.to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::format("loss history", e))
}

pub fn save_loss_csv(path: &Path, history: &[LossRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_loss_csv(f, history)
}
