mod common;

use std::path::Path;

use tempbev::cli::{ablate, Axis};
use tempbev::config::{MaskMode, ScenarioConfig};
use tempbev::io::{read_grid, read_mask};
use tempbev::pipeline::*;

fn small(epochs: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.scene_count = 2;
    c.train.epochs = epochs;
    c
}

#[test]
fn training_lowers_the_loss() {
    let c = small(6);
    let samples = build_samples(&c, c.seed).unwrap();
    let out = train_model(&c, &samples).unwrap();
    assert_eq!(out.history.len(), 7);
    let first = out.history[0].total;
    let last = out.history[6].total;
    assert!(last < first, "{last} !< {first}");
    for r in &out.history {
        assert!((r.total - (r.image_static + r.image_object + r.bev)).abs() < 1e-12);
    }
}

#[test]
fn zero_epochs_keeps_initial_model() {
    let c = small(0);
    let samples = build_samples(&c, c.seed).unwrap();
    let out = train_model(&c, &samples).unwrap();
    assert_eq!(out.model, Model::init(&c));
    assert_eq!(out.history.len(), 1);
}

#[test]
fn masks_nest() {
    let c = small(0);
    for s in build_samples(&c, 3).unwrap() {
        let fov = s.mask(MaskMode::Fov).unwrap();
        let occ = s.mask(MaskMode::Occlusion).unwrap();
        assert!(occ.data.iter().zip(&fov.data).all(|(o, f)| !o || *f));
        assert!(occ.data.iter().filter(|&&v| v).count() > 0);
    }
}

fn per_sample_csv(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn written_reports_recount_from_written_grids() {
    let c = small(3);
    let train = build_samples(&c, c.seed).unwrap();
    let model = train_model(&c, &train).unwrap().model;
    let eval_set = build_samples(&c, 1).unwrap();
    let sel = Selection::evaluation(&c, model.components);
    let out = evaluate(&model, &c, &eval_set, &sel, MaskMode::Occlusion).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_eval_outputs(&out, &eval_set, &c, dir.path()).unwrap();

    let rows = per_sample_csv(&dir.path().join("iou_per_sample.csv"));
    assert_eq!(rows.len(), eval_set.len());
    for (row, s) in rows.iter().zip(&eval_set) {
        let sdir = dir.path().join(format!("sample_{:03}", s.index));
        let pred = read_grid::<f64>(&sdir.join("prediction.bevg")).unwrap();
        let mask = read_mask(&sdir.join("mask.pgm")).unwrap();
        assert_eq!(row[1] as usize, mask.data.iter().filter(|&&m| m).count());
        let cells = mask.data.len();
        let label = |k: usize, i: usize| s.target_labels.data[i * s.target_labels.channels + k] > 0.5;
        let mut ious = Vec::new();
        for k in 0..4 {
            let p: Vec<bool> = (0..cells).map(|i| pred.data[i * 8 + k] >= 0.5).collect();
            let g: Vec<bool> = (0..cells).map(|i| label(k, i)).collect();
            ious.push(common::iou_count(&p, &g, &mask.data));
        }
        for k in 1..4 {
            let top = |i: usize| {
                let c = &pred.data[i * 8 + 4..i * 8 + 8];
                (0..4).fold(0, |b, j| if c[j] > c[b] { j } else { b })
            };
            let p: Vec<bool> = (0..cells).map(|i| top(i) == k).collect();
            let g: Vec<bool> = (0..cells).map(|i| label(4 + k, i)).collect();
            ious.push(common::iou_count(&p, &g, &mask.data));
        }
        for k in 0..7 {
            assert_eq!(row[2 + k], ious[k], "class {k} of sample {}", s.index);
        }
        assert!((row[9] - ious[..4].iter().sum::<f64>() / 4.0).abs() < 1e-12);
        assert!((row[10] - ious.iter().sum::<f64>() / 7.0).abs() < 1e-12);
    }
}

#[test]
fn ablation_noise_zero_matches_plain_evaluation() {
    let mut c = small(2);
    c.eval.eval_seed = Some(5);
    let rows = ablate(&c, Axis::Noise, Some("0")).unwrap();
    let train = build_samples(&c, c.seed).unwrap();
    let model = train_model(&c, &train).unwrap().model;
    let eval_set = build_samples(&c, 5).unwrap();
    let sel = Selection { noise_std: 0.0, ..Selection::evaluation(&c, model.components) };
    let out = evaluate(&model, &c, &eval_set, &sel, c.eval.mask).unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0].static_mean - out.seed_mean(STATIC_GROUP)).abs() < 1e-12);
    assert!((rows[0].all_mean - out.seed_mean(ALL_GROUP)).abs() < 1e-12);
}

#[test]
fn dataset_round_trip_and_tamper_detection() {
    let c = small(0);
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&c, dir.path()).unwrap();
    let frames = manifest.files.iter().filter(|e| e.path.starts_with("sample_000/frame_")).count();
    assert_eq!(frames, c.sequence.frames);

    let (loaded_cfg, loaded) = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded_cfg, c);
    let fresh = build_samples(&c, c.seed).unwrap();
    let model = Model::init(&c);
    let sel = Selection::evaluation(&c, model.components);
    for (a, b) in loaded.iter().zip(&fresh) {
        assert_eq!(a.target_labels, b.target_labels);
        assert_eq!(a.fov, b.fov);
        assert_eq!(a.occlusion, b.occlusion);
        for &step in &a.steps {
            assert_eq!(a.frame(step).unwrap().data, b.frame(step).unwrap().data);
        }
    }
    let ea = evaluate(&model, &c, &loaded, &sel, MaskMode::Occlusion).unwrap();
    let eb = evaluate(&model, &c, &fresh, &sel, MaskMode::Occlusion).unwrap();
    assert_eq!(ea.pooled, eb.pooled);

    for entry in &manifest.files {
        let path = dir.path().join(&entry.path);
        let original = std::fs::read(&path).unwrap();
        let mut bad = original.clone();
        let last = bad.len() - 1;
        bad[last] ^= 1;
        std::fs::write(&path, &bad).unwrap();
        assert!(verify_manifest(dir.path()).is_err(), "{} tampering unnoticed", entry.path);
        std::fs::write(&path, &original).unwrap();
    }
    verify_manifest(dir.path()).unwrap();
}
