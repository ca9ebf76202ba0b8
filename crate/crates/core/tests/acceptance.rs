//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;
use tempbev::bev_grid::{BevGrid, ClassLayout, GridSpec, Mask};
use tempbev::camera_geometry::{
    analytic_ground_homography, ground_anchor_correspondences, homography_from_correspondences,
    project_ground_to_image, project_image_to_ground,
};
use tempbev::config::{MaskMode, ScenarioConfig};
use tempbev::evaluation::{confusion, iou};
use tempbev::model::{focal_loss, Activation, Lattice};
use tempbev::occlusion::{compute_occlusion_mask, LidarSpec, Obstacle};
use tempbev::pipeline::{build_samples, evaluate, train_model, Model, Sample, Selection, ALL_GROUP, STATIC_GROUP};
use tempbev::synthetic_world::{generate_scene, render_frame, scene_prisms, ground_point_hidden, CameraRig, Texture};
use tempbev::warping::{aggregate, AggregationMode};

type Outcome = Result<String, String>;

fn check(cond: bool, what: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what)
    }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let cam = common::camera();
    let mut r = common::rng(1);
    let (mut chain_err, mut dlt_err, mut trip_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let pose = common::random_camera_pose(&mut r);
        let h = analytic_ground_homography(&cam, &pose, 0.0).map_err(|e| e.to_string())?;
        let mut tested = 0;
        while tested < 20 {
            let px = [r.gen_range(0.0..512.0), r.gen_range(0.0..256.0)];
            let Some(g) = project_image_to_ground(&cam, &pose, px) else { continue };
            let a = h.apply(g[0], g[1]).ok_or("analytic homography lost a visible point")?;
            let b = common::project_chain(&cam, &pose, g).ok_or("chain lost a visible point")?;
            chain_err = chain_err.max((a[0] - b[0]).hypot(a[1] - b[1]));
            let back = project_ground_to_image(&cam, &pose, g).ok_or("ground point left the raster")?;
            let g2 = project_image_to_ground(&cam, &pose, back).ok_or("round trip lost the point")?;
            trip_err = trip_err.max((g2[0] - g[0]).hypot(g2[1] - g[1]));
            tested += 1;
        }
        let anchors = ground_anchor_correspondences(&cam, &pose).map_err(|e| e.to_string())?;
        let est = homography_from_correspondences(&anchors).map_err(|e| e.to_string())?;
        dlt_err = dlt_err.max(est.canonical_distance(&h));
    }
    let dt = t0.elapsed();
    let detail = format!("chain {chain_err:.1e} px, DLT {dlt_err:.1e}, round trip {trip_err:.1e} m, {dt:.2?}");
    check(chain_err < 1e-9, detail.clone())?;
    check(dlt_err < 1e-6, detail.clone())?;
    check(trip_err < 1e-9, detail.clone())?;
    check(dt < Duration::from_secs(5), detail.clone())?;
    Ok(detail)
}

fn spec8() -> GridSpec<f64> {
    GridSpec::new(1.0, [0.0, 8.0], [0.0, 8.0], ClassLayout::default()).unwrap()
}

fn random_stack(r: &mut rand_chacha::ChaCha8Rng, n: usize, ch: usize) -> (Vec<BevGrid<f64>>, Vec<Mask>) {
    let spec = spec8();
    let grids = (0..n)
        .map(|_| {
            let data = (0..64 * ch).map(|_| r.gen_range(0.0..1.0)).collect();
            BevGrid::from_data(spec, ch, data).unwrap()
        })
        .collect();
    let masks = (0..n)
        .map(|_| Mask {
            rows: 8,
            cols: 8,
            data: (0..64).map(|_| r.gen_bool(0.7)).collect(),
        })
        .collect();
    (grids, masks)
}

fn agg(grids: &[BevGrid<f64>], masks: &[Mask], mode: AggregationMode) -> BevGrid<f64> {
    let g: Vec<&BevGrid<f64>> = grids.iter().collect();
    let m: Vec<&Mask> = masks.iter().collect();
    aggregate(&g, &m, mode).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn bits(g: &BevGrid<f64>) -> Vec<u64> {
    g.data.iter().map(|v| v.to_bits()).collect()
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut r = common::rng(2);
    let (grids, masks) = random_stack(&mut r, 5, 3);
    let perms = permutations(5);
    for mode in [AggregationMode::Max, AggregationMode::Mean] {
        let base = bits(&agg(&grids, &masks, mode));
        for p in &perms {
            let g: Vec<_> = p.iter().map(|&i| grids[i].clone()).collect();
            let m: Vec<_> = p.iter().map(|&i| masks[i].clone()).collect();
            check(bits(&agg(&g, &m, mode)) == base, format!("{mode:?} output depends on frame order"))?;
        }
    }
    for trial in 0..1000 {
        let n = r.gen_range(1..=5);
        let (grids, masks) = random_stack(&mut r, n, 2);
        // single frame: B·G
        let single = agg(&grids[..1], &masks[..1], AggregationMode::Max);
        for i in 0..64 {
            for c in 0..2 {
                let want = if masks[0].data[i] { grids[0].data[i * 2 + c] } else { 0.0 };
                check(single.data[i * 2 + c] == want, format!("stack {trial}: single frame is not the masked grid"))?;
            }
        }
        for mode in [AggregationMode::Max, AggregationMode::Mean] {
            let base = agg(&grids, &masks, mode);
            let mut g2 = grids.clone();
            let mut m2 = masks.clone();
            g2.push(grids[0].clone());
            m2.push(Mask::filled(8, 8, false));
            check(agg(&g2, &m2, mode) == base, format!("stack {trial}: empty-mask frame changed {mode:?}"))?;
        }
        let max = agg(&grids, &masks, AggregationMode::Max);
        let mut doubled = grids.clone();
        doubled.extend(grids.iter().cloned());
        let mut dm = masks.clone();
        dm.extend(masks.iter().cloned());
        check(agg(&doubled, &dm, AggregationMode::Max) == max, format!("stack {trial}: max is not idempotent"))?;
        let mut raised = grids.clone();
        let k = r.gen_range(0..n);
        raised[k].data.iter_mut().for_each(|v| *v += r.gen_range(0.0..0.5));
        let up = agg(&raised, &masks, AggregationMode::Max);
        check(
            up.data.iter().zip(&max.data).all(|(a, b)| a >= b),
            format!("stack {trial}: max is not monotone"),
        )?;
    }
    let dt = t0.elapsed();
    check(dt < Duration::from_secs(10), format!("took {dt:.2?}"))?;
    Ok(format!("120 orderings bit-identical, 1000 stacks, {dt:.2?}"))
}

fn criterion_3() -> Outcome {
    let lidar = LidarSpec::<f64>::default();
    let spec = GridSpec::new(0.5, [-10.0, 10.0], [0.0, 20.0], ClassLayout::default()).unwrap();
    check(spec.rows == 40 && spec.cols == 40, "grid is not 40x40".into())?;

    let free = compute_occlusion_mask(&lidar, &[], &spec);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let [x, y] = spec.cell_center(r, c);
            check(free.get(r, c) == (x.hypot(y) <= lidar.max_range), format!("free-space cell ({r}, {c})"))?;
        }
    }

    let wall = Obstacle::new(vec![[-500.0, 10.0], [500.0, 10.0], [500.0, 10.5], [-500.0, 10.5]], 10.0).unwrap();
    let shadow = compute_occlusion_mask(&lidar, &[wall], &spec);
    let mut beyond = 0;
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let [_, y] = spec.cell_center(r, c);
            if spec.longitudinal_min + spec.resolution * r as f64 >= 10.5 {
                beyond += 1;
                check(!shadow.get(r, c), format!("cell ({r}, {c}) at y = {y} is visible through the wall"))?;
            }
        }
    }

    let bx = Obstacle::new(vec![[-1.0, 14.0], [1.0, 14.0], [1.0, 16.0], [-1.0, 16.0]], 3.0).unwrap();
    let mask = compute_occlusion_mask(&lidar, &[bx.clone()], &spec);
    let oracle = common::ray_march_mask(&lidar, &[bx], &spec, 4);
    let diff = mask.data.iter().zip(&oracle.data).filter(|(a, b)| a != b).count();
    let frac = diff as f64 / mask.data.len() as f64;
    let occluded = mask.data.iter().filter(|v| !**v).count();
    check(occluded > 0, "box casts no shadow".into())?;
    check(frac <= 0.02, format!("{diff} cells ({:.2}%) disagree with the ray march", 100.0 * frac))?;
    Ok(format!(
        "disk exact, {beyond} cells behind the wall hidden, box disagreement {diff}/1600 ({:.2}%), {occluded} occluded",
        100.0 * frac
    ))
}

fn criterion_4() -> Outcome {
    let mut r = common::rng(4);
    let mut worst = 0.0f64;
    let mut ce_err = 0.0f64;
    for act in [Activation::Sigmoid, Activation::Softmax] {
        for gamma in [0.0, 1.0, 2.0] {
            for _ in 0..20 {
                let (n, c) = (r.gen_range(2..7), r.gen_range(2..5));
                let z = Lattice::from_data(n, c, (0..n * c).map(|_| r.gen_range(-3.0..3.0)).collect()).unwrap();
                let mut y = Lattice::zeros(n, c);
                for i in 0..n {
                    match act {
                        Activation::Sigmoid => y.cell_mut(i).iter_mut().for_each(|v| *v = r.gen_range(0..2) as f64),
                        Activation::Softmax => y.cell_mut(i)[r.gen_range(0..c)] = 1.0,
                    }
                }
                let mut mask: Vec<bool> = (0..n).map(|_| r.gen_bool(0.7)).collect();
                mask[0] = true;
                let alpha: Vec<f64> = (0..c).map(|_| r.gen_range(0.1..0.9)).collect();
                let p = common::activate(&z, act);
                let fl = focal_loss(&p, &y, &mask, act, gamma, &alpha).map_err(|e| e.to_string())?;
                let fd = common::focal_fd(&z, &y, &mask, act, gamma, &alpha, 1e-5);
                let num: f64 = fl.grad.data.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
                worst = worst.max(num / den);
                for i in 0..n {
                    if !mask[i] {
                        check(fl.grad.cell(i).iter().all(|&g| g == 0.0), "masked cell has gradient".into())?;
                    }
                }
                if gamma == 0.0 {
                    // α-weighted cross-entropy, written out directly
                    let mut ce = 0.0;
                    for i in (0..n).filter(|&i| mask[i]) {
                        for k in 0..c {
                            let (pk, yk) = (p.cell(i)[k], y.cell(i)[k]);
                            ce -= match act {
                                Activation::Sigmoid => {
                                    if yk > 0.5 {
                                        alpha[k] * pk.ln()
                                    } else {
                                        (1.0 - alpha[k]) * (1.0 - pk).ln()
                                    }
                                }
                                Activation::Softmax => alpha[k] * yk * pk.ln(),
                            };
                        }
                    }
                    let cells = mask.iter().filter(|m| **m).count() as f64;
                    ce /= match act {
                        Activation::Sigmoid => cells * c as f64,
                        Activation::Softmax => cells,
                    };
                    ce_err = ce_err.max((ce - fl.loss).abs());
                }
            }
        }
    }
    let detail = format!("max relative gradient error {worst:.1e}, cross-entropy gap {ce_err:.1e}");
    check(worst < 1e-4, detail.clone())?;
    check(ce_err < 1e-12, detail.clone())?;
    Ok(detail)
}

fn criterion_5() -> Outcome {
    let cfg = ScenarioConfig::default();
    let rig = CameraRig::default();
    let cam = rig.camera().map_err(|e| e.to_string())?;
    let spec = tempbev::bev_grid::make_target_grid::<f64>(&cfg.grid).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut cells = 0usize;
    for seed in 0..10u64 {
        let scene = generate_scene(seed, &cfg.scene).map_err(|e| e.to_string())?;
        let texture = Texture::new(&scene);
        let step = cfg.reference_step();
        let frame = render_frame(&scene, &texture, &rig, step, step).map_err(|e| e.to_string())?;
        let warp = analytic_ground_homography(&cam, &frame.camera_pose, 0.0).map_err(|e| e.to_string())?;
        let bev = tempbev::warping::warp_to_bev(&warp, &frame.image, spec).map_err(|e| e.to_string())?;
        let ego = scene.ego_pose(step);
        let world_cam = ego.compose(&rig.mount());
        let prisms = scene_prisms(&scene, scene.timestamp(step));
        let fov = tempbev::warping::fov_mask(&cam, &frame.camera_pose, &spec);
        let (mut sum, mut n) = (0.0, 0usize);
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                if !fov.get(r, c) {
                    continue;
                }
                let [x, y] = spec.cell_center(r, c);
                let w = ego.transform_point(&tempbev::linalg::Vec3::new(x, y, 0.0));
                let p = [w.x(), w.y()];
                if texture.near_edge(p, 0.5) || ground_point_hidden(&prisms, world_cam.translation.0, p) {
                    continue;
                }
                let want = texture.color(p);
                let got = bev.cell(r, c);
                sum += (0..3).map(|k| (got[k] - want[k]).abs()).sum::<f64>() / 3.0;
                n += 1;
            }
        }
        if n == 0 {
            return Err(format!("scene {seed}: no comparable cells"));
        }
        worst = worst.max(sum / n as f64);
        cells += n;
    }
    let detail = format!("worst per-scene mean |error| {worst:.4} over {cells} cells");
    check(worst < 0.05, detail.clone())?;
    Ok(detail)
}

struct Trained {
    config: ScenarioConfig,
    model: Model,
    eval: Vec<Sample>,
    train_time: Duration,
}

fn trained() -> Result<Trained, String> {
    let config = ScenarioConfig::default();
    let t0 = Instant::now();
    let train = build_samples(&config, config.seed).map_err(|e| e.to_string())?;
    let model = train_model(&config, &train).map_err(|e| e.to_string())?.model;
    let train_time = t0.elapsed();
    let eval_seed = config.eval.eval_seed.unwrap_or(config.seed + 1);
    let eval = build_samples(&config, eval_seed).map_err(|e| e.to_string())?;
    Ok(Trained {
        config,
        model,
        eval,
        train_time,
    })
}

fn criterion_6(t: &Trained) -> Outcome {
    let t0 = Instant::now();
    check(t.eval.len() >= 10, "fewer than 10 evaluation scenes".into())?;
    check(
        t.eval.iter().all(|s| !s.scene.occluders.is_empty()),
        "an evaluation scene has no occluders".into(),
    )?;
    let base = Selection::evaluation(&t.config, t.model.components);
    let score = |n: usize| -> Result<f64, String> {
        let sel = Selection {
            frames: n,
            interval: 3,
            reference_index: n - 1,
            ..base
        };
        let out = evaluate(&t.model, &t.config, &t.eval, &sel, MaskMode::Occlusion).map_err(|e| e.to_string())?;
        Ok(out.seed_mean(STATIC_GROUP))
    };
    let one = score(1)?;
    let four = score(4)?;
    let dt = t.train_time + t0.elapsed();
    let detail = format!("static mIoU N=1 {one:.4}, N=4 {four:.4}, {dt:.1?} incl. training");
    check(four > one, detail.clone())?;
    check(dt < Duration::from_secs(600), detail.clone())?;
    Ok(detail)
}

fn criterion_7(t: &Trained) -> Outcome {
    let t0 = Instant::now();
    let base = Selection::evaluation(&t.config, t.model.components);
    let mut scores = Vec::new();
    for std in [0.0, 0.5, 1.0, 2.5] {
        let sel = Selection { noise_std: std, ..base };
        let out = evaluate(&t.model, &t.config, &t.eval, &sel, MaskMode::Occlusion).map_err(|e| e.to_string())?;
        scores.push(out.seed_mean(ALL_GROUP));
    }
    let dt = t.train_time + t0.elapsed();
    let detail = format!(
        "7-Mean at std 0/0.5/1/2.5: {}, {dt:.1?} incl. training",
        scores.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>().join(" / ")
    );
    check(scores.windows(2).all(|w| w[1] <= w[0]), detail.clone())?;
    check(scores[0] - scores[3] > 0.0, detail.clone())?;
    check(dt < Duration::from_secs(600), detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Outcome {
    let mut r = common::rng(8);
    for _ in 0..200 {
        let n = 256;
        let p: Vec<bool> = (0..n).map(|_| r.gen_bool(0.4)).collect();
        let g: Vec<bool> = (0..n).map(|_| r.gen_bool(0.4)).collect();
        let m: Vec<bool> = (0..n).map(|_| r.gen_bool(0.8)).collect();
        let got = iou(&p, &g, &m).map_err(|e| e.to_string())?;
        check(got == common::iou_count(&p, &g, &m), "IoU differs from counting".into())?;
        let k = 4;
        let pl: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
        let gl: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
        let cm = confusion(&pl, &gl, &m, k).map_err(|e| e.to_string())?;
        for t in 0..k {
            let row: u64 = (0..k).map(|q| cm.get(t, q)).sum();
            let want = (0..n).filter(|&i| m[i] && gl[i] == t).count() as u64;
            check(row == want, "confusion row sum differs from class count".into())?;
        }
    }
    let empty = vec![false; 256];
    check(iou(&empty, &empty, &vec![true; 256]).map_err(|e| e.to_string())? == 1.0, "empty union".into())?;

    let mut cfg = ScenarioConfig::default();
    cfg.scene_count = 2;
    let samples = build_samples(&cfg, 8).map_err(|e| e.to_string())?;
    let mut extra = 0;
    for s in &samples {
        let fov = s.mask(MaskMode::Fov).map_err(|e| e.to_string())?;
        let occ = s.mask(MaskMode::Occlusion).map_err(|e| e.to_string())?;
        for i in 0..fov.data.len() {
            check(fov.data[i] == s.fov.data[i], "FOV setting is not the FOV mask".into())?;
            check(occ.data[i] == (s.fov.data[i] && s.occlusion.data[i]), "occlusion setting is not FOV ∧ occlusion".into())?;
        }
        extra += fov.count() - occ.count();
    }
    check(extra > 0, "occlusion masking removed no cells".into())?;
    Ok(format!("IoU and confusion match counting, FOV setting keeps {extra} more cells"))
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ScenarioConfig::default();
    cfg.scene_count = 2;
    cfg.train.epochs = 3;
    let cfg_path = dir.path().join("scenario.toml");
    cfg.save(&cfg_path).map_err(|e| e.to_string())?;
    let run = |args: &[&str]| {
        let mut full = vec!["tempbev"];
        full.extend_from_slice(args);
        tempbev::cli::run(full)
    };
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let cfg_s = cfg_path.to_string_lossy().into_owned();
    for d in ["a", "b"] {
        check(run(&["generate", "--config", &cfg_s, "--out", &p(d)]) == 0, "generate failed".into())?;
    }
    let ma = std::fs::read(dir.path().join("a/manifest.json")).map_err(|e| e.to_string())?;
    let mb = std::fs::read(dir.path().join("b/manifest.json")).map_err(|e| e.to_string())?;
    check(ma == mb, "manifests differ".into())?;
    for d in ["ma", "mb"] {
        check(run(&["train", &p("a"), "--out", &p(d)]) == 0, "train failed".into())?;
    }
    let ja = std::fs::read(dir.path().join("ma/model.json")).map_err(|e| e.to_string())?;
    let jb = std::fs::read(dir.path().join("mb/model.json")).map_err(|e| e.to_string())?;
    check(ja == jb, "serialized models differ".into())?;
    Ok(format!(
        "manifest sha256 {}, model sha256 {}",
        &tempbev::io::sha256_hex(&ma)[..12],
        &tempbev::io::sha256_hex(&ja)[..12]
    ))
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        match &o {
            Ok(d) => println!("criterion {n}: PASS  {d}"),
            Err(d) => println!("criterion {n}: FAIL  {d}"),
        }
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    match trained() {
        Ok(t) => {
            report(6, criterion_6(&t));
            report(7, criterion_7(&t));
        }
        Err(e) => {
            report(6, Err(format!("training failed: {e}")));
            report(7, Err(format!("training failed: {e}")));
        }
    }
    report(8, criterion_8());
    report(9, criterion_9());
    let failed: Vec<usize> = results.iter().filter(|(_, o)| o.is_err()).map(|(n, _)| *n).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
