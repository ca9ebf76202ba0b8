use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::io::{read_grid, read_mask, read_ppm, sha256_file, write_grid, write_mask, write_ppm, Storage};
use crate::synthetic_world::{generate_scene, image_labels, Scene, STATIC_CLASSES};
use crate::warping::ImageRaster;

use super::forward::frame_warp;
use super::sample::{derive_seed, Sample};

pub const MANIFEST: &str = "manifest.json";
pub const SCENARIO: &str = "scenario.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FrameRecord {
    index: usize,
    step: usize,
    timestamp: f64,
    file: String,
    image_labels: String,
    camera_pose: crate::camera_geometry::Pose<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleRecord {
    index: usize,
    scene_seed: u64,
    reference_step: usize,
    camera: crate::camera_geometry::PinholeCamera<f64>,
    frames: Vec<FrameRecord>,
}

fn sample_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("sample_{i:03}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path.display().to_string(), e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
}

/// Image labels packed into one byte per pixel: bits 0..4 static classes,
/// bits 4..6 object class, bit 7 set when the pixel is labelled.
fn pack_image_labels(labels: &ImageRaster<f64>, valid: &crate::bev_grid::Mask) -> Vec<u8> {
    let cs = STATIC_CLASSES.len();
    (0..labels.height * labels.width)
        .map(|i| {
            if !valid.data[i] {
                return 0;
            }
            let px = &labels.data[i * labels.channels..(i + 1) * labels.channels];
            let mut b = 0x80u8;
            for (k, &v) in px[..cs].iter().enumerate() {
                if v > 0.5 {
                    b |= 1 << k;
                }
            }
            let obj = px[cs..].iter().position(|&v| v > 0.5).unwrap_or(0) as u8;
            b | (obj << 4)
        })
        .collect()
}

/// Writes scenes, frames, labels and masks for every sample, then a
/// manifest with the hash of every file.
pub fn generate_dataset(config: &ScenarioConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    config.save(&out.join(SCENARIO))?;
    for i in 0..config.scene_count {
        let scene_seed = derive_seed(config.seed, i as u64);
        let scene = generate_scene(scene_seed, &config.scene)?;
        let sample = Sample::build(config, i, scene)?;
        let dir = sample_dir(out, i);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_json(&dir.join("scene.json"), &sample.scene)?;
        write_grid(&dir.join("labels.bevg"), &sample.labels, Storage::U8)?;
        write_mask(&dir.join("fov.pgm"), &sample.fov)?;
        write_mask(&dir.join("occlusion.pgm"), &sample.occlusion)?;
        let mut frames = Vec::new();
        for (n, &step) in sample.steps.iter().enumerate() {
            let t = sample.scene.timestamp(step);
            let file = format!("frame_{n}_t{t:07.3}.ppm");
            write_ppm(&dir.join(&file), &sample.frame(step)?)?;
            let pose = sample.camera_pose(step);
            let label_file = format!("image_labels_{n}.pgm");
            let (w, h) = (sample.camera.width, sample.camera.height);
            let packed = match frame_warp(&sample.camera, &pose, 0.0, 0) {
                Some(warp) => {
                    let (labels, valid) = image_labels(&sample.labels, &warp, &sample.camera)?;
                    pack_image_labels(&labels, &valid)
                }
                None => vec![0; w * h],
            };
            crate::io::write_gray(&dir.join(&label_file), &packed, w, h)?;
            frames.push(FrameRecord {
                index: n,
                step,
                timestamp: t,
                file,
                image_labels: label_file,
                camera_pose: pose,
            });
        }
        write_json(
            &dir.join("sample.json"),
            &SampleRecord {
                index: i,
                scene_seed,
                reference_step: sample.reference_step,
                camera: sample.camera,
                frames,
            },
        )?;
    }
    let manifest = build_manifest(out)?;
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.strip_prefix(root).map(|p| p != Path::new(MANIFEST)).unwrap_or(false) {
            out.push(path);
        }
    }
    Ok(())
}

fn build_manifest(root: &Path) -> Result<Manifest> {
    let mut paths = Vec::new();
    collect_files(root, root, &mut paths)?;
    let mut files = paths
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            let bytes = std::fs::metadata(p).map_err(|e| Error::io(p, e))?.len();
            Ok(ManifestEntry {
                path: rel,
                bytes,
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest { files })
}

/// Checks every listed file against its recorded hash.
pub fn verify_manifest(root: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(&root.join(MANIFEST))?;
    for e in &manifest.files {
        let p = root.join(&e.path);
        let h = sha256_file(&p)?;
        if h != e.sha256 {
            return Err(Error::format(
                p.display().to_string(),
                format!("content hash {h} does not match manifest {}", e.sha256),
            ));
        }
    }
    Ok(manifest)
}

/// Reads a generated dataset back, after checking its manifest.
pub fn load_dataset(root: &Path) -> Result<(ScenarioConfig, Vec<Sample>)> {
    verify_manifest(root)?;
    let config = ScenarioConfig::load(&root.join(SCENARIO))?;
    let mut samples = Vec::with_capacity(config.scene_count);
    for i in 0..config.scene_count {
        let dir = sample_dir(root, i);
        let scene: Scene = read_json(&dir.join("scene.json"))?;
        let record: SampleRecord = read_json(&dir.join("sample.json"))?;
        let sample = Sample::from_parts(
            &config,
            i,
            scene,
            read_grid(&dir.join("labels.bevg"))?,
            read_mask(&dir.join("fov.pgm"))?,
            read_mask(&dir.join("occlusion.pgm"))?,
        )?;
        for f in &record.frames {
            sample.insert_frame(f.step, &read_ppm(&dir.join(&f.file))?);
        }
        samples.push(sample);
    }
    Ok((config, samples))
}
