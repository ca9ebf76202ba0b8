//! Masked IoU, grouped means and object confusion matrices.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Lattice;
use crate::scalar::Real;

/// Default threshold for multi-label static classes; a probability equal
/// to the threshold counts as positive.
pub const STATIC_THRESHOLD: f64 = 0.5;

/// `|pred ∧ gt ∧ mask| / |(pred ∨ gt) ∧ mask|`, or 1 when that union is empty.
pub fn iou(pred: &[bool], gt: &[bool], mask: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() || pred.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "iou over {} predictions, {} labels, {} mask cells",
            pred.len(),
            gt.len(),
            mask.len()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for ((&p, &g), &m) in pred.iter().zip(gt).zip(mask) {
        if m {
            inter += (p && g) as usize;
            union += (p || g) as usize;
        }
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Binarization {
    /// Independent per-class thresholds (`p ≥ t` is positive).
    Threshold(Vec<f64>),
    /// One positive class per cell; ties go to the lowest index.
    Argmax,
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_labels<T: Real>(probs: &Lattice<T>) -> Vec<usize> {
    (0..probs.cells).map(|i| argmax(probs.cell(i))).collect()
}

/// Per-class binary maps, one `Vec<bool>` of `cells` entries per channel.
pub fn threshold_predictions<T: Real>(probs: &Lattice<T>, rule: &Binarization) -> Result<Vec<Vec<bool>>> {
    let (n, c) = (probs.cells, probs.channels);
    let mut out = vec![vec![false; n]; c];
    match rule {
        Binarization::Threshold(t) => {
            if t.len() != c {
                return Err(Error::ShapeMismatch(format!("{} thresholds for {c} classes", t.len())));
            }
            for i in 0..n {
                for (k, &v) in probs.cell(i).iter().enumerate() {
                    out[k][i] = v.as_f64() >= t[k];
                }
            }
        }
        Binarization::Argmax => {
            for (i, k) in argmax_labels(probs).into_iter().enumerate() {
                out[k][i] = true;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub per_class: Vec<(String, f64)>,
    pub group_means: Vec<(String, f64)>,
    pub masked_cell_count: usize,
}

impl IouReport {
    pub fn class(&self, name: &str) -> Option<f64> {
        self.per_class.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn group(&self, name: &str) -> Option<f64> {
        self.group_means.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::format("iou report", e);
        w.write_record(["kind", "name", "iou"]).map_err(fmt)?;
        for (n, v) in &self.per_class {
            w.write_record(["class", n, &v.to_string()]).map_err(fmt)?;
        }
        for (n, v) in &self.group_means {
            w.write_record(["group", n, &v.to_string()]).map_err(fmt)?;
        }
        w.flush().map_err(|e| Error::format("iou report", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

/// Per-class IoU for named classes plus means over named groups.
pub fn report(
    preds: &[Vec<bool>],
    gts: &[Vec<bool>],
    mask: &[bool],
    class_names: &[&str],
    groups: &[(&str, &[&str])],
) -> Result<IouReport> {
    if preds.len() != class_names.len() || gts.len() != class_names.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions and {} labels for {} classes",
            preds.len(),
            gts.len(),
            class_names.len()
        )));
    }
    let per_class = class_names
        .iter()
        .zip(preds.iter().zip(gts))
        .map(|(n, (p, g))| Ok((n.to_string(), iou(p, g, mask)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut group_means = Vec::with_capacity(groups.len());
    for (name, members) in groups {
        let mut sum = 0.0;
        for m in members.iter() {
            let i = class_names
                .iter()
                .position(|n| n == m)
                .ok_or_else(|| Error::UnknownClass(m.to_string()))?;
            sum += per_class[i].1;
        }
        let mean = if members.is_empty() {
            1.0
        } else {
            sum / members.len() as f64
        };
        group_means.push((name.to_string(), mean));
    }
    Ok(IouReport {
        per_class,
        group_means,
        masked_cell_count: mask.iter().filter(|&&m| m).count(),
    })
}

/// Rows are ground truth, columns predictions, index 0 is background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.diagonal() as f64 / t as f64)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::ShapeMismatch("confusion matrices differ in size".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W, names: &[&str]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::format("confusion matrix", e);
        let mut header = vec!["truth".to_string()];
        header.extend((0..self.classes).map(|k| names.get(k).map_or(k.to_string(), |s| s.to_string())));
        w.write_record(&header).map_err(fmt)?;
        for t in 0..self.classes {
            let mut row = vec![header[t + 1].clone()];
            row.extend((0..self.classes).map(|p| self.get(t, p).to_string()));
            w.write_record(&row).map_err(fmt)?;
        }
        w.flush().map_err(|e| Error::format("confusion matrix", e))?;
        Ok(())
    }
}

pub fn confusion(pred: &[usize], gt: &[usize], mask: &[bool], classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != gt.len() || pred.len() != mask.len() {
        return Err(Error::ShapeMismatch("confusion inputs differ in length".into()));
    }
    let mut m = ConfusionMatrix::zeros(classes);
    for ((&p, &g), &on) in pred.iter().zip(gt).zip(mask) {
        if !on {
            continue;
        }
        if p >= classes || g >= classes {
            return Err(Error::InvalidParameter(format!(
                "object label out of range: truth {g}, prediction {p}, {classes} classes"
            )));
        }
        m.counts[g * classes + p] += 1;
    }
    Ok(m)
}
