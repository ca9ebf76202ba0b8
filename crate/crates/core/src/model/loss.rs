use crate::error::{Error, Result};
use crate::scalar::Real;

use super::head::{Activation, Lattice};

/// Lower bound on `p_t` inside the logarithm. There is no upper clamp, so a
/// perfect prediction costs exactly zero.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct FocalLoss<T> {
    pub loss: T,
    /// Gradient of `loss` with respect to the pre-activation logits.
    pub grad: Lattice<T>,
}

/// Mean focal loss over masked cells (and classes, for sigmoid heads).
///
/// Sigmoid: `α_t = α_c` on positives, `1 − α_c` on negatives.
/// Softmax: `α_t = α_k` for the labelled class `k`.
pub fn focal_loss<T: Real>(
    probs: &Lattice<T>,
    labels: &Lattice<T>,
    mask: &[bool],
    activation: Activation,
    gamma: T,
    alpha: &[T],
) -> Result<FocalLoss<T>> {
    let (n, c) = (probs.cells, probs.channels);
    if labels.cells != n || labels.channels != c || mask.len() != n || alpha.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "focal loss: probs {n}x{c}, labels {}x{}, mask {}, alpha {}",
            labels.cells,
            labels.channels,
            mask.len(),
            alpha.len()
        )));
    }
    let active = mask.iter().filter(|&&m| m).count();
    if active == 0 {
        return Err(Error::EmptyMask);
    }
    let floor = T::lit(PROB_FLOOR);
    let denom = match activation {
        Activation::Sigmoid => T::from_usize_lossy(active * c),
        Activation::Softmax => T::from_usize_lossy(active),
    };
    let mut grad = Lattice::zeros(n, c);
    let mut total = T::zero();
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let p = probs.cell(i);
        let y = labels.cell(i);
        let g = grad.cell_mut(i);
        match activation {
            Activation::Sigmoid => {
                for k in 0..c {
                    let pos = y[k] > T::lit(0.5);
                    let (pt, at, s) = if pos {
                        (p[k], alpha[k], T::one())
                    } else {
                        (T::one() - p[k], T::one() - alpha[k], -T::one())
                    };
                    let q = T::one() - pt;
                    let lp = pt.max(floor).ln();
                    let w = q.powf(gamma);
                    total = total - at * w * lp;
                    let mut d = -q;
                    if gamma != T::zero() && lp != T::zero() {
                        d = d + gamma * pt * lp;
                    }
                    g[k] = s * at * w * d / denom;
                }
            }
            Activation::Softmax => {
                let k = argmax(y);
                let pt = p[k];
                let q = T::one() - pt;
                let lp = pt.max(floor).ln();
                let at = alpha[k];
                total = total - at * q.powf(gamma) * lp;
                // dL/dp_t · p_t, chained through dp_t/dz_j = p_t (δ_kj − p_j)
                let mut d = -q.powf(gamma);
                if gamma != T::zero() && lp != T::zero() {
                    d = d + gamma * q.powf(gamma - T::one()) * pt * lp;
                }
                let scale = at * d / denom;
                for j in 0..c {
                    let delta = if j == k { T::one() } else { T::zero() };
                    g[j] = scale * (delta - p[j]);
                }
            }
        }
    }
    Ok(FocalLoss {
        loss: total / denom,
        grad,
    })
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `α_c = clamp(1 − f_c, 0.05, 0.95)` where `f_c` is the fraction of masked
/// cells labelled positive for class `c`. Absent masks count every cell.
pub fn class_frequency_alpha<T: Real>(labels: &[&Lattice<T>], masks: &[Option<&[bool]>]) -> Result<Vec<T>> {
    let c = labels
        .first()
        .map(|l| l.channels)
        .ok_or_else(|| Error::InvalidParameter("class frequency needs a label grid".into()))?;
    if masks.len() != labels.len() {
        return Err(Error::ShapeMismatch("one mask slot per label grid".into()));
    }
    let mut pos = vec![0usize; c];
    let mut count = 0usize;
    for (l, m) in labels.iter().zip(masks) {
        if l.channels != c || m.is_some_and(|m| m.len() != l.cells) {
            return Err(Error::ShapeMismatch("label grids disagree".into()));
        }
        for i in 0..l.cells {
            if m.is_some_and(|m| !m[i]) {
                continue;
            }
            count += 1;
            for (k, &v) in l.cell(i).iter().enumerate() {
                if v > T::lit(0.5) {
                    pos[k] += 1;
                }
            }
        }
    }
    Ok(pos
        .iter()
        .map(|&p| {
            let f = if count == 0 { 0.0 } else { p as f64 / count as f64 };
            T::lit((1.0 - f).clamp(0.05, 0.95))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(p: f64, y: f64) -> (Lattice<f64>, Lattice<f64>) {
        (
            Lattice::from_data(1, 1, vec![p]).unwrap(),
            Lattice::from_data(1, 1, vec![y]).unwrap(),
        )
    }

    #[test]
    fn worked_value() {
        let (p, y) = one(0.5, 1.0);
        let l = focal_loss(&p, &y, &[true], Activation::Sigmoid, 2.0, &[0.25]).unwrap();
        let expect = 0.25 * 0.25 * std::f64::consts::LN_2;
        assert!((l.loss - expect).abs() < 1e-15);
        assert!((l.loss - 0.043322).abs() < 5e-7);
    }

    #[test]
    fn perfect_prediction_is_free() {
        for gamma in [0.0, 0.5, 1.0, 2.0] {
            let (p, y) = one(1.0, 1.0);
            let l = focal_loss(&p, &y, &[true], Activation::Sigmoid, gamma, &[0.3]).unwrap();
            assert_eq!(l.loss, 0.0);
            assert_eq!(l.grad.data[0], 0.0);
            let p = Lattice::from_data(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
            let y = p.clone();
            let l = focal_loss(&p, &y, &[true], Activation::Softmax, gamma, &[0.5; 3]).unwrap();
            assert_eq!(l.loss, 0.0);
            assert!(l.grad.data.iter().all(|&g| g == 0.0), "{gamma} {:?}", l.grad.data);
        }
    }

    #[test]
    fn masked_cells_inert() {
        let p = Lattice::from_data(2, 2, vec![0.3, 0.7, 0.1, 0.9]).unwrap();
        let y = Lattice::from_data(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let l = focal_loss(&p, &y, &[true, false], Activation::Sigmoid, 2.0, &[0.5, 0.5]).unwrap();
        assert_eq!(&l.grad.data[2..], &[0.0, 0.0]);
        let only = Lattice::from_data(1, 2, vec![0.3, 0.7]).unwrap();
        let y1 = Lattice::from_data(1, 2, vec![1.0, 0.0]).unwrap();
        let l1 = focal_loss(&only, &y1, &[true], Activation::Sigmoid, 2.0, &[0.5, 0.5]).unwrap();
        assert_eq!(l.loss, l1.loss);
        assert!(matches!(
            focal_loss(&p, &y, &[false, false], Activation::Sigmoid, 2.0, &[0.5, 0.5]),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn alpha_from_frequency() {
        let l = Lattice::from_data(4, 3, vec![1., 0., 1., 1., 0., 0., 0., 0., 0., 0., 0., 1.]).unwrap();
        let a = class_frequency_alpha(&[&l], &[None]).unwrap();
        assert_eq!(a, vec![0.5, 0.95, 0.5]);
        let all = Lattice::from_data(2, 1, vec![1.0, 1.0]).unwrap();
        assert_eq!(class_frequency_alpha(&[&all], &[None]).unwrap(), vec![0.05]);
        let m = [true, false, false, false];
        let a = class_frequency_alpha(&[&l], &[Some(&m[..])]).unwrap();
        assert_eq!(a, vec![0.05, 0.95, 0.05]);
    }
}
