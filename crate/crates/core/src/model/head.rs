use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bev_grid::BevGrid;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::warping::ImageRaster;

/// Cells at which partial gradient sums are formed; fixed so that the
/// reduction order never depends on the thread count.
const REDUCE_CHUNK: usize = 4096;

/// Flat per-cell values, `cells × channels`, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice<T> {
    pub cells: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Lattice<T> {
    pub fn zeros(cells: usize, channels: usize) -> Self {
        Lattice {
            cells,
            channels,
            data: vec![T::zero(); cells * channels],
        }
    }

    pub fn from_data(cells: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != cells * channels {
            return Err(Error::ShapeMismatch(format!(
                "lattice {cells}x{channels} needs {} values, got {}",
                cells * channels,
                data.len()
            )));
        }
        Ok(Lattice {
            cells,
            channels,
            data,
        })
    }

    pub fn from_grid(grid: &BevGrid<T>) -> Self {
        Lattice {
            cells: grid.rows() * grid.cols(),
            channels: grid.channels,
            data: grid.data.clone(),
        }
    }

    pub fn from_raster(raster: &ImageRaster<T>) -> Self {
        Lattice {
            cells: raster.height * raster.width,
            channels: raster.channels,
            data: raster.data.clone(),
        }
    }

    pub fn cell(&self, i: usize) -> &[T] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.channels;
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Keeps the listed cells, in order.
    pub fn gather(&self, cells: &[usize]) -> Self {
        let mut data = Vec::with_capacity(cells.len() * self.channels);
        for &i in cells {
            data.extend_from_slice(self.cell(i));
        }
        Lattice {
            cells: cells.len(),
            channels: self.channels,
            data,
        }
    }

    /// Stacks lattices with equal channel counts cell-wise.
    pub fn stack(parts: &[&Lattice<T>]) -> Result<Self> {
        let channels = parts.first().map_or(0, |p| p.channels);
        if parts.iter().any(|p| p.channels != channels) {
            return Err(Error::ShapeMismatch("stacked lattices differ in channels".into()));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Lattice {
            cells: parts.iter().map(|p| p.cells).sum(),
            channels,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Softmax,
}

/// Per-cell affine map followed by the activation. `weights` is row-major
/// `inputs × outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct LinearHead<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> HeadGradient<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        HeadGradient {
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    fn add_assign(&mut self, other: &HeadGradient<T>) {
        for (a, &b) in self.weights.iter_mut().zip(&other.weights) {
            *a = *a + b;
        }
        for (a, &b) in self.biases.iter_mut().zip(&other.biases) {
            *a = *a + b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            *v = *v * s;
        }
    }
}

impl<T: Real> LinearHead<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LinearHead {
            inputs,
            outputs,
            activation,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    /// Gaussian weights with standard deviation `std`, zero biases.
    pub fn random(inputs: usize, outputs: usize, activation: Activation, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = Self::zeros(inputs, outputs, activation);
        for w in &mut head.weights {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = T::lit(std * z);
        }
        head
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.outputs == 0 {
            return Err(Error::InvalidParameter("head needs inputs and outputs".into()));
        }
        if self.weights.len() != self.inputs * self.outputs || self.biases.len() != self.outputs {
            return Err(Error::ShapeMismatch(format!(
                "head {}x{} has {} weights and {} biases",
                self.inputs,
                self.outputs,
                self.weights.len(),
                self.biases.len()
            )));
        }
        if self.activation == Activation::Softmax && self.outputs < 2 {
            return Err(Error::InvalidParameter("softmax head needs two outputs".into()));
        }
        if !self.weights.iter().chain(&self.biases).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite head parameter".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &Lattice<T>) -> Result<()> {
        if x.channels != self.inputs {
            return Err(Error::ShapeMismatch(format!(
                "head expects {} input channels, got {}",
                self.inputs, x.channels
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: &Lattice<T>) -> Result<Lattice<T>> {
        self.check_input(x)?;
        let (ni, no) = (self.inputs, self.outputs);
        let mut out = Lattice::zeros(x.cells, no);
        out.data
            .par_chunks_mut(no)
            .zip(x.data.par_chunks(ni))
            .for_each(|(o, xi)| {
                o.copy_from_slice(&self.biases);
                for (i, &v) in xi.iter().enumerate() {
                    if v == T::zero() {
                        continue;
                    }
                    let row = &self.weights[i * no..(i + 1) * no];
                    for (oj, &w) in o.iter_mut().zip(row) {
                        *oj = *oj + v * w;
                    }
                }
            });
        Ok(out)
    }

    pub fn predict(&self, x: &Lattice<T>) -> Result<Lattice<T>> {
        let mut z = self.logits(x)?;
        let act = self.activation;
        z.data.par_chunks_mut(self.outputs).for_each(|c| activate(act, c));
        Ok(z)
    }

    /// Parameter gradient given `dL/dlogits` at every cell.
    pub fn backward(&self, x: &Lattice<T>, grad_logits: &Lattice<T>) -> Result<HeadGradient<T>> {
        self.check_input(x)?;
        if grad_logits.cells != x.cells || grad_logits.channels != self.outputs {
            return Err(Error::ShapeMismatch("logit gradient does not match input".into()));
        }
        let (ni, no) = (self.inputs, self.outputs);
        let partials: Vec<HeadGradient<T>> = (0..x.cells.div_ceil(REDUCE_CHUNK))
            .into_par_iter()
            .map(|k| {
                let mut g = HeadGradient::zeros(ni, no);
                let end = ((k + 1) * REDUCE_CHUNK).min(x.cells);
                for cell in k * REDUCE_CHUNK..end {
                    let gz = grad_logits.cell(cell);
                    if gz.iter().all(|&v| v == T::zero()) {
                        continue;
                    }
                    for (b, &d) in g.biases.iter_mut().zip(gz) {
                        *b = *b + d;
                    }
                    for (i, &v) in x.cell(cell).iter().enumerate() {
                        if v == T::zero() {
                            continue;
                        }
                        let row = &mut g.weights[i * no..(i + 1) * no];
                        for (w, &d) in row.iter_mut().zip(gz) {
                            *w = *w + v * d;
                        }
                    }
                }
                g
            })
            .collect();
        let mut total = HeadGradient::zeros(ni, no);
        for p in &partials {
            total.add_assign(p);
        }
        Ok(total)
    }

    pub fn cast<U: Real>(&self) -> LinearHead<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.as_f64())).collect();
        LinearHead {
            inputs: self.inputs,
            outputs: self.outputs,
            activation: self.activation,
            weights: c(&self.weights),
            biases: c(&self.biases),
        }
    }
}

pub(crate) fn activate<T: Real>(act: Activation, z: &mut [T]) {
    match act {
        Activation::Sigmoid => {
            for v in z.iter_mut() {
                *v = sigmoid(*v);
            }
        }
        Activation::Softmax => {
            let m = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut s = T::zero();
            for v in z.iter_mut() {
                *v = (*v - m).exp();
                s = s + *v;
            }
            for v in z.iter_mut() {
                *v = *v / s;
            }
        }
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
