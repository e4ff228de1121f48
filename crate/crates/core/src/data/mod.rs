//! Datasets: CIFAR binary batches, synthetic toy tasks, shuffling and batching.

mod cifar;
mod synthetic;

use std::env;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use cifar::{load_cifar, load_cifar10, load_cifar100, parse_cifar, write_cifar, CifarVariant};
pub use synthetic::synthetic_classification;

/// Environment variable consulted when no data root is given explicitly.
pub const DATA_ROOT_ENV: &str = "WAVEMIX_DATA_ROOT";

/// Resolves the dataset root from a flag, falling back to [`DATA_ROOT_ENV`].
pub fn data_root(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[3, m, n]`, values in `[0, 1]`.
    pub image: Tensor,
    pub label: usize,
}

/// Per-channel statistics, applied as `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Pad-by-`pad` random crop plus horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augment {
    pub pad: usize,
    pub flip: bool,
}

impl Default for Augment {
    fn default() -> Self {
        Augment { pad: 4, flip: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub samples: Vec<Sample>,
    pub classes: usize,
    pub seed: u64,
    pub normalization: Option<Normalization>,
}

impl DatasetSplit {
    pub fn new(samples: Vec<Sample>, classes: usize, seed: u64) -> Result<Self> {
        if let Some(first) = samples.first() {
            let shape = first.image.shape();
            for (i, s) in samples.iter().enumerate() {
                if s.image.shape() != shape {
                    return Err(Error::data(format!("sample {i} has shape {:?}, expected {shape:?}", s.image.shape())));
                }
                if s.label >= classes {
                    return Err(Error::data(format!("sample {i} has label {} but there are {classes} classes", s.label)));
                }
            }
        }
        Ok(DatasetSplit { samples, classes, seed, normalization: None })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(channels, height, width)` of every image.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.samples.first().map(|s| match *s.image.shape() {
            [c, h, w] => (c, h, w),
            _ => unreachable!("images are rank 3"),
        })
    }

    /// Visiting order for `epoch`; a pure function of `(seed, epoch)`.
    pub fn permutation(&self, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng);
        idx
    }

    /// First `n` samples of a seed-determined permutation, kept in their
    /// original relative order.
    pub fn subset(&self, n: usize, seed: u64) -> Result<DatasetSplit> {
        if n > self.len() {
            return Err(Error::config(format!("subset of {n} requested from {} samples", self.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        Ok(DatasetSplit {
            samples: idx.into_iter().map(|i| self.samples[i].clone()).collect(),
            classes: self.classes,
            seed: self.seed,
            normalization: self.normalization.clone(),
        })
    }

    /// Per-channel mean and population standard deviation over all pixels.
    pub fn compute_normalization(&self) -> Result<Normalization> {
        let (c, h, w) = self.image_shape().ok_or_else(|| Error::data("cannot normalize an empty split"))?;
        let plane = h * w;
        let count = (plane * self.len()) as f64;
        let mut mean = vec![0.0; c];
        for s in &self.samples {
            for (ch, px) in s.image.data().chunks_exact(plane).enumerate() {
                mean[ch] += px.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for s in &self.samples {
            for (ch, px) in s.image.data().chunks_exact(plane).enumerate() {
                var[ch] += px.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let std = var.into_iter().map(|v| (v / count).sqrt().max(1e-12)).collect();
        Ok(Normalization { mean, std })
    }

    pub fn with_normalization(mut self, norm: Normalization) -> Self {
        self.normalization = Some(norm);
        self
    }

    /// Stacks `indices` into a `[B, c, h, w]` batch with normalization
    /// applied, and optionally augments each image with `rng`.
    pub fn batch(&self, indices: &[usize], augment: Option<(Augment, &mut ChaCha8Rng)>) -> (Tensor, Vec<usize>) {
        let (c, h, w) = self.image_shape().expect("batch from an empty split");
        let per = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        let mut augment = augment;
        for &i in indices {
            let s = &self.samples[i];
            let start = data.len();
            match augment.as_mut() {
                Some((aug, rng)) => data.extend(augmented(&s.image, *aug, rng)),
                None => data.extend_from_slice(s.image.data()),
            }
            if let Some(n) = &self.normalization {
                for (ch, px) in data[start..].chunks_exact_mut(h * w).enumerate() {
                    px.iter_mut().for_each(|v| *v = (*v - n.mean[ch]) / n.std[ch]);
                }
            }
            labels.push(s.label);
        }
        (Tensor::new(&[indices.len(), c, h, w], data).expect("consistent batch"), labels)
    }
}

/// Zero-padded random crop followed by an optional horizontal flip.
fn augmented(image: &Tensor, aug: Augment, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let &[c, h, w] = image.shape() else { unreachable!("images are rank 3") };
    let dy = rng.random_range(0..=2 * aug.pad) as isize - aug.pad as isize;
    let dx = rng.random_range(0..=2 * aug.pad) as isize - aug.pad as isize;
    let flip = aug.flip && rng.random_bool(0.5);
    let src = image.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let sy = y as isize + dy;
                let sx0 = if flip { w - 1 - x } else { x };
                let sx = sx0 as isize + dx;
                if (0..h as isize).contains(&sy) && (0..w as isize).contains(&sx) {
                    out[(ch * h + y) * w + x] = src[(ch * h + sy as usize) * w + sx as usize];
                }
            }
        }
    }
    out
}
