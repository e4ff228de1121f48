//! CIFAR binary batches.
//!
//! CIFAR-10 records are 1 label byte then 3072 pixel bytes (R, G, B planes,
//! each 32x32 row-major). CIFAR-100 records carry a coarse and a fine label
//! byte before the pixels; the fine label is used.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIDE: usize = 32;
pub const PIXELS: usize = 3 * SIDE * SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    pub fn classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    pub fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + PIXELS
    }

    fn subdir(self) -> &'static str {
        match self {
            CifarVariant::Cifar10 => "cifar-10-batches-bin",
            CifarVariant::Cifar100 => "cifar-100-binary",
        }
    }

    fn train_files(self) -> Vec<String> {
        match self {
            CifarVariant::Cifar10 => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
            CifarVariant::Cifar100 => vec!["train.bin".into()],
        }
    }

    fn test_file(self) -> &'static str {
        match self {
            CifarVariant::Cifar10 => "test_batch.bin",
            CifarVariant::Cifar100 => "test.bin",
        }
    }
}

/// Parses a whole batch file. `path` is only used in error messages.
pub fn parse_cifar(bytes: &[u8], variant: CifarVariant, path: &str) -> Result<Vec<Sample>> {
    let rec = variant.record_len();
    let whole = bytes.len() / rec * rec;
    if whole != bytes.len() {
        return Err(Error::Format {
            path: path.to_string(),
            offset: whole as u64,
            reason: format!("{} bytes is not a multiple of the {rec}-byte record length; partial record {}", bytes.len(), whole / rec),
        });
    }
    let classes = variant.classes();
    let lb = variant.label_bytes();
    bytes
        .chunks_exact(rec)
        .enumerate()
        .map(|(i, r)| {
            let label = r[lb - 1] as usize;
            if label >= classes {
                return Err(Error::Format {
                    path: path.to_string(),
                    offset: (i * rec + lb - 1) as u64,
                    reason: format!("record {i} has label {label}, expected < {classes}"),
                });
            }
            let data = r[lb..].iter().map(|&b| b as f64 / 255.0).collect();
            Ok(Sample { image: Tensor::new(&[3, SIDE, SIDE], data)?, label })
        })
        .collect()
}

/// Encodes samples as a batch file. Pixels are rounded back to bytes; the
/// CIFAR-100 coarse label byte is written as 0.
pub fn write_cifar(samples: &[Sample], variant: CifarVariant) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(samples.len() * variant.record_len());
    for (i, s) in samples.iter().enumerate() {
        if s.image.shape() != [3, SIDE, SIDE] {
            return Err(Error::data(format!("sample {i} is {:?}, CIFAR records are 3x32x32", s.image.shape())));
        }
        let label = u8::try_from(s.label)
            .ok()
            .filter(|&l| (l as usize) < variant.classes())
            .ok_or_else(|| Error::data(format!("sample {i} label {} does not fit the format", s.label)))?;
        if variant == CifarVariant::Cifar100 {
            out.push(0);
        }
        out.push(label);
        out.extend(s.image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

fn read_file(dir: &Path, name: &str, variant: CifarVariant) -> Result<Vec<Sample>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    parse_cifar(&bytes, variant, &path.display().to_string())
}

/// Accepts either the directory holding the batch files or its parent.
fn batch_dir(root: &Path, variant: CifarVariant) -> PathBuf {
    let nested = root.join(variant.subdir());
    if nested.is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}

/// Loads `(train, test)`. Normalization statistics come from the train split
/// and are attached to both.
pub fn load_cifar(root: &Path, variant: CifarVariant, seed: u64) -> Result<(DatasetSplit, DatasetSplit)> {
    let dir = batch_dir(root, variant);
    let mut train = Vec::new();
    for f in variant.train_files() {
        train.extend(read_file(&dir, &f, variant)?);
    }
    let test = read_file(&dir, variant.test_file(), variant)?;
    let train = DatasetSplit::new(train, variant.classes(), seed)?;
    let norm = train.compute_normalization()?;
    let test = DatasetSplit::new(test, variant.classes(), seed)?.with_normalization(norm.clone());
    Ok((train.with_normalization(norm), test))
}

pub fn load_cifar10(root: &Path, seed: u64) -> Result<(DatasetSplit, DatasetSplit)> {
    load_cifar(root, CifarVariant::Cifar10, seed)
}

pub fn load_cifar100(root: &Path, seed: u64) -> Result<(DatasetSplit, DatasetSplit)> {
    load_cifar(root, CifarVariant::Cifar100, seed)
}
