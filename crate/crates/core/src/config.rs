//! Plain-text `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors. [`RunConfig::to_canonical`] writes every key in a fixed order, and
//! parsing that output gives back an identical config.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::backbone::ModelConfig;
use crate::data::CifarVariant;
use crate::error::{Error, Result};
use crate::mixers::{MixerKind, MwaConfig};
use crate::training::TrainConfig;
use crate::transforms::DwtConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Synthetic,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
            DatasetKind::Synthetic => "synthetic",
        }
    }

    pub fn cifar(self) -> Option<CifarVariant> {
        match self {
            DatasetKind::Cifar10 => Some(CifarVariant::Cifar10),
            DatasetKind::Cifar100 => Some(CifarVariant::Cifar100),
            DatasetKind::Synthetic => None,
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cifar10" => Ok(DatasetKind::Cifar10),
            "cifar100" => Ok(DatasetKind::Cifar100),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(Error::config(format!("unknown dataset {other:?}, expected cifar10, cifar100 or synthetic"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data_root: Option<PathBuf>,
    /// Training samples to keep; 0 keeps the whole split.
    pub subset: usize,
    /// Test samples to keep; 0 keeps the whole split.
    pub test_subset: usize,
    pub out: PathBuf,
    pub augment: bool,
    /// Side length of synthetic images.
    pub image_size: usize,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub synthetic_classes: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetKind::Cifar10,
            data_root: None,
            subset: 0,
            test_subset: 0,
            out: PathBuf::from("runs"),
            augment: false,
            image_size: 32,
            synthetic_train: 1024,
            synthetic_test: 256,
            synthetic_classes: 10,
            model: ModelConfig::vit_s4(MixerKind::Mwa, 10, (3, 32, 32)),
            train: TrainConfig::default(),
        }
    }
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "mixer",
    "dataset",
    "data_root",
    "subset",
    "test_subset",
    "seed",
    "out",
    "augment",
    "image_size",
    "synthetic_train",
    "synthetic_test",
    "synthetic_classes",
    "depth",
    "dim",
    "patch",
    "mlp_ratio",
    "heads",
    "ln_eps",
    "k_wave",
    "g_wave",
    "g_skip1",
    "g_skip3",
    "dwt_level",
    "epochs",
    "batch_size",
    "base_lr",
    "min_lr",
    "warmup_epochs",
    "weight_decay",
    "clip_norm",
    "beta1",
    "beta2",
    "eps",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| Error::config(format!("bad value {value:?} for {key}: {e}")))
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        let t = &mut self.train;
        match key.trim() {
            "mixer" => m.mixer = v.parse()?,
            "dataset" => self.dataset = v.parse()?,
            "data_root" => self.data_root = (!v.is_empty()).then(|| PathBuf::from(v)),
            "subset" => self.subset = parse(key, v)?,
            "test_subset" => self.test_subset = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "augment" => self.augment = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "synthetic_train" => self.synthetic_train = parse(key, v)?,
            "synthetic_test" => self.synthetic_test = parse(key, v)?,
            "synthetic_classes" => self.synthetic_classes = parse(key, v)?,
            "depth" => m.depth = parse(key, v)?,
            "dim" => m.dim = parse(key, v)?,
            "patch" => m.patch = parse(key, v)?,
            "mlp_ratio" => m.mlp_ratio = parse(key, v)?,
            "heads" => m.heads = parse(key, v)?,
            "ln_eps" => m.ln_eps = parse(key, v)?,
            "k_wave" => m.mwa.k_wave = parse(key, v)?,
            "g_wave" => m.mwa.g_wave = parse(key, v)?,
            "g_skip1" => m.mwa.g_skip1 = parse(key, v)?,
            "g_skip3" => m.mwa.g_skip3 = parse(key, v)?,
            "dwt_level" => m.mwa.dwt = DwtConfig::new(parse(key, v)?),
            "epochs" => t.epochs = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "base_lr" => t.base_lr = parse(key, v)?,
            "min_lr" => t.min_lr = parse(key, v)?,
            "warmup_epochs" => t.warmup_epochs = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "clip_norm" => t.clip_norm = parse(key, v)?,
            "beta1" => t.betas.0 = parse(key, v)?,
            "beta2" => t.betas.1 = parse(key, v)?,
            "eps" => t.eps = parse(key, v)?,
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let m = &self.model;
        let t = &self.train;
        Ok(match key {
            "mixer" => m.mixer.to_string(),
            "dataset" => self.dataset.name().to_string(),
            "data_root" => self.data_root.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "subset" => self.subset.to_string(),
            "test_subset" => self.test_subset.to_string(),
            "seed" => t.seed.to_string(),
            "out" => self.out.display().to_string(),
            "augment" => self.augment.to_string(),
            "image_size" => self.image_size.to_string(),
            "synthetic_train" => self.synthetic_train.to_string(),
            "synthetic_test" => self.synthetic_test.to_string(),
            "synthetic_classes" => self.synthetic_classes.to_string(),
            "depth" => m.depth.to_string(),
            "dim" => m.dim.to_string(),
            "patch" => m.patch.to_string(),
            "mlp_ratio" => m.mlp_ratio.to_string(),
            "heads" => m.heads.to_string(),
            "ln_eps" => m.ln_eps.to_string(),
            "k_wave" => m.mwa.k_wave.to_string(),
            "g_wave" => m.mwa.g_wave.to_string(),
            "g_skip1" => m.mwa.g_skip1.to_string(),
            "g_skip3" => m.mwa.g_skip3.to_string(),
            "dwt_level" => m.mwa.dwt.level.to_string(),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "base_lr" => t.base_lr.to_string(),
            "min_lr" => t.min_lr.to_string(),
            "warmup_epochs" => t.warmup_epochs.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "clip_norm" => t.clip_norm.to_string(),
            "beta1" => t.betas.0.to_string(),
            "beta2" => t.betas.1.to_string(),
            "eps" => t.eps.to_string(),
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        })
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            let k = k.trim();
            if seen.contains(&k) {
                return Err(Error::config(format!("line {}: key {k:?} given twice", n + 1)));
            }
            seen.push(k);
            self.set(k, v).map_err(|e| match e {
                Error::Config(msg) => Error::config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn to_canonical(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k).expect("listed keys are known"))).collect()
    }

    /// Number of classes implied by the dataset.
    pub fn classes(&self) -> usize {
        match self.dataset.cifar() {
            Some(v) => v.classes(),
            None => self.synthetic_classes,
        }
    }

    pub fn image(&self) -> (usize, usize, usize) {
        match self.dataset {
            DatasetKind::Synthetic => (3, self.image_size, self.image_size),
            _ => (3, 32, 32),
        }
    }

    /// Model config with dataset-dependent fields filled in.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { classes: self.classes(), image: self.image(), ..self.model.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train.validate()?;
        if self.dataset == DatasetKind::Synthetic && (self.synthetic_train == 0 || self.synthetic_classes == 0) {
            return Err(Error::config("synthetic_train and synthetic_classes must be positive"));
        }
        Ok(())
    }

    pub fn mwa(&self) -> MwaConfig {
        self.model.mwa
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.set("base_lr", "0.0003").unwrap();
        cfg.set("data_root", "/data/cifar").unwrap();
        cfg.set("mixer", "GFN").unwrap();
        let text = cfg.to_canonical();
        let back = RunConfig::from_text(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_canonical(), text);
        assert_eq!(text.lines().count(), KEYS.len());
    }

    #[test]
    fn unknown_and_repeated_keys() {
        assert!(matches!(RunConfig::from_text("colour = red"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("depth = 2\ndepth = 3"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("depth"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("depth = two"), Err(Error::Config(_))));
    }

    #[test]
    fn comments_and_blanks() {
        let cfg = RunConfig::from_text("# run\n\ndepth = 2 # shallow\n").unwrap();
        assert_eq!(cfg.model.depth, 2);
    }

    #[test]
    fn every_key_is_settable() {
        for k in KEYS {
            let mut cfg = RunConfig::default();
            let v = cfg.get(k).unwrap();
            cfg.set(k, &v).unwrap();
            assert_eq!(cfg, RunConfig::default(), "{k}");
        }
    }
}
