//! Token mixers mapping a `[B, d, h, w]` token grid to the same shape.

mod gfn;
mod mwa;
mod sa;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use gfn::GfnParams;
pub use mwa::{Activation, MwaConfig, MwaParams};
pub use sa::SaParams;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MixerKind {
    Mwa,
    Sa,
    Gfn,
}

impl MixerKind {
    pub const ALL: [MixerKind; 3] = [MixerKind::Mwa, MixerKind::Sa, MixerKind::Gfn];

    pub fn name(self) -> &'static str {
        match self {
            MixerKind::Mwa => "mwa",
            MixerKind::Sa => "sa",
            MixerKind::Gfn => "gfn",
        }
    }

    /// Row label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            MixerKind::Mwa => "MWA",
            MixerKind::Sa => "SA",
            MixerKind::Gfn => "GFN",
        }
    }
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MixerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mwa" => Ok(MixerKind::Mwa),
            "sa" => Ok(MixerKind::Sa),
            "gfn" => Ok(MixerKind::Gfn),
            other => Err(Error::config(format!("unknown mixer '{other}' (expected mwa, sa or gfn)"))),
        }
    }
}

/// A built mixer whose weights live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub enum Mixer {
    Mwa(MwaParams),
    Sa(SaParams),
    Gfn(GfnParams),
}

impl Mixer {
    pub fn kind(&self) -> MixerKind {
        match self {
            Mixer::Mwa(_) => MixerKind::Mwa,
            Mixer::Sa(_) => MixerKind::Sa,
            Mixer::Gfn(_) => MixerKind::Gfn,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        match self {
            Mixer::Mwa(p) => p.forward(tape, store, x),
            Mixer::Sa(p) => p.forward(tape, store, x),
            Mixer::Gfn(p) => p.forward(tape, store, x),
        }
    }

    /// Applies the mixer to a single `d x h x w` grid.
    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        apply_grid(x, |tape, xv| self.forward(tape, store, xv))
    }
}

/// Runs a batched forward on one unbatched grid.
pub(crate) fn apply_grid(x: &Tensor, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<Tensor> {
    let &[d, h, w] = x.shape() else {
        return Err(Error::shape(format!("expected a d x h x w grid, got {:?}", x.shape())));
    };
    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone().reshape(&[1, d, h, w])?);
    let y = f(&mut tape, xv)?;
    let s = tape.shape(y).to_vec();
    tape.value(y).clone().reshape(&s[1..])
}

/// Gaussian init with standard deviation `1/sqrt(fan_in)`.
pub fn fan_in_normal(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| normal.sample(rng))
}
