//! Global filter: a learnable per-channel filter applied in the 2-D Fourier domain.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::transforms::fft::half_width;

/// Init noise around the identity filter.
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct GfnParams {
    /// Real and imaginary parts of the half spectrum, `[d, h, w/2 + 1]` each.
    pub re: ParamId,
    pub im: ParamId,
    pub dim: usize,
    pub grid: (usize, usize),
}

impl GfnParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        grid: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let shape = [dim, grid.0, half_width(grid.1)];
        let noise = Normal::new(0.0, INIT_STD).expect("positive std");
        let re = Tensor::from_fn(&shape, |_| 1.0 + noise.sample(rng));
        let im = Tensor::from_fn(&shape, |_| noise.sample(rng));
        let re = store.add(format!("{prefix}.filter_re"), re, true);
        let im = store.add(format!("{prefix}.filter_im"), im, true);
        Ok(GfnParams { re, im, dim, grid })
    }

    pub fn param_count(dim: usize, grid: (usize, usize)) -> usize {
        2 * dim * grid.0 * half_width(grid.1)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let &[_, c, h, w] = tape.shape(x) else {
            return Err(Error::shape(format!("GFN expects [B, d, h, w], got {:?}", tape.shape(x))));
        };
        if c != self.dim || (h, w) != self.grid {
            return Err(Error::shape(format!(
                "global filter built for d={} on {}x{}, input is d={c} on {h}x{w}",
                self.dim, self.grid.0, self.grid.1
            )));
        }
        let re = tape.param(store, self.re);
        let im = tape.param(store, self.im);
        tape.spectral_filter(x, re, im)
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        super::apply_grid(x, |tape, xv| self.forward(tape, store, xv))
    }
}
