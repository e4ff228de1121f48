//! Multi-head self-attention over the flattened token grid.

use rand::Rng;

use super::fan_in_normal;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SaParams {
    pub heads: usize,
    /// `[3d, d, 1, 1]`: q, k and v projections stacked on the output axis.
    pub w_qkv: ParamId,
    /// `[d, d, 1, 1]`
    pub w_out: ParamId,
    pub dim: usize,
}

impl SaParams {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::config(format!("hidden size d={dim} not divisible by heads={heads}")));
        }
        let w_qkv = store.add(format!("{prefix}.w_qkv"), fan_in_normal(&[3 * dim, dim, 1, 1], dim, rng), true);
        let w_out = store.add(format!("{prefix}.w_out"), fan_in_normal(&[dim, dim, 1, 1], dim, rng), true);
        Ok(SaParams { heads, w_qkv, w_out, dim })
    }

    /// `4d²`: the QKV projection (`3d²`) plus the output projection.
    pub fn param_count(dim: usize) -> usize {
        4 * dim * dim
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let wq = tape.param(store, self.w_qkv);
        let qkv = tape.conv2d(x, wq, 1)?;
        let mixed = tape.attention(qkv, self.heads)?;
        let wo = tape.param(store, self.w_out);
        tape.conv2d(mixed, wo, 1)
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        super::apply_grid(x, |tape, xv| self.forward(tape, store, xv))
    }
}
