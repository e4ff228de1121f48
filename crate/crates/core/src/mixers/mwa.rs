//! Multiscale wavelet attention.
//!
//! ```text
//! y = act( B_wave(x) + B_1(x) + B_3(x) )
//! B_wave = IDWT( act( conv_{k_w, g_w}( last-level subbands of DWT(x) ) ) )
//! B_1    = act( conv_{1x1, g_1}(x) )
//! B_3    = act( conv_{3x3, g_2}(x) )
//! ```
//!
//! The wavelet-domain convolution is shared across the four last-level
//! subbands (LL, LH, HL, HH). For `m > 1` the detail subbands of the finer
//! levels are passed to the inverse transform unchanged. No biases.

use rand::Rng;

use super::fan_in_normal;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::transforms::DwtConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MwaConfig {
    /// Kernel side of the wavelet-domain convolution.
    pub k_wave: usize,
    pub g_wave: usize,
    /// Groups of the 1x1 skip convolution.
    pub g_skip1: usize,
    /// Groups of the 3x3 skip convolution.
    pub g_skip3: usize,
    pub dwt: DwtConfig,
}

impl Default for MwaConfig {
    fn default() -> Self {
        MwaConfig { k_wave: 3, g_wave: 1, g_skip1: 1, g_skip3: 1, dwt: DwtConfig::default() }
    }
}

impl MwaConfig {
    pub const K_SKIP1: usize = 1;
    pub const K_SKIP3: usize = 3;

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k_wave.is_multiple_of(2) {
            return Err(Error::config(format!("k_wave={} must be odd", self.k_wave)));
        }
        for (name, g) in [("g_wave", self.g_wave), ("g_skip1", self.g_skip1), ("g_skip3", self.g_skip3)] {
            if g == 0 || !d.is_multiple_of(g) {
                return Err(Error::config(format!("hidden size d={d} not divisible by {name}={g}")));
            }
        }
        if self.dwt.level == 0 {
            return Err(Error::config("DWT level must be at least 1"));
        }
        Ok(())
    }

    /// `(k_w²/g_w + 1/g_1 + 9/g_2) · d²`.
    pub fn param_count(&self, d: usize) -> usize {
        let per = |k: usize, g: usize| k * k * (d / g) * d;
        per(self.k_wave, self.g_wave) + per(Self::K_SKIP1, self.g_skip1) + per(Self::K_SKIP3, self.g_skip3)
    }
}

/// Nonlinearity used at every activation site. `Identity` turns the mixer into
/// a linear operator, which the linearity checks rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Gelu,
    Identity,
}

#[derive(Debug, Clone)]
pub struct MwaParams {
    pub w_wave: ParamId,
    pub w_skip1: ParamId,
    pub w_skip3: ParamId,
    pub cfg: MwaConfig,
    pub dim: usize,
}

impl MwaParams {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, cfg: MwaConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate(dim)?;
        let mut conv = |name: &str, k: usize, g: usize| {
            let fan_in = (dim / g) * k * k;
            let w = fan_in_normal(&[dim, dim / g, k, k], fan_in, rng);
            store.add(format!("{prefix}.{name}"), w, true)
        };
        let w_wave = conv("w_wave", cfg.k_wave, cfg.g_wave);
        let w_skip1 = conv("w_skip1", MwaConfig::K_SKIP1, cfg.g_skip1);
        let w_skip3 = conv("w_skip3", MwaConfig::K_SKIP3, cfg.g_skip3);
        Ok(MwaParams { w_wave, w_skip1, w_skip3, cfg, dim })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        self.forward_with(tape, store, x, Activation::Gelu)
    }

    pub fn forward_with(&self, tape: &mut Tape, store: &ParamStore, x: Var, act: Activation) -> Result<Var> {
        let &[b, c, h, w] = tape.shape(x) else {
            return Err(Error::shape(format!("MWA expects [B, d, h, w], got {:?}", tape.shape(x))));
        };
        if c != self.dim {
            return Err(Error::shape(format!("MWA built for d={}, input has {c} channels", self.dim)));
        }
        self.cfg.dwt.check_grid(h, w)?;
        let activate = |tape: &mut Tape, v: Var| match act {
            Activation::Gelu => tape.gelu(v),
            Activation::Identity => v,
        };

        // Wavelet branch: analysis down to level m.
        let levels = self.cfg.dwt.level;
        let mut details = Vec::with_capacity(levels - 1);
        let mut approx = x;
        let (mut lh, mut lw) = (h, w);
        for _ in 1..levels {
            let z = tape.haar_analysis(approx)?;
            (lh, lw) = (lh / 2, lw / 2);
            let ll = tape.narrow0(z, 0, 1)?;
            approx = tape.reshape(ll, &[b, c, lh, lw])?;
            details.push(tape.narrow0(z, 1, 3)?);
        }
        let z = tape.haar_analysis(approx)?;
        (lh, lw) = (lh / 2, lw / 2);
        // Shared conv over the four subbands: fold them into the batch axis.
        let folded = tape.reshape(z, &[4 * b, c, lh, lw])?;
        let ww = tape.param(store, self.w_wave);
        let filtered = tape.conv2d(folded, ww, self.cfg.g_wave)?;
        let filtered = activate(tape, filtered);
        let mut cur = tape.reshape(filtered, &[4, b, c, lh, lw])?;
        for det in details.into_iter().rev() {
            let up = tape.haar_synthesis(cur)?;
            (lh, lw) = (lh * 2, lw * 2);
            let up = tape.reshape(up, &[1, b, c, lh, lw])?;
            cur = tape.concat0(up, det)?;
        }
        let wave = tape.haar_synthesis(cur)?;

        let w1 = tape.param(store, self.w_skip1);
        let skip1 = tape.conv2d(x, w1, self.cfg.g_skip1)?;
        let skip1 = activate(tape, skip1);
        let w3 = tape.param(store, self.w_skip3);
        let skip3 = tape.conv2d(x, w3, self.cfg.g_skip3)?;
        let skip3 = activate(tape, skip3);

        let sum = tape.add(wave, skip1)?;
        let sum = tape.add(sum, skip3)?;
        Ok(activate(tape, sum))
    }

    /// Applies the mixer to one `d x h x w` grid.
    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        super::apply_grid(x, |tape, xv| self.forward(tape, store, xv))
    }
}
