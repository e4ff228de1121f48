//! Separable 2-D discrete wavelet transform as a two-channel filter bank.
//!
//! Convention: rows are filtered (and downsampled, keeping even positions)
//! first, columns second. Subbands are named row-band first, so `lh` holds
//! row-lowpass/column-highpass coefficients and `hl` row-highpass/column-lowpass.
//! Within one level the packed layout is `[LL, LH, HL, HH]`.
//!
//! For `x = [[1, 2], [3, 4]]` this gives `LL = 5`, `LH = -2`, `HL = -1`, `HH = 0`.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::cost;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Analysis lowpass/highpass taps. Synthesis uses the transposed bank.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl FilterPair {
    pub fn haar() -> Self {
        FilterPair { low: vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2], high: vec![FRAC_1_SQRT_2, -FRAC_1_SQRT_2] }
    }

    fn taps(&self) -> Result<([f64; 2], [f64; 2])> {
        match (self.low.as_slice(), self.high.as_slice()) {
            (&[r0, r1], &[s0, s1]) => Ok(([r0, r1], [s0, s1])),
            _ => Err(Error::config(format!(
                "only two-tap filter banks are supported, got {} and {} taps",
                self.low.len(),
                self.high.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Wavelet {
    #[default]
    Haar,
}

impl Wavelet {
    pub fn filters(self) -> FilterPair {
        match self {
            Wavelet::Haar => FilterPair::haar(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Wavelet::Haar => "haar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DwtConfig {
    pub level: usize,
    pub wavelet: Wavelet,
}

impl Default for DwtConfig {
    fn default() -> Self {
        DwtConfig { level: 1, wavelet: Wavelet::Haar }
    }
}

impl DwtConfig {
    pub fn new(level: usize) -> Self {
        DwtConfig { level, ..Default::default() }
    }

    /// Checks that an `height x width` grid splits evenly `level` times.
    pub fn check_grid(&self, height: usize, width: usize) -> Result<()> {
        if self.level == 0 {
            return Err(Error::config("DWT level must be at least 1"));
        }
        let f = 1usize.checked_shl(self.level as u32).unwrap_or(usize::MAX);
        if !height.is_multiple_of(f) || !width.is_multiple_of(f) {
            return Err(Error::shape(format!(
                "grid H={height}, W={width} is not divisible by 2^m = {f} (m={})",
                self.level
            )));
        }
        Ok(())
    }
}

/// The three detail subbands of one level, each `d x H/2^j x W/2^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    /// Approximation at the coarsest level.
    pub ll: Tensor,
    /// `details[j - 1]` holds level `j`, finest first.
    pub details: Vec<DetailBands>,
}

impl SubbandSet {
    pub fn level(&self) -> usize {
        self.details.len()
    }

    pub fn numel(&self) -> usize {
        self.ll.len() + self.details.iter().map(|d| d.lh.len() + d.hl.len() + d.hh.len()).sum::<usize>()
    }

    pub fn energy(&self) -> f64 {
        self.ll.sq_norm() + self.details.iter().map(|d| d.lh.sq_norm() + d.hl.sq_norm() + d.hh.sq_norm()).sum::<f64>()
    }
}

/// One analysis level over `planes` independent `h x w` planes.
///
/// Output is packed `[4, planes, h/2, w/2]` in `[LL, LH, HL, HH]` order.
/// Counts 4 multiply-adds per input element.
pub fn analysis_level(x: &[f64], planes: usize, h: usize, w: usize, bank: &FilterPair) -> Result<Vec<f64>> {
    let ([r0, r1], [s0, s1]) = bank.taps()?;
    debug_assert_eq!(x.len(), planes * h * w);
    let (h2, w2) = (h / 2, w / 2);
    let band = planes * h2 * w2;
    let mut out = vec![0.0; 4 * band];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for i in 0..h2 {
            let top = &src[2 * i * w..(2 * i + 1) * w];
            let bot = &src[(2 * i + 1) * w..(2 * i + 2) * w];
            let o = p * h2 * w2 + i * w2;
            for j in 0..w2 {
                let (a, b) = (top[2 * j], top[2 * j + 1]);
                let (c, d) = (bot[2 * j], bot[2 * j + 1]);
                let lo0 = r0 * a + r1 * b;
                let hi0 = s0 * a + s1 * b;
                let lo1 = r0 * c + r1 * d;
                let hi1 = s0 * c + s1 * d;
                out[o + j] = r0 * lo0 + r1 * lo1;
                out[band + o + j] = s0 * lo0 + s1 * lo1;
                out[2 * band + o + j] = r0 * hi0 + r1 * hi1;
                out[3 * band + o + j] = s0 * hi0 + s1 * hi1;
            }
        }
    }
    cost::record(4 * x.len() as u64);
    Ok(out)
}

/// Transpose of [`analysis_level`]: packed `[4, planes, h2, w2]` back to
/// `[planes, 2 h2, 2 w2]`. For an orthonormal bank this is the exact inverse.
pub fn synthesis_level(z: &[f64], planes: usize, h2: usize, w2: usize, bank: &FilterPair) -> Result<Vec<f64>> {
    let ([r0, r1], [s0, s1]) = bank.taps()?;
    let band = planes * h2 * w2;
    debug_assert_eq!(z.len(), 4 * band);
    let (h, w) = (2 * h2, 2 * w2);
    let mut x = vec![0.0; planes * h * w];
    for p in 0..planes {
        let dst = &mut x[p * h * w..(p + 1) * h * w];
        for i in 0..h2 {
            let o = p * h2 * w2 + i * w2;
            for j in 0..w2 {
                let ll = z[o + j];
                let lh = z[band + o + j];
                let hl = z[2 * band + o + j];
                let hh = z[3 * band + o + j];
                let lo0 = r0 * ll + s0 * lh;
                let lo1 = r1 * ll + s1 * lh;
                let hi0 = r0 * hl + s0 * hh;
                let hi1 = r1 * hl + s1 * hh;
                dst[2 * i * w + 2 * j] = r0 * lo0 + s0 * hi0;
                dst[2 * i * w + 2 * j + 1] = r1 * lo0 + s1 * hi0;
                dst[(2 * i + 1) * w + 2 * j] = r0 * lo1 + s0 * hi1;
                dst[(2 * i + 1) * w + 2 * j + 1] = r1 * lo1 + s1 * hi1;
            }
        }
    }
    cost::record(4 * x.len() as u64);
    Ok(x)
}

fn grid_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [d, h, w] => Ok((d, h, w)),
        _ => Err(Error::shape(format!("expected a d x H x W grid, got {:?}", x.shape()))),
    }
}

/// Forward multi-level 2-D DWT of a `d x H x W` grid.
pub fn dwt2(x: &Tensor, cfg: &DwtConfig) -> Result<SubbandSet> {
    dwt2_with_bank(x, cfg.level, &cfg.wavelet.filters())
}

pub fn idwt2(z: &SubbandSet, cfg: &DwtConfig) -> Result<Tensor> {
    if z.level() != cfg.level {
        return Err(Error::shape(format!("subband set has {} levels, config says {}", z.level(), cfg.level)));
    }
    idwt2_with_bank(z, &cfg.wavelet.filters())
}

/// [`dwt2`] with an explicit filter bank.
pub fn dwt2_with_bank(x: &Tensor, level: usize, bank: &FilterPair) -> Result<SubbandSet> {
    let (d, h, w) = grid_dims(x)?;
    DwtConfig::new(level).check_grid(h, w)?;
    let mut details = Vec::with_capacity(level);
    let mut cur = x.data().to_vec();
    let (mut ch, mut cw) = (h, w);
    for _ in 0..level {
        let packed = analysis_level(&cur, d, ch, cw, bank)?;
        let (h2, w2) = (ch / 2, cw / 2);
        let band = d * h2 * w2;
        let take = |k: usize| Tensor::new(&[d, h2, w2], packed[k * band..(k + 1) * band].to_vec());
        details.push(DetailBands { lh: take(1)?, hl: take(2)?, hh: take(3)? });
        cur = packed[..band].to_vec();
        (ch, cw) = (h2, w2);
    }
    Ok(SubbandSet { ll: Tensor::new(&[d, ch, cw], cur)?, details })
}

pub fn idwt2_with_bank(z: &SubbandSet, bank: &FilterPair) -> Result<Tensor> {
    let (d, mut h, mut w) = grid_dims(&z.ll)?;
    let mut cur = z.ll.data().to_vec();
    for (j, det) in z.details.iter().enumerate().rev() {
        for (name, t) in [("lh", &det.lh), ("hl", &det.hl), ("hh", &det.hh)] {
            if t.shape() != [d, h, w] {
                return Err(Error::shape(format!(
                    "level {} {name} subband is {:?}, expected {:?}",
                    j + 1,
                    t.shape(),
                    [d, h, w]
                )));
            }
        }
        let mut packed = cur;
        packed.extend_from_slice(det.lh.data());
        packed.extend_from_slice(det.hl.data());
        packed.extend_from_slice(det.hh.data());
        cur = synthesis_level(&packed, d, h, w, bank)?;
        (h, w) = (2 * h, 2 * w);
    }
    Tensor::new(&[d, h, w], cur)
}
