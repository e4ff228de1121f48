//! Unnormalized forward / `1/(H·W)`-normalized inverse 2-D DFT.
//!
//! Axes whose length is a power of two use an iterative radix-2
//! Cooley–Tukey FFT; other lengths fall back to the O(n²) direct sum.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::cost;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Complex spectrum of a `channels x height x width` real grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn at(&self, c: usize, u: usize, v: usize) -> Complex64 {
        self.data[(c * self.height + u) * self.width + v]
    }
}

fn bit_reverse_permute(buf: &mut [Complex64]) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
}

/// In-place radix-2 FFT. `inverse` flips the twiddle sign; no scaling.
pub fn fft_radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "radix-2 FFT needs a power-of-two length, got {n}");
    bit_reverse_permute(buf);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for k in 0..half {
            let tw = Complex64::from_polar(1.0, step * k as f64);
            for start in (0..n).step_by(len) {
                let a = buf[start + k];
                let b = buf[start + k + half] * tw;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    // n/2 butterflies per stage, one complex multiply each.
    cost::record(4 * (n / 2 * n.trailing_zeros() as usize) as u64);
}

/// Direct O(n²) DFT of one line.
pub fn dft_direct(input: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = input.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let out = (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .map(|(t, &x)| x * Complex64::from_polar(1.0, sign * 2.0 * PI * ((k * t) % n) as f64 / n as f64))
                .sum()
        })
        .collect();
    cost::record(4 * (n * n) as u64);
    out
}

/// Unnormalized 1-D transform of one line, radix-2 when possible.
pub fn fft_line(buf: &mut [Complex64], inverse: bool) {
    if buf.len().is_power_of_two() {
        fft_radix2(buf, inverse);
    } else {
        let out = dft_direct(buf, inverse);
        buf.copy_from_slice(&out);
    }
}

/// Unnormalized 2-D transform of one `h x w` plane: rows, then columns.
pub fn fft2_plane(plane: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    debug_assert_eq!(plane.len(), h * w);
    for row in plane.chunks_exact_mut(w) {
        fft_line(row, inverse);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for v in 0..w {
        for u in 0..h {
            col[u] = plane[u * w + v];
        }
        fft_line(&mut col, inverse);
        for u in 0..h {
            plane[u * w + v] = col[u];
        }
    }
}

fn grid_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(format!("expected a c x H x W grid, got {:?}", x.shape()))),
    }
}

/// Forward (unnormalized) 2-D DFT of each channel.
pub fn dft2(x: &Tensor) -> Result<Spectrum> {
    let (c, h, w) = grid_dims(x)?;
    let mut data: Vec<Complex64> = x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for plane in data.chunks_exact_mut(h * w) {
        fft2_plane(plane, h, w, false);
    }
    Ok(Spectrum { channels: c, height: h, width: w, data })
}

/// Inverse 2-D DFT with `1/(H·W)` scaling; returns the complex result.
pub fn idft2_complex(s: &Spectrum) -> Vec<Complex64> {
    let (h, w) = (s.height, s.width);
    let mut data = s.data.clone();
    let scale = 1.0 / (h * w) as f64;
    for plane in data.chunks_exact_mut(h * w) {
        fft2_plane(plane, h, w, true);
        plane.iter_mut().for_each(|z| *z *= scale);
    }
    data
}

/// Inverse 2-D DFT, keeping the real part.
pub fn idft2(s: &Spectrum) -> Result<Tensor> {
    if s.data.len() != s.channels * s.height * s.width {
        return Err(Error::shape("spectrum buffer does not match its dimensions"));
    }
    let data = idft2_complex(s).into_iter().map(|z| z.re).collect();
    Tensor::new(&[s.channels, s.height, s.width], data)
}

/// Width of the half spectrum kept for a real signal of width `w`.
pub fn half_width(w: usize) -> usize {
    w / 2 + 1
}

/// Filter value at full-spectrum bin `(u, v)` from a half-spectrum
/// `h x (w/2 + 1)`. Bins past the half use the Hermitian mirror
/// `conj(F[-u mod h, w - v])`. Returns `(re, im, mirrored)`.
#[inline]
pub fn half_spectrum_bin(re: &[f64], im: &[f64], h: usize, w: usize, u: usize, v: usize) -> (f64, f64, bool) {
    let hw = half_width(w);
    if v < hw {
        let i = u * hw + v;
        (re[i], im[i], false)
    } else {
        let i = ((h - u) % h) * hw + (w - v);
        (re[i], -im[i], true)
    }
}

/// `y = Re(idft2(dft2(x) ⊙ F))` for one plane, with `F` given as a half spectrum.
pub fn filter_plane(x: &[f64], re: &[f64], im: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_plane(&mut buf, h, w, false);
    for u in 0..h {
        for v in 0..w {
            let (fr, fi, _) = half_spectrum_bin(re, im, h, w, u, v);
            buf[u * w + v] *= Complex64::new(fr, fi);
        }
    }
    cost::record(4 * (h * w) as u64);
    fft2_plane(&mut buf, h, w, true);
    let scale = 1.0 / (h * w) as f64;
    buf.iter().map(|z| z.re * scale).collect()
}

/// Backward of [`filter_plane`]. Accumulates into `dre`/`dim` and returns `dx`.
pub fn filter_plane_backward(
    x: &[f64],
    gy: &[f64],
    re: &[f64],
    im: &[f64],
    h: usize,
    w: usize,
    dre: &mut [f64],
    dim: &mut [f64],
) -> Vec<f64> {
    let n = h * w;
    let scale = 1.0 / n as f64;
    let mut xs: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut gs: Vec<Complex64> = gy.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_plane(&mut xs, h, w, false);
    fft2_plane(&mut gs, h, w, false);
    let hw = half_width(w);
    // L = Re Σ F[u,v] A[u,v] with A = X ⊙ conj(G) / N.
    for u in 0..h {
        for v in 0..w {
            let a = xs[u * w + v] * gs[u * w + v].conj() * scale;
            if v < hw {
                let i = u * hw + v;
                dre[i] += a.re;
                dim[i] -= a.im;
            } else {
                let i = ((h - u) % h) * hw + (w - v);
                dre[i] += a.re;
                dim[i] += a.im;
            }
        }
    }
    // dx = Re(idft2(G ⊙ conj(F)))
    for u in 0..h {
        for v in 0..w {
            let (fr, fi, _) = half_spectrum_bin(re, im, h, w, u, v);
            gs[u * w + v] *= Complex64::new(fr, -fi);
        }
    }
    fft2_plane(&mut gs, h, w, true);
    gs.iter().map(|z| z.re * scale).collect()
}
