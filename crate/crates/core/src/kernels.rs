//! Forward and backward kernels on raw row-major buffers.
//!
//! Batched activations are laid out `[batch, channels, height, width]`.
//! Everything here is single-threaded with a fixed summation order, so two
//! calls on identical inputs produce bit-identical outputs.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::linalg::{gemm, Layout};

// ---------------------------------------------------------------------------
// GeLU (exact erf form)

#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// d/dx [x Φ(x)] = Φ(x) + x φ(x)
#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

// ---------------------------------------------------------------------------
// Grouped 2-D convolution, stride 1, zero "same" padding, odd kernels.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub groups: usize,
}

impl ConvGeom {
    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Rows of the unfolded input matrix for one group.
    fn col_rows(&self) -> usize {
        self.cin_g() * self.kernel * self.kernel
    }

    /// Columns of the unfolded input matrix (all samples, all pixels).
    fn col_cols(&self) -> usize {
        self.batch * self.plane()
    }
}

/// Unfolds the channels of group `group` into `col[(c, ky, kx), (b, y, x)]`.
fn im2col(x: &[f64], g: &ConvGeom, group: usize, col: &mut [f64]) {
    let (h, w, k) = (g.height, g.width, g.kernel);
    let pad = (k / 2) as isize;
    let plane = g.plane();
    let ncols = g.col_cols();
    let c0 = group * g.cin_g();
    for c in 0..g.cin_g() {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst_row = &mut col[row * ncols..(row + 1) * ncols];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for b in 0..g.batch {
                    let src = &x[(b * g.c_in + c0 + c) * plane..][..plane];
                    let dst = &mut dst_row[b * plane..(b + 1) * plane];
                    if dy == 0 && dx == 0 {
                        dst.copy_from_slice(src);
                        continue;
                    }
                    for y in 0..h {
                        let sy = y as isize + dy;
                        let drow = &mut dst[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            drow.fill(0.0);
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        for (xx, d) in drow.iter_mut().enumerate() {
                            let sx = xx as isize + dx;
                            *d = if sx < 0 || sx >= w as isize { 0.0 } else { srow[sx as usize] };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `col` back onto the group's channels of `dx`.
fn col2im(col: &[f64], g: &ConvGeom, group: usize, dx: &mut [f64]) {
    let (h, w, k) = (g.height, g.width, g.kernel);
    let pad = (k / 2) as isize;
    let plane = g.plane();
    let ncols = g.col_cols();
    let c0 = group * g.cin_g();
    for c in 0..g.cin_g() {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src_row = &col[row * ncols..(row + 1) * ncols];
                let dy = ky as isize - pad;
                let dxo = kx as isize - pad;
                for b in 0..g.batch {
                    let dst = &mut dx[(b * g.c_in + c0 + c) * plane..][..plane];
                    let src = &src_row[b * plane..(b + 1) * plane];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let drow = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                        let srow = &src[y * w..(y + 1) * w];
                        for (xx, &v) in srow.iter().enumerate() {
                            let sx = xx as isize + dxo;
                            if sx >= 0 && sx < w as isize {
                                drow[sx as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gathers the output channels of `group` from `[b, c, pix]` into `[c, (b, pix)]`.
fn gather_out(y: &[f64], g: &ConvGeom, group: usize, dst: &mut [f64]) {
    let plane = g.plane();
    let ncols = g.col_cols();
    for co in 0..g.cout_g() {
        let ch = group * g.cout_g() + co;
        for b in 0..g.batch {
            dst[co * ncols + b * plane..][..plane]
                .copy_from_slice(&y[(b * g.c_out + ch) * plane..][..plane]);
        }
    }
}

fn scatter_out(src: &[f64], g: &ConvGeom, group: usize, y: &mut [f64]) {
    let plane = g.plane();
    let ncols = g.col_cols();
    for co in 0..g.cout_g() {
        let ch = group * g.cout_g() + co;
        for b in 0..g.batch {
            y[(b * g.c_out + ch) * plane..][..plane]
                .copy_from_slice(&src[co * ncols + b * plane..][..plane]);
        }
    }
}

/// Column-buffer budget in f64 entries; larger batches are processed in chunks.
const COL_BUDGET: usize = 1 << 16;

fn batch_chunk(g: &ConvGeom) -> usize {
    (COL_BUDGET / (g.col_rows() * g.plane()).max(1)).clamp(1, g.batch.max(1))
}

pub fn conv2d_forward(x: &[f64], weight: &[f64], g: &ConvGeom) -> Vec<f64> {
    let chunk = batch_chunk(g);
    let (x_per, y_per) = (g.c_in * g.plane(), g.c_out * g.plane());
    let mut y = vec![0.0; g.batch * y_per];
    let mut col = vec![0.0; g.col_rows() * chunk * g.plane()];
    let mut out = vec![0.0; g.cout_g() * chunk * g.plane()];
    for start in (0..g.batch).step_by(chunk) {
        let n = chunk.min(g.batch - start);
        let sub = ConvGeom { batch: n, ..*g };
        let ncols = sub.col_cols();
        conv2d_forward_block(
            &x[start * x_per..(start + n) * x_per],
            weight,
            &sub,
            &mut y[start * y_per..(start + n) * y_per],
            &mut col[..g.col_rows() * ncols],
            &mut out[..g.cout_g() * ncols],
        );
    }
    y
}

fn conv2d_forward_block(x: &[f64], weight: &[f64], g: &ConvGeom, y: &mut [f64], col: &mut [f64], out: &mut [f64]) {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    for group in 0..g.groups {
        im2col(x, g, group, col);
        let wg = &weight[group * g.cout_g() * rows..(group + 1) * g.cout_g() * rows];
        gemm(
            g.cout_g(),
            rows,
            ncols,
            1.0,
            wg,
            Layout::row_major(rows),
            col,
            Layout::row_major(ncols),
            0.0,
            out,
            Layout::row_major(ncols),
        );
        scatter_out(out, g, group, y);
    }
}

/// Returns `(dx, dweight)`; either may be skipped by passing `false`.
pub fn conv2d_backward(
    x: &[f64],
    weight: &[f64],
    gy: &[f64],
    g: &ConvGeom,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let chunk = batch_chunk(g);
    let (x_per, y_per) = (g.c_in * g.plane(), g.c_out * g.plane());
    let mut dx = want_dx.then(|| vec![0.0; g.batch * x_per]);
    let mut dw = want_dw.then(|| vec![0.0; weight.len()]);
    let mut col = vec![0.0; g.col_rows() * chunk * g.plane()];
    let mut gyg = vec![0.0; g.cout_g() * chunk * g.plane()];
    for start in (0..g.batch).step_by(chunk) {
        let n = chunk.min(g.batch - start);
        let sub = ConvGeom { batch: n, ..*g };
        let ncols = sub.col_cols();
        conv2d_backward_block(
            &x[start * x_per..(start + n) * x_per],
            weight,
            &gy[start * y_per..(start + n) * y_per],
            &sub,
            dx.as_mut().map(|dx| &mut dx[start * x_per..(start + n) * x_per]),
            dw.as_deref_mut(),
            &mut col[..g.col_rows() * ncols],
            &mut gyg[..g.cout_g() * ncols],
        );
    }
    (dx, dw)
}

/// Writes `dx` for this block and accumulates into `dw`.
#[allow(clippy::too_many_arguments)]
fn conv2d_backward_block(
    x: &[f64],
    weight: &[f64],
    gy: &[f64],
    g: &ConvGeom,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    col: &mut [f64],
    gyg: &mut [f64],
) {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    for group in 0..g.groups {
        gather_out(gy, g, group, gyg);
        let wrange = group * g.cout_g() * rows..(group + 1) * g.cout_g() * rows;
        if let Some(dw) = dw.as_deref_mut() {
            im2col(x, g, group, col);
            gemm(
                g.cout_g(),
                ncols,
                rows,
                1.0,
                gyg,
                Layout::row_major(ncols),
                col,
                Layout::transposed(ncols),
                1.0,
                &mut dw[wrange.clone()],
                Layout::row_major(rows),
            );
        }
        if let Some(dx) = dx.as_deref_mut() {
            gemm(
                rows,
                g.cout_g(),
                ncols,
                1.0,
                &weight[wrange],
                Layout::transposed(rows),
                gyg,
                Layout::row_major(ncols),
                0.0,
                col,
                Layout::row_major(ncols),
            );
            col2im(col, g, group, dx);
        }
    }
}

// ---------------------------------------------------------------------------
// Layer norm over the channel axis of `[batch, channels, spatial]`.

/// Returns `(y, mean, rstd)` with per-token statistics of length `batch * spatial`.
pub fn layer_norm_forward(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    batch: usize,
    channels: usize,
    spatial: usize,
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; x.len()];
    let mut mean = vec![0.0; batch * spatial];
    let mut rstd = vec![0.0; batch * spatial];
    let inv_c = 1.0 / channels as f64;
    for b in 0..batch {
        let xb = &x[b * channels * spatial..(b + 1) * channels * spatial];
        let mu = &mut mean[b * spatial..(b + 1) * spatial];
        for c in 0..channels {
            for (m, v) in mu.iter_mut().zip(&xb[c * spatial..(c + 1) * spatial]) {
                *m += v;
            }
        }
        mu.iter_mut().for_each(|m| *m *= inv_c);
        let rs = &mut rstd[b * spatial..(b + 1) * spatial];
        for c in 0..channels {
            for ((r, v), m) in rs.iter_mut().zip(&xb[c * spatial..(c + 1) * spatial]).zip(mu.iter()) {
                let d = v - m;
                *r += d * d;
            }
        }
        rs.iter_mut().for_each(|r| *r = 1.0 / (*r * inv_c + eps).sqrt());
        let yb = &mut y[b * channels * spatial..(b + 1) * channels * spatial];
        for c in 0..channels {
            let (gc, bc) = (gain[c], bias[c]);
            let ys = &mut yb[c * spatial..(c + 1) * spatial];
            let xs = &xb[c * spatial..(c + 1) * spatial];
            for s in 0..spatial {
                ys[s] = (xs[s] - mu[s]) * rs[s] * gc + bc;
            }
        }
    }
    (y, mean, rstd)
}

/// Returns `(dx, dgain, dbias)`.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward(
    x: &[f64],
    gain: &[f64],
    gy: &[f64],
    mean: &[f64],
    rstd: &[f64],
    batch: usize,
    channels: usize,
    spatial: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dgain = vec![0.0; channels];
    let mut dbias = vec![0.0; channels];
    let inv_c = 1.0 / channels as f64;
    let mut sum_g = vec![0.0; spatial];
    let mut sum_gx = vec![0.0; spatial];
    for b in 0..batch {
        let off = b * channels * spatial;
        let mu = &mean[b * spatial..(b + 1) * spatial];
        let rs = &rstd[b * spatial..(b + 1) * spatial];
        sum_g.fill(0.0);
        sum_gx.fill(0.0);
        for c in 0..channels {
            let xs = &x[off + c * spatial..off + (c + 1) * spatial];
            let gs = &gy[off + c * spatial..off + (c + 1) * spatial];
            for s in 0..spatial {
                let xhat = (xs[s] - mu[s]) * rs[s];
                dgain[c] += gs[s] * xhat;
                dbias[c] += gs[s];
                let gh = gs[s] * gain[c];
                sum_g[s] += gh;
                sum_gx[s] += gh * xhat;
            }
        }
        for c in 0..channels {
            let xs = &x[off + c * spatial..off + (c + 1) * spatial];
            let gs = &gy[off + c * spatial..off + (c + 1) * spatial];
            let ds = &mut dx[off + c * spatial..off + (c + 1) * spatial];
            for s in 0..spatial {
                let xhat = (xs[s] - mu[s]) * rs[s];
                let gh = gs[s] * gain[c];
                ds[s] = rs[s] * (gh - inv_c * sum_g[s] - xhat * inv_c * sum_gx[s]);
            }
        }
    }
    (dx, dgain, dbias)
}

// ---------------------------------------------------------------------------
// Softmax / cross-entropy over rows.

/// Numerically stable softmax of one row into `out`.
pub fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// `log Σ exp(x)` with max subtraction.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention on channel-major token grids.
//
// `qkv` is `[batch, 3 * dim, tokens]` with q, k, v stacked on channels; head
// `h` owns channels `h * dh .. (h + 1) * dh` of each of the three blocks.

#[derive(Debug, Clone, Copy)]
pub struct AttnGeom {
    pub batch: usize,
    pub dim: usize,
    pub heads: usize,
    pub tokens: usize,
}

impl AttnGeom {
    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Returns the attention output `[batch, dim, tokens]` and, if requested, the
/// probability matrices `[batch, heads, tokens, tokens]`.
pub fn attention_forward(qkv: &[f64], g: &AttnGeom, keep_probs: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    let (n, dh) = (g.tokens, g.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; g.batch * g.dim * n];
    let mut probs_all = keep_probs.then(|| vec![0.0; g.batch * g.heads * n * n]);
    let mut scores = vec![0.0; n * n];
    let mut probs = vec![0.0; n * n];
    for b in 0..g.batch {
        let base = b * 3 * g.dim * n;
        for h in 0..g.heads {
            let q = &qkv[base + h * dh * n..][..dh * n];
            let k = &qkv[base + (g.dim + h * dh) * n..][..dh * n];
            let v = &qkv[base + (2 * g.dim + h * dh) * n..][..dh * n];
            // scores[i, j] = Σ_c q[c, i] k[c, j] / √dh
            gemm(n, dh, n, scale, q, Layout::transposed(n), k, Layout::row_major(n), 0.0, &mut scores, Layout::row_major(n));
            for i in 0..n {
                softmax_row(&scores[i * n..(i + 1) * n], &mut probs[i * n..(i + 1) * n]);
            }
            // out[c, i] = Σ_j v[c, j] p[i, j]
            let o = &mut out[(b * g.dim + h * dh) * n..][..dh * n];
            gemm(dh, n, n, 1.0, v, Layout::row_major(n), &probs, Layout::transposed(n), 0.0, o, Layout::row_major(n));
            if let Some(all) = probs_all.as_mut() {
                all[(b * g.heads + h) * n * n..][..n * n].copy_from_slice(&probs);
            }
        }
    }
    (out, probs_all)
}

pub fn attention_backward(qkv: &[f64], probs_all: &[f64], gout: &[f64], g: &AttnGeom) -> Vec<f64> {
    let (n, dh) = (g.tokens, g.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dqkv = vec![0.0; qkv.len()];
    let mut dp = vec![0.0; n * n];
    for b in 0..g.batch {
        let base = b * 3 * g.dim * n;
        for h in 0..g.heads {
            let q = &qkv[base + h * dh * n..][..dh * n];
            let k = &qkv[base + (g.dim + h * dh) * n..][..dh * n];
            let v = &qkv[base + (2 * g.dim + h * dh) * n..][..dh * n];
            let p = &probs_all[(b * g.heads + h) * n * n..][..n * n];
            let go = &gout[(b * g.dim + h * dh) * n..][..dh * n];
            // dv[c, j] = Σ_i go[c, i] p[i, j]
            {
                let dv = &mut dqkv[base + (2 * g.dim + h * dh) * n..][..dh * n];
                gemm(dh, n, n, 1.0, go, Layout::row_major(n), p, Layout::row_major(n), 0.0, dv, Layout::row_major(n));
            }
            // dp[i, j] = Σ_c go[c, i] v[c, j]
            gemm(n, dh, n, 1.0, go, Layout::transposed(n), v, Layout::row_major(n), 0.0, &mut dp, Layout::row_major(n));
            // ds = p ⊙ (dp − rowsum(dp ⊙ p)), folded with the score scale
            for i in 0..n {
                let (pr, dr) = (&p[i * n..(i + 1) * n], &mut dp[i * n..(i + 1) * n]);
                let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                for (d, &pv) in dr.iter_mut().zip(pr) {
                    *d = pv * (*d - dot) * scale;
                }
            }
            // dq[c, i] = Σ_j k[c, j] ds[i, j]
            {
                let dq = &mut dqkv[base + h * dh * n..][..dh * n];
                gemm(dh, n, n, 1.0, k, Layout::row_major(n), &dp, Layout::transposed(n), 0.0, dq, Layout::row_major(n));
            }
            // dk[c, j] = Σ_i q[c, i] ds[i, j]
            {
                let dk = &mut dqkv[base + (g.dim + h * dh) * n..][..dh * n];
                gemm(dh, n, n, 1.0, q, Layout::row_major(n), &dp, Layout::row_major(n), 0.0, dk, Layout::row_major(n));
            }
        }
    }
    dqkv
}
