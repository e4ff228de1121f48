//! Reverse-mode differentiation over a dynamically recorded op graph.
//!
//! A [`Tape`] records every op applied to its [`Var`] handles together with
//! whatever the backward pass needs. [`Tape::backward`] walks the record in
//! reverse and returns gradients for the leaves; [`Tape::backward_into`] also
//! adds parameter gradients into a [`ParamStore`], so repeated calls without
//! zeroing accumulate.
//!
//! A tape belongs to one training context and is not meant to be shared
//! across threads. Only first-order derivatives are supported.

use crate::error::{Error, Result};
use crate::kernels::{self, AttnGeom, ConvGeom};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{numel, Tensor};
use crate::transforms::fft;
use crate::transforms::haar::{self, FilterPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Gelu(Var),
    AddChannelBias { x: Var, bias: Var },
    AddBroadcast { x: Var, p: Var },
    Reshape(Var),
    Narrow0 { x: Var, start: usize },
    Concat0(Var, Var),
    LayerNorm { x: Var, gain: Var, mean: Vec<f64>, rstd: Vec<f64>, bias: Var },
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    Patchify { x: Var, patch: usize },
    HaarAnalysis(Var),
    HaarSynthesis(Var),
    Attention { qkv: Var, geom: AttnGeom, probs: Vec<f64> },
    SpectralFilter { x: Var, re: Var, im: Var },
    SpatialMean(Var),
    Softmax(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    grad_enabled: bool,
    bank: FilterPair,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Leaf gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf (input or parameter), if it received one.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn shape4(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::shape(format!("{what} expects a [batch, channels, H, W] tensor, got {:?}", t.shape()))),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grad_enabled: true, bank: FilterPair::haar() }
    }

    /// A tape that records values only; no op keeps backward state.
    pub fn inference() -> Self {
        Tape { grad_enabled: false, ..Tape::new() }
    }

    /// Overrides the wavelet filter bank used by the Haar ops.
    pub fn with_filter_bank(mut self, bank: FilterPair) -> Self {
        self.bank = bank;
        self
    }

    pub fn set_filter_bank(&mut self, bank: FilterPair) {
        self.bank = bank;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // -- leaves -------------------------------------------------------------

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable non-parameter leaf (its gradient is read from [`Gradients`]).
    pub fn input(&mut self, t: Tensor) -> Var {
        let rg = self.grad_enabled;
        self.push(t, Op::Leaf, rg)
    }

    /// Records a snapshot of a stored parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        let rg = self.grad_enabled && p.tensor.requires_grad;
        self.push(p.tensor.value.clone(), Op::Param(id), rg)
    }

    // -- elementwise --------------------------------------------------------

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(self.shape(a), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Scale(x, s), rg)
    }

    /// Sum of all elements, as a 1-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(kernels::gelu);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Gelu(x), rg)
    }

    /// `x[b, c, ...] + bias[c]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || self.shape(bias) != [xs[1]] {
            return Err(Error::shape(format!("channel bias {:?} does not fit input {:?}", self.shape(bias), xs)));
        }
        let inner: usize = xs[2..].iter().product();
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for (i, chunk) in out.data_mut().chunks_exact_mut(inner).enumerate() {
            let bc = b[i % xs[1]];
            chunk.iter_mut().for_each(|v| *v += bc);
        }
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(out, Op::AddChannelBias { x, bias }, rg))
    }

    /// `x[b, ...] + p[...]`, broadcasting `p` over the leading axis.
    pub fn add_broadcast(&mut self, x: Var, p: Var) -> Result<Var> {
        if self.shape(x).len() < 2 || self.shape(x)[1..] != *self.shape(p) {
            return Err(Error::shape(format!("cannot broadcast {:?} over {:?}", self.shape(p), self.shape(x))));
        }
        let mut out = self.value(x).clone();
        let pd = self.value(p).data().to_vec();
        for chunk in out.data_mut().chunks_exact_mut(pd.len()) {
            chunk.iter_mut().zip(&pd).for_each(|(v, q)| *v += q);
        }
        let rg = self.any_grad(&[x, p]);
        Ok(self.push(out, Op::AddBroadcast { x, p }, rg))
    }

    // -- layout -------------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Slice `start .. start + len` of the leading axis.
    pub fn narrow0(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if len == 0 || start + len > xs[0] {
            return Err(Error::shape(format!("narrow {start}..{} out of range for {:?}", start + len, xs)));
        }
        let inner: usize = xs[1..].iter().product();
        let mut shape = xs.clone();
        shape[0] = len;
        let out = Tensor::new(&shape, self.value(x).data()[start * inner..(start + len) * inner].to_vec())?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Narrow0 { x, start }, rg))
    }

    /// Concatenation along the leading axis.
    pub fn concat0(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa[1..] != sb[1..] {
            return Err(Error::shape(format!("cannot concatenate {sa:?} and {sb:?}")));
        }
        let mut shape = sa.clone();
        shape[0] += sb[0];
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let out = Tensor::new(&shape, data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Concat0(a, b), rg))
    }

    /// `[B, C, M, N] -> [B, C·p², M/p, N/p]`: each non-overlapping `p x p`
    /// patch becomes a token whose channels run over `(c, py, px)`.
    pub fn patchify(&mut self, x: Var, patch: usize) -> Result<Var> {
        let [b, c, m, n] = shape4(self.value(x), "patchify")?;
        if patch == 0 || m % patch != 0 || n % patch != 0 {
            return Err(Error::config(format!("image {m}x{n} is not divisible by patch size {patch}")));
        }
        let (h, w) = (m / patch, n / patch);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for bi in 0..b {
            for ci in 0..c {
                for py in 0..patch {
                    for px in 0..patch {
                        let oc = (ci * patch + py) * patch + px;
                        for i in 0..h {
                            for j in 0..w {
                                out[((bi * c * patch * patch + oc) * h + i) * w + j] =
                                    src[((bi * c + ci) * m + i * patch + py) * n + j * patch + px];
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new(&[b, c * patch * patch, h, w], out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Patchify { x, patch }, rg))
    }

    // -- neural ops ---------------------------------------------------------

    /// Layer norm over axis 1 of `[B, C, ...]`, per position of the remaining axes.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || self.shape(gain) != [xs[1]] || self.shape(bias) != [xs[1]] {
            return Err(Error::shape(format!(
                "layer norm gain {:?} / bias {:?} do not fit input {:?}",
                self.shape(gain),
                self.shape(bias),
                xs
            )));
        }
        let spatial: usize = xs[2..].iter().product();
        let (y, mean, rstd) = kernels::layer_norm_forward(
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            xs[0],
            xs[1],
            spatial,
            eps,
        );
        let out = Tensor::new(&xs, y)?;
        let rg = self.any_grad(&[x, gain, bias]);
        let (mean, rstd) = if rg { (mean, rstd) } else { (Vec::new(), Vec::new()) };
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, mean, rstd }, rg))
    }

    /// Grouped 2-D cross-correlation with zero "same" padding.
    /// `x: [B, Cin, H, W]`, `w: [Cout, Cin/groups, k, k]` with `k` odd.
    pub fn conv2d(&mut self, x: Var, w: Var, groups: usize) -> Result<Var> {
        let [b, c_in, h, wd] = shape4(self.value(x), "conv2d input")?;
        let [c_out, cin_g, k, k2] = shape4(self.value(w), "conv2d weight")?;
        if groups == 0 || c_in % groups != 0 {
            return Err(Error::config(format!("input channels c_in={c_in} not divisible by groups={groups}")));
        }
        if c_out % groups != 0 {
            return Err(Error::config(format!("output channels c_out={c_out} not divisible by groups={groups}")));
        }
        if cin_g != c_in / groups {
            return Err(Error::config(format!(
                "weight has {cin_g} input channels per group, expected c_in/groups = {}",
                c_in / groups
            )));
        }
        if k != k2 || k % 2 == 0 {
            return Err(Error::config(format!("kernel must be square with odd size, got {k}x{k2}")));
        }
        let geom = ConvGeom { batch: b, c_in, c_out, height: h, width: wd, kernel: k, groups };
        let y = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), &geom);
        let out = Tensor::new(&[b, c_out, h, wd], y)?;
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(out, Op::Conv2d { x, w, geom }, rg))
    }

    /// One-level 2-D analysis: `[B, C, H, W] -> [4, B, C, H/2, W/2]`
    /// with subbands `[LL, LH, HL, HH]` on the leading axis.
    pub fn haar_analysis(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = shape4(self.value(x), "DWT")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("DWT needs even dims, got H={h}, W={w}")));
        }
        let z = haar::analysis_level(self.value(x).data(), b * c, h, w, &self.bank)?;
        let out = Tensor::new(&[4, b, c, h / 2, w / 2], z)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::HaarAnalysis(x), rg))
    }

    /// Inverse of [`Tape::haar_analysis`].
    pub fn haar_synthesis(&mut self, z: Var) -> Result<Var> {
        let (b, c, h2, w2) = match *self.shape(z) {
            [4, b, c, h2, w2] => (b, c, h2, w2),
            ref s => return Err(Error::shape(format!("IDWT expects [4, B, C, h, w] subbands, got {s:?}"))),
        };
        let x = haar::synthesis_level(self.value(z).data(), b * c, h2, w2, &self.bank)?;
        let out = Tensor::new(&[b, c, 2 * h2, 2 * w2], x)?;
        let rg = self.any_grad(&[z]);
        Ok(self.push(out, Op::HaarSynthesis(z), rg))
    }

    /// Multi-head scaled dot-product attention.
    /// `qkv: [B, 3C, H, W]` (q, k, v stacked on channels) `-> [B, C, H, W]`.
    pub fn attention(&mut self, qkv: Var, heads: usize) -> Result<Var> {
        let [b, c3, h, w] = shape4(self.value(qkv), "attention")?;
        if c3 % 3 != 0 {
            return Err(Error::shape(format!("qkv channels {c3} not divisible by 3")));
        }
        let dim = c3 / 3;
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(format!("hidden size d={dim} not divisible by heads={heads}")));
        }
        let geom = AttnGeom { batch: b, dim, heads, tokens: h * w };
        let rg = self.any_grad(&[qkv]);
        let (y, probs) = kernels::attention_forward(self.value(qkv).data(), &geom, rg);
        let out = Tensor::new(&[b, dim, h, w], y)?;
        Ok(self.push(out, Op::Attention { qkv, geom, probs: probs.unwrap_or_default() }, rg))
    }

    /// Per-channel global filter `Re(idft2(dft2(x) ⊙ F))`, with `F` a learnable
    /// half spectrum `re, im: [C, H, W/2 + 1]`.
    pub fn spectral_filter(&mut self, x: Var, re: Var, im: Var) -> Result<Var> {
        let [b, c, h, w] = shape4(self.value(x), "spectral filter")?;
        let fshape = [c, h, fft::half_width(w)];
        if self.shape(re) != fshape || self.shape(im) != fshape {
            return Err(Error::shape(format!(
                "filter must be {fshape:?} for input {:?}, got {:?} / {:?}",
                self.shape(x),
                self.shape(re),
                self.shape(im)
            )));
        }
        let plane = h * w;
        let fplane = h * fft::half_width(w);
        let (xd, rd, id) = (self.value(x).data(), self.value(re).data(), self.value(im).data());
        let mut y = Vec::with_capacity(xd.len());
        for bi in 0..b {
            for ci in 0..c {
                let xs = &xd[(bi * c + ci) * plane..][..plane];
                y.extend(fft::filter_plane(xs, &rd[ci * fplane..][..fplane], &id[ci * fplane..][..fplane], h, w));
            }
        }
        let out = Tensor::new(&[b, c, h, w], y)?;
        let rg = self.any_grad(&[x, re, im]);
        Ok(self.push(out, Op::SpectralFilter { x, re, im }, rg))
    }

    /// `[B, C, H, W] -> [B, C]` average over the spatial grid.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = shape4(self.value(x), "spatial mean")?;
        let inv = 1.0 / (h * w) as f64;
        let data = self.value(x).data().chunks_exact(h * w).map(|p| p.iter().sum::<f64>() * inv).collect();
        let out = Tensor::new(&[b, c], data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::SpatialMean(x), rg))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let last = *xs.last().expect("tensors have rank >= 1");
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for (o, r) in out.chunks_exact_mut(last).zip(src.chunks_exact(last)) {
            kernels::softmax_row(r, o);
        }
        let out = Tensor::new(&xs, out).expect("same shape");
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Softmax(x), rg)
    }

    /// Mean cross-entropy of `logits: [B, K]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, k) = match *self.shape(logits) {
            [b, k] => (b, k),
            ref s => return Err(Error::shape(format!("cross entropy expects [batch, classes] logits, got {s:?}"))),
        };
        if labels.len() != b {
            return Err(Error::shape(format!("{} labels for a batch of {b}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::data(format!("label {bad} out of range for {k} classes")));
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0; src.len()];
        let mut loss = 0.0;
        for (i, row) in src.chunks_exact(k).enumerate() {
            kernels::softmax_row(row, &mut probs[i * k..(i + 1) * k]);
            loss += kernels::log_sum_exp(row) - row[labels[i]];
        }
        let out = Tensor::scalar(loss / b as f64);
        let rg = self.any_grad(&[logits]);
        let probs = if rg { probs } else { Vec::new() };
        Ok(self.push(out, Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, rg))
    }

    // -- backward -----------------------------------------------------------

    /// Reverse pass from a 1-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Param(_)) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    /// [`Tape::backward`], then adds every parameter-leaf gradient into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                store.get_mut(*id).tensor.grad.add_assign(g);
            }
        }
        Ok(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, data: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let shape = self.shape(v);
        debug_assert_eq!(numel(shape), data.len());
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(&data) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(Tensor::new(shape, data).expect("gradient matches value shape")),
        }
    }

    fn propagate(&self, node: &Node, g: Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, g.into_data());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, gd.iter().zip(vb).map(|(g, y)| g * y).collect());
                self.accumulate(grads, *b, gd.iter().zip(va).map(|(g, x)| g * x).collect());
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, gd.iter().map(|g| g * s).collect()),
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gd[0]; n]);
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, gd.iter().zip(xv).map(|(g, &v)| g * kernels::gelu_grad(v)).collect());
            }
            Op::AddChannelBias { x, bias } => {
                let c = self.value(*bias).len();
                let inner: usize = self.shape(*x)[2..].iter().product();
                let mut db = vec![0.0; c];
                for (i, chunk) in gd.chunks_exact(inner).enumerate() {
                    db[i % c] += chunk.iter().sum::<f64>();
                }
                self.accumulate(grads, *bias, db);
                self.accumulate(grads, *x, g.into_data());
            }
            Op::AddBroadcast { x, p } => {
                let n = self.value(*p).len();
                let mut dp = vec![0.0; n];
                for chunk in gd.chunks_exact(n) {
                    dp.iter_mut().zip(chunk).for_each(|(d, v)| *d += v);
                }
                self.accumulate(grads, *p, dp);
                self.accumulate(grads, *x, g.into_data());
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g.into_data()),
            Op::Narrow0 { x, start } => {
                let xs = self.shape(*x);
                let inner: usize = xs[1..].iter().product();
                let mut dx = vec![0.0; self.value(*x).len()];
                dx[start * inner..start * inner + gd.len()].copy_from_slice(gd);
                self.accumulate(grads, *x, dx);
            }
            Op::Concat0(a, b) => {
                let na = self.value(*a).len();
                self.accumulate(grads, *a, gd[..na].to_vec());
                self.accumulate(grads, *b, gd[na..].to_vec());
            }
            Op::Patchify { x, patch } => {
                let p = *patch;
                let [b, c, m, n] = shape4(self.value(*x), "patchify")?;
                let (h, w) = (m / p, n / p);
                let mut dx = vec![0.0; gd.len()];
                for bi in 0..b {
                    for ci in 0..c {
                        for py in 0..p {
                            for px in 0..p {
                                let oc = (ci * p + py) * p + px;
                                for i in 0..h {
                                    for j in 0..w {
                                        dx[((bi * c + ci) * m + i * p + py) * n + j * p + px] =
                                            gd[((bi * c * p * p + oc) * h + i) * w + j];
                                    }
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::LayerNorm { x, gain, bias, mean, rstd } => {
                let xs = self.shape(*x);
                let spatial: usize = xs[2..].iter().product();
                let (dx, dg, db) = kernels::layer_norm_backward(
                    self.value(*x).data(),
                    self.value(*gain).data(),
                    gd,
                    mean,
                    rstd,
                    xs[0],
                    xs[1],
                    spatial,
                );
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gain, dg);
                self.accumulate(grads, *bias, db);
            }
            Op::Conv2d { x, w, geom } => {
                let (dx, dw) = kernels::conv2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gd,
                    geom,
                    self.requires_grad(*x),
                    self.requires_grad(*w),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
            }
            Op::HaarAnalysis(x) => {
                let &[_, b, c, h2, w2] = node.value.shape() else {
                    unreachable!("analysis output is rank 5")
                };
                let dx = haar::synthesis_level(gd, b * c, h2, w2, &self.bank)?;
                self.accumulate(grads, *x, dx);
            }
            Op::HaarSynthesis(z) => {
                let [b, c, h, w] = shape4(&node.value, "IDWT")?;
                let dz = haar::analysis_level(gd, b * c, h, w, &self.bank)?;
                self.accumulate(grads, *z, dz);
            }
            Op::Attention { qkv, geom, probs } => {
                let d = kernels::attention_backward(self.value(*qkv).data(), probs, gd, geom);
                self.accumulate(grads, *qkv, d);
            }
            Op::SpectralFilter { x, re, im } => {
                let [b, c, h, w] = shape4(self.value(*x), "spectral filter")?;
                let plane = h * w;
                let fplane = h * fft::half_width(w);
                let (xd, rd, id) = (self.value(*x).data(), self.value(*re).data(), self.value(*im).data());
                let mut dx = Vec::with_capacity(xd.len());
                let mut dre = vec![0.0; rd.len()];
                let mut dim = vec![0.0; id.len()];
                for bi in 0..b {
                    for ci in 0..c {
                        let off = (bi * c + ci) * plane;
                        let fr = ci * fplane..(ci + 1) * fplane;
                        dx.extend(fft::filter_plane_backward(
                            &xd[off..off + plane],
                            &gd[off..off + plane],
                            &rd[fr.clone()],
                            &id[fr.clone()],
                            h,
                            w,
                            &mut dre[fr.clone()],
                            &mut dim[fr],
                        ));
                    }
                }
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *re, dre);
                self.accumulate(grads, *im, dim);
            }
            Op::SpatialMean(x) => {
                let [_, _, h, w] = shape4(self.value(*x), "spatial mean")?;
                let inv = 1.0 / (h * w) as f64;
                let dx = gd.iter().flat_map(|&v| std::iter::repeat_n(v * inv, h * w)).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Softmax(x) => {
                let last = *self.shape(*x).last().expect("rank >= 1");
                let y = node.value.data();
                let mut dx = vec![0.0; y.len()];
                for ((d, yr), gr) in dx.chunks_exact_mut(last).zip(y.chunks_exact(last)).zip(gd.chunks_exact(last)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for i in 0..last {
                        d[i] = yr[i] * (gr[i] - dot);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = self.shape(*logits)[1];
                let s = gd[0] / labels.len() as f64;
                let mut dl = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    dl[i * k + l] -= 1.0;
                }
                dl.iter_mut().for_each(|v| *v *= s);
                self.accumulate(grads, *logits, dl);
            }
        }
        Ok(())
    }
}
