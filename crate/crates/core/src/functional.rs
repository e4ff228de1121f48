//! Tape-free versions of the tensor-core ops on single (unbatched) inputs.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

pub use crate::kernels::gelu as gelu_scalar;

pub fn gelu(x: &Tensor) -> Tensor {
    x.map(kernels::gelu)
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    kernels::softmax_row(x, &mut out);
    out
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::data(format!("label {label} out of range for {} classes", logits.len())));
    }
    Ok(kernels::log_sum_exp(logits) - logits[label])
}

/// Layer norm over the channel axis of a `d x h x w` grid (or a length-`d` vector).
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone().reshape(&shape)?);
    let g = tape.constant(gain.clone());
    let b = tape.constant(bias.clone());
    let y = tape.layer_norm(xv, g, b, eps)?;
    tape.value(y).clone().reshape(x.shape())
}

/// Grouped "same" convolution of a `c_in x H x W` grid with `c_out x c_in/g x k x k` weights.
pub fn grouped_conv2d(x: &Tensor, weight: &Tensor, groups: usize) -> Result<Tensor> {
    let &[c, h, w] = x.shape() else {
        return Err(Error::shape(format!("expected a c x H x W grid, got {:?}", x.shape())));
    };
    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone().reshape(&[1, c, h, w])?);
    let wv = tape.constant(weight.clone());
    let y = tape.conv2d(xv, wv, groups)?;
    let co = tape.shape(y)[1];
    tape.value(y).clone().reshape(&[co, h, w])
}
