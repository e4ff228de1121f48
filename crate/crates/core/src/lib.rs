//! Multiscale wavelet token mixing for vision transformers.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`], [`autodiff`], [`functional`]: dense `f64` arrays, the
//!   differentiable op set and a reverse-mode tape.
//! - [`transforms`]: orthonormal Haar filter bank and the 2-D DFT.
//! - [`mixers`]: the wavelet mixer (MWA) and the self-attention and
//!   global-filter baselines.
//! - [`backbone`]: the ViT classifier, parameter/FLOP accounting and checkpoints.
//! - [`data`]: CIFAR binary ingestion and synthetic datasets.
//! - [`training`]: Adam with decoupled weight decay, warmup + cosine
//!   schedule, clipping and the fit loop.
//! - [`config`], [`report`], [`verify`]: run configuration, reports and the
//!   invariant suite behind the command line.

pub mod autodiff;
pub mod backbone;
pub mod config;
pub mod cost;
pub mod data;
pub mod error;
pub mod functional;
pub mod gradcheck;
pub mod kernels;
pub mod linalg;
pub mod mixers;
pub mod params;
pub mod report;
pub mod tensor;
pub mod training;
pub mod transforms;
pub mod verify;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::{DiffTensor, Tensor};
