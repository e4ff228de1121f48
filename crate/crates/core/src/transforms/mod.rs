//! Orthonormal Haar filter bank and the 2-D DFT used by the global filter.

pub mod fft;
pub mod haar;

pub use fft::{dft2, idft2, Spectrum};
pub use haar::{dwt2, dwt2_with_bank, idwt2, idwt2_with_bank, DetailBands, DwtConfig, FilterPair, SubbandSet, Wavelet};
