//! Spectral compressibility analysis and compression-based generalization
//! bounds for bias-free feed-forward ReLU networks.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundcalc;
pub mod compressor;
pub mod error;
pub mod linalg;
pub mod netfwd;
pub mod rng;
pub mod spectra;
pub mod synth;
pub mod tensor_store;

pub use error::{Error, Result};
