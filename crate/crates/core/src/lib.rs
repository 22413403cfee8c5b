//! Frequency-selective hybrid precoding with limited feedback.
//!
//! The crate covers the whole pipeline: a geometric wideband channel model,
//! hybrid precoder construction and mutual-information evaluation, Grassmannian
//! subspace utilities, Lloyd-type codebook training, greedy RF codeword
//! selection, and a Monte-Carlo sweep driver.

pub mod channel;
pub mod codebook;
pub mod error;
pub mod experiment;
pub mod grassmann;
pub mod greedy;
pub mod linalg;
pub mod lloyd;
pub mod precoder;

pub use error::{Error, Result};
