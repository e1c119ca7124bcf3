//! Numerical engine for σ-finite conformal measures, spectral radii and
//! harmonic functions of group extensions over finite topological Markov
//! chains.
//!
//! The pipeline is: [`shift`] and [`potential`] describe the base chain,
//! [`group`] and [`extension`] the skew product, [`transfer`] computes the
//! return partition functions Z^n and the spectral radius, [`patterson`]
//! builds the conformal measure, [`harmonic`] the kernel and harmonic
//! functions, and [`dimension`] the pressure root δ. [`oracles`] holds the
//! closed forms for the Polya and free-group walks.

pub mod config;
pub mod dimension;
pub mod error;
pub mod extension;
pub mod fit;
pub mod group;
pub mod harmonic;
pub mod oracles;
pub mod output;
pub mod patterson;
pub mod potential;
pub mod shift;
pub mod transfer;
pub mod validate;

pub use error::{Error, Result};
