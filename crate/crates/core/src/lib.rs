//! Latent cell complex inference for node classification.
//!
//! The pipeline embeds nodes, samples a sparse graph skeleton with node-wise
//! α-entmax, lifts induced cycles of that skeleton to candidate polygons,
//! samples polygons with a global α-entmax, and runs graph and cell complex
//! convolutions over the resulting regular cell complex. Sampling branches
//! are trained with reward-weighted probability losses; the main branch with
//! cross-entropy.

pub mod complex;
pub mod config;
pub mod data;
pub mod entmax;
pub mod error;
pub mod network;
pub mod nn;
pub mod polygon;
pub mod runner;
pub mod skeleton;
pub mod tensor;
pub mod testing;
pub mod training;
