//! Gradual domain osmosis laboratory.
//!
//! The crate is layered bottom-up:
//!
//! * [`ndnn`]: dense matrices, a two-block MLP (feature extractor `theta`,
//!   linear head `phi`), the losses used by the adaptation objective and SGD.
//! * [`domains`]: gradually shifting domain sequences and IDX ingestion.
//! * [`gdo`]: pseudo-labelling, the lambda-interpolated self-training
//!   objective and the dual-timescale training loop.
//! * [`baselines`]: source-only training, one-shot self-training and gradual
//!   self-training.
//! * [`theory`]: error tracking, Lyapunov traces and the closed-form bound.
//! * [`harness`]: config parsing, grid execution, aggregation and reports.

pub mod baselines;
pub mod domains;
pub mod error;
pub mod gdo;
pub mod harness;
pub mod ndnn;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
