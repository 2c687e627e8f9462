//! Closed-loop transcription games on mixtures of low-dimensional linear subspaces.
//!
//! The crate covers the whole pipeline: coding-rate objectives
//! ([`rate`]), synthetic subspace data ([`data`]), encoder/decoder game
//! utilities and feasibility maps ([`games`], [`projection`]), alternating
//! gradient training ([`training`]) and equilibrium verification
//! ([`metrics`]).

pub mod data;
pub mod error;
pub mod games;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod projection;
pub mod rate;
pub mod training;

pub use error::{Error, Result};
