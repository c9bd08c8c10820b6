//! Jump-based feedback for open quantum systems.
//!
//! A monitored system whose Hamiltonian and jump operators depend on the
//! channel of the most recently detected quantum jump evolves, together with
//! that one-symbol memory, under an ordinary Lindblad generator on the
//! system-memory space. This crate builds that generator from a
//! [`FeedbackModel`], evolves it, and computes the full counting statistics
//! (current, noise, correlations, power spectrum) of arbitrary counting
//! observables. A Monte Carlo trajectory sampler provides an independent
//! check of every deterministic prediction.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod fcs;
pub mod feedback;
pub mod hybrid;
pub mod models;
pub mod ops;
pub mod trajectories;

pub use error::{Error, Result};
pub use fcs::CountingWeights;
pub use feedback::{ChannelId, FeedbackModel, WisemanModel};
pub use hybrid::{ExtendedGenerator, HybridState};
pub use ops::{Operator, Superoperator};

pub use num_complex::Complex64;
