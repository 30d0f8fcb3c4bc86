//! Lazy-regime two-layer ReLU networks and the gradient attacks that break them.
//!
//! The crate is `no_std` (it needs `alloc`). It covers:
//!
//! * [`linalg`] and [`rng`]: dense vector helpers, column-major matrices,
//!   ℓ₂-ball projection and seeded sampling;
//! * [`network`]: `f(x) = m^{-1/2} Σ a_s relu(w_sᵀx)` with a frozen sign layer,
//!   its input and weight gradients, and the `‖W − W₀‖₂,∞` geometry;
//! * [`data`] and [`idx`]: IDX decoding, image-set transforms (0/1 extraction, area downsampling,
//!   sphere normalisation) and a synthetic two-class sphere generator;
//! * [`training`]: lazy SGD with revert-on-exit and projected adversarial
//!   training;
//! * [`attacks`]: single-step gradient attack, minimal step search, ℓ₂ PGD;
//! * [`theory`]: closed-form concentration bounds and the probes that test
//!   them against sampled networks.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod attacks;
pub mod data;
mod error;
pub mod idx;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use network::{LazyBudget, NetworkParams};
pub use rng::Rng;
