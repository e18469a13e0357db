//! Precision bounds for multiphase interferometry with and without an
//! external phase reference.
//!
//! The crate covers the full chain from probe to estimator:
//!
//! * [`fock`]: coherent and generalized N00N probes, their fixed-photon-number
//!   layers and number statistics.
//! * [`qfim`]: quantum Fisher information matrices (closed forms plus a
//!   covariance oracle), rank and restriction to relative phases.
//! * [`reparam`]: cost matrices for the common-reference, ring and all-pairs
//!   parametrizations and the scalar Cramér-Rao bound `Tr(R H⁻¹)`.
//! * [`alloc`]: optimal energy allocations, closed-form and numeric.
//! * [`strategies`]: sequential baselines and the simultaneous-vs-sequential
//!   comparison table.
//! * [`measurement`]: Gram-Schmidt projector sets and the classical Fisher
//!   information they induce.
//! * [`mc_sim`]: Monte-Carlo maximum-likelihood check of bound saturation.

pub mod alloc;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod measurement;
pub mod mc_sim;
pub mod qfim;
pub mod reparam;
pub mod strategies;

pub use error::{Error, Result};
pub use num_complex::Complex64;
