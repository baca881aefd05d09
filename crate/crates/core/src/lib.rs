//! Exact-arithmetic engine for Gaussian integration, genus-labeled Feynman
//! graph expansions, and the quantization of symplectic transformations, in
//! both the finite-dimensional and the truncated loop-space setting.
//!
//! Everything is computed over exact rationals; there is no floating point
//! anywhere in this crate. Identities are verified by evaluating two
//! independent computational routes and asserting bit-exact equality of the
//! results (modulo explicitly documented normalization constants).
//!
//! Module map:
//! - [`rational`], [`matrix`]: exact scalars and dense rational matrices.
//! - [`qseries`]: sparse multivariate polynomials with Laurent coefficients
//!   in `ħ`, the carrier type for potentials and operator symbols.
//! - [`diffop`]: normal-ordered differential operators and their
//!   truncated exponentials.
//! - [`symplectic`]: symplectic matrices, block factorization, quadratic
//!   Hamiltonians.
//! - [`pairings`], [`graphs`], [`feynman`]: Wick moments, genus-labeled
//!   multigraph enumeration with automorphism counting, Feynman amplitudes
//!   and the graph-sum partition function.
//! - [`quantize`]: quantization of quadratic observables and of
//!   finite-dimensional symplectomorphisms, with the commutator cocycle and
//!   the semi-classical transport check.
//! - [`loopspace`]: truncated symplectic loop maps, their quantization, and
//!   the closed-form actions of triangular symplectomorphisms.
//! - [`gw`]: descendent correlators of the point theory, the dilaton shift,
//!   string/dilaton/TRR identities, string and divisor operators.
//! - [`json`]: serialization schemas for every exchange format.

pub mod diffop;
pub mod error;
pub mod feynman;
pub mod graphs;
pub mod gw;
pub mod json;
pub mod loopspace;
pub mod matrix;
pub mod pairings;
pub mod quantize;
pub mod qseries;
pub mod rational;
pub mod symplectic;

pub use error::{CheckStatus, Error, Result};
pub use matrix::RatMat;
pub use rational::Rat;
