//! Multilinear dyadic embedding inequalities on finite dyadic trees.
//!
//! For a kernel `K ≥ 0` on the cubes of a finite b-ary tree, measures
//! `σ₁…σₙ` atomic on its leaves, and exponents `1 < pᵢ < ∞`, the crate
//! studies the least constant `c₁` in
//!
//! ```text
//! Σ_Q K(Q) Πᵢ ∫_Q fᵢ dσᵢ ≤ c₁ Πᵢ ‖fᵢ‖_{L^{pᵢ}(σᵢ)}
//! ```
//!
//! together with the two quantities known to be equivalent to it: the
//! testing constants when `Σ 1/pᵢ ≥ 1` ([`sawyer`]) and the iterated
//! Wolff-potential constants when `Σ 1/pᵢ < 1` ([`wolff`]).
//!
//! * [`tree`]: cubes, measures, leaf functions, kernels, maximal function
//! * [`form`]: the n-linear form, dual functions, regimes
//! * [`extremal`]: coordinate-ascent and brute-force estimates of `c₁`
//! * [`corona`]: principal cubes, stopping parents, Carleson quantities
//! * [`generate`]: seeded random instances
//! * [`harness`]: random instances, sweeps and verification suites

pub mod corona;
pub mod error;
pub mod extremal;
pub mod fixtures;
pub mod form;
pub mod generate;
pub mod harness;
pub mod io;
pub mod sawyer;
pub mod tree;
pub mod wolff;

pub use error::{Error, Result};
pub use form::{dual_function, evaluate_form, regime, Regime};
pub use tree::{dual_exponent, CubeId, DyadicTree, Instance, Kernel, LeafFunction, Measure};
