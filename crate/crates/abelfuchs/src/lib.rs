//! Rank-2 Fuchsian systems on the 4-punctured sphere, abelianized.
//!
//! This crate assembles the explicit trace-free Fuchsian systems with
//! prescribed residue eigenvalues `±ρ_i`, decides parabolic stability,
//! computes monodromy by adaptive ODE integration, abelianizes the systems
//! to flat line-bundle connections `d + α dw − ξ dw̄` (plus second
//! fundamental forms) on the double-cover torus, solves numerically for the
//! unitarizing section `ξ ↦ α(ξ)` over the Jacobian, and integrates the
//! resulting Kähler density to verify the closed-form symplectic volume
//! `2π²(1 − Σμ_i)` of the moduli space of unitary flat connections.
//!
//! Entry points, bottom up:
//!
//! - [`elliptic`]: theta function, Weierstrass ℘, the τ ↔ m correspondence,
//!   and inversion of the Abel map.
//! - [`fuchsian`]: the explicit residue matrices, Higgs fields, eigenlines.
//! - [`stability`]: parabolic degrees and the stability classification.
//! - [`monodromy`]: parallel transport, monodromy generators, invariant
//!   Hermitian forms.
//! - [`abelian`]: the coordinate chain `u ↔ (z, y) ↔ x ↔ ξ`, the β
//!   coefficients, spin points.
//! - [`ms`]: the unitarizing section solver and its grid continuation.
//! - [`volume`]: Kähler density quadrature against the closed form.
//! - [`cli`]: batch front end used by the `abelfuchs` binary.
//!
//! Each major capability also has a runnable example under `examples/`.

pub mod abelian;
pub mod numerics;
pub mod cli;
pub mod config;
pub mod constants;
pub mod elliptic;
pub mod fuchsian;
pub mod monodromy;
pub mod ms;
pub mod report;
pub mod selftest;
pub mod stability;
pub mod volume;

pub use num_complex::Complex64;
