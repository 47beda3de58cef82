//! Frozen numeric conventions.
//!
//! These constants pin the sign and orientation choices the formulas leave
//! free. Each was calibrated once against an independent numeric check and
//! is asserted by the test suite; changing any of them is a breaking change.

/// Sign pairing between the Higgs eigenvalue branch `+v` and the abelian
/// coordinate `α`: `dα/dλ = HIGGS_SLOPE_SIGN · 2 · v · √(p₁−p₂)`.
/// Calibrated by matching torus cycle traces against sphere traces under a
/// λ-perturbation at a solved unitarizing point.
pub const HIGGS_SLOPE_SIGN: f64 = 1.0;

/// Orientation factor of the volume quadrature, fixed by requiring the
/// all-weights-equal (constant density) case to integrate to `+2π²`.
pub const VOLUME_ORIENTATION: f64 = 1.0;

/// Spin-exclusion radius as a fraction of the shortest period of the dual
/// lattice Λ; inputs closer than this to a half-period class of Λ are
/// rejected rather than extrapolated.
pub const SPIN_EXCLUSION_FACTOR: f64 = 0.02;

/// Default relative tolerance of the adaptive parallel transport.
pub const DEFAULT_RTOL: f64 = 1e-11;

/// Residual threshold below which a monodromy representation with a
/// positive-definite invariant form is declared unitarizable.
pub const UNITARIZABLE_RESIDUAL: f64 = 1e-6;
