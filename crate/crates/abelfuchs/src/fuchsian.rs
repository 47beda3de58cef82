//! Explicit trace-free Fuchsian systems on the 4-punctured sphere.
//!
//! Punctures are always normalized to `(z₀, z₁, z₂, z₃) = (∞, 1, 0, m)` and
//! every array in this crate is indexed in that order. The residue matrices
//! `A^u_i`, the Higgs matrices `Ψ_i`, the eigenlines `E_i` and the
//! eigen-sections `s^±` are the closed forms this whole artifact is built
//! around; everything else consumes them.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use thiserror::Error;

pub type CMat2 = Matrix2<Complex64>;
pub type CVec2 = Vector2<Complex64>;

#[derive(Debug, Clone, Error)]
pub enum FuchsianError {
    #[error("weights must satisfy 0 < rho_i < 1/2, got rho_{index} = {value}")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("non-finite input")]
    NonFinite,
    #[error("evaluation at a puncture (z = {0})")]
    AtPuncture(Complex64),
    #[error("inconsistent branch data: {0}")]
    BranchMismatch(&'static str),
    #[error("both section components vanish (divisor point); move the sample point")]
    DivisorPoint,
}

fn cx(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// The four residue eigenvalue magnitudes `ρ_i ∈ (0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    rho: [f64; 4],
}

impl Weights {
    pub fn new(rho: [f64; 4]) -> Result<Self, FuchsianError> {
        for (i, &r) in rho.iter().enumerate() {
            if !(r.is_finite() && r > 0.0 && r < 0.5) {
                return Err(FuchsianError::WeightOutOfRange { index: i, value: r });
            }
        }
        Ok(Weights { rho })
    }

    pub fn rho(&self) -> [f64; 4] {
        self.rho
    }

    pub fn rho_sum(&self) -> f64 {
        self.rho.iter().sum()
    }

    /// `ρ = ρ₀ − ρ₁ − ρ₂ − ρ₃`.
    pub fn rho_defect(&self) -> f64 {
        self.rho[0] - self.rho[1] - self.rho[2] - self.rho[3]
    }

    /// `ρ̂_i = 2ρ_i − 1/2`, the residue eigenvalues on the torus side.
    pub fn rho_hat(&self, i: usize) -> f64 {
        2.0 * self.rho[i] - 0.5
    }
}

/// Parabolic parameter: a point of the moduli line, including `u = ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UPoint {
    Finite(Complex64),
    Infinity,
}

impl UPoint {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            UPoint::Finite(u) => Some(u),
            UPoint::Infinity => None,
        }
    }
}

impl std::fmt::Display for UPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UPoint::Finite(u) => write!(f, "{u}"),
            UPoint::Infinity => write!(f, "inf"),
        }
    }
}

/// Residue matrices `A^u_0..A^u_3` of the λ = 0 system.
///
/// `A^u_1`, `A^u_2` carry the weight data through `ρ = ρ₀−ρ₁−ρ₂−ρ₃`; only
/// `A^u_3` and `A^u_0` depend on `u`. The four matrices sum to zero.
pub fn residue_matrices(weights: &Weights, u: Complex64) -> [CMat2; 4] {
    let [_, r1, r2, r3] = weights.rho();
    let rho = cx(weights.rho_defect());
    let a1 = CMat2::new(-cx(r1) - rho, 2.0 * cx(r1) + rho, -rho, cx(r1) + rho);
    let a2 = CMat2::new(-cx(r2), cx(0.0), rho, cx(r2));
    let a3 = CMat2::new(-cx(r3), 2.0 * cx(r3) * u, cx(0.0), cx(r3));
    let a0 = -(a1 + a2 + a3);
    [a0, a1, a2, a3]
}

/// Higgs matrices `Ψ_0..Ψ_3`; the residue of the Higgs field `Ψ` at `z_i`
/// annihilates the eigenline `E_i`.
#[derive(Debug, Clone)]
pub struct HiggsField {
    psi: [CMat2; 4],
    u: Complex64,
}

impl HiggsField {
    pub fn matrices(&self) -> &[CMat2; 4] {
        &self.psi
    }

    pub fn u(&self) -> Complex64 {
        self.u
    }

    /// dz-coefficient of the Higgs 1-form at `z`.
    pub fn form(&self, z: Complex64, m: Complex64) -> Result<CMat2, FuchsianError> {
        partial_fraction_form(&self.psi, z, m)
    }
}

pub fn higgs_matrices(u: Complex64) -> HiggsField {
    let one = cx(1.0);
    let psi1 = CMat2::new(u, -u, u, -u);
    let psi2 = CMat2::new(cx(0.0), cx(0.0), one - u, cx(0.0));
    let psi3 = CMat2::new(-u, u * u, -one, u);
    let psi0 = -(psi1 + psi2 + psi3);
    HiggsField {
        psi: [psi0, psi1, psi2, psi3],
        u,
    }
}

fn partial_fraction_form(
    res: &[CMat2; 4],
    z: Complex64,
    m: Complex64,
) -> Result<CMat2, FuchsianError> {
    if !z.is_finite() {
        return Err(FuchsianError::NonFinite);
    }
    let tol = 1e-13 * (1.0 + z.norm());
    for p in [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), m] {
        if (z - p).norm() < tol {
            return Err(FuchsianError::AtPuncture(z));
        }
    }
    Ok(res[1] / (z - 1.0) + res[2] / z + res[3] / (z - m))
}

/// The assembled Fuchsian system `∇^{u,λ} = d + Σ (A^u_i + λΨ_i) dz/(z−z_i)`.
#[derive(Debug, Clone)]
pub struct FuchsianSystem {
    weights: Weights,
    m: Complex64,
    u: Complex64,
    lambda: Complex64,
    residues: [CMat2; 4],
}

impl FuchsianSystem {
    pub fn new(weights: Weights, m: Complex64, u: Complex64, lambda: Complex64) -> Self {
        let a = residue_matrices(&weights, u);
        let h = higgs_matrices(u);
        let mut residues = [CMat2::zeros(); 4];
        for i in 0..4 {
            residues[i] = a[i] + h.psi[i] * lambda;
        }
        FuchsianSystem {
            weights,
            m,
            u,
            lambda,
            residues,
        }
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }
    pub fn m(&self) -> Complex64 {
        self.m
    }
    pub fn u(&self) -> Complex64 {
        self.u
    }
    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }
    /// Residues `A_i = A^u_i + λΨ_i` in puncture order `(∞, 1, 0, m)`.
    pub fn residues(&self) -> &[CMat2; 4] {
        &self.residues
    }
    /// Finite punctures `(1, 0, m)` in residue index order `1, 2, 3`.
    pub fn finite_punctures(&self) -> [Complex64; 3] {
        [cx(1.0), cx(0.0), self.m]
    }

    /// dz-coefficient of the connection form at `z`; the residue at ∞ is
    /// the limit of `−z·form`, which equals `A₀` by the sum-zero relation.
    pub fn connection_form(&self, z: Complex64) -> Result<CMat2, FuchsianError> {
        partial_fraction_form(&self.residues, z, self.m)
    }
}

/// Projective point on `CP¹`, stored as a unit-norm representative with the
/// larger-modulus component rotated to the positive real axis.
#[derive(Debug, Clone, Copy)]
pub struct ProjPoint {
    v: CVec2,
}

impl ProjPoint {
    pub fn new(v: CVec2) -> Self {
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        let mut v = v / cx(n);
        let lead = if v[0].norm() >= v[1].norm() { v[0] } else { v[1] };
        let phase = lead / cx(lead.norm());
        v /= phase;
        ProjPoint { v }
    }

    pub fn rep(&self) -> CVec2 {
        self.v
    }

    /// Fubini-Study sine distance, computed as the norm of the component of
    /// `other` orthogonal to `self` (no cancellation near zero).
    pub fn distance(&self, other: &ProjPoint) -> f64 {
        let inner = self.v[0].conj() * other.v[0] + self.v[1].conj() * other.v[1];
        let r0 = other.v[0] - inner * self.v[0];
        let r1 = other.v[1] - inner * self.v[1];
        (r0.norm_sqr() + r1.norm_sqr()).sqrt()
    }

    pub fn approx_eq(&self, other: &ProjPoint, tol: f64) -> bool {
        self.distance(other) <= tol
    }
}

/// Cross-ratio of four points of `CP¹`, normalized so that
/// `(a, b; c, d) = u` for `a=[1:0], b=[1:1], c=[0:1], d=[u:1]`.
pub fn cross_ratio(a: &ProjPoint, b: &ProjPoint, c: &ProjPoint, d: &ProjPoint) -> Complex64 {
    let det = |x: &ProjPoint, y: &ProjPoint| x.v[0] * y.v[1] - x.v[1] * y.v[0];
    (det(d, c) * det(b, a)) / (det(d, a) * det(b, c))
}

/// Eigenlines `E_i` of the positive residue eigenvalues and their
/// cross-ratio (which recovers `u`). Independent of λ because the Higgs
/// residues annihilate the `E_i`.
pub fn eigenlines(u: UPoint) -> ([ProjPoint; 4], Complex64) {
    let one = cx(1.0);
    let zero = cx(0.0);
    let e0 = ProjPoint::new(CVec2::new(one, zero));
    let e1 = ProjPoint::new(CVec2::new(one, one));
    let e2 = ProjPoint::new(CVec2::new(zero, one));
    let e3 = match u {
        UPoint::Finite(u) => ProjPoint::new(CVec2::new(u, one)),
        UPoint::Infinity => ProjPoint::new(CVec2::new(one, zero)),
    };
    let xr = cross_ratio(&e0, &e1, &e2, &e3);
    ([e0, e1, e2, e3], xr)
}

/// Constant `c = u(u−1)(m−u)` in `det Ψ^u = c·(dz)²/(z(z−1)(z−m))`.
pub fn higgs_determinant(u: Complex64, m: Complex64) -> Complex64 {
    u * (u - 1.0) * (m - u)
}

/// Meromorphic eigen-sections `s^±` of the Higgs field at a curve point
/// `(z, y)` for Jacobian parameters `(u, v)`:
///
/// ```text
/// s^± = ( (m−1)·u·z ∓ v·y ,  −u·z + m(−1+u+z) )
/// ```
///
/// Each is an eigenvector of the dz-coefficient `Ψ(z)` of the Higgs form,
/// with `Ψ(z)·s^± = (±v/y)·s^±` in the sign pairing fixed here.
pub fn eigen_sections(
    u: Complex64,
    v: Complex64,
    z: Complex64,
    y: Complex64,
    m: Complex64,
) -> Result<(CVec2, CVec2), FuchsianError> {
    for c in [u, v, z, y, m] {
        if !c.is_finite() {
            return Err(FuchsianError::NonFinite);
        }
    }
    let vv = u * (u - 1.0) * (u - m);
    if (v * v - vv).norm() > 1e-8 * vv.norm().max(1.0) {
        return Err(FuchsianError::BranchMismatch("v^2 != u(u-1)(u-m)"));
    }
    let yy = z * (z - 1.0) * (z - m);
    if (y * y - yy).norm() > 1e-8 * yy.norm().max(1.0) {
        return Err(FuchsianError::BranchMismatch("y^2 != z(z-1)(z-m)"));
    }
    let top = (m - 1.0) * u * z;
    let bottom = -u * z + m * (u + z - 1.0);
    let s_plus = CVec2::new(top - v * y, bottom);
    let s_minus = CVec2::new(top + v * y, bottom);
    let scale = top.norm().max(bottom.norm()).max((v * y).norm()).max(1e-14);
    if s_plus.norm() < 1e-12 * scale && s_minus.norm() < 1e-12 * scale {
        return Err(FuchsianError::DivisorPoint);
    }
    Ok((s_plus, s_minus))
}
