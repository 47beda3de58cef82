//! Elliptic building blocks on the torus `C/Γ` with `Γ = span(1, τ)`.
//!
//! Everything downstream is built from the odd theta function in the
//! normalization
//!
//! ```text
//! ϑ(0) = 0,   ϑ(w+1) = ϑ(w),   ϑ(w+τ) = −ϑ(w)·e^{−2πiw},
//! ```
//!
//! realized as `ϑ(w) = e^{iπw}·θ₁(w|τ)` with the classical q-series for θ₁
//! (q = e^{iπτ}). The Weierstrass ℘ function is the second logarithmic
//! derivative of ϑ plus the additive constant that kills the constant term
//! of the `1/w²` expansion, so `(℘')² = 4℘³ − g₂℘ − g₃` holds without any
//! separate Eisenstein computation.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

/// Errors from the elliptic kernel.
#[derive(Debug, Clone, Error)]
pub enum EllipticError {
    #[error("lattice parameter must have positive imaginary part, got tau = {0}")]
    InvalidTau(Complex64),
    #[error("non-finite input")]
    NonFinite,
    #[error("evaluation at a lattice point")]
    LatticePoint,
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("branch value m must be finite and avoid 0 and 1, got m = {0}")]
    InvalidBranchValue(Complex64),
    #[error("{what} failed to converge (last iterate {last})")]
    NoConvergence { what: &'static str, last: Complex64 },
}

const THETA_CUTOFF: f64 = 1e-18;
const THETA_MAX_TERMS: usize = 96;

/// The lattice `Γ = Z + Z·τ` with the cached theta data every evaluation needs.
#[derive(Debug, Clone)]
pub struct Lattice {
    tau: Complex64,
    /// ϑ'(0)
    theta_d1_zero: Complex64,
    /// ϑ'''(0)
    theta_d3_zero: Complex64,
    /// additive constant in ℘ = −(log ϑ)'' + c
    wp_const: Complex64,
}

impl Lattice {
    pub fn new(tau: Complex64) -> Result<Self, EllipticError> {
        if !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(EllipticError::NonFinite);
        }
        if tau.im <= 0.0 {
            return Err(EllipticError::InvalidTau(tau));
        }
        let mut lat = Lattice {
            tau,
            theta_d1_zero: Complex64::new(0.0, 0.0),
            theta_d3_zero: Complex64::new(0.0, 0.0),
            wp_const: Complex64::new(0.0, 0.0),
        };
        let at_zero = lat.theta_all(Complex64::new(0.0, 0.0));
        lat.theta_d1_zero = at_zero[1];
        lat.theta_d3_zero = at_zero[3];
        if at_zero[1].norm() < 1e-300 {
            return Err(EllipticError::Degenerate("theta'(0) vanished"));
        }
        // Constant term of (log ϑ₁)'' at 0 is ϑ₁'''(0)/(3ϑ₁'(0)); for our
        // shifted ϑ this becomes ϑ'''(0)/(3ϑ'(0)) + π².
        lat.wp_const = at_zero[3] / (3.0 * at_zero[1]) + PI * PI;
        Ok(lat)
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }

    /// ϑ'(0) in the fixed normalization.
    pub fn theta_prime_zero(&self) -> Complex64 {
        self.theta_d1_zero
    }

    /// Generators `λ₁ = 2πi/(τ−τ̄)`, `λ₂ = λ₁·τ` of the dual lattice Λ.
    pub fn dual_generators(&self) -> (Complex64, Complex64) {
        let l1 = Complex64::new(0.0, 2.0 * PI) / (self.tau - self.tau.conj());
        (l1, l1 * self.tau)
    }

    /// Shortest nonzero period of Λ (over the 8 nearest combinations).
    pub fn dual_min_period(&self) -> f64 {
        let (l1, l2) = self.dual_generators();
        let mut best = f64::INFINITY;
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                if a == 0 && b == 0 {
                    continue;
                }
                best = best.min((l1 * a as f64 + l2 * b as f64).norm());
            }
        }
        best
    }

    /// Shortest nonzero period of Γ.
    pub fn min_period(&self) -> f64 {
        let one = Complex64::new(1.0, 0.0);
        let mut best = f64::INFINITY;
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                if a == 0 && b == 0 {
                    continue;
                }
                best = best.min((one * a as f64 + self.tau * b as f64).norm());
            }
        }
        best
    }

    /// Real cell coordinates: `w = s + t·τ` with `s, t ∈ R`.
    pub fn cell_coords(&self, w: Complex64) -> (f64, f64) {
        let t = w.im / self.tau.im;
        let s = w.re - t * self.tau.re;
        (s, t)
    }

    /// Reduce into the centered fundamental cell; returns `(w₀, a, b)` with
    /// `w = w₀ + a + b·τ` and cell coordinates of `w₀` in `[−1/2, 1/2)`.
    pub fn reduce(&self, w: Complex64) -> (Complex64, i64, i64) {
        let (s, t) = self.cell_coords(w);
        let a = (s + 0.5).floor() as i64;
        let b = (t + 0.5).floor() as i64;
        let w0 = w - Complex64::new(a as f64, 0.0) - self.tau * b as f64;
        (w0, a, b)
    }

    /// Distance from `w` to the nearest lattice point of Γ.
    pub fn dist_to_lattice(&self, w: Complex64) -> f64 {
        let (w0, _, _) = self.reduce(w);
        let mut best = w0.norm();
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                let d = (w0 - Complex64::new(a as f64, 0.0) - self.tau * b as f64).norm();
                best = best.min(d);
            }
        }
        best
    }

    /// θ₁ and its first three derivatives at a cell-reduced argument.
    fn theta1_series(&self, w: Complex64) -> [Complex64; 4] {
        let mut acc = [Complex64::new(0.0, 0.0); 4];
        let i_pi_tau = Complex64::new(0.0, PI) * self.tau;
        let mut scale = 0.0f64;
        let mut small_streak = 0;
        for n in 0..THETA_MAX_TERMS {
            let nf = n as f64;
            let kn = (2.0 * nf + 1.0) * PI;
            let qpow = (i_pi_tau * (nf + 0.5) * (nf + 0.5)).exp();
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let a_n = 2.0 * sign * qpow;
            let (s, c) = {
                let arg = w * kn;
                (arg.sin(), arg.cos())
            };
            acc[0] += a_n * s;
            acc[1] += a_n * kn * c;
            acc[2] -= a_n * kn * kn * s;
            acc[3] -= a_n * kn * kn * kn * c;
            let est = a_n.norm() * (1.0 + kn * kn * kn) * (s.norm() + c.norm() + 1.0);
            scale = scale.max(est);
            if est < THETA_CUTOFF * scale.max(1.0) {
                small_streak += 1;
                if small_streak >= 2 {
                    break;
                }
            } else {
                small_streak = 0;
            }
        }
        acc
    }

    /// ϑ and its first three derivatives at arbitrary `w`, with argument
    /// reduction through the quasi-periodicity factors.
    pub fn theta_all(&self, w: Complex64) -> [Complex64; 4] {
        let (w0, _a, b) = self.reduce(w);
        let t1 = self.theta1_series(w0);
        // ϑ = e^{iπw}·θ₁ at the reduced argument
        let c = Complex64::new(0.0, PI);
        let e = (c * w0).exp();
        let th = [
            e * t1[0],
            e * (t1[1] + c * t1[0]),
            e * (t1[2] + 2.0 * c * t1[1] + c * c * t1[0]),
            e * (t1[3] + 3.0 * c * t1[2] + 3.0 * c * c * t1[1] + c * c * c * t1[0]),
        ];
        if b == 0 {
            return th;
        }
        // ϑ(w₀ + a + bτ) = (−1)^b e^{−2πibw₀ − πib(b−1)τ} ϑ(w₀)
        let bf = b as f64;
        let mu = Complex64::new(0.0, -2.0 * PI * bf);
        let sign = if b.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let g = sign
            * (mu * w0 - Complex64::new(0.0, PI) * bf * (bf - 1.0) * self.tau).exp();
        [
            g * th[0],
            g * (th[1] + mu * th[0]),
            g * (th[2] + 2.0 * mu * th[1] + mu * mu * th[0]),
            g * (th[3] + 3.0 * mu * th[2] + 3.0 * mu * mu * th[1] + mu * mu * mu * th[0]),
        ]
    }

    /// ℘ and ℘′ without input validation (callers guarantee `w ∉ Γ`).
    pub fn wp_all(&self, w: Complex64) -> (Complex64, Complex64) {
        let th = self.theta_all(w);
        let r1 = th[1] / th[0];
        let r2 = th[2] / th[0];
        let r3 = th[3] / th[0];
        let wp = -r2 + r1 * r1 + self.wp_const;
        let wp_d = -r3 + 3.0 * r1 * r2 - 2.0 * r1 * r1 * r1;
        (wp, wp_d)
    }
}

/// Evaluate ϑ or one of its first three derivatives.
pub fn theta_eval(w: Complex64, lattice: &Lattice, order: u8) -> Result<Complex64, EllipticError> {
    if !w.re.is_finite() || !w.im.is_finite() {
        return Err(EllipticError::NonFinite);
    }
    if order > 3 {
        return Err(EllipticError::Degenerate("theta derivative order must be 0..3"));
    }
    Ok(lattice.theta_all(w)[order as usize])
}

/// The section `t_x(w) = ϑ(w−x)/ϑ(w) · e^{(2πi/(τ̄−τ)) x (w−w̄)}`.
///
/// Doubly periodic in `w`, simple zero at `w = x`, simple pole at `w = 0`,
/// and `(∂̄ + (2πi/(τ̄−τ)) x dw̄) t_x = 0`.
pub fn t_section(x: Complex64, w: Complex64, lattice: &Lattice) -> Result<Complex64, EllipticError> {
    for v in [x, w] {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(EllipticError::NonFinite);
        }
    }
    if lattice.dist_to_lattice(x) < 1e-12 {
        return Err(EllipticError::Degenerate("t_x degenerates for x in the lattice"));
    }
    if lattice.dist_to_lattice(w) < 1e-12 {
        return Err(EllipticError::LatticePoint);
    }
    Ok(t_section_raw(x, w, lattice))
}

/// `t_x(w)` without validation; hot path for connection assembly.
pub(crate) fn t_section_raw(x: Complex64, w: Complex64, lattice: &Lattice) -> Complex64 {
    let tau = lattice.tau();
    let factor = (Complex64::new(0.0, 2.0 * PI) / (tau.conj() - tau) * x * (w - w.conj())).exp();
    let num = lattice.theta_all(w - x)[0];
    let den = lattice.theta_all(w)[0];
    num / den * factor
}

/// Residue of `t_x` at its pole `w = 0`, namely `ϑ(−x)/ϑ'(0)`.
pub fn t_section_residue(x: Complex64, lattice: &Lattice) -> Complex64 {
    lattice.theta_all(-x)[0] / lattice.theta_prime_zero()
}

/// Weierstrass ℘ and ℘′.
pub fn wp_eval(w: Complex64, lattice: &Lattice) -> Result<(Complex64, Complex64), EllipticError> {
    if !w.re.is_finite() || !w.im.is_finite() {
        return Err(EllipticError::NonFinite);
    }
    if lattice.dist_to_lattice(w) < 1e-12 {
        return Err(EllipticError::LatticePoint);
    }
    Ok(lattice.wp_all(w))
}

/// Curve data for `y² = z(z−1)(z−m)` presented through the half-period
/// values of ℘ on `C/Γ`.
#[derive(Debug, Clone)]
pub struct CurveData {
    lattice: Lattice,
    half_points: [Complex64; 4],
    /// `p_i = ℘(w_i)` for `i = 1, 2, 3`.
    p: [Complex64; 3],
    m: Complex64,
    sqrt_p12: Complex64,
    g2: Complex64,
    g3: Complex64,
}

impl CurveData {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    /// `w₀ = 0, w₁ = 1/2, w₂ = (1+τ)/2, w₃ = τ/2`.
    pub fn half_points(&self) -> [Complex64; 4] {
        self.half_points
    }
    /// `[p₁, p₂, p₃]`.
    pub fn p(&self) -> [Complex64; 3] {
        self.p
    }
    pub fn m(&self) -> Complex64 {
        self.m
    }
    /// The fixed principal branch of `√(p₁ − p₂)`.
    pub fn sqrt_p12(&self) -> Complex64 {
        self.sqrt_p12
    }
    pub fn g2(&self) -> Complex64 {
        self.g2
    }
    pub fn g3(&self) -> Complex64 {
        self.g3
    }
}

/// Build the curve data from a lattice: `p_i = ℘(w_i)`, the invariants
/// `g₂, g₃`, the branch value `m = (p₃−p₂)/(p₁−p₂)` and the fixed square
/// root of `p₁−p₂`.
pub fn curve_from_tau(lattice: &Lattice) -> Result<CurveData, EllipticError> {
    let tau = lattice.tau();
    let half = Complex64::new(0.5, 0.0);
    let w = [
        Complex64::new(0.0, 0.0),
        half,
        half + tau * 0.5,
        tau * 0.5,
    ];
    let p1 = lattice.wp_all(w[1]).0;
    let p2 = lattice.wp_all(w[2]).0;
    let p3 = lattice.wp_all(w[3]).0;
    for p in [p1, p2, p3] {
        if !p.re.is_finite() || !p.im.is_finite() {
            return Err(EllipticError::NonFinite);
        }
    }
    let scale = p1.norm().max(p2.norm()).max(p3.norm());
    if (p1 + p2 + p3).norm() > 1e-9 * scale.max(1.0) {
        return Err(EllipticError::Degenerate("half-period values do not sum to zero"));
    }
    let g2 = 2.0 * (p1 * p1 + p2 * p2 + p3 * p3);
    let g3 = 4.0 * p1 * p2 * p3;
    let d12 = p1 - p2;
    if d12.norm() < 1e-14 * scale.max(1.0) {
        return Err(EllipticError::Degenerate("p1 = p2"));
    }
    let m = (p3 - p2) / d12;
    if !m.re.is_finite() || !m.im.is_finite() || m.norm() < 1e-12 || (m - 1.0).norm() < 1e-12 {
        return Err(EllipticError::InvalidBranchValue(m));
    }
    Ok(CurveData {
        lattice: lattice.clone(),
        half_points: w,
        p: [p1, p2, p3],
        m,
        sqrt_p12: d12.sqrt(),
        g2,
        g3,
    })
}

/// Complex arithmetic-geometric mean with the standard branch rule
/// (`|a−b| ≤ |a+b|` at every step).
fn agm(a0: Complex64, b0: Complex64) -> Complex64 {
    let mut a = a0;
    let mut b = b0;
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let mut bn = (a * b).sqrt();
        if (an - bn).norm() > (an + bn).norm() {
            bn = -bn;
        }
        a = an;
        b = bn;
        if (a - b).norm() <= 1e-15 * a.norm() {
            break;
        }
    }
    a
}

fn m_of_tau(tau: Complex64) -> Result<Complex64, EllipticError> {
    let lat = Lattice::new(tau)?;
    Ok(curve_from_tau(&lat)?.m())
}

/// Invert `curve_from_tau`: find `τ` with branch value `m`.
///
/// Seeded by the AGM evaluation of the complete elliptic integrals for the
/// modulus `λ = m/(m−1)` and polished by Newton on the roundtrip.
pub fn tau_from_m(m: Complex64) -> Result<Lattice, EllipticError> {
    if !m.re.is_finite() || !m.im.is_finite() {
        return Err(EllipticError::NonFinite);
    }
    if m.norm() < 1e-12 || (m - 1.0).norm() < 1e-12 {
        return Err(EllipticError::InvalidBranchValue(m));
    }
    let lambda = m / (m - 1.0);
    let one = Complex64::new(1.0, 0.0);
    let mut seeds: Vec<Complex64> = Vec::new();
    let k_agm = agm(one, (one - lambda).sqrt());
    let kp_agm = agm(one, lambda.sqrt());
    if k_agm.norm() > 1e-12 && kp_agm.is_finite() {
        let t = Complex64::new(0.0, 1.0) * kp_agm / k_agm;
        if t.im > 1e-3 {
            seeds.push(t);
        }
    }
    // Deterministic fallback seeds covering the interesting region.
    for re in [0.0, 0.5, -0.5, 1.0, -1.0, 0.25, -0.25, 0.75, -0.75] {
        for im in [1.0, 0.5, 2.0, 0.75, 1.5, 3.0] {
            seeds.push(Complex64::new(re, im));
        }
    }
    let target_tol = 1e-12 * m.norm().max(1.0);
    let mut last = seeds[0];
    for &seed in &seeds {
        if let Some(tau) = polish_tau(seed, m, target_tol) {
            return Lattice::new(tau);
        }
        last = seed;
    }
    Err(EllipticError::NoConvergence { what: "tau_from_m", last })
}

fn polish_tau(seed: Complex64, m_target: Complex64, tol: f64) -> Option<Complex64> {
    let mut tau = seed;
    let mut residual = match m_of_tau(tau) {
        Ok(v) => v - m_target,
        Err(_) => return None,
    };
    for _ in 0..40 {
        if residual.norm() <= tol {
            return Some(tau);
        }
        let h = 1e-6 * (1.0 + tau.norm());
        let hp = Complex64::new(h, 0.0);
        let f_plus = m_of_tau(tau + hp).ok()?;
        let f_minus = m_of_tau(tau - hp).ok()?;
        let deriv = (f_plus - f_minus) / (2.0 * h);
        if deriv.norm() < 1e-300 {
            return None;
        }
        let mut step = residual / deriv;
        // Damped update keeping Im τ positive.
        for _ in 0..30 {
            let cand = tau - step;
            if cand.im > 1e-4 {
                if let Ok(mc) = m_of_tau(cand) {
                    let r = mc - m_target;
                    if r.norm() < residual.norm() || r.norm() <= tol {
                        tau = cand;
                        residual = r;
                        break;
                    }
                }
            }
            step *= 0.5;
            if step.norm() < 1e-18 * (1.0 + tau.norm()) {
                return None;
            }
        }
    }
    if residual.norm() <= tol {
        Some(tau)
    } else {
        None
    }
}

/// Coordinates on the curve: `z = (℘−p₂)/(p₁−p₂)`, `y = ℘′/(2·√(p₁−p₂)³)`.
pub fn curve_coords(w: Complex64, curve: &CurveData) -> Result<(Complex64, Complex64), EllipticError> {
    if !w.re.is_finite() || !w.im.is_finite() {
        return Err(EllipticError::NonFinite);
    }
    if curve.lattice.dist_to_lattice(w) < 1e-12 {
        return Err(EllipticError::LatticePoint);
    }
    let (wp, wp_d) = curve.lattice.wp_all(w);
    let s = curve.sqrt_p12;
    let z = (wp - curve.p[1]) / (curve.p[0] - curve.p[1]);
    let y = wp_d / (2.0 * s * s * s);
    Ok((z, y))
}

/// Invert `curve_coords`: find `w` (reduced to the centered cell) with
/// `℘(w) = p₂ + z·(p₁−p₂)` on the sheet selected by the sign of `y`.
pub fn abel_invert(z: Complex64, y: Complex64, curve: &CurveData) -> Result<Complex64, EllipticError> {
    for v in [z, y] {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(EllipticError::NonFinite);
        }
    }
    let m = curve.m();
    let rhs = z * (z - 1.0) * (z - m);
    let scale = rhs.norm().max(1.0);
    if (y * y - rhs).norm() > 1e-8 * scale {
        return Err(EllipticError::Degenerate("(z, y) does not satisfy the curve equation"));
    }
    let lat = &curve.lattice;
    let d12 = curve.p[0] - curve.p[1];
    let p_target = curve.p[1] + z * d12;
    let s = curve.sqrt_p12;
    let wpd_target = 2.0 * s * s * s * y;

    let mut w = seed_for_wp(p_target, curve);

    // Newton on ℘(w) = p, with a square-root local model near the
    // half-periods where ℘' vanishes and plain Newton stalls.
    let p_scale = p_target.norm().max(curve.p[0].norm()).max(1.0);
    let mut converged = false;
    for _ in 0..60 {
        let (wp, wp_d) = lat.wp_all(w);
        let err = wp - p_target;
        if err.norm() <= 1e-13 * p_scale {
            converged = true;
            break;
        }
        if wp_d.norm() > 1e-7 * p_scale {
            let mut step = err / wp_d;
            let max_step = 0.2 * lat.min_period();
            if step.norm() > max_step {
                step *= max_step / step.norm();
            }
            w -= step;
        } else {
            // ℘'' = 6℘² − g₂/2 is nonzero at the half-periods.
            let wpp = 6.0 * wp * wp - curve.g2 / 2.0;
            let h = nearest_half_period(w, curve);
            let ph = lat.wp_all_at_half(h, curve);
            let ds = (2.0 * (p_target - ph) / wpp).sqrt();
            let w_a = h + ds;
            let w_b = h - ds;
            let e_a = (lat.wp_all(w_a).0 - p_target).norm();
            let e_b = (lat.wp_all(w_b).0 - p_target).norm();
            w = if e_a <= e_b { w_a } else { w_b };
        }
        if lat.dist_to_lattice(w) < 1e-9 {
            // Retreat from the pole; the target must have |p| finite.
            w += Complex64::new(1e-6, 1e-6);
        }
    }
    if !converged {
        let (wp, _) = lat.wp_all(w);
        if (wp - p_target).norm() > 1e-8 * p_scale {
            return Err(EllipticError::NoConvergence { what: "abel_invert", last: w });
        }
    }
    // Select the sheet by matching ℘' against the requested y.
    let (_, wp_d) = lat.wp_all(w);
    if (wp_d - wpd_target).norm() > (wp_d + wpd_target).norm() {
        w = -w;
    }
    let (w0, _, _) = lat.reduce(w);
    Ok(w0)
}

impl Lattice {
    fn wp_all_at_half(&self, h: Complex64, curve: &CurveData) -> Complex64 {
        // Return the exact half-period value instead of evaluating at the
        // (near-)stationary point when h matches a known half-period.
        for (i, hp) in curve.half_points.iter().enumerate().skip(1) {
            let (d, _, _) = self.reduce(h - hp);
            if d.norm() < 1e-9 {
                return curve.p[i - 1];
            }
        }
        self.wp_all(h).0
    }
}

/// Representative of the half-period class nearest to `w`.
fn nearest_half_period(w: Complex64, curve: &CurveData) -> Complex64 {
    let lat = curve.lattice();
    let mut best = curve.half_points[1];
    let mut best_d = f64::INFINITY;
    for hp in &curve.half_points[1..] {
        let (d, _, _) = lat.reduce(w - hp);
        if d.norm() < best_d {
            best_d = d.norm();
            best = w - d;
        }
    }
    best
}

fn seed_for_wp(p_target: Complex64, curve: &CurveData) -> Complex64 {
    let lat = curve.lattice();
    // Large |p| means w near the lattice; use the leading 1/w² behavior.
    let p_scale = curve.p[0].norm().max(curve.p[1].norm()).max(curve.p[2].norm());
    if p_target.norm() > 50.0 * p_scale.max(1.0) {
        return Complex64::new(1.0, 0.0) / p_target.sqrt();
    }
    // Near a branch value, seed from the square-root model at that half-period.
    for (i, hp) in curve.half_points.iter().enumerate().skip(1) {
        let pi = curve.p[i - 1];
        if (p_target - pi).norm() < 1e-3 * p_scale.max(1.0) {
            let wpp = 6.0 * pi * pi - curve.g2 / 2.0;
            let ds = (2.0 * (p_target - pi) / wpp).sqrt();
            return hp + ds;
        }
    }
    // Two-stage grid search over the fundamental cell, chordal metric.
    let chord = |a: Complex64, b: Complex64| -> f64 {
        (a - b).norm() / ((1.0 + a.norm_sqr()).sqrt() * (1.0 + b.norm_sqr()).sqrt())
    };
    let eval = |w: Complex64| -> f64 {
        if lat.dist_to_lattice(w) < 0.02 * lat.min_period() {
            return f64::INFINITY;
        }
        chord(lat.wp_all(w).0, p_target)
    };
    let mut best = Complex64::new(0.25, 0.0) + lat.tau() * 0.25;
    let mut best_v = f64::INFINITY;
    let n1 = 24;
    for i in 0..n1 {
        for j in 0..n1 {
            let s = -0.5 + (i as f64 + 0.5) / n1 as f64;
            let t = -0.5 + (j as f64 + 0.5) / n1 as f64;
            let w = Complex64::new(s, 0.0) + lat.tau() * t;
            let v = eval(w);
            if v < best_v {
                best_v = v;
                best = w;
            }
        }
    }
    let coarse = best;
    let h = 1.0 / n1 as f64;
    for i in -4i32..=4 {
        for j in -4i32..=4 {
            let w = coarse
                + Complex64::new(i as f64 * h / 4.0, 0.0)
                + lat.tau() * (j as f64 * h / 4.0);
            let v = eval(w);
            if v < best_v {
                best_v = v;
                best = w;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lat_i() -> Lattice {
        Lattice::new(c(0.0, 1.0)).unwrap()
    }

    fn random_cell_point(lat: &Lattice, rng: &mut impl Rng, min_dist: f64) -> Complex64 {
        loop {
            let s = rng.gen_range(-0.5..0.5);
            let t = rng.gen_range(-0.5..0.5);
            let w = c(s, 0.0) + lat.tau() * t;
            if lat.dist_to_lattice(w) > min_dist {
                return w;
            }
        }
    }

    #[test]
    fn theta_vanishes_at_origin() {
        let lat = lat_i();
        let v = theta_eval(c(0.0, 0.0), &lat, 0).unwrap();
        assert!(v.norm() < 1e-14, "theta(0) = {v}");
    }

    #[test]
    fn theta_quasi_periodicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &tau in &[c(0.0, 1.0), c(0.3, 0.8), c(-0.2, 1.7)] {
            let lat = Lattice::new(tau).unwrap();
            for _ in 0..200 {
                let w = c(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
                let t0 = lat.theta_all(w)[0];
                let t_plus_1 = lat.theta_all(w + 1.0)[0];
                let t_plus_tau = lat.theta_all(w + tau)[0];
                let expected = -t0 * (c(0.0, -2.0 * PI) * w).exp();
                assert!((t_plus_1 - t0).norm() <= 1e-12 * t0.norm().max(1e-3));
                assert!((t_plus_tau - expected).norm() <= 1e-12 * expected.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn theta_rejects_bad_tau() {
        assert!(Lattice::new(c(1.0, -0.5)).is_err());
        assert!(Lattice::new(c(1.0, 0.0)).is_err());
        let lat = lat_i();
        assert!(theta_eval(c(f64::NAN, 0.0), &lat, 0).is_err());
        assert!(theta_eval(c(0.1, 0.1), &lat, 4).is_err());
    }

    #[test]
    fn theta_derivative_consistency() {
        // Finite differences of the series against the returned derivatives.
        let lat = Lattice::new(c(0.25, 1.1)).unwrap();
        let w = c(0.31, 0.17);
        let h = 1e-5;
        for order in 0..3u8 {
            let f_plus = theta_eval(w + h, &lat, order).unwrap();
            let f_minus = theta_eval(w - h, &lat, order).unwrap();
            let fd = (f_plus - f_minus) / (2.0 * h);
            let exact = theta_eval(w, &lat, order + 1).unwrap();
            assert!(
                (fd - exact).norm() <= 1e-6 * exact.norm().max(1.0),
                "order {order}: fd = {fd}, exact = {exact}"
            );
        }
    }

    #[test]
    fn t_section_zero_and_periodicity() {
        let lat = lat_i();
        let x = c(0.3, 0.2);
        assert!(t_section(x, x, &lat).unwrap().norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let w = random_cell_point(&lat, &mut rng, 0.05);
            let t0 = t_section(x, w, &lat).unwrap();
            let t1 = t_section(x, w + 1.0, &lat).unwrap();
            let t2 = t_section(x, w + lat.tau(), &lat).unwrap();
            assert!((t1 - t0).norm() <= 1e-12 * t0.norm().max(1e-6));
            assert!((t2 - t0).norm() <= 1e-12 * t0.norm().max(1e-6));
        }
    }

    #[test]
    fn t_section_dbar_equation() {
        // Central finite differences of the evaluated function.
        let lat = lat_i();
        let x = c(0.3, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-5;
        for _ in 0..25 {
            let w = random_cell_point(&lat, &mut rng, 0.15);
            let f = |w: Complex64| t_section_raw(x, w, &lat);
            let dx = (f(w + h) - f(w - h)) / (2.0 * h);
            let dy = (f(w + c(0.0, h)) - f(w - c(0.0, h))) / (2.0 * h);
            let dbar = 0.5 * (dx + c(0.0, 1.0) * dy);
            let coeff = c(0.0, 2.0 * PI) / (lat.tau().conj() - lat.tau()) * x;
            let residual = (dbar + coeff * f(w)).norm();
            assert!(residual < 1e-6, "dbar residual {residual} at w = {w}");
        }
    }

    #[test]
    fn t_section_rejects_lattice_x() {
        let lat = lat_i();
        assert!(t_section(c(0.0, 0.0), c(0.3, 0.1), &lat).is_err());
        assert!(t_section(c(1.0, 1.0), c(0.3, 0.1), &lat).is_err());
    }

    #[test]
    fn wp_satisfies_ode() {
        let lat = lat_i();
        let curve = curve_from_tau(&lat).unwrap();
        let w = c(0.23, 0.31);
        let (p, pd) = wp_eval(w, &lat).unwrap();
        let lhs = pd * pd;
        let rhs = 4.0 * p * p * p - curve.g2() * p - curve.g3();
        assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn wp_is_even_and_has_double_pole() {
        let lat = lat_i();
        let w = c(0.17, 0.21);
        let (p_plus, _) = wp_eval(w, &lat).unwrap();
        let (p_minus, _) = wp_eval(-w, &lat).unwrap();
        assert!((p_plus - p_minus).norm() <= 1e-11 * p_plus.norm());
        let small = c(1e-3, 0.0);
        let (p, _) = wp_eval(small, &lat).unwrap();
        let lead = 1.0 / (small * small);
        assert!((p - lead).norm() < 1e-2, "wp(1e-3) - 1/w^2 = {}", (p - lead).norm());
    }

    #[test]
    fn wp_ode_random_points_many_lattices() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &tau in &[c(0.0, 1.0), c(0.4, 0.9), c(-0.35, 1.4)] {
            let lat = Lattice::new(tau).unwrap();
            let curve = curve_from_tau(&lat).unwrap();
            for _ in 0..200 {
                let w = random_cell_point(&lat, &mut rng, 0.05);
                let (p, pd) = lat.wp_all(w);
                let lhs = pd * pd;
                let rhs = 4.0 * p * p * p - curve.g2() * p - curve.g3();
                let scale = lhs.norm().max(rhs.norm()).max(1.0);
                assert!((lhs - rhs).norm() <= 1e-10 * scale, "tau {tau} w {w}");
            }
        }
    }

    #[test]
    fn curve_data_square_lattice() {
        let lat = lat_i();
        let curve = curve_from_tau(&lat).unwrap();
        let [p1, p2, p3] = curve.p();
        // Square-lattice symmetry wp(iw) = -wp(w) forces p2 = 0 and m = -1.
        assert!(p2.norm() <= 1e-10 * p1.norm());
        assert!((curve.m() + 1.0).norm() <= 1e-10);
        assert!((p1 + p2 + p3).norm() <= 1e-10 * p1.norm());
        let m_check = (p3 - p2) / (p1 - p2);
        assert!((curve.m() - m_check).norm() <= 1e-14);
        let s = curve.sqrt_p12();
        assert!((s * s - (p1 - p2)).norm() <= 1e-12 * (p1 - p2).norm());
    }

    #[test]
    fn curve_coords_at_half_periods() {
        let lat = Lattice::new(c(0.2, 1.3)).unwrap();
        let curve = curve_from_tau(&lat).unwrap();
        let w = curve.half_points();
        let (z1, y1) = curve_coords(w[1], &curve).unwrap();
        assert!((z1 - 1.0).norm() < 1e-10);
        assert!(y1.norm() < 1e-8);
        let (z2, y2) = curve_coords(w[2], &curve).unwrap();
        assert!(z2.norm() < 1e-10);
        assert!(y2.norm() < 1e-8);
        let (z3, _) = curve_coords(w[3], &curve).unwrap();
        assert!((z3 - curve.m()).norm() < 1e-10 * curve.m().norm().max(1.0));
    }

    #[test]
    fn curve_equation_holds_on_random_points() {
        let lat = Lattice::new(c(0.3, 0.9)).unwrap();
        let curve = curve_from_tau(&lat).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let w = random_cell_point(&lat, &mut rng, 0.05);
            let (z, y) = curve_coords(w, &curve).unwrap();
            let lhs = y * y;
            let rhs = z * (z - 1.0) * (z - curve.m());
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn holomorphic_differential_normalization() {
        // dz/y = 2·sqrt(p1-p2)·dw, checked by finite differences of z along w.
        let lat = Lattice::new(c(0.15, 1.05)).unwrap();
        let curve = curve_from_tau(&lat).unwrap();
        let w = c(0.31, 0.22);
        let h = 1e-6;
        let (z_plus, _) = curve_coords(w + h, &curve).unwrap();
        let (z_minus, _) = curve_coords(w - h, &curve).unwrap();
        let (_, y) = curve_coords(w, &curve).unwrap();
        let dz_dw_over_y = (z_plus - z_minus) / (2.0 * h) / y;
        let expected = 2.0 * curve.sqrt_p12();
        assert!(
            (dz_dw_over_y - expected).norm() <= 1e-6 * expected.norm(),
            "got {dz_dw_over_y}, expected {expected}"
        );
    }

    #[test]
    fn tau_from_m_square_lattice() {
        // m = -1 corresponds to the square lattice up to marking; the
        // roundtrip pins the contract.
        let lat = tau_from_m(c(-1.0, 0.0)).unwrap();
        let curve = curve_from_tau(&lat).unwrap();
        assert!((curve.m() + 1.0).norm() < 1e-10);
        assert!(lat.tau().im > 0.0);
    }

    #[test]
    fn tau_from_m_roundtrip() {
        for &m in &[c(0.3, 0.1), c(2.5, 0.0), c(-0.7, 0.4), c(0.5, -1.2), c(3.0, 2.0)] {
            let lat = tau_from_m(m).unwrap();
            assert!(lat.tau().im > 0.0);
            let curve = curve_from_tau(&lat).unwrap();
            let rel = (curve.m() - m).norm() / m.norm().max(1.0);
            assert!(rel < 1e-10, "roundtrip failed for m = {m}: rel = {rel}");
        }
    }

    #[test]
    fn tau_from_m_rejects_degenerate() {
        assert!(tau_from_m(c(0.0, 0.0)).is_err());
        assert!(tau_from_m(c(1.0, 0.0)).is_err());
        assert!(tau_from_m(c(f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn abel_invert_branch_points() {
        let lat = Lattice::new(c(0.1, 1.2)).unwrap();
        let curve = curve_from_tau(&lat).unwrap();
        let w = curve.half_points();
        let got1 = abel_invert(c(1.0, 0.0), c(0.0, 0.0), &curve).unwrap();
        let (d, _, _) = lat.reduce(got1 - w[1]);
        assert!(d.norm() < 1e-7, "z=1 should invert to w1, got {got1}");
        let got3 = abel_invert(curve.m(), c(0.0, 0.0), &curve).unwrap();
        let (d, _, _) = lat.reduce(got3 - w[3]);
        assert!(d.norm() < 1e-7, "z=m should invert to w3, got {got3}");
    }

    #[test]
    fn abel_invert_roundtrip() {
        let lat = Lattice::new(c(0.2, 1.1)).unwrap();
        let curve = curve_from_tau(&lat).unwrap();
        let w = c(0.37, 0.0) + lat.tau() * 0.21;
        let (z, y) = curve_coords(w, &curve).unwrap();
        let got = abel_invert(z, y, &curve).unwrap();
        let (d, _, _) = lat.reduce(got - w);
        assert!(d.norm() < 1e-8, "roundtrip residual {}", d.norm());
        // And across the sheet: (z, -y) must land on -w.
        let got_neg = abel_invert(z, -y, &curve).unwrap();
        let (d, _, _) = lat.reduce(got_neg + w);
        assert!(d.norm() < 1e-8);
    }

    #[test]
    fn abel_invert_rejects_off_curve() {
        let lat = lat_i();
        let curve = curve_from_tau(&lat).unwrap();
        assert!(abel_invert(c(2.0, 0.0), c(100.0, 0.0), &curve).is_err());
    }

    #[test]
    fn abel_invert_random_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for &tau in &[c(0.0, 1.0), c(0.3, 0.85)] {
            let lat = Lattice::new(tau).unwrap();
            let curve = curve_from_tau(&lat).unwrap();
            for _ in 0..40 {
                let w = random_cell_point(&lat, &mut rng, 0.08);
                let (z, y) = curve_coords(w, &curve).unwrap();
                let got = abel_invert(z, y, &curve).unwrap();
                let (d, _, _) = lat.reduce(got - w);
                assert!(d.norm() < 1e-8, "tau {tau}: residual {} at w {w}", d.norm());
            }
        }
    }
}
