//! Parabolic (semi-)stability of the structures induced by `∇^u`.
//!
//! The verdict is the sign of the maximal parabolic degree over the finite
//! family of extremal line subbundles of `O ⊕ O`: constant lines through
//! the eigenlines (degree 0) and the subbundles of degree −1 through three
//! of the four flags. Degree ≤ −2 subbundles always have negative
//! parabolic degree for weights in `(0, 1/2)` and are not enumerated.
//!
//! On the generic stratum `u ∉ {0, 1, m, ∞}` this reproduces the Biswas
//! inequalities; on the four special strata it reproduces the closed-form
//! case analysis (`ρ₂+ρ₃ ≶ ρ₀+ρ₁` at `u=0` and its relabelings, `Σρ ≶ 1`
//! at `u=m`).

use crate::fuchsian::{cross_ratio, eigenlines, ProjPoint, UPoint, Weights};
use nalgebra::{DMatrix, Vector2};
use num_complex::Complex64;

/// Tolerance for detecting the special strata `u ∈ {0, 1, m, ∞}`.
const STRATUM_TOL: f64 = 1e-9;
/// Tolerance for the semistable (max pdeg = 0) boundary.
const PDEG_TOL: f64 = 1e-12;
/// Tolerance for projective coincidence of eigenlines and incidences.
const INCIDENCE_TOL: f64 = 1e-10;

/// A candidate line subbundle: its degree and which flags it passes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineBundleSpec {
    pub degree: i32,
    /// `incidence[i]` is true when the subbundle passes through `E_i` at `z_i`.
    pub incidence: [bool; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    StrictlySemistable,
    Unstable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Stable => "stable",
            Verdict::StrictlySemistable => "strictly_semistable",
            Verdict::Unstable => "unstable",
        };
        f.write_str(s)
    }
}

/// Stability verdict with the witness subbundle achieving the extremal
/// parabolic degree.
#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub witness: LineBundleSpec,
    pub max_pdeg: f64,
}

/// `pdeg L = deg L + Σ γ_i` with `γ_i = ρ_i` on incident flags, `−ρ_i` off.
pub fn parabolic_degree(spec: &LineBundleSpec, weights: &Weights) -> f64 {
    let rho = weights.rho();
    let mut acc = spec.degree as f64;
    for i in 0..4 {
        acc += if spec.incidence[i] { rho[i] } else { -rho[i] };
    }
    acc
}

/// The Biswas inequalities `1 + ρ_{σ(3)} > ρ_{σ(0)}+ρ_{σ(1)}+ρ_{σ(2)} > ρ_{σ(3)}`
/// over all 24 permutations σ.
pub fn biswas_admissible(weights: &Weights) -> bool {
    let rho = weights.rho();
    let mut idx = [0usize, 1, 2, 3];
    permutations(&mut idx, 0, &mut |perm| {
        let lhs = rho[perm[0]] + rho[perm[1]] + rho[perm[2]];
        let last = rho[perm[3]];
        lhs > last && 1.0 + last > lhs
    })
}

fn permutations(idx: &mut [usize; 4], k: usize, check: &mut impl FnMut(&[usize; 4]) -> bool) -> bool {
    if k == 4 {
        return check(idx);
    }
    for i in k..4 {
        idx.swap(k, i);
        let ok = permutations(idx, k + 1, check);
        idx.swap(k, i);
        if !ok {
            return false;
        }
    }
    true
}

/// Classify the parabolic structure induced by `∇^u` for branch value `m`.
///
/// `u` is snapped onto the special strata within an absolute tolerance of
/// 1e−9; callers pass exact strata intentionally.
pub fn classify_parabolic_structure(
    weights: &Weights,
    u: UPoint,
    m: Complex64,
) -> StabilityVerdict {
    let u = snap_stratum(u, m);
    let (lines, _) = eigenlines(u);
    let mut best: Option<(f64, LineBundleSpec)> = None;
    let mut consider = |spec: LineBundleSpec| {
        let pd = parabolic_degree(&spec, weights);
        if best.as_ref().map_or(true, |(b, _)| pd > *b) {
            best = Some((pd, spec));
        }
    };

    // Degree 0: constant lines. The generic line meets no flag; the line
    // through E_j meets every flag whose eigenline coincides with E_j.
    consider(LineBundleSpec {
        degree: 0,
        incidence: [false; 4],
    });
    for j in 0..4 {
        let mut inc = [false; 4];
        for i in 0..4 {
            inc[i] = lines[i].approx_eq(&lines[j], INCIDENCE_TOL);
        }
        consider(LineBundleSpec {
            degree: 0,
            incidence: inc,
        });
    }

    // Degree −1: the subbundle through each triple of flags, with its
    // actual incidence pattern (the fourth flag is hit exactly on the
    // u = m stratum).
    let punctures = [None, Some(Complex64::new(1.0, 0.0)), Some(Complex64::new(0.0, 0.0)), Some(m)];
    for skip in 0..4 {
        let triple: Vec<usize> = (0..4).filter(|&i| i != skip).collect();
        if let Some(inc) = degree_minus_one_incidence(&triple, &punctures, &lines) {
            consider(LineBundleSpec {
                degree: -1,
                incidence: inc,
            });
        }
    }

    let (max_pdeg, witness) = best.expect("candidate set is nonempty");
    let verdict = if max_pdeg > PDEG_TOL {
        Verdict::Unstable
    } else if max_pdeg >= -PDEG_TOL {
        Verdict::StrictlySemistable
    } else {
        Verdict::Stable
    };
    StabilityVerdict {
        verdict,
        witness,
        max_pdeg,
    }
}

fn snap_stratum(u: UPoint, m: Complex64) -> UPoint {
    match u {
        UPoint::Infinity => UPoint::Infinity,
        UPoint::Finite(v) => {
            for target in [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), m] {
                if (v - target).norm() < STRATUM_TOL {
                    return UPoint::Finite(target);
                }
            }
            UPoint::Finite(v)
        }
    }
}

/// Solve for the degree −1 subbundle `z ↦ (az+b, cz+d)` through the three
/// flags in `triple`; returns its actual incidence pattern, or `None` when
/// the solution degenerates (common root, i.e. the saturation has degree 0).
fn degree_minus_one_incidence(
    triple: &[usize],
    punctures: &[Option<Complex64>; 4],
    lines: &[ProjPoint; 4],
) -> Option<[bool; 4]> {
    let zero = Complex64::new(0.0, 0.0);
    let mut rows: Vec<[Complex64; 4]> = Vec::with_capacity(3);
    for &i in triple {
        let e = lines[i].rep();
        match punctures[i] {
            // At z = ∞ the fiber is spanned by the leading coefficients (a, c).
            None => rows.push([e[1], zero, -e[0], zero]),
            Some(z) => rows.push([z * e[1], e[1], -z * e[0], -e[0]]),
        }
    }
    let a = DMatrix::from_fn(3, 4, |i, j| rows[i][j]);
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.as_ref()?;
    // Nullspace vector: the right singular vector of the smallest singular value.
    let mut min_idx = 0;
    let mut min_sv = f64::INFINITY;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s < min_sv {
            min_sv = s;
            min_idx = k;
        }
    }
    // v_t has 4 rows when computed for a 3x4 matrix (thin SVD gives 3);
    // reconstruct the nullspace by completing if needed.
    let coeffs: [Complex64; 4] = if v_t.nrows() == 4 {
        let r = v_t.row(min_idx);
        [r[0].conj(), r[1].conj(), r[2].conj(), r[3].conj()]
    } else {
        // Thin SVD: the nullspace is orthogonal to the rows of v_t.
        nullspace_from_rows(v_t)?
    };
    let [a_c, b_c, c_c, d_c] = coeffs;
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale < 1e-14 {
        return None;
    }
    // Common root of (az+b, cz+d) means the map drops rank: resultant ad−bc.
    if (a_c * d_c - b_c * c_c).norm() < 1e-10 * scale * scale {
        return None;
    }
    let mut inc = [false; 4];
    for i in 0..4 {
        let fiber = match punctures[i] {
            None => Vector2::new(a_c, c_c),
            Some(z) => Vector2::new(a_c * z + b_c, c_c * z + d_c),
        };
        if fiber.norm() < 1e-12 * scale {
            return None;
        }
        inc[i] = ProjPoint::new(fiber).approx_eq(&lines[i], INCIDENCE_TOL);
    }
    Some(inc)
}

fn nullspace_from_rows(v_t: &DMatrix<Complex64>) -> Option<[Complex64; 4]> {
    // v_t is V^H, so the k-th right singular vector has entries
    // conj(v_t[(k, j)]). Project the standard basis onto the orthogonal
    // complement of the spanned rows and keep the largest remainder.
    let mut best: Option<(f64, [Complex64; 4])> = None;
    for e in 0..4 {
        let mut v = [Complex64::new(0.0, 0.0); 4];
        v[e] = Complex64::new(1.0, 0.0);
        for r in 0..v_t.nrows() {
            let mut inner = Complex64::new(0.0, 0.0);
            for j in 0..4 {
                inner += v_t[(r, j)] * v[j];
            }
            for j in 0..4 {
                v[j] -= inner * v_t[(r, j)].conj();
            }
        }
        let n: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if best.as_ref().map_or(true, |(b, _)| n > *b) {
            best = Some((n, v));
        }
    }
    let (n, mut v) = best?;
    if n < 1e-8 {
        return None;
    }
    for c in v.iter_mut() {
        *c /= Complex64::new(n, 0.0);
    }
    Some(v)
}

/// Recover `u` from an eigenline configuration as the cross-ratio of the
/// four lines (diagnostic helper; returns the stored cross-ratio formula).
pub fn u_from_lines(lines: &[ProjPoint; 4]) -> Complex64 {
    cross_ratio(&lines[0], &lines[1], &lines[2], &lines[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(rho: [f64; 4]) -> Weights {
        Weights::new(rho).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn parabolic_degree_examples() {
        let weights = w([0.3, 0.25, 0.2, 0.15]);
        // Degree 0, incidence only at i = 3.
        let spec = LineBundleSpec {
            degree: 0,
            incidence: [false, false, false, true],
        };
        let expect = 0.15 - 0.3 - 0.25 - 0.2;
        assert!((parabolic_degree(&spec, &weights) - expect).abs() < 1e-15);
        // Degree −1 through all four flags.
        let spec = LineBundleSpec {
            degree: -1,
            incidence: [true; 4],
        };
        assert!((parabolic_degree(&spec, &weights) - (-1.0 + 0.9)).abs() < 1e-15);
    }

    #[test]
    fn degree_minus_two_always_negative() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let weights = w([
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
            ]);
            let inc = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
            let spec = LineBundleSpec {
                degree: -2,
                incidence: inc,
            };
            assert!(parabolic_degree(&spec, &weights) < 0.0);
        }
    }

    #[test]
    fn biswas_examples() {
        assert!(biswas_admissible(&w([0.25, 0.25, 0.25, 0.25])));
        assert!(!biswas_admissible(&w([0.45, 0.45, 0.45, 0.05])));
        assert!(biswas_admissible(&w([0.1, 0.1, 0.1, 0.1])));
    }

    #[test]
    fn biswas_against_reduced_form() {
        // The 24 inequalities collapse to 2·max ρ < Σρ < 1 + 2·min ρ.
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let rho = [
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
            ];
            let weights = w(rho);
            let s: f64 = rho.iter().sum();
            let mx = rho.iter().cloned().fold(f64::MIN, f64::max);
            let mn = rho.iter().cloned().fold(f64::MAX, f64::min);
            let reduced = 2.0 * mx < s && s < 1.0 + 2.0 * mn;
            assert_eq!(biswas_admissible(&weights), reduced, "rho = {rho:?}");
        }
    }

    #[test]
    fn classify_special_strata_examples() {
        let m = c(2.5, 0.0);
        // u = 0: stable since ρ₂+ρ₃ = 0.3 < 0.6 = ρ₀+ρ₁.
        let v = classify_parabolic_structure(&w([0.3, 0.3, 0.2, 0.1]), UPoint::Finite(c(0.0, 0.0)), m);
        assert_eq!(v.verdict, Verdict::Stable);
        // Σρ = 1 at u = m: strictly semistable, witness of degree −1
        // through all four flags.
        let v = classify_parabolic_structure(&w([0.25, 0.25, 0.25, 0.25]), UPoint::Finite(m), m);
        assert_eq!(v.verdict, Verdict::StrictlySemistable);
        assert_eq!(v.witness.degree, -1);
        assert_eq!(v.witness.incidence, [true; 4]);
        // Biswas-true weights at generic complex u: stable.
        let v = classify_parabolic_structure(
            &w([0.3, 0.25, 0.2, 0.15]),
            UPoint::Finite(c(0.4, 0.2)),
            m,
        );
        assert_eq!(v.verdict, Verdict::Stable);
    }

    #[test]
    fn classify_generic_matches_biswas() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = c(2.5, 0.0);
        for _ in 0..200 {
            let rho = [
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
                rng.gen_range(0.01..0.49),
            ];
            let weights = w(rho);
            let u = c(rng.gen_range(-2.0..2.0), rng.gen_range(0.1..2.0));
            let verdict = classify_parabolic_structure(&weights, UPoint::Finite(u), m);
            if biswas_admissible(&weights) {
                assert_eq!(verdict.verdict, Verdict::Stable, "rho = {rho:?}, u = {u}");
            } else {
                assert!(
                    verdict.max_pdeg >= -PDEG_TOL,
                    "biswas-false weights must have a witness with pdeg >= 0; rho = {rho:?}"
                );
            }
        }
    }

    #[test]
    fn classify_special_strata_closed_forms() {
        // The four special strata agree with the closed-form inequalities
        // when the Biswas side conditions hold.
        let m = c(2.5, 0.0);
        let cases: [(UPoint, fn(&[f64; 4]) -> f64); 4] = [
            (UPoint::Finite(c(0.0, 0.0)), |r| r[2] + r[3] - r[0] - r[1]),
            (UPoint::Finite(c(1.0, 0.0)), |r| r[1] + r[3] - r[0] - r[2]),
            (UPoint::Infinity, |r| r[0] + r[3] - r[1] - r[2]),
            (UPoint::Finite(c(2.5, 0.0)), |r| r.iter().sum::<f64>() - 1.0),
        ];
        let weight_sets = [
            [0.3, 0.25, 0.2, 0.15],
            [0.25, 0.25, 0.25, 0.25],
            [0.2, 0.3, 0.25, 0.22],
            [0.35, 0.3, 0.3, 0.3],
            [0.45, 0.3, 0.2, 0.1],
        ];
        for rho in weight_sets {
            let weights = w(rho);
            if !biswas_admissible(&weights) {
                continue;
            }
            for (u, gap) in cases {
                let verdict = classify_parabolic_structure(&weights, u, m);
                let g = gap(&rho);
                if g < -PDEG_TOL {
                    assert_eq!(verdict.verdict, Verdict::Stable, "rho {rho:?} u {u}");
                } else if g > PDEG_TOL {
                    assert_eq!(verdict.verdict, Verdict::Unstable, "rho {rho:?} u {u}");
                } else {
                    assert_eq!(verdict.verdict, Verdict::StrictlySemistable, "rho {rho:?} u {u}");
                }
            }
        }
    }

    #[test]
    fn verdict_constant_under_generic_perturbation() {
        let m = c(2.0, 1.0);
        let weights = w([0.3, 0.25, 0.2, 0.15]);
        let u0 = c(0.37, 0.45);
        let base = classify_parabolic_structure(&weights, UPoint::Finite(u0), m);
        for delta in [c(1e-5, 0.0), c(0.0, 1e-5), c(-2e-5, 1e-5)] {
            let v = classify_parabolic_structure(&weights, UPoint::Finite(u0 + delta), m);
            assert_eq!(v.verdict, base.verdict);
        }
    }
}
