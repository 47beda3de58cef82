//! The unitarizing section over the Jacobian: for every line-bundle
//! parameter ξ away from the spin points there is a unique α(ξ) making the
//! torus connection's monodromy unitarizable. We find it by Newton
//! iteration on the two real trace conditions `Im tr M_A = Im tr M_B = 0`,
//! certify with the invariant Hermitian form, and continue over a grid in
//! a fixed spiral order so the artifact is reproducible.

use crate::abelian::{
    gamma_point, spin_distance, spin_exclusion_radius, spin_mu, u_to_xi, xi_to_u,
    AbelError, AbelianConnection, Sign, SpinClass,
};
use crate::constants::UNITARIZABLE_RESIDUAL;
use crate::elliptic::CurveData;
use crate::fuchsian::{FuchsianSystem, UPoint, Weights};
use crate::monodromy::{
    invariant_hermitian_form, is_irreducible, parallel_transport, sphere_loops, torus_loops,
    unitarizability_residual, Definiteness, HermitianForm, LoopSpec, MonodromyRep, SphereField,
    TorusField, TorusLoops, TransportError,
};
use crate::stability::{classify_parabolic_structure, Verdict};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum MsError {
    #[error(transparent)]
    Abel(#[from] AbelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("anchor sample failed to converge (xi = {0})")]
    AnchorFailure(Complex64),
    #[error("grid size must be at least 8, got {0}")]
    GridTooSmall(usize),
    #[error("parabolic structure is not stable at u = {0}; no unitarizing connection")]
    NotStable(Complex64),
    #[error("sphere-side Newton failed from every seed (u = {0})")]
    SphereSolveFailed(Complex64),
}

/// Solver knobs; the defaults match the reported tolerances.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative tolerance of the parallel transport.
    pub rtol: f64,
    /// Newton target on (Im tr M_A, Im tr M_B).
    pub newton_tol: f64,
    pub max_iterations: usize,
    /// Run the Hermitian-form certification after Newton.
    pub certify: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rtol: 1e-10,
            newton_tol: 1e-9,
            max_iterations: 30,
            certify: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStatus {
    /// Real traces, positive-definite invariant form.
    Converged,
    /// Newton found real traces but the invariant form is not definite
    /// (an SL(2,R)-type branch); never silently accepted.
    RealTraceIndefinite,
    Diverged,
    Excluded,
}

impl std::fmt::Display for SampleStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SampleStatus::Converged => "converged",
            SampleStatus::RealTraceIndefinite => "real-trace-indefinite",
            SampleStatus::Diverged => "diverged",
            SampleStatus::Excluded => "excluded",
        };
        f.write_str(s)
    }
}

/// One solved point of the section.
#[derive(Debug, Clone)]
pub struct MSSample {
    pub xi: Complex64,
    pub alpha: Complex64,
    pub residual: f64,
    pub witness: Option<HermitianForm>,
    pub status: SampleStatus,
}

impl MSSample {
    pub fn converged(&self) -> bool {
        self.status == SampleStatus::Converged
    }

    fn excluded(xi: Complex64) -> Self {
        MSSample {
            xi,
            alpha: Complex64::new(0.0, 0.0),
            residual: f64::INFINITY,
            witness: None,
            status: SampleStatus::Excluded,
        }
    }
}

/// Reproducibility metadata recorded with every grid.
#[derive(Debug, Clone)]
pub struct GridMetadata {
    pub torus_base_point: Complex64,
    pub rtol: f64,
    pub newton_tol: f64,
    pub exclusion_radius: f64,
    pub spin_exclusion_radius: f64,
    pub higgs_slope_sign: f64,
    pub volume_orientation: f64,
    pub continuation: &'static str,
}

/// The section sampled over one fundamental cell of Λ on the offset grid
/// `ξ_{jk} = ((j+1/2)/N)·λ₁ + ((k+1/2)/N)·λ₂`.
#[derive(Debug, Clone)]
pub struct MSGrid {
    pub weights: Weights,
    pub curve: CurveData,
    pub n: usize,
    pub exclusion_radius: f64,
    /// Row-major: `samples[k * n + j]`.
    pub samples: Vec<MSSample>,
    pub metadata: GridMetadata,
}

impl MSGrid {
    pub fn sample(&self, j: usize, k: usize) -> &MSSample {
        &self.samples[k * self.n + j]
    }

    pub fn xi_at(&self, j: usize, k: usize) -> Complex64 {
        let (l1, l2) = self.curve.lattice().dual_generators();
        let n = self.n as f64;
        l1 * ((j as f64 + 0.5) / n) + l2 * ((k as f64 + 0.5) / n)
    }

    /// Fraction of non-excluded samples that converged.
    pub fn convergence_fraction(&self) -> f64 {
        let mut total = 0usize;
        let mut good = 0usize;
        for s in &self.samples {
            if s.status != SampleStatus::Excluded {
                total += 1;
                if s.converged() {
                    good += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            good as f64 / total as f64
        }
    }
}

/// Seed for the Newton solve from the known pole structure of the section:
///
/// ```text
/// (Σμ)ξ + (1−Σμ)ξ̄ + Σ_i (μ_i/2)·[ϑ'/ϑ(x−w_i) − ϑ'/ϑ(−x−w_i)],  x = (τ−τ̄)ξ/(2πi)
/// ```
///
/// (the doubly periodic remainder is dropped). Odd in ξ, with the exact
/// first-order pole `(2πi/(τ−τ̄))·μ_γ/(ξ−γ)` at every spin point.
pub fn seed_from_spin_expansion(
    weights: &Weights,
    curve: &CurveData,
    xi: Complex64,
) -> Result<Complex64, AbelError> {
    let lat = curve.lattice();
    let radius = spin_exclusion_radius(lat);
    let (dist, _) = spin_distance(xi, lat);
    if dist < radius {
        return Err(AbelError::SpinProximity { dist, radius });
    }
    let (l1, _) = lat.dual_generators();
    let x = xi / l1;
    let mus: Vec<f64> = SpinClass::ALL
        .iter()
        .map(|&c| spin_mu(weights, c).mu)
        .collect();
    let mu_sum: f64 = mus.iter().sum();
    let log_d = |w: Complex64| {
        let th = lat.theta_all(w);
        th[1] / th[0]
    };
    let mut acc = xi * mu_sum + xi.conj() * (1.0 - mu_sum);
    let w_pts = curve.half_points();
    for i in 0..4 {
        if mus[i] == 0.0 {
            continue;
        }
        acc += 0.5 * mus[i] * (log_d(x - w_pts[i]) - log_d(-x - w_pts[i]));
    }
    Ok(acc)
}

/// Reusable per-curve state of the torus Newton solver.
pub struct MsContext {
    loops: TorusLoops,
}

impl MsContext {
    pub fn new(curve: &CurveData) -> Result<Self, TransportError> {
        Ok(MsContext {
            loops: torus_loops(curve.lattice())?,
        })
    }

    pub fn base_point(&self) -> Complex64 {
        self.loops.base_point
    }

    fn cycle_traces(
        &self,
        conn: &AbelianConnection,
        rtol: f64,
    ) -> Result<(Complex64, Complex64), TransportError> {
        let field = TorusField(conn);
        let a = parallel_transport(&field, &self.loops.cycle_a.segments, rtol)?;
        let b = parallel_transport(&field, &self.loops.cycle_b.segments, rtol)?;
        Ok((a.trace(), b.trace()))
    }

    /// Imaginary parts of the character data used by the solver: the two
    /// cycle traces and the product trace. Real traces of A, B and AB pin
    /// a real character, which separates the unitary sheet from the
    /// spurious real-trace branches nearby.
    fn trace_residuals(
        &self,
        conn: &AbelianConnection,
        rtol: f64,
    ) -> Result<Vec<f64>, TransportError> {
        let field = TorusField(conn);
        let a = parallel_transport(&field, &self.loops.cycle_a.segments, rtol)?;
        let b = parallel_transport(&field, &self.loops.cycle_b.segments, rtol)?;
        Ok(vec![
            a.trace().im,
            b.trace().im,
            (b * a).trace().im,
        ])
    }

    /// Full generator set (cycles plus puncture loops) at the given α.
    pub fn monodromy(
        &self,
        conn: &AbelianConnection,
        rtol: f64,
    ) -> Result<MonodromyRep, TransportError> {
        let field = TorusField(conn);
        let mut labels = vec!["A".to_string(), "B".to_string()];
        let mut generators = vec![
            parallel_transport(&field, &self.loops.cycle_a.segments, rtol)?,
            parallel_transport(&field, &self.loops.cycle_b.segments, rtol)?,
        ];
        for (i, spec) in self.loops.punctures.iter().enumerate() {
            labels.push(format!("N{i}"));
            generators.push(parallel_transport(&field, &spec.segments, rtol)?);
        }
        Ok(MonodromyRep {
            labels,
            generators,
            base_point: self.loops.base_point,
            integration_rtol: rtol,
            product_order: None,
            product_defect: None,
        })
    }
}

/// Newton-solve the unitarizing α at one ξ, then certify.
pub fn solve_alpha_ms(
    weights: &Weights,
    curve: &CurveData,
    xi: Complex64,
    seed: Complex64,
    options: &SolveOptions,
) -> Result<MSSample, MsError> {
    let ctx = MsContext::new(curve)?;
    solve_alpha_ms_in(&ctx, weights, curve, xi, seed, options)
}

/// Damped Gauss–Newton over one complex unknown with a residual vector;
/// step length capped to keep the iteration on the seeded sheet.
fn gauss_newton(
    eval: &dyn Fn(Complex64) -> Result<Vec<f64>, TransportError>,
    seed: Complex64,
    tol: f64,
    max_iterations: usize,
    step_cap: f64,
) -> Result<(Complex64, f64, bool), TransportError> {
    let norm = |f: &[f64]| f.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut alpha = seed;
    let mut f = eval(alpha)?;
    if norm(&f) < tol {
        return Ok((alpha, norm(&f), true));
    }
    for _ in 0..max_iterations {
        let h = 1e-6 * alpha.norm().max(1.0);
        let fx_p = eval(alpha + h)?;
        let fx_m = eval(alpha - h)?;
        let fy_p = eval(alpha + Complex64::new(0.0, h))?;
        let fy_m = eval(alpha - Complex64::new(0.0, h))?;
        // Normal equations for the 2-column Jacobian.
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..f.len() {
            let jx = (fx_p[i] - fx_m[i]) / (2.0 * h);
            let jy = (fy_p[i] - fy_m[i]) / (2.0 * h);
            a11 += jx * jx;
            a12 += jx * jy;
            a22 += jy * jy;
            b1 += jx * f[i];
            b2 += jy * f[i];
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-300 {
            break;
        }
        let dx = (b1 * a22 - b2 * a12) / det;
        let dy = (a11 * b2 - a12 * b1) / det;
        let mut step = Complex64::new(dx, dy);
        if step.norm() > step_cap {
            step *= step_cap / step.norm();
        }
        let mut accepted = false;
        for _ in 0..8 {
            let cand = alpha - step;
            let fc = eval(cand)?;
            if norm(&fc) < norm(&f) {
                alpha = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if norm(&f) < tol {
            return Ok((alpha, norm(&f), true));
        }
    }
    let r = norm(&f);
    Ok((alpha, r, r < tol))
}

fn solve_alpha_ms_in(
    ctx: &MsContext,
    weights: &Weights,
    curve: &CurveData,
    xi: Complex64,
    seed: Complex64,
    options: &SolveOptions,
) -> Result<MSSample, MsError> {
    let conn0 = AbelianConnection::new(curve, weights, xi, seed)?;
    let eval = |alpha: Complex64| -> Result<Vec<f64>, TransportError> {
        ctx.trace_residuals(&conn0.with_alpha(alpha), options.rtol)
    };
    let step_cap = 0.2 * curve.lattice().dual_min_period();
    let (alpha, res, converged_newton) = gauss_newton(
        &eval,
        seed,
        options.newton_tol,
        options.max_iterations,
        step_cap,
    )?;
    if !converged_newton {
        return Ok(MSSample {
            xi,
            alpha,
            residual: res,
            witness: None,
            status: SampleStatus::Diverged,
        });
    }
    if !options.certify {
        return Ok(MSSample {
            xi,
            alpha,
            residual: res,
            witness: None,
            status: SampleStatus::Converged,
        });
    }
    let rep = ctx.monodromy(&conn0.with_alpha(alpha), options.rtol)?;
    let residual = unitarizability_residual(&rep);
    let witness = invariant_hermitian_form(&rep);
    let definite = witness
        .as_ref()
        .map(|w| w.definiteness == Definiteness::Positive)
        .unwrap_or(false);
    let status = if residual < UNITARIZABLE_RESIDUAL && definite {
        SampleStatus::Converged
    } else {
        SampleStatus::RealTraceIndefinite
    };
    Ok(MSSample {
        xi,
        alpha,
        residual,
        witness,
        status,
    })
}

/// Solve the section over the offset grid, spiral continuation from an
/// interior anchor; each sample is seeded from its nearest solved
/// neighbor corrected by the pole predictor, the anchor from the spin
/// expansion alone. Deterministic for fixed inputs; rings are solved in
/// parallel but seeds only ever come from earlier rings.
pub fn ms_grid(
    weights: &Weights,
    curve: &CurveData,
    n: usize,
    exclusion_radius: f64,
    options: &SolveOptions,
) -> Result<MSGrid, MsError> {
    if n < 8 {
        return Err(MsError::GridTooSmall(n));
    }
    let ctx = MsContext::new(curve)?;
    let lat = curve.lattice();
    let (l1, l2) = lat.dual_generators();
    let spin_radius = spin_exclusion_radius(lat);
    let effective_radius = exclusion_radius.max(spin_radius);
    let xi_at = |j: usize, k: usize| -> Complex64 {
        l1 * ((j as f64 + 0.5) / n as f64) + l2 * ((k as f64 + 0.5) / n as f64)
    };

    let mut samples: Vec<Option<MSSample>> = vec![None; n * n];
    let mut excluded = vec![false; n * n];
    for k in 0..n {
        for j in 0..n {
            let xi = xi_at(j, k);
            if spin_distance(xi, lat).0 < effective_radius {
                excluded[k * n + j] = true;
                samples[k * n + j] = Some(MSSample::excluded(xi));
            }
        }
    }

    // Anchor: the non-excluded sample nearest to cell coordinates (1/4, 1/4),
    // which maximizes the distance to the four spin classes.
    let mut anchor = None;
    let mut best = f64::INFINITY;
    for k in 0..n {
        for j in 0..n {
            if excluded[k * n + j] {
                continue;
            }
            let a = (j as f64 + 0.5) / n as f64 - 0.25;
            let b = (k as f64 + 0.5) / n as f64 - 0.25;
            let d = a * a + b * b;
            if d < best {
                best = d;
                anchor = Some((j, k));
            }
        }
    }
    let (aj, ak) = anchor.ok_or(MsError::AnchorFailure(Complex64::new(0.0, 0.0)))?;
    let anchor_xi = xi_at(aj, ak);
    let anchor_seed = seed_from_spin_expansion(weights, curve, anchor_xi)?;
    let anchor_sample = solve_alpha_ms_in(&ctx, weights, curve, anchor_xi, anchor_seed, options)?;
    if !anchor_sample.converged() {
        return Err(MsError::AnchorFailure(anchor_xi));
    }
    samples[ak * n + aj] = Some(anchor_sample);

    // Ring-by-ring spiral in index space around the anchor.
    let ring_of = |j: usize, k: usize| -> usize {
        let dj = (j as isize - aj as isize).unsigned_abs();
        let dk = (k as isize - ak as isize).unsigned_abs();
        dj.max(dk)
    };
    let max_ring = (0..n)
        .flat_map(|k| (0..n).map(move |j| (j, k)))
        .map(|(j, k)| ring_of(j, k))
        .max()
        .unwrap_or(0);

    for ring in 1..=max_ring {
        let mut targets: Vec<(usize, usize)> = Vec::new();
        for k in 0..n {
            for j in 0..n {
                if ring_of(j, k) == ring && !excluded[k * n + j] {
                    targets.push((j, k));
                }
            }
        }
        // Deterministic angular order within the ring.
        targets.sort_by(|&(j1, k1), &(j2, k2)| {
            let a1 = ((k1 as f64) - ak as f64).atan2((j1 as f64) - aj as f64);
            let a2 = ((k2 as f64) - ak as f64).atan2((j2 as f64) - aj as f64);
            a1.partial_cmp(&a2).unwrap().then((j1, k1).cmp(&(j2, k2)))
        });
        // Snapshot of the solved set from earlier rings.
        let solved: Vec<(Complex64, Complex64)> = samples
            .iter()
            .flatten()
            .filter(|s| s.converged())
            .map(|s| (s.xi, s.alpha))
            .collect();
        if solved.is_empty() {
            return Err(MsError::AnchorFailure(anchor_xi));
        }
        let results: Vec<((usize, usize), Result<MSSample, MsError>)> = targets
            .par_iter()
            .map(|&(j, k)| {
                let xi = xi_at(j, k);
                let mut nearest = solved[0];
                let mut best = f64::INFINITY;
                for &(sxi, salpha) in &solved {
                    let d = (sxi - xi).norm();
                    if d < best {
                        best = d;
                        nearest = (sxi, salpha);
                    }
                }
                let result = solve_with_retries(
                    &ctx, weights, curve, xi, nearest.0, nearest.1, options,
                );
                ((j, k), result)
            })
            .collect();
        for ((j, k), result) in results {
            match result {
                Ok(sample) => samples[k * n + j] = Some(sample),
                Err(MsError::Abel(AbelError::SpinProximity { .. })) => {
                    excluded[k * n + j] = true;
                    samples[k * n + j] = Some(MSSample::excluded(xi_at(j, k)));
                }
                Err(e) => return Err(e),
            }
        }
    }

    let samples: Vec<MSSample> = samples
        .into_iter()
        .map(|s| s.expect("all grid points visited"))
        .collect();
    let metadata = GridMetadata {
        torus_base_point: ctx.base_point(),
        rtol: options.rtol,
        newton_tol: options.newton_tol,
        exclusion_radius: effective_radius,
        spin_exclusion_radius: spin_radius,
        higgs_slope_sign: crate::constants::HIGGS_SLOPE_SIGN,
        volume_orientation: crate::constants::VOLUME_ORIENTATION,
        continuation: "spiral-from-anchor, nearest solved neighbor seed with pole predictor",
    };
    Ok(MSGrid {
        weights: *weights,
        curve: curve.clone(),
        n,
        exclusion_radius: effective_radius,
        samples,
        metadata,
    })
}

fn solve_with_retries(
    ctx: &MsContext,
    weights: &Weights,
    curve: &CurveData,
    xi: Complex64,
    neighbor_xi: Complex64,
    neighbor_alpha: Complex64,
    options: &SolveOptions,
) -> Result<MSSample, MsError> {
    // Neighbor continuation with the pole predictor: move the seed by the
    // change of the spin-expansion formula between the two points.
    let predictor = match (
        seed_from_spin_expansion(weights, curve, xi),
        seed_from_spin_expansion(weights, curve, neighbor_xi),
    ) {
        (Ok(here), Ok(there)) => neighbor_alpha + (here - there),
        _ => neighbor_alpha,
    };
    let mut seeds = vec![predictor];
    if let Ok(formula) = seed_from_spin_expansion(weights, curve, xi) {
        seeds.push(formula);
    }
    seeds.push(neighbor_alpha);
    let mut last = None;
    for seed in seeds {
        let sample = solve_alpha_ms_in(ctx, weights, curve, xi, seed, options)?;
        if sample.converged() {
            return Ok(sample);
        }
        last = Some(sample);
    }
    Ok(last.expect("at least one seed attempted"))
}

/// Deviations of the solved section from its exact symmetries: oddness
/// (checked pairwise on the mirrored grid) and the two functional
/// equations (checked by fresh solves at Λ-shifted points).
#[derive(Debug, Clone)]
pub struct SymmetryReport {
    pub odd_max: f64,
    pub fe_a_max: f64,
    pub fe_b_max: f64,
    pub pairs_checked: usize,
    pub shifts_checked: usize,
}

pub fn verify_section_symmetries(
    grid: &MSGrid,
    options: &SolveOptions,
) -> Result<SymmetryReport, MsError> {
    let n = grid.n;
    let lat = grid.curve.lattice();
    let (l1, l2) = lat.dual_generators();
    let tau = lat.tau();
    // α(ξ+λ₁) = α(ξ) + λ₁ and α(ξ+λ₂) = α(ξ) + λ₁·τ̄.
    let shift_b = l1;
    let shift_a = l1 * tau.conj();
    // Oddness on the mirrored grid: ξ_{jk} + ξ_{mirror} = λ₁ + λ₂, so
    // α_{jk} + α_{mirror} = λ₁(1 + τ̄) when the section is odd.
    let odd_target = l1 + shift_a;
    let mut odd_max = 0.0_f64;
    let mut pairs = 0usize;
    for k in 0..n {
        for j in 0..n {
            let s = grid.sample(j, k);
            let t = grid.sample(n - 1 - j, n - 1 - k);
            if s.converged() && t.converged() {
                odd_max = odd_max.max((s.alpha + t.alpha - odd_target).norm());
                pairs += 1;
            }
        }
    }
    // Functional equations on a deterministic subset of converged samples.
    let ctx = MsContext::new(&grid.curve)?;
    let step = (n / 6).max(1);
    let mut fe_a_max = 0.0_f64;
    let mut fe_b_max = 0.0_f64;
    let mut shifts = 0usize;
    for k in (0..n).step_by(step) {
        for j in (0..n).step_by(step) {
            let s = grid.sample(j, k);
            if !s.converged() {
                continue;
            }
            let sb = solve_alpha_ms_in(
                &ctx,
                &grid.weights,
                &grid.curve,
                s.xi + l1,
                s.alpha + shift_b,
                options,
            )?;
            if sb.converged() {
                fe_b_max = fe_b_max.max((sb.alpha - s.alpha - shift_b).norm());
            }
            let sa = solve_alpha_ms_in(
                &ctx,
                &grid.weights,
                &grid.curve,
                s.xi + l2,
                s.alpha + shift_a,
                options,
            )?;
            if sa.converged() {
                fe_a_max = fe_a_max.max((sa.alpha - s.alpha - shift_a).norm());
            }
            shifts += 1;
        }
    }
    Ok(SymmetryReport {
        odd_max,
        fe_a_max,
        fe_b_max,
        pairs_checked: pairs,
        shifts_checked: shifts,
    })
}

/// Solve the sphere-side unitarizing λ for a stable parabolic structure,
/// by Newton on `Im tr(M₀M₁) = Im tr(M₀M₂) = 0` with a deterministic
/// multi-start ladder; certified by the invariant Hermitian form.
pub fn sphere_side_solve(
    weights: &Weights,
    m: Complex64,
    u: Complex64,
    seed_lambda: Complex64,
    options: &SolveOptions,
) -> Result<(Complex64, MonodromyRep), MsError> {
    let verdict = classify_parabolic_structure(weights, UPoint::Finite(u), m);
    if verdict.verdict != Verdict::Stable {
        return Err(MsError::NotStable(u));
    }
    let base = crate::monodromy::default_base_point(m);
    let loops = sphere_loops(m, base)?;
    // Imaginary parts of enough character data to pin a real character:
    // the three pairwise products plus one triple word.
    let eval = |lambda: Complex64| -> Result<Vec<f64>, TransportError> {
        let sys = FuchsianSystem::new(*weights, m, u, lambda);
        let field = SphereField(&sys);
        let m0 = parallel_transport(&field, &loops[0].segments, options.rtol)?;
        let m1 = parallel_transport(&field, &loops[1].segments, options.rtol)?;
        let m2 = parallel_transport(&field, &loops[2].segments, options.rtol)?;
        Ok(vec![
            (m0 * m1).trace().im,
            (m0 * m2).trace().im,
            (m1 * m2).trace().im,
            (m0 * m1 * m2).trace().im,
        ])
    };
    let seeds = [
        seed_lambda,
        Complex64::new(0.0, 0.0),
        Complex64::new(0.3, 0.0),
        Complex64::new(-0.3, 0.0),
        Complex64::new(0.0, 0.3),
        Complex64::new(0.0, -0.3),
        Complex64::new(0.5, 0.5),
        Complex64::new(-0.5, -0.5),
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
    ];
    for seed in seeds {
        let Ok((lambda, _res, ok)) = gauss_newton(
            &eval,
            seed,
            options.newton_tol,
            options.max_iterations,
            1.0,
        ) else {
            continue;
        };
        if !ok {
            continue;
        }
        // Certify on the full generator set.
        let sys = FuchsianSystem::new(*weights, m, u, lambda);
        let rep = crate::monodromy::sphere_monodromy(&sys, Some(base), options.rtol)?;
        let witness = invariant_hermitian_form(&rep);
        let definite = witness
            .map(|w| w.definiteness == Definiteness::Positive)
            .unwrap_or(false);
        if definite && unitarizability_residual(&rep) < UNITARIZABLE_RESIDUAL {
            return Ok((lambda, rep));
        }
    }
    Err(MsError::SphereSolveFailed(u))
}

/// Matched absolute traces of the two solutions for one stable `u`:
/// the torus cycles of the unitarizing abelian connection against the
/// same cycles of the sphere system pulled back along the double cover.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub u: Complex64,
    pub xi: Complex64,
    pub alpha_ms: Complex64,
    pub lambda_ms: Complex64,
    pub torus_abs_traces: (f64, f64),
    pub sphere_abs_traces: (f64, f64),
    pub max_deviation: f64,
}

/// End-to-end cross-validation of the abelianization at one stable `u`.
pub fn cross_validate_unitarizable(
    weights: &Weights,
    curve: &CurveData,
    u: Complex64,
    options: &SolveOptions,
) -> Result<CrossValidation, MsError> {
    let xi = u_to_xi(u, Sign::Plus, curve)?;
    let seed = seed_from_spin_expansion(weights, curve, xi)?;
    let torus = solve_alpha_ms(weights, curve, xi, seed, options)?;
    if !torus.converged() {
        return Err(MsError::AnchorFailure(xi));
    }
    let (lambda_ms, _) = sphere_side_solve(weights, curve.m(), u, Complex64::new(0.0, 0.0), options)?;
    let ctx = MsContext::new(curve)?;
    let conn = AbelianConnection::new(curve, weights, xi, torus.alpha)?;
    let (ta, tb) = ctx.cycle_traces(&conn, options.rtol)?;
    let sys = FuchsianSystem::new(*weights, curve.m(), u, lambda_ms);
    let (pa, pb) = crate::monodromy::pullback_cycle_traces(&sys, curve, options.rtol)?;
    let dev = (ta.norm() - pa.norm())
        .abs()
        .max((tb.norm() - pb.norm()).abs());
    Ok(CrossValidation {
        u,
        xi,
        alpha_ms: torus.alpha,
        lambda_ms,
        torus_abs_traces: (ta.norm(), tb.norm()),
        sphere_abs_traces: (pa.norm(), pb.norm()),
        max_deviation: dev,
    })
}

/// Verify that the solved section is consistent with the inverse
/// coordinate chain: `xi_to_u` of a grid ξ recovers a `u` whose
/// `u_to_xi` lands back on ±ξ.
pub fn roundtrip_check(curve: &CurveData, xi: Complex64) -> Result<f64, MsError> {
    let (u, _) = xi_to_u(xi, curve)?;
    let xi_back = u_to_xi(u, Sign::Plus, curve)?;
    let lat = curve.lattice();
    let d_plus = crate::abelian::xi_reduce(xi_back - xi, lat).norm();
    let d_minus = crate::abelian::xi_reduce(xi_back + xi, lat).norm();
    Ok(d_plus.min(d_minus))
}
