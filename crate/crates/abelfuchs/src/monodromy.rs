//! Monodromy by parallel transport: adaptive integration of the 2×2 linear
//! ODE along loops, generator calibration, and unitarizability
//! certificates via invariant Hermitian forms.
//!
//! Loops are lassos (approach segments, a full circle, the reversed
//! approach) routed around the other singularities. The defining ordered
//! product of the four sphere loops is calibrated at run time by testing
//! all 24 orders and freezing the one achieving the identity; the chosen
//! order and its defect are recorded on the representation.

use crate::abelian::{AbelianConnection, Sign};
use crate::constants::DEFAULT_RTOL;
use crate::elliptic::{CurveData, Lattice};
use crate::fuchsian::{CMat2, CVec2, FuchsianSystem};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("step size underflow near a singularity (t = {t:.6} in segment {segment})")]
    StepUnderflow { segment: usize, t: f64 },
    #[error("non-finite connection coefficient along the path")]
    NonFiniteCoefficient,
    #[error("could not route a path clear of the singularities")]
    RoutingFailed,
    #[error("loop is not closed (gap {0:.3e})")]
    NotClosed(f64),
    #[error("path violates the clearance {clearance:.3e} (distance {dist:.3e})")]
    ClearanceViolated { dist: f64, clearance: f64 },
}

/// One leg of a piecewise path.
#[derive(Debug, Clone, Copy)]
pub enum PathSegment {
    Line {
        from: Complex64,
        to: Complex64,
    },
    /// Circular arc `center + radius·e^{i(theta0 + t·dtheta)}`, `t ∈ [0,1]`.
    Arc {
        center: Complex64,
        radius: f64,
        theta0: f64,
        dtheta: f64,
    },
}

impl PathSegment {
    pub fn start(&self) -> Complex64 {
        match *self {
            PathSegment::Line { from, .. } => from,
            PathSegment::Arc {
                center,
                radius,
                theta0,
                ..
            } => center + Complex64::from_polar(radius, theta0),
        }
    }

    pub fn end(&self) -> Complex64 {
        match *self {
            PathSegment::Line { to, .. } => to,
            PathSegment::Arc {
                center,
                radius,
                theta0,
                dtheta,
            } => center + Complex64::from_polar(radius, theta0 + dtheta),
        }
    }

    pub fn at(&self, t: f64) -> (Complex64, Complex64) {
        match *self {
            PathSegment::Line { from, to } => (from + (to - from) * t, to - from),
            PathSegment::Arc {
                center,
                radius,
                theta0,
                dtheta,
            } => {
                let phase = Complex64::from_polar(radius, theta0 + dtheta * t);
                (center + phase, Complex64::new(0.0, dtheta) * phase)
            }
        }
    }

    /// Minimum distance of the segment to a point.
    pub fn distance_to(&self, p: Complex64) -> f64 {
        match *self {
            PathSegment::Line { from, to } => {
                let d = to - from;
                let len2 = d.norm_sqr();
                if len2 == 0.0 {
                    return (p - from).norm();
                }
                let t = ((p - from).re * d.re + (p - from).im * d.im) / len2;
                let t = t.clamp(0.0, 1.0);
                (p - (from + d * t)).norm()
            }
            PathSegment::Arc {
                center,
                radius,
                theta0,
                dtheta,
            } => {
                let v = p - center;
                let ang = v.im.atan2(v.re);
                // Is the angle of p inside the swept range?
                let mut rel = (ang - theta0) / dtheta;
                if dtheta.abs() >= 2.0 * PI - 1e-12 {
                    rel = rel.rem_euclid(2.0 * PI / dtheta.abs());
                }
                if (0.0..=1.0).contains(&rel) {
                    (v.norm() - radius).abs()
                } else {
                    let a = (p - self.start()).norm();
                    let b = (p - self.end()).norm();
                    a.min(b)
                }
            }
        }
    }
}

/// A closed loop with bookkeeping about what it encloses.
#[derive(Debug, Clone)]
pub struct LoopSpec {
    pub base_point: Complex64,
    pub segments: Vec<PathSegment>,
    pub enclosed_puncture: Option<usize>,
}

impl LoopSpec {
    pub fn closure_gap(&self) -> f64 {
        let first = self.segments.first().map(|s| s.start());
        let last = self.segments.last().map(|s| s.end());
        match (first, last) {
            (Some(a), Some(b)) => (a - b).norm(),
            _ => f64::INFINITY,
        }
    }

    pub fn min_distance_to(&self, points: &[Complex64]) -> f64 {
        let mut best = f64::INFINITY;
        for seg in &self.segments {
            for &p in points {
                best = best.min(seg.distance_to(p));
            }
        }
        best
    }

    fn validate(&self, obstacles: &[Complex64], clearance: f64) -> Result<(), TransportError> {
        let gap = self.closure_gap();
        if gap > 1e-12 * (1.0 + self.base_point.norm()) {
            return Err(TransportError::NotClosed(gap));
        }
        let dist = self.min_distance_to(obstacles);
        if dist <= clearance {
            return Err(TransportError::ClearanceViolated { dist, clearance });
        }
        Ok(())
    }
}

/// Coefficient pair `(P, Q)` of a flat connection form `P dw + Q dw̄`.
pub trait ConnectionField {
    fn coeff(&self, w: Complex64) -> (CMat2, CMat2);
}

/// Fuchsian system on the z-sphere (no dw̄ part).
pub struct SphereField<'a>(pub &'a FuchsianSystem);

impl ConnectionField for SphereField<'_> {
    fn coeff(&self, z: Complex64) -> (CMat2, CMat2) {
        let r = self.0.residues();
        let m = self.0.m();
        let p = r[1] / (z - 1.0) + r[2] / z + r[3] / (z - m);
        (p, CMat2::zeros())
    }
}

/// Abelianized connection on the torus.
pub struct TorusField<'a>(pub &'a AbelianConnection);

impl ConnectionField for TorusField<'_> {
    fn coeff(&self, w: Complex64) -> (CMat2, CMat2) {
        self.0.form_unchecked(w)
    }
}

/// Sphere system pulled back along the double cover `w ↦ z(w)`; used to
/// compare sphere monodromy with torus cycle monodromy without choosing
/// generators.
pub struct PullbackSphereField<'a> {
    pub system: &'a FuchsianSystem,
    pub curve: &'a CurveData,
}

impl ConnectionField for PullbackSphereField<'_> {
    fn coeff(&self, w: Complex64) -> (CMat2, CMat2) {
        let lat = self.curve.lattice();
        let (wp, wp_d) = lat.wp_all(w);
        let p12 = self.curve.p()[0] - self.curve.p()[1];
        let z = (wp - self.curve.p()[1]) / p12;
        let dz_dw = wp_d / p12;
        let r = self.system.residues();
        let m = self.system.m();
        let a_z = r[1] / (z - 1.0) + r[2] / z + r[3] / (z - m);
        (a_z * dz_dw, CMat2::zeros())
    }
}

const DP_C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// 5th-order minus 4th-order weights (error estimator).
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn mat_max_norm(m: &CMat2) -> f64 {
    m.iter().map(|e| e.norm()).fold(0.0, f64::max)
}

fn mat_finite(m: &CMat2) -> bool {
    m.iter().all(|e| e.is_finite())
}

/// Solution operator of `dΦ = −(P dw + Q dw̄)·Φ` along the path, by an
/// embedded Dormand–Prince 5(4) pair with adaptive step control on the
/// matrix max-norm.
pub fn parallel_transport(
    field: &dyn ConnectionField,
    path: &[PathSegment],
    rtol: f64,
) -> Result<CMat2, TransportError> {
    let mut y = CMat2::identity();
    for (seg_idx, seg) in path.iter().enumerate() {
        y = integrate_segment(field, seg, y, rtol, seg_idx)?;
    }
    Ok(y)
}

fn integrate_segment(
    field: &dyn ConnectionField,
    seg: &PathSegment,
    y0: CMat2,
    rtol: f64,
    seg_idx: usize,
) -> Result<CMat2, TransportError> {
    let rhs = |t: f64, y: &CMat2| -> CMat2 {
        let (w, w_dot) = seg.at(t);
        let (p, q) = field.coeff(w);
        -((p * w_dot + q * w_dot.conj()) * y)
    };
    let mut t = 0.0_f64;
    let mut y = y0;
    let mut h = 0.05_f64;
    let mut k1 = rhs(t, &y);
    let mut steps = 0usize;
    while t < 1.0 {
        steps += 1;
        if steps > 400_000 || h < 1e-12 {
            return Err(TransportError::StepUnderflow { segment: seg_idx, t });
        }
        if h > 1.0 - t {
            h = 1.0 - t;
        }
        let mut k = [CMat2::zeros(); 7];
        k[0] = k1;
        for stage in 0..6 {
            let mut acc = y;
            for j in 0..=stage {
                if DP_A[stage][j] != 0.0 {
                    acc += k[j] * Complex64::new(h * DP_A[stage][j], 0.0);
                }
            }
            k[stage + 1] = rhs(t + DP_C[stage] * h, &acc);
        }
        // 5th-order solution is the last stage evaluation point (FSAL).
        let mut y5 = y;
        for j in 0..6 {
            if DP_A[5][j] != 0.0 {
                y5 += k[j] * Complex64::new(h * DP_A[5][j], 0.0);
            }
        }
        let mut err = CMat2::zeros();
        for j in 0..7 {
            if DP_E[j] != 0.0 {
                err += k[j] * Complex64::new(h * DP_E[j], 0.0);
            }
        }
        if !mat_finite(&y5) || !mat_finite(&err) {
            return Err(TransportError::NonFiniteCoefficient);
        }
        let scale = rtol * mat_max_norm(&y5).max(1.0);
        let ratio = mat_max_norm(&err) / scale;
        if ratio <= 1.0 {
            t += h;
            y = y5;
            k1 = k[6];
            let grow = if ratio > 0.0 {
                0.9 * ratio.powf(-0.2)
            } else {
                5.0
            };
            h *= grow.clamp(0.2, 5.0);
            h = h.min(0.25);
        } else {
            h *= (0.9 * ratio.powf(-0.2)).clamp(0.1, 1.0);
            k1 = rhs(t, &y);
        }
    }
    Ok(y)
}

/// Route a polyline from `from` to `to` keeping `clearance` from the
/// obstacles, detouring around blockers; deterministic.
fn route(
    from: Complex64,
    to: Complex64,
    obstacles: &[Complex64],
    clearance: f64,
    depth: usize,
) -> Option<Vec<PathSegment>> {
    let seg = PathSegment::Line { from, to };
    let mut worst: Option<(f64, Complex64)> = None;
    for &p in obstacles {
        if (p - from).norm() < 1e-12 || (p - to).norm() < 1e-12 {
            continue;
        }
        let d = seg.distance_to(p);
        if d <= clearance && worst.map_or(true, |(wd, _)| d < wd) {
            worst = Some((d, p));
        }
    }
    let Some((_, blocker)) = worst else {
        return Some(vec![seg]);
    };
    if depth == 0 {
        return None;
    }
    let dir = (to - from) / (to - from).norm();
    let normal = dir * Complex64::new(0.0, 1.0);
    // Project the blocker onto the line and step aside.
    let s = ((blocker - from).re * dir.re + (blocker - from).im * dir.im).max(0.0);
    let foot = from + dir * s;
    for side in [1.0, -1.0] {
        let waypoint = foot + normal * (3.0 * clearance * side);
        if obstacles.iter().any(|&p| (waypoint - p).norm() <= clearance) {
            continue;
        }
        let first = route(from, waypoint, obstacles, clearance, depth - 1);
        let second = route(waypoint, to, obstacles, clearance, depth - 1);
        if let (Some(mut a), Some(b)) = (first, second) {
            a.extend(b);
            return Some(a);
        }
    }
    None
}

fn reversed(path: &[PathSegment]) -> Vec<PathSegment> {
    path.iter()
        .rev()
        .map(|seg| match *seg {
            PathSegment::Line { from, to } => PathSegment::Line { from: to, to: from },
            PathSegment::Arc {
                center,
                radius,
                theta0,
                dtheta,
            } => PathSegment::Arc {
                center,
                radius,
                theta0: theta0 + dtheta,
                dtheta: -dtheta,
            },
        })
        .collect()
}

/// Counterclockwise lasso from `base` around `center`, avoiding `others`.
fn lasso(
    base: Complex64,
    center: Complex64,
    radius: f64,
    others: &[Complex64],
    clearance: f64,
    enclosed: Option<usize>,
) -> Result<LoopSpec, TransportError> {
    let dir = (base - center) / (base - center).norm();
    let entry = center + dir * radius;
    let theta0 = dir.im.atan2(dir.re);
    let approach =
        route(base, entry, others, clearance, 6).ok_or(TransportError::RoutingFailed)?;
    let mut segments = approach.clone();
    segments.push(PathSegment::Arc {
        center,
        radius,
        theta0,
        dtheta: 2.0 * PI,
    });
    segments.extend(reversed(&approach));
    let spec = LoopSpec {
        base_point: base,
        segments,
        enclosed_puncture: enclosed,
    };
    spec.validate(others, clearance)?;
    Ok(spec)
}

/// Monodromy generators of a connection, with the calibration metadata.
#[derive(Debug, Clone)]
pub struct MonodromyRep {
    pub labels: Vec<String>,
    pub generators: Vec<CMat2>,
    pub base_point: Complex64,
    pub integration_rtol: f64,
    /// Calibrated order σ with `M_{σ0}·M_{σ1}·M_{σ2}·M_{σ3} = Id` (sphere).
    pub product_order: Option<[usize; 4]>,
    pub product_defect: Option<f64>,
}

impl MonodromyRep {
    pub fn generator(&self, label: &str) -> Option<&CMat2> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| &self.generators[i])
    }

    pub fn det_errors(&self) -> Vec<f64> {
        self.generators
            .iter()
            .map(|g| (g.determinant() - Complex64::new(1.0, 0.0)).norm())
            .collect()
    }
}

/// Default base point: on the real axis to the right of the finite
/// punctures, `z_b = |m| + 2`.
pub fn default_base_point(m: Complex64) -> Complex64 {
    Complex64::new(m.norm() + 2.0, 0.0)
}

/// Loops around the four punctures `(∞, 1, 0, m)` from the base point.
pub fn sphere_loops(
    m: Complex64,
    base: Complex64,
) -> Result<[LoopSpec; 4], TransportError> {
    let punctures = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        m,
    ];
    let mut dmin = f64::INFINITY;
    for i in 0..3 {
        for j in (i + 1)..3 {
            dmin = dmin.min((punctures[i] - punctures[j]).norm());
        }
    }
    let clearance = 0.05 * dmin;
    let radius = 0.1 * dmin;
    // Loop around infinity: out along the real axis, big clockwise circle.
    let r_inf = 2.0 * base.norm();
    let inf_loop = LoopSpec {
        base_point: base,
        segments: vec![
            PathSegment::Line {
                from: base,
                to: Complex64::new(r_inf, 0.0),
            },
            PathSegment::Arc {
                center: Complex64::new(0.0, 0.0),
                radius: r_inf,
                theta0: 0.0,
                dtheta: -2.0 * PI,
            },
            PathSegment::Line {
                from: Complex64::new(r_inf, 0.0),
                to: base,
            },
        ],
        enclosed_puncture: Some(0),
    };
    inf_loop.validate(&punctures, clearance)?;
    let mut loops = Vec::with_capacity(4);
    loops.push(inf_loop);
    for (k, &p) in punctures.iter().enumerate() {
        let others: Vec<Complex64> = punctures
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &q)| q)
            .collect();
        loops.push(lasso(base, p, radius, &others, clearance, Some(k + 1))?);
    }
    Ok([
        loops[0].clone(),
        loops[1].clone(),
        loops[2].clone(),
        loops[3].clone(),
    ])
}

/// Monodromy of the Fuchsian system around the four punctures, with the
/// product order calibrated to the identity.
pub fn sphere_monodromy(
    system: &FuchsianSystem,
    base_point: Option<Complex64>,
    rtol: f64,
) -> Result<MonodromyRep, TransportError> {
    let base = base_point.unwrap_or_else(|| default_base_point(system.m()));
    let loops = sphere_loops(system.m(), base)?;
    let field = SphereField(system);
    let mut generators = Vec::with_capacity(4);
    for spec in &loops {
        generators.push(parallel_transport(&field, &spec.segments, rtol)?);
    }
    let (order, defect) = calibrate_product_order(&generators);
    Ok(MonodromyRep {
        labels: vec!["M0".into(), "M1".into(), "M2".into(), "M3".into()],
        generators,
        base_point: base,
        integration_rtol: rtol,
        product_order: Some(order),
        product_defect: Some(defect),
    })
}

fn calibrate_product_order(gens: &[CMat2]) -> ([usize; 4], f64) {
    let mut best = ([0usize, 1, 2, 3], f64::INFINITY);
    let mut idx = [0usize, 1, 2, 3];
    permute(&mut idx, 0, &mut |perm| {
        let prod = gens[perm[0]] * gens[perm[1]] * gens[perm[2]] * gens[perm[3]];
        let defect = mat_max_norm(&(prod - CMat2::identity()));
        if defect < best.1 {
            best = (*perm, defect);
        }
    });
    best
}

fn permute(idx: &mut [usize; 4], k: usize, visit: &mut impl FnMut(&[usize; 4])) {
    if k == 4 {
        visit(idx);
        return;
    }
    for i in k..4 {
        idx.swap(k, i);
        permute(idx, k + 1, visit);
        idx.swap(k, i);
    }
}

/// Torus loop family: the two cycles and the four puncture lassos.
pub struct TorusLoops {
    pub cycle_a: LoopSpec,
    pub cycle_b: LoopSpec,
    pub punctures: [LoopSpec; 4],
    pub base_point: Complex64,
}

/// Cycles `[w_b, w_b+1]`, `[w_b, w_b+τ]` and lassos around the `w_i`,
/// offset to clear the poles.
pub fn torus_loops(lattice: &Lattice) -> Result<TorusLoops, TransportError> {
    let tau = lattice.tau();
    let spacing = 0.5 * lattice.min_period();
    let clearance = 0.1 * spacing;
    let radius = 0.2 * spacing;
    // All pole representatives near the unit cell.
    let mut poles = Vec::new();
    for a in -2i32..=4 {
        for b in -2i32..=4 {
            poles.push(Complex64::new(a as f64 * 0.5, 0.0) + tau * (b as f64 * 0.5));
        }
    }
    let candidates = [
        (0.25, 0.25),
        (0.3, 0.2),
        (0.2, 0.3),
        (0.35, 0.15),
        (0.15, 0.35),
        (0.3, 0.3),
    ];
    let mut base = None;
    for (s, t) in candidates {
        let w_b = Complex64::new(s, 0.0) + tau * t;
        let a_seg = PathSegment::Line {
            from: w_b,
            to: w_b + 1.0,
        };
        let b_seg = PathSegment::Line {
            from: w_b,
            to: w_b + tau,
        };
        let ok = poles.iter().all(|&p| {
            a_seg.distance_to(p) > clearance && b_seg.distance_to(p) > clearance
        });
        if ok {
            base = Some(w_b);
            break;
        }
    }
    let base = base.ok_or(TransportError::RoutingFailed)?;
    let cycle = |to: Complex64| LoopSpec {
        base_point: base,
        segments: vec![PathSegment::Line { from: base, to }],
        enclosed_puncture: None,
    };
    // Cycles are closed on the torus, not in the plane; skip the closure
    // validation and check clearance only.
    let cycle_a = cycle(base + 1.0);
    let cycle_b = cycle(base + tau);
    for c in [&cycle_a, &cycle_b] {
        let dist = c.min_distance_to(&poles);
        if dist <= clearance {
            return Err(TransportError::ClearanceViolated { dist, clearance });
        }
    }
    let half = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.5, 0.0),
        Complex64::new(0.5, 0.0) + tau * 0.5,
        tau * 0.5,
    ];
    let mut lassos = Vec::with_capacity(4);
    for (i, &w_i) in half.iter().enumerate() {
        // Representative of the class nearest to the base point.
        let mut center = w_i;
        let mut best = f64::INFINITY;
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                let cand = w_i + Complex64::new(a as f64, 0.0) + tau * b as f64;
                let d = (cand - base).norm();
                if d < best {
                    best = d;
                    center = cand;
                }
            }
        }
        let others: Vec<Complex64> = poles
            .iter()
            .filter(|&&p| (p - center).norm() > 1e-9)
            .cloned()
            .collect();
        lassos.push(lasso(base, center, radius, &others, clearance, Some(i))?);
    }
    Ok(TorusLoops {
        cycle_a,
        cycle_b,
        punctures: [
            lassos[0].clone(),
            lassos[1].clone(),
            lassos[2].clone(),
            lassos[3].clone(),
        ],
        base_point: base,
    })
}

/// Monodromy of the abelianized torus connection: cycle transports
/// `M_A, M_B` and the puncture loops `N_0..N_3`.
pub fn torus_monodromy(
    connection: &AbelianConnection,
    rtol: f64,
) -> Result<MonodromyRep, TransportError> {
    let loops = torus_loops(connection.curve().lattice())?;
    let field = TorusField(connection);
    let mut labels = vec!["A".to_string(), "B".to_string()];
    let mut generators = vec![
        parallel_transport(&field, &loops.cycle_a.segments, rtol)?,
        parallel_transport(&field, &loops.cycle_b.segments, rtol)?,
    ];
    for (i, spec) in loops.punctures.iter().enumerate() {
        labels.push(format!("N{i}"));
        generators.push(parallel_transport(&field, &spec.segments, rtol)?);
    }
    Ok(MonodromyRep {
        labels,
        generators,
        base_point: loops.base_point,
        integration_rtol: rtol,
        product_order: None,
        product_defect: None,
    })
}

/// Transport of the sphere system pulled back along the double cover, over
/// the same torus cycles used by [`torus_monodromy`]. The twist by the
/// degree-2 spin connection multiplies traces by ±1, so absolute traces
/// are directly comparable.
pub fn pullback_cycle_traces(
    system: &FuchsianSystem,
    curve: &CurveData,
    rtol: f64,
) -> Result<(Complex64, Complex64), TransportError> {
    let loops = torus_loops(curve.lattice())?;
    let field = PullbackSphereField { system, curve };
    let ma = parallel_transport(&field, &loops.cycle_a.segments, rtol)?;
    let mb = parallel_transport(&field, &loops.cycle_b.segments, rtol)?;
    Ok((ma.trace(), mb.trace()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    Positive,
    Negative,
    Indefinite,
    Degenerate,
}

/// Invariant Hermitian form certificate: `M† H M = H` for all generators.
#[derive(Debug, Clone)]
pub struct HermitianForm {
    pub matrix: CMat2,
    pub definiteness: Definiteness,
    /// Ratio of second-smallest to largest singular value of the
    /// invariance system (solution-space isolation).
    pub solution_gap: f64,
}

fn pauli_basis() -> [CMat2; 4] {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [
        CMat2::identity(),
        CMat2::new(zero, one, one, zero),
        CMat2::new(zero, -i, i, zero),
        CMat2::new(one, zero, zero, -one),
    ]
}

fn hermitian_from_coeffs(h: &[f64; 4]) -> CMat2 {
    let basis = pauli_basis();
    let mut acc = CMat2::zeros();
    for a in 0..4 {
        acc += basis[a] * Complex64::new(h[a], 0.0);
    }
    acc
}

fn hermitian_eigenvalues(h: &[f64; 4]) -> (f64, f64) {
    let r = (h[1] * h[1] + h[2] * h[2] + h[3] * h[3]).sqrt();
    (h[0] + r, h[0] - r)
}

/// Solve `M† H M = H` over Hermitian `H` for all generators; returns the
/// invariance residual spectrum data and coefficient candidates.
fn invariance_system(rep: &MonodromyRep) -> (nalgebra::DMatrix<f64>, Vec<f64>) {
    use nalgebra::DMatrix;
    let basis = pauli_basis();
    let rows = 4 * rep.generators.len();
    let mut mat = DMatrix::<f64>::zeros(rows, 4);
    for (g, m) in rep.generators.iter().enumerate() {
        for a in 0..4 {
            let image = m.adjoint() * basis[a] * m - basis[a];
            // Coefficients of the Hermitian image in the Pauli basis.
            for b in 0..4 {
                let coeff = 0.5 * (image * basis[b]).trace().re;
                mat[(4 * g + b, a)] = coeff;
            }
        }
    }
    let svd = mat.clone().svd(false, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (mat, sv)
}

fn nullspace_real(mat: &nalgebra::DMatrix<f64>, count: usize) -> Vec<[f64; 4]> {
    let svd = mat.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap()
    });
    let mut out = Vec::new();
    for &k in order.iter().take(count) {
        let row = v_t.row(k);
        out.push([row[0], row[1], row[2], row[3]]);
    }
    out
}

/// Invariant Hermitian form of the representation, when one exists with a
/// definite representative. The solution space is certified 1-dimensional
/// by a singular-value gap test; for reducible representations with a
/// larger invariant family, a definite representative is searched inside
/// the two smallest singular directions.
pub fn invariant_hermitian_form(rep: &MonodromyRep) -> Option<HermitianForm> {
    let (mat, sv) = invariance_system(rep);
    let s_max = sv[0].max(1e-300);
    let s_min = sv[3];
    let s_second = sv[2];
    if s_min > 1e-8 * s_max {
        return None;
    }
    let gap = s_second / s_max;
    let finish = |h: [f64; 4], gap: f64| -> Option<HermitianForm> {
        let (l1, l2) = hermitian_eigenvalues(&h);
        let scale = l1.abs().max(l2.abs()).max(1e-300);
        let definiteness = if l1.abs().min(l2.abs()) < 1e-10 * scale {
            Definiteness::Degenerate
        } else if l1 > 0.0 && l2 > 0.0 {
            Definiteness::Positive
        } else if l1 < 0.0 && l2 < 0.0 {
            Definiteness::Negative
        } else {
            Definiteness::Indefinite
        };
        // Global sign normalization: negative-definite flips to positive.
        let (h, definiteness) = if definiteness == Definiteness::Negative {
            ([-h[0], -h[1], -h[2], -h[3]], Definiteness::Positive)
        } else {
            (h, definiteness)
        };
        Some(HermitianForm {
            matrix: hermitian_from_coeffs(&h),
            definiteness,
            solution_gap: gap,
        })
    };
    if s_second > 1e-4 * s_max {
        // Certified 1-dimensional solution space.
        let h = nullspace_real(&mat, 1)[0];
        return finish(h, gap);
    }
    // Degenerate (e.g. reducible) case: look for a definite representative
    // inside the two flattest directions.
    let hs = nullspace_real(&mat, 2);
    let mut best: Option<([f64; 4], f64)> = None;
    for k in 0..64 {
        let t = PI * k as f64 / 64.0;
        let (c, s) = (t.cos(), t.sin());
        let h = [
            c * hs[0][0] + s * hs[1][0],
            c * hs[0][1] + s * hs[1][1],
            c * hs[0][2] + s * hs[1][2],
            c * hs[0][3] + s * hs[1][3],
        ];
        let (l1, l2) = hermitian_eigenvalues(&h);
        let margin = if l1 * l2 > 0.0 {
            l1.abs().min(l2.abs()) / l1.abs().max(l2.abs())
        } else {
            -1.0
        };
        if margin > 0.0 && best.map_or(true, |(_, m)| margin > m) {
            best = Some((h, margin));
        }
    }
    best.and_then(|(h, _)| finish(h, gap))
}

/// Residual distance from unitarizability: the norm of the imaginary
/// parts of the calibration traces, plus (when those vanish) the distance
/// of the invariant form's eigenvalues from definiteness.
pub fn unitarizability_residual(rep: &MonodromyRep) -> f64 {
    let (t1, t2) = trace_conditions(rep);
    let r = (t1.im * t1.im + t2.im * t2.im).sqrt();
    if r >= 1e-6 {
        return r;
    }
    let penalty = match invariant_hermitian_form(rep) {
        Some(form) => match form.definiteness {
            Definiteness::Positive => 0.0,
            _ => {
                let h = [
                    0.5 * form.matrix.trace().re,
                    0.5 * (form.matrix * pauli_basis()[1]).trace().re,
                    0.5 * (form.matrix * pauli_basis()[2]).trace().re,
                    0.5 * (form.matrix * pauli_basis()[3]).trace().re,
                ];
                let (l1, l2) = hermitian_eigenvalues(&h);
                let scale = l1.abs().max(l2.abs()).max(1e-300);
                l1.abs().min(l2.abs()) / scale
            }
        },
        None => 1.0,
    };
    r + penalty
}

/// The two independent trace conditions used by the solvers: cycle traces
/// for torus reps, two products for sphere reps.
pub fn trace_conditions(rep: &MonodromyRep) -> (Complex64, Complex64) {
    if let (Some(a), Some(b)) = (rep.generator("A"), rep.generator("B")) {
        return (a.trace(), b.trace());
    }
    match rep.generators.len() {
        0 => (Complex64::new(2.0, 0.0), Complex64::new(2.0, 0.0)),
        1 => (rep.generators[0].trace(), rep.generators[0].trace()),
        2 => (
            (rep.generators[0] * rep.generators[1]).trace(),
            rep.generators[0].trace(),
        ),
        _ => (
            (rep.generators[0] * rep.generators[1]).trace(),
            (rep.generators[0] * rep.generators[2]).trace(),
        ),
    }
}

fn eigen_directions(m: &CMat2) -> Vec<CVec2> {
    let t = m.trace() * 0.5;
    let disc = (t * t - m.determinant()).sqrt();
    let mut out = Vec::new();
    for lambda in [t + disc, t - disc] {
        let k = m - CMat2::identity() * lambda;
        let row0 = (k[(0, 0)].norm_sqr() + k[(0, 1)].norm_sqr()).sqrt();
        let row1 = (k[(1, 0)].norm_sqr() + k[(1, 1)].norm_sqr()).sqrt();
        let v = if row0 >= row1 {
            CVec2::new(-k[(0, 1)], k[(0, 0)])
        } else {
            CVec2::new(-k[(1, 1)], k[(1, 0)])
        };
        if v.norm() > 1e-13 {
            out.push(v / Complex64::new(v.norm(), 0.0));
        }
    }
    out
}

/// False iff all generators share a common eigenvector (1e−8 angular
/// tolerance).
pub fn is_irreducible(rep: &MonodromyRep) -> bool {
    // Candidates come from the first generator that is not a scalar.
    let scalar_tol = 1e-8;
    let mut candidates: Option<Vec<CVec2>> = None;
    for m in &rep.generators {
        let t = m.trace() * 0.5;
        if mat_max_norm(&(m - CMat2::identity() * t)) > scalar_tol {
            candidates = Some(eigen_directions(m));
            break;
        }
    }
    let Some(candidates) = candidates else {
        // Every generator acts as a scalar: reducible.
        return false;
    };
    'cand: for v in &candidates {
        for m in &rep.generators {
            let image = m * v;
            let inner = v[0].conj() * image[0] + v[1].conj() * image[1];
            let residual = (image - v * inner).norm();
            if residual > 1e-8 * image.norm().max(1e-30) {
                continue 'cand;
            }
        }
        return false;
    }
    true
}

/// Convenience: default-tolerance transport.
pub fn parallel_transport_default(
    field: &dyn ConnectionField,
    path: &[PathSegment],
) -> Result<CMat2, TransportError> {
    parallel_transport(field, path, DEFAULT_RTOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{curve_from_tau, Lattice};
    use crate::fuchsian::Weights;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    struct FnField<F: Fn(Complex64) -> (CMat2, CMat2)>(F);
    impl<F: Fn(Complex64) -> (CMat2, CMat2)> ConnectionField for FnField<F> {
        fn coeff(&self, w: Complex64) -> (CMat2, CMat2) {
            self.0(w)
        }
    }

    fn w_default() -> Weights {
        Weights::new([0.3, 0.25, 0.2, 0.15]).unwrap()
    }

    #[test]
    fn zero_field_gives_identity() {
        let field = FnField(|_| (CMat2::zeros(), CMat2::zeros()));
        let path = [PathSegment::Line {
            from: c(0.0, 0.0),
            to: c(1.0, 2.0),
        }];
        let got = parallel_transport(&field, &path, 1e-11).unwrap();
        assert!(mat_max_norm(&(got - CMat2::identity())) < 1e-14);
    }

    #[test]
    fn constant_diagonal_field_gives_exponential() {
        // P = diag(a, -a) constant: transport over a segment of increment
        // Δw is diag(e^{−aΔw}, e^{aΔw}).
        let a = c(0.3, 0.7);
        let field = FnField(move |_| {
            (
                CMat2::new(a, c(0.0, 0.0), c(0.0, 0.0), -a),
                CMat2::zeros(),
            )
        });
        let to = c(0.8, -0.4);
        let path = [PathSegment::Line {
            from: c(0.0, 0.0),
            to,
        }];
        let got = parallel_transport(&field, &path, 1e-12).unwrap();
        let expect = CMat2::new(
            (-a * to).exp(),
            c(0.0, 0.0),
            c(0.0, 0.0),
            (a * to).exp(),
        );
        assert!(mat_max_norm(&(got - expect)) < 1e-10);
    }

    #[test]
    fn transport_composition_and_inverse() {
        let w = w_default();
        let sys = FuchsianSystem::new(w, c(2.5, 0.0), c(0.4, 0.2), c(0.1, 0.3));
        let field = SphereField(&sys);
        let p1 = [PathSegment::Line {
            from: c(4.5, 0.0),
            to: c(4.5, 2.0),
        }];
        let p2 = [PathSegment::Line {
            from: c(4.5, 2.0),
            to: c(3.0, 2.0),
        }];
        let t1 = parallel_transport(&field, &p1, 1e-12).unwrap();
        let t2 = parallel_transport(&field, &p2, 1e-12).unwrap();
        let joined = [p1[0], p2[0]];
        let t12 = parallel_transport(&field, &joined, 1e-12).unwrap();
        assert!(mat_max_norm(&(t12 - t2 * t1)) < 1e-9);
        let back = [PathSegment::Line {
            from: c(4.5, 2.0),
            to: c(4.5, 0.0),
        }];
        let t1_back = parallel_transport(&field, &back, 1e-12).unwrap();
        assert!(mat_max_norm(&(t1_back * t1 - CMat2::identity())) < 1e-8);
        // Trace-free connection: unit determinant.
        assert!((t1.determinant() - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn sphere_monodromy_traces_and_relation() {
        let w = w_default();
        let sys = FuchsianSystem::new(w, c(2.5, 0.0), c(0.4, 0.2), c(0.0, 0.0));
        let rep = sphere_monodromy(&sys, None, 1e-11).unwrap();
        for (i, g) in rep.generators.iter().enumerate() {
            let expect = 2.0 * (2.0 * PI * w.rho()[i]).cos();
            assert!(
                (g.trace() - c(expect, 0.0)).norm() < 1e-7,
                "trace {i}: {} vs {expect}",
                g.trace()
            );
            assert!((g.determinant() - c(1.0, 0.0)).norm() < 1e-9);
        }
        assert!(rep.product_defect.unwrap() < 1e-7, "defect {}", rep.product_defect.unwrap());
    }

    #[test]
    fn sphere_monodromy_quarter_weights_trace_zero() {
        let w = Weights::new([0.25; 4]).unwrap();
        let sys = FuchsianSystem::new(w, c(2.5, 0.0), c(0.3, 0.6), c(0.0, 0.0));
        let rep = sphere_monodromy(&sys, None, 1e-11).unwrap();
        for g in &rep.generators {
            assert!(g.trace().norm() < 1e-7);
        }
    }

    #[test]
    fn base_point_independence_of_traces() {
        let w = w_default();
        let sys = FuchsianSystem::new(w, c(2.5, 0.0), c(0.4, 0.2), c(0.2, -0.1));
        let rep1 = sphere_monodromy(&sys, None, 1e-11).unwrap();
        let rep2 = sphere_monodromy(&sys, Some(c(5.5, 0.0)), 1e-11).unwrap();
        for (a, b) in rep1.generators.iter().zip(rep2.generators.iter()) {
            assert!((a.trace() - b.trace()).norm() < 1e-7);
        }
    }

    #[test]
    fn local_traces_independent_of_lambda() {
        let w = w_default();
        let m = c(2.5, 0.0);
        let u = c(0.4, 0.2);
        let rep0 = sphere_monodromy(&FuchsianSystem::new(w, m, u, c(0.0, 0.0)), None, 1e-11).unwrap();
        for lambda in [c(0.5, 0.0), c(0.0, 1.0), c(-0.7, 0.4)] {
            let rep = sphere_monodromy(&FuchsianSystem::new(w, m, u, lambda), None, 1e-11).unwrap();
            for (a, b) in rep0.generators.iter().zip(rep.generators.iter()) {
                assert!(
                    (a.trace() - b.trace()).norm() < 1e-7,
                    "lambda {lambda}: {} vs {}",
                    a.trace(),
                    b.trace()
                );
            }
        }
    }

    #[test]
    fn tolerance_scaling() {
        let w = w_default();
        let sys = FuchsianSystem::new(w, c(2.5, 0.0), c(0.4, 0.2), c(0.0, 0.0));
        let rtol = 1e-9;
        let rep1 = sphere_monodromy(&sys, None, rtol).unwrap();
        let rep2 = sphere_monodromy(&sys, None, rtol / 2.0).unwrap();
        for (a, b) in rep1.generators.iter().zip(rep2.generators.iter()) {
            assert!(mat_max_norm(&(a - b)) < 100.0 * rtol);
        }
    }

    #[test]
    fn torus_monodromy_diagonal_case() {
        // All ρ_i = 1/4 makes β ≡ 0; M_A = diag(e^{−(α−ξ)}, e^{α−ξ}).
        let lat = Lattice::new(c(0.0, 1.0)).unwrap();
        let curve = curve_from_tau(&lat).unwrap();
        let w = Weights::new([0.25; 4]).unwrap();
        let (l1, l2) = lat.dual_generators();
        let xi = 0.23 * l1 + 0.17 * l2;
        let alpha = c(0.4, -0.3);
        let conn = crate::abelian::AbelianConnection::new(&curve, &w, xi, alpha).unwrap();
        let rep = torus_monodromy(&conn, 1e-11).unwrap();
        let ma = rep.generator("A").unwrap();
        let expect_diag = (-(alpha - xi)).exp();
        let d1 = (ma[(0, 0)] - expect_diag).norm() + (ma[(1, 1)] - expect_diag.inv()).norm();
        let d2 = (ma[(1, 1)] - expect_diag).norm() + (ma[(0, 0)] - expect_diag.inv()).norm();
        assert!(d1.min(d2) < 1e-9, "M_A = {ma}");
        let mb = rep.generator("B").unwrap();
        let expect_b = (-(alpha * lat.tau() - xi * lat.tau().conj())).exp();
        let d1 = (mb[(0, 0)] - expect_b).norm();
        let d2 = (mb[(1, 1)] - expect_b).norm();
        assert!(d1.min(d2) < 1e-9);
        assert!((ma.determinant() - c(1.0, 0.0)).norm() < 1e-9);
        // With β ≡ 0 the puncture loops are trivial.
        for i in 0..4 {
            let n = rep.generator(&format!("N{i}")).unwrap();
            assert!(mat_max_norm(&(n - CMat2::identity())) < 1e-8);
        }
    }

    #[test]
    fn torus_puncture_eigenvalues() {
        let lat = Lattice::new(c(0.0, 1.0)).unwrap();
        let curve = curve_from_tau(&lat).unwrap();
        let w = w_default();
        let (l1, l2) = lat.dual_generators();
        let xi = 0.23 * l1 + 0.17 * l2;
        let conn = crate::abelian::AbelianConnection::new(&curve, &w, xi, c(0.1, 0.2)).unwrap();
        let rep = torus_monodromy(&conn, 1e-11).unwrap();
        for i in 0..4 {
            let n = rep.generator(&format!("N{i}")).unwrap();
            let rho_hat = w.rho_hat(i);
            let expect = 2.0 * (2.0 * PI * rho_hat).cos();
            assert!(
                (n.trace() - c(expect, 0.0)).norm() < 1e-6,
                "N{i} trace {} vs {expect}",
                n.trace()
            );
            assert!((n.determinant() - c(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn invariant_form_su2_identity() {
        // Generators in SU(2) leave the identity form invariant.
        let a = CMat2::new(c(0.6, 0.0), c(0.8, 0.0), c(-0.8, 0.0), c(0.6, 0.0));
        let b = CMat2::new(c(0.6, 0.8), c(0.0, 0.0), c(0.0, 0.0), c(0.6, -0.8));
        let rep = MonodromyRep {
            labels: vec!["g1".into(), "g2".into()],
            generators: vec![a, b],
            base_point: c(0.0, 0.0),
            integration_rtol: 0.0,
            product_order: None,
            product_defect: None,
        };
        let form = invariant_hermitian_form(&rep).unwrap();
        assert_eq!(form.definiteness, Definiteness::Positive);
        let h = form.matrix / form.matrix.trace() * c(2.0, 0.0);
        assert!(mat_max_norm(&(h - CMat2::identity())) < 1e-10);
        assert!(unitarizability_residual(&rep) < 1e-12);
        assert!(is_irreducible(&rep));
    }

    #[test]
    fn invariant_form_conjugation_law() {
        let a = CMat2::new(c(0.6, 0.0), c(0.8, 0.0), c(-0.8, 0.0), c(0.6, 0.0));
        let b = CMat2::new(c(0.6, 0.8), c(0.0, 0.0), c(0.0, 0.0), c(0.6, -0.8));
        let g = CMat2::new(c(1.2, 0.1), c(0.3, -0.4), c(0.0, 0.2), c(0.9, 0.0));
        let g_inv = g.try_inverse().unwrap();
        let rep = MonodromyRep {
            labels: vec!["g1".into(), "g2".into()],
            generators: vec![g * a * g_inv, g * b * g_inv],
            base_point: c(0.0, 0.0),
            integration_rtol: 0.0,
            product_order: None,
            product_defect: None,
        };
        let form = invariant_hermitian_form(&rep).unwrap();
        assert_eq!(form.definiteness, Definiteness::Positive);
        // H transforms as C^{-†} H C^{-1} (up to scale).
        let expect = g_inv.adjoint() * CMat2::identity() * g_inv;
        let ratio = form.matrix[(0, 0)] / expect[(0, 0)];
        assert!(mat_max_norm(&(form.matrix - expect * ratio)) < 1e-9);
    }

    #[test]
    fn non_real_trace_has_no_form() {
        let a = CMat2::new(c(2.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0) / c(2.0, 1.0));
        let b = CMat2::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        let rep = MonodromyRep {
            labels: vec!["g1".into(), "g2".into()],
            generators: vec![a, b],
            base_point: c(0.0, 0.0),
            integration_rtol: 0.0,
            product_order: None,
            product_defect: None,
        };
        assert!(invariant_hermitian_form(&rep).is_none());
    }

    #[test]
    fn reducibility_detection() {
        let d1 = CMat2::new(c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0));
        let d2 = CMat2::new(c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0));
        let rep = MonodromyRep {
            labels: vec!["g1".into(), "g2".into()],
            generators: vec![d1, d2],
            base_point: c(0.0, 0.0),
            integration_rtol: 0.0,
            product_order: None,
            product_defect: None,
        };
        assert!(!is_irreducible(&rep));
        // A single non-scalar generator with the rest identity: reducible.
        let rep2 = MonodromyRep {
            labels: vec!["g1".into(), "g2".into()],
            generators: vec![d1, CMat2::identity()],
            base_point: c(0.0, 0.0),
            integration_rtol: 0.0,
            product_order: None,
            product_defect: None,
        };
        assert!(!is_irreducible(&rep2));
    }

    #[test]
    fn residual_definition() {
        // Torus-labelled rep with Im tr A = 0.1, Im tr B = 0.
        let s = c(0.05, 0.1);
        let a = CMat2::new(
            c(1.0, 0.0) + s,
            c(0.0, 0.0),
            c(0.0, 0.0),
            (c(1.0, 0.0) + s).inv(),
        );
        // tr = 1 + s + 1/(1+s): Im ≈ 0.1·(1 − 1/(1+s)²)… fix numerically:
        let im_tr = a.trace().im;
        let b = CMat2::identity();
        let rep = MonodromyRep {
            labels: vec!["A".into(), "B".into()],
            generators: vec![a, b],
            base_point: c(0.0, 0.0),
            integration_rtol: 0.0,
            product_order: None,
            product_defect: None,
        };
        let r = unitarizability_residual(&rep);
        assert!((r - im_tr.abs()).abs() < 1e-12);
    }
}
