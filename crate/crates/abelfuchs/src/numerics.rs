//! Small numeric helpers shared by the solvers and the test oracles.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Coefficient of `(w − center)^order` (order = −1 or −2) of a function with
/// an isolated pole at `center`, extracted by circle averages of
/// `(w−c)^{-order}·f` at three radii with Richardson extrapolation.
///
/// Smooth (including non-holomorphic) remainders contaminate each average
/// at even powers of the radius; the three-level combination
/// `(a(r) − 20·a(r/2) + 64·a(r/4))/45` removes both the r² and r⁴ terms.
pub fn circle_coefficient(
    f: &dyn Fn(Complex64) -> Complex64,
    center: Complex64,
    radius: f64,
    order: i32,
    points: usize,
) -> Complex64 {
    assert!(order == -1 || order == -2);
    let avg = |r: f64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..points {
            let phi = 2.0 * PI * (k as f64 + 0.5) / points as f64;
            let s = Complex64::from_polar(r, phi);
            let val = f(center + s);
            let weight = if order == -1 { s } else { s * s };
            acc += val * weight;
        }
        acc / points as f64
    };
    let a1 = avg(radius);
    let a2 = avg(radius / 2.0);
    let a3 = avg(radius / 4.0);
    (a1 - 20.0 * a2 + 64.0 * a3) / 45.0
}

/// Central finite-difference approximation of `∂f/∂w̄`.
pub fn fd_dbar(f: &dyn Fn(Complex64) -> Complex64, w: Complex64, h: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let dx = (f(w + h) - f(w - h)) / (2.0 * h);
    let dy = (f(w + i * h) - f(w - i * h)) / (2.0 * h);
    0.5 * (dx + i * dy)
}

/// Central finite-difference approximation of `∂f/∂w`.
pub fn fd_dw(f: &dyn Fn(Complex64) -> Complex64, w: Complex64, h: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let dx = (f(w + h) - f(w - h)) / (2.0 * h);
    let dy = (f(w + i * h) - f(w - i * h)) / (2.0 * h);
    0.5 * (dx - i * dy)
}
