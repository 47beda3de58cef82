use abelfuchs::abelian::*;
use abelfuchs::elliptic::*;
use abelfuchs::fuchsian::*;
use abelfuchs::monodromy::*;
use num_complex::Complex64;
fn c(re: f64, im: f64) -> Complex64 { Complex64::new(re, im) }

fn main() {
    let curve = curve_from_tau(&Lattice::new(c(0.0, 1.0)).unwrap()).unwrap();
    let lat = curve.lattice().clone();
    let tau = lat.tau();
    let (l1, _l2) = lat.dual_generators();
    let m = curve.m();
    let x = c(0.23, 0.0) + tau * 0.31;
    let xi_expected = l1 * x;
    let (z_x, y_x) = curve_coords(x, &curve).unwrap();
    let (u, v) = curve_point_to_u(z_x, y_x, m).unwrap();
    println!("u = {u}, v = {v}");
    let w = Weights::new([0.26, 0.25, 0.24, 0.23]).unwrap();
    let a_mats = residue_matrices(&w, u);

    // frame F(w) = [s+, s-], connection Omega = F^-1 (A_pull F + F')
    let frame = |p: Complex64| -> CMat2 {
        let (z, y) = curve_coords(p, &curve).unwrap();
        let top = (m - 1.0) * u * z;
        let bottom = -u * z + m * (u + z - 1.0);
        CMat2::from_columns(&[CVec2::new(top - v * y, bottom), CVec2::new(top + v * y, bottom)])
    };
    let a0 = |p: Complex64| -> Complex64 {
        let (z, _) = curve_coords(p, &curve).unwrap();
        let a_z = a_mats[1] / (z - 1.0) + a_mats[2] / z + a_mats[3] / (z - m);
        let h = 1e-6;
        let (zp, _) = curve_coords(p + h, &curve).unwrap();
        let (zm, _) = curve_coords(p - h, &curve).unwrap();
        let dz = (zp - zm) / (2.0 * h);
        let f0 = frame(p);
        let fp = (frame(p + h) - frame(p - h)) / c(2.0 * h, 0.0);
        let om = f0.try_inverse().unwrap() * (a_z * dz * f0 + fp);
        (om[(0, 0)] - om[(1, 1)]) * 0.5
    };
    // cycle quadrature (Simpson), base from torus_loops for consistency
    let loops = torus_loops(&lat).unwrap();
    let wb = loops.base_point;
    let quad = |dir: Complex64| -> Complex64 {
        let n = 4000;
        let mut acc = c(0.0, 0.0);
        for i in 0..n {
            let t0 = i as f64 / n as f64;
            let t1 = (i as f64 + 0.5) / n as f64;
            let t2 = (i as f64 + 1.0) / n as f64;
            acc += (a0(wb + dir * t0) + 4.0 * a0(wb + dir * t1) + a0(wb + dir * t2)) * dir / (6.0 * n as f64);
        }
        acc
    };
    let ia = quad(c(1.0, 0.0));
    let ib = quad(tau);
    println!("IA = {ia}");
    println!("IB = {ib}");
    // alpha - xi = IA + i pi k ; alpha tau - xi conj(tau) = IB + i pi l
    for k in -2i32..=2 {
        for l in -2i32..=2 {
            let r1 = ia + c(0.0, std::f64::consts::PI) * k as f64;
            let r2 = ib + c(0.0, std::f64::consts::PI) * l as f64;
            // solve [1, -1; tau, -conj(tau)] (alpha, xi) = (r1, r2)
            let det = -tau.conj() + tau;
            let alpha = (-r1 * tau.conj() + r2) / det;
            let xi = (-r1 * tau + r2) / det;
            let d = xi_reduce(xi - xi_expected, &lat).norm();
            let d2 = xi_reduce(xi + xi_expected, &lat).norm();
            if d < 0.05 || d2 < 0.05 {
                println!("k={k} l={l}: alpha = {alpha}, xi = {xi}, d+={d:.2e} d-={d2:.2e}");
            }
        }
    }
    println!("xi_expected = {xi_expected}");
}
// appended second stage
