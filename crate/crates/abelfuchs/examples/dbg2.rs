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
    let (l1, _) = lat.dual_generators();
    let m = curve.m();
    let x = c(0.23, 0.0) + tau * 0.31;
    let xi = l1 * x;
    let (z_x, y_x) = curve_coords(x, &curve).unwrap();
    let (u, _v) = curve_point_to_u(z_x, y_x, m).unwrap();
    let w = Weights::new([0.26, 0.25, 0.24, 0.23]).unwrap();
    let sys = FuchsianSystem::new(w, m, u, c(0.0, 0.0));
    let (pa, pb) = pullback_cycle_traces(&sys, &curve, 1e-12).unwrap();
    let loops = torus_loops(&lat).unwrap();
    let conn0 = AbelianConnection::new(&curve, &w, xi, c(0.0,0.0)).unwrap();
    let traces = |alpha: Complex64| -> (Complex64, Complex64) {
        let conn = conn0.with_alpha(alpha);
        let field = TorusField(&conn);
        let a = parallel_transport(&field, &loops.cycle_a.segments, 1e-12).unwrap();
        let b = parallel_transport(&field, &loops.cycle_b.segments, 1e-12).unwrap();
        (a.trace(), b.trace())
    };
    for (sa, sb) in [(-1.0f64, -1.0f64), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        let mut alpha = c(2.421715946932978, 0.4703114069783564);
        let mut best = f64::INFINITY;
        for _ in 0..40 {
            let (ta, tb) = traces(alpha);
            let r = [ta.re - sa*pa.re, ta.im - sa*pa.im, tb.re - sb*pb.re, tb.im - sb*pb.im];
            let rn = r.iter().map(|v| v*v).sum::<f64>().sqrt();
            best = rn;
            if rn < 1e-9 { break; }
            let h = 1e-7;
            let (tap, tbp) = traces(alpha + h);
            let (tam, tbm) = traces(alpha - h);
            let (tap2, tbp2) = traces(alpha + c(0.0, h));
            let (tam2, tbm2) = traces(alpha - c(0.0, h));
            let jx = [(tap.re-tam.re)/(2.0*h), (tap.im-tam.im)/(2.0*h), (tbp.re-tbm.re)/(2.0*h), (tbp.im-tbm.im)/(2.0*h)];
            let jy = [(tap2.re-tam2.re)/(2.0*h), (tap2.im-tam2.im)/(2.0*h), (tbp2.re-tbm2.re)/(2.0*h), (tbp2.im-tbm2.im)/(2.0*h)];
            let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0,0.0,0.0,0.0,0.0);
            for i in 0..4 { a11+=jx[i]*jx[i]; a12+=jx[i]*jy[i]; a22+=jy[i]*jy[i]; b1+=jx[i]*r[i]; b2+=jy[i]*r[i]; }
            let det = a11*a22-a12*a12;
            if det.abs() < 1e-300 { break; }
            let dx = (b1*a22-b2*a12)/det; let dy = (a11*b2-a12*b1)/det;
            alpha -= c(dx, dy);
        }
        println!("signs ({sa},{sb}): final residual {best:.3e} at alpha {alpha}");
    }
}
