//! Reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use gwlr::greens::g0_dense;
use gwlr::ks_model::KsSystem;
use gwlr::response::wp_dense;
use num_complex::Complex64;

/// 15-point Kronrod nodes on [0, 1] half of [-1, 1] and weights, plus the
/// embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature on a finite interval.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a).abs() < 1e-14 {
        return v;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, 0.5 * tol, depth - 1) + adaptive(f, m, b, 0.5 * tol, depth - 1)
}

/// `int_{-inf}^{inf} f` split at `breaks`, tails mapped by `x = b +- t/(1-t)`.
pub fn real_line(f: &dyn Fn(f64) -> f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts = breaks.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let lo = pts[0];
    let hi = *pts.last().unwrap();
    let left = |t: f64| {
        let r = 1.0 - t;
        f(lo - t / r) / (r * r)
    };
    let right = |t: f64| {
        let r = 1.0 - t;
        f(hi + t / r) / (r * r)
    };
    let mut total = adaptive(&left, 0.0, 1.0, tol, 60) + adaptive(&right, 0.0, 1.0, tol, 60);
    for w in pts.windows(2) {
        total += adaptive(f, w[0], w[1], tol, 60);
    }
    total
}

/// `Sigma_C(w) = Re (i / 2 pi) int <psi_i|G0(w + w') ⊙ W_p(w')|psi_i> dw'`
/// along the real axis with finite broadening `eta` in both factors.
pub fn sigma_c_real_axis(sys: &KsSystem, i: usize, omega: f64, eta: f64, screening_poles: &[f64]) -> f64 {
    let psi = sys.orbitals().column(i).into_owned();
    let f = |x: f64| -> f64 {
        let w = Complex64::new(x, 0.0);
        let g = g0_dense(sys, w + omega, eta).unwrap();
        let wp = wp_dense(sys, w, eta).unwrap();
        let mut acc = Complex64::new(0.0, 0.0);
        for c in 0..sys.n_grid() {
            for r in 0..sys.n_grid() {
                acc += psi[r] * g[(r, c)] * wp[(r, c)] * psi[c];
            }
        }
        -acc.im / (2.0 * PI)
    };
    let mut breaks: Vec<f64> = sys.eigenvalues().iter().map(|e| e - omega).collect();
    for &om in screening_poles {
        breaks.push(om);
        breaks.push(-om);
    }
    real_line(&f, &breaks, 1e-10)
}
