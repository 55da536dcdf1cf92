//! Legendre–Gauss–Radau quadrature on the imaginary half-line and the
//! residue-corrected contour integral for `<psi_i|Sigma_C(w)|psi_i>`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::greens::{g0_apply, g0_dense};
use crate::ks_model::KsSystem;
use crate::linalg::CMat;
use crate::lowrank::LowRankFactor;
use crate::response::wp_dense;
use crate::spectra::{check_screening_poles, enclosed_g0_poles, EnclosedPole, PATH_GUARD};

/// Radau rule on `[0, 1)` with its fixed node at `xi = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Orthonormal Jacobi(0, 1) recurrence on `[-1, 1]`: diagonal `a_k` and
/// off-diagonal `b_k` of the Jacobi matrix for the weight `1 + x`.
fn jacobi01_a(k: usize) -> f64 {
    let k = k as f64;
    1.0 / ((2.0 * k + 1.0) * (2.0 * k + 3.0))
}

fn jacobi01_b(k: usize) -> f64 {
    let k = k as f64;
    (k * (k + 1.0)).sqrt() / (2.0 * k + 1.0)
}

/// Values and derivatives of the orthonormal polynomials `p_0 ..= p_n` at `x`.
fn jacobi01_eval(n: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n + 1];
    let mut dp = vec![0.0; n + 1];
    p[0] = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..n {
        let (prev, dprev) = if k > 0 { (jacobi01_b(k) * p[k - 1], jacobi01_b(k) * dp[k - 1]) } else { (0.0, 0.0) };
        let b = jacobi01_b(k + 1);
        p[k + 1] = ((x - jacobi01_a(k)) * p[k] - prev) / b;
        dp[k + 1] = (p[k] + (x - jacobi01_a(k)) * dp[k] - dprev) / b;
    }
    (p, dp)
}

/// `m`-point Legendre–Gauss–Radau rule mapped to `[0, 1)`.
///
/// The free nodes of the Radau rule with fixed node `-1` are the Gauss nodes
/// for the weight `1 + x`, taken from the eigenvalues of its Jacobi matrix
/// and polished by Newton steps. Weights are `lambda_j / (1 + x_j)` with the
/// Christoffel numbers `lambda_j = 1 / sum_k p_k(x_j)^2`, a sum of positive
/// terms that keeps `sum w = 1` at round-off level for large `m`.
pub fn lgr_rule(m: usize) -> Result<QuadratureRule> {
    if m < 2 {
        return Err(GwError::InvalidArgument(format!("quadrature needs m >= 2, got {m}")));
    }
    let n = m - 1;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = jacobi01_a(k);
        if k > 0 {
            jac[(k - 1, k)] = jacobi01_b(k);
            jac[(k, k - 1)] = jacobi01_b(k);
        }
    }
    let eig = SymmetricEigen::try_new(jac, f64::EPSILON, 0)
        .ok_or_else(|| GwError::Eigensolver("Radau Jacobi matrix".into()))?;
    let mut x: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    x.sort_by(f64::total_cmp);

    let mf = m as f64;
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    nodes.push(0.0);
    weights.push(1.0 / (mf * mf));
    for x0 in x {
        let mut xj = x0;
        for _ in 0..3 {
            let (p, dp) = jacobi01_eval(n, xj);
            xj -= p[n] / dp[n];
        }
        let (p, _) = jacobi01_eval(n, xj);
        let lambda = 1.0 / p[..n].iter().map(|v| v * v).sum::<f64>();
        nodes.push(0.5 * (xj + 1.0));
        weights.push(0.5 * lambda / (1.0 + xj));
    }
    if nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(GwError::Eigensolver("Radau nodes not strictly increasing".into()));
    }
    Ok(QuadratureRule { nodes, weights })
}

/// `zeta = xi / (1 - xi)`.
pub fn zeta_of(xi: f64) -> f64 {
    xi / (1.0 - xi)
}

/// `d zeta / d xi = (1 - xi)^{-2}`.
pub fn jacobian(xi: f64) -> f64 {
    let r = 1.0 - xi;
    1.0 / (r * r)
}

/// `W_p` at one frequency, in whichever representation a provider produces.
pub enum WpOperator {
    Dense(CMat),
    LowRank(LowRankFactor),
    Zero,
}

/// Source of `W_p(w')`. Implementations must be callable concurrently.
pub trait WpProvider: Sync {
    fn at(&self, sys: &KsSystem, omega_prime: Complex64) -> Result<WpOperator>;
}

/// Exact `W_p` from the dense dielectric route.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseWp;

impl WpProvider for DenseWp {
    fn at(&self, sys: &KsSystem, omega_prime: Complex64) -> Result<WpOperator> {
        Ok(WpOperator::Dense(wp_dense(sys, omega_prime, 0.0)?))
    }
}

/// `W_p = 0`, i.e. no correlation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroWp;

impl WpProvider for ZeroWp {
    fn at(&self, _: &KsSystem, _: Complex64) -> Result<WpOperator> {
        Ok(WpOperator::Zero)
    }
}

/// `<psi_i|G0(w + w') ⊙ W_p(w')|psi_i>`.
///
/// Low-rank operators use `trace[V_psi^* G0 U_psi S]` with
/// `U_psi = diag(psi_i) U` and `V_psi = diag(psi_i) V`, which only needs `G0`
/// applied to `k` vectors.
pub fn integrand_sample(
    sys: &KsSystem,
    i: usize,
    omega: f64,
    omega_prime: Complex64,
    provider: &dyn WpProvider,
) -> Result<Complex64> {
    sys.check_state(i)?;
    let op = provider.at(sys, omega_prime)?;
    integrand_with(sys, i, omega, omega_prime, &op)
}

pub(crate) fn integrand_with(
    sys: &KsSystem,
    i: usize,
    omega: f64,
    omega_prime: Complex64,
    op: &WpOperator,
) -> Result<Complex64> {
    let psi = sys.orbitals().column(i);
    let total = omega_prime + omega;
    match op {
        WpOperator::Zero => Ok(Complex64::new(0.0, 0.0)),
        WpOperator::Dense(w) => {
            let g = g0_dense(sys, total, 0.0)?;
            let n = sys.n_grid();
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..n {
                let mut col = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    col += psi[r] * g[(r, c)] * w[(r, c)];
                }
                acc += col * psi[c];
            }
            Ok(acc)
        }
        WpOperator::LowRank(f) => {
            let mut u_psi = f.u.clone();
            let mut v_psi = f.v.clone();
            for r in 0..sys.n_grid() {
                let mut ru = u_psi.row_mut(r);
                ru *= Complex64::new(psi[r], 0.0);
                let mut rv = v_psi.row_mut(r);
                rv *= Complex64::new(psi[r], 0.0);
            }
            let gu = g0_apply(sys, total, 0.0, &u_psi)?;
            Ok((v_psi.adjoint() * gu * &f.s).trace())
        }
    }
}

/// Vertical path `Re w' = shift` together with the G0 residues it requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationPath {
    pub shift: f64,
    pub rule: QuadratureRule,
    pub residues: Vec<EnclosedPole>,
}

impl IntegrationPath {
    /// Validates the path against the G0 poles at `eps_j - w` and the
    /// screening poles `+-Omega_s`; enclosed G0 poles must not sit on a
    /// screening pole, where their residue would be undefined.
    pub fn new(sys: &KsSystem, omega: f64, shift: f64, rule: QuadratureRule, screening: &[f64]) -> Result<Self> {
        check_screening_poles(shift, screening)?;
        let residues = enclosed_g0_poles(sys, omega, shift)?;
        for p in &residues {
            let dist = screening.iter().map(|om| (p.z.abs() - om).abs()).fold(f64::INFINITY, f64::min);
            if dist < PATH_GUARD {
                return Err(GwError::PoleProximity {
                    what: "residue point near W_p pole",
                    omega: format!("{}", p.z),
                    distance: dist,
                });
            }
        }
        Ok(Self { shift, rule, residues })
    }

    pub fn frequency(&self, q: usize) -> Complex64 {
        Complex64::new(self.shift, zeta_of(self.rule.nodes[q]))
    }
}

/// Residue contribution `sum_j sign_j rho_ij^T W_p(z_j) rho_ij`.
pub fn residue_correction(
    sys: &KsSystem,
    i: usize,
    residues: &[EnclosedPole],
    provider: &dyn WpProvider,
) -> Result<f64> {
    let mut total = 0.0;
    for p in residues {
        let rho = sys.pair_density(i, p.state)?.map(|x| Complex64::new(x, 0.0));
        let value = match provider.at(sys, Complex64::new(p.z, 0.0))? {
            WpOperator::Zero => Complex64::new(0.0, 0.0),
            WpOperator::Dense(w) => (rho.transpose() * w * &rho)[(0, 0)],
            WpOperator::LowRank(f) => (rho.transpose() * &f.u * &f.s * (f.v.adjoint() * &rho))[(0, 0)],
        };
        total += p.sign * value.re;
    }
    Ok(total)
}

/// Per-node values `F(w_s + i zeta_q) (1 - xi_q)^{-2}`, in node order.
pub fn path_samples(
    sys: &KsSystem,
    i: usize,
    omega: f64,
    path: &IntegrationPath,
    provider: &dyn WpProvider,
) -> Result<Vec<Complex64>> {
    sys.check_state(i)?;
    (0..path.rule.m())
        .into_par_iter()
        .map(|q| {
            let f = integrand_sample(sys, i, omega, path.frequency(q), provider)?;
            Ok(f * jacobian(path.rule.nodes[q]))
        })
        .collect()
}

/// `Sigma_C(w) = -(1/pi) Re sum_q w_q F_q J_q + residues`.
///
/// The real part is taken because the integrand at `w_s - i zeta` is the
/// conjugate of the one at `w_s + i zeta`.
pub fn sigma_c_contour(
    sys: &KsSystem,
    i: usize,
    omega: f64,
    path: &IntegrationPath,
    provider: &dyn WpProvider,
) -> Result<f64> {
    let samples = path_samples(sys, i, omega, path, provider)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (s, w) in samples.iter().zip(&path.rule.weights) {
        acc += s * *w;
    }
    let residues = residue_correction(sys, i, &path.residues, provider)?;
    Ok(-acc.re / PI + residues)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSweepRow {
    pub shift: f64,
    pub m: usize,
    pub value: f64,
    pub abs_error: f64,
}

/// `I_m` for every shift and `m`, with errors against the largest `m`.
pub fn quadrature_error_sweep(
    sys: &KsSystem,
    i: usize,
    omega: f64,
    shifts: &[f64],
    m_list: &[usize],
    screening: &[f64],
    provider: &dyn WpProvider,
) -> Result<Vec<QuadratureSweepRow>> {
    let m_max = *m_list
        .iter()
        .max()
        .ok_or_else(|| GwError::InvalidArgument("empty quadrature list".into()))?;
    let mut rows = Vec::with_capacity(shifts.len() * m_list.len());
    for &shift in shifts {
        let eval = |m: usize| -> Result<f64> {
            let path = IntegrationPath::new(sys, omega, shift, lgr_rule(m)?, screening)?;
            sigma_c_contour(sys, i, omega, &path, provider)
        };
        let reference = eval(m_max)?;
        for &m in m_list {
            let value = if m == m_max { reference } else { eval(m)? };
            rows.push(QuadratureSweepRow { shift, m, value, abs_error: (value - reference).abs() });
        }
    }
    Ok(rows)
}
