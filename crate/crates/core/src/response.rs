//! Polarizabilities, dielectric matrix and the screened interaction.
//!
//! All operators are `n_grid x n_grid` complex symmetric matrices. `W_p` is
//! the frequency-dependent part of `W_0 = eps^{-1} v`, i.e. `W_p = eps^{-1} v - v`.

use num_complex::Complex64;

use crate::error::{GwError, Result};
use crate::ks_model::KsSystem;
use crate::linalg::{complexify, solve, symmetrize, CMat, CVec, RMat};

/// Minimum distance from a polarizability pole for real-axis evaluation.
pub const POLE_GUARD: f64 = 1e-10;

/// Spin factor of the closed-shell polarizability.
pub const SPIN_FACTOR: f64 = 2.0;

fn fmt_c(z: Complex64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

/// Per-transition coefficients `2 [1/(w - D + i eta) - 1/(w + D - i eta)]`.
fn chi0_coefficients(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<Vec<Complex64>> {
    let ieta = Complex64::new(0.0, eta);
    sys.transition_energies()
        .into_iter()
        .map(|d| {
            if eta == 0.0 {
                let dist = (omega - d).norm().min((omega + d).norm());
                if dist < POLE_GUARD {
                    return Err(GwError::PoleProximity { what: "chi0", omega: fmt_c(omega), distance: dist });
                }
            }
            Ok(SPIN_FACTOR * (1.0 / (omega - d + ieta) - 1.0 / (omega + d - ieta)))
        })
        .collect()
}

/// Irreducible polarizability by the sum over transitions.
pub fn chi0_dense(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<CMat> {
    let coef = chi0_coefficients(sys, omega, eta)?;
    let phi = complexify(&sys.pair_density_matrix());
    let mut scaled = phi.clone();
    for (c, z) in coef.iter().enumerate() {
        { let mut col = scaled.column_mut(c); col *= *z; }
    }
    let mut chi0 = scaled * phi.transpose();
    symmetrize(&mut chi0);
    Ok(chi0)
}

/// `eps(w) = I - v chi0(w)`.
pub fn epsilon_dense(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<CMat> {
    let n = sys.n_grid();
    Ok(CMat::identity(n, n) - complexify(sys.coulomb()) * chi0_dense(sys, omega, eta)?)
}

/// `eps^{-1}(w)` by a dense solve.
pub fn epsilon_inverse(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<CMat> {
    let n = sys.n_grid();
    solve(epsilon_dense(sys, omega, eta)?, &CMat::identity(n, n), "dielectric matrix")
}

/// Reducible polarizability `chi = [I - chi0 v]^{-1} chi0`.
pub fn chi_dense(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<CMat> {
    let n = sys.n_grid();
    let chi0 = chi0_dense(sys, omega, eta)?;
    let a = CMat::identity(n, n) - &chi0 * complexify(sys.coulomb());
    let mut chi = solve(a, &chi0, "I - chi0 v")?;
    symmetrize(&mut chi);
    Ok(chi)
}

/// `W_p(w) = eps^{-1}(w) v - v`.
///
/// Evaluated as `eps^{-1} (v chi0) v`, which is the same operator without the
/// cancellation of `eps^{-1} v - v` at large `|w|`.
pub fn wp_dense(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<CMat> {
    let v = complexify(sys.coulomb());
    let vchi0 = &v * chi0_dense(sys, omega, eta)?;
    let n = sys.n_grid();
    let eps = CMat::identity(n, n) - &vchi0;
    let mut wp = solve(eps, &vchi0, "dielectric matrix")? * v;
    symmetrize(&mut wp);
    Ok(wp)
}

/// `v chi(w) = eps^{-1}(w) - I`.
pub fn vchi_dense(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<CMat> {
    let v = complexify(sys.coulomb());
    let vchi0 = &v * chi0_dense(sys, omega, eta)?;
    let n = sys.n_grid();
    solve(CMat::identity(n, n) - &vchi0, &vchi0, "dielectric matrix")
}

/// All response quantities at one frequency.
#[derive(Debug, Clone)]
pub struct ResponseSnapshot {
    pub omega: Complex64,
    pub chi0: CMat,
    pub epsilon: CMat,
    pub wp: CMat,
}

impl ResponseSnapshot {
    pub fn evaluate(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<Self> {
        let chi0 = chi0_dense(sys, omega, eta)?;
        let v = complexify(sys.coulomb());
        let n = sys.n_grid();
        let vchi0 = &v * &chi0;
        let epsilon = CMat::identity(n, n) - &vchi0;
        let mut wp = solve(epsilon.clone(), &vchi0, "dielectric matrix")? * v;
        symmetrize(&mut wp);
        Ok(Self { omega, chi0, epsilon, wp })
    }
}

/// Solves the projected shifted system `P (H - s) P x = P rhs` on the range of
/// the projector `P = Psi_S Psi_S^T` for the given contiguous block of states.
///
/// The operator is completed with the identity on the complement, so the
/// dense matrix `Psi_S diag(eps_S - s) Psi_S^T + (I - P)` is factorized.
pub(crate) fn projected_shifted_solve(
    sys: &KsSystem,
    states: std::ops::Range<usize>,
    shift: Complex64,
    rhs: &CMat,
) -> Result<CMat> {
    if let Some(d) = states
        .clone()
        .map(|j| (sys.eigenvalues()[j] - shift).norm())
        .min_by(f64::total_cmp)
    {
        if d < POLE_GUARD {
            return Err(GwError::SingularShift { shift: fmt_c(shift) });
        }
    }
    let n = sys.n_grid();
    let psi: RMat = sys.orbitals().columns(states.start, states.len()).into_owned();
    let proj = complexify(&sys.projector(states.clone()));
    let mut scaled = complexify(&psi);
    for (c, j) in states.clone().enumerate() {
        { let mut col = scaled.column_mut(c); col *= Complex64::new(sys.eigenvalues()[j], 0.0) - shift; }
    }
    let op = scaled * complexify(&psi).transpose() + (CMat::identity(n, n) - &proj);
    let projected_rhs = &proj * rhs;
    solve(op, &projected_rhs, "shifted Kohn-Sham operator")
        .map_err(|_| GwError::SingularShift { shift: fmt_c(shift) })
}

/// `chi0(w) g` without forming `chi0`, from Sternheimer solves.
///
/// For every occupied `i` the projected systems
/// `[H - (eps_i + w)] dpsi+ = -P_c diag(psi_i) g` and
/// `[H - (eps_i - w)] dpsi- = -P_c diag(psi_i) g` are solved on the
/// unoccupied subspace, and `2 sum_i diag(psi_i)(dpsi+ + dpsi-)` is returned.
pub fn chi0_apply(sys: &KsSystem, omega: Complex64, g: &CVec) -> Result<CVec> {
    let n = sys.n_grid();
    if g.len() != n {
        return Err(GwError::DimensionMismatch { what: "chi0_apply vector".into(), expected: n, found: g.len() });
    }
    let unocc = sys.n_occ()..sys.n_states();
    let mut out = CVec::zeros(n);
    for i in 0..sys.n_occ() {
        let psi_i = sys.orbitals().column(i);
        let rhs = CMat::from_fn(n, 1, |r, _| -g[r] * psi_i[r]);
        let eps_i = Complex64::new(sys.eigenvalues()[i], 0.0);
        let plus = projected_shifted_solve(sys, unocc.clone(), eps_i + omega, &rhs)?;
        let minus = projected_shifted_solve(sys, unocc.clone(), eps_i - omega, &rhs)?;
        for r in 0..n {
            out[r] += SPIN_FACTOR * psi_i[r] * (plus[(r, 0)] + minus[(r, 0)]);
        }
    }
    Ok(out)
}
