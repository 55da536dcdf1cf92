//! Non-interacting (Kohn–Sham) Green's function.
//!
//! Occupied poles sit at `eps_j + i eta`, unoccupied ones at `eps_j - i eta`.

use num_complex::Complex64;

use crate::error::{GwError, Result};
use crate::ks_model::KsSystem;
use crate::linalg::{complexify, symmetrize, CMat};
use crate::response::{projected_shifted_solve, POLE_GUARD};

/// `G0` at one frequency, optionally with its dense matrix.
#[derive(Debug, Clone)]
pub struct GreensEval {
    pub omega: Complex64,
    pub eta: f64,
    pub matrix: Option<CMat>,
}

impl GreensEval {
    pub fn dense(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<Self> {
        Ok(Self { omega, eta, matrix: Some(g0_dense(sys, omega, eta)?) })
    }
}

/// Scalar resolvent `1/(w - eps_j -+ i eta)` for state `j`.
pub fn g0_diagonal(sys: &KsSystem, j: usize, omega: Complex64, eta: f64) -> Complex64 {
    let sign = if sys.is_occupied(j) { -1.0 } else { 1.0 };
    1.0 / (omega - sys.eigenvalues()[j] + Complex64::new(0.0, sign * eta))
}

fn check_poles(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<()> {
    if eta != 0.0 {
        return Ok(());
    }
    let dist = sys
        .eigenvalues()
        .iter()
        .map(|&e| (omega - e).norm())
        .fold(f64::INFINITY, f64::min);
    if dist < POLE_GUARD {
        return Err(GwError::PoleProximity { what: "G0", omega: format!("{omega}"), distance: dist });
    }
    Ok(())
}

/// Dense `G0(w) = sum_j psi_j psi_j^T / (w - eps_j -+ i eta)`.
pub fn g0_dense(sys: &KsSystem, omega: Complex64, eta: f64) -> Result<CMat> {
    check_poles(sys, omega, eta)?;
    let psi = complexify(sys.orbitals());
    let mut scaled = psi.clone();
    for j in 0..sys.n_states() {
        let mut col = scaled.column_mut(j);
        col *= g0_diagonal(sys, j, omega, eta);
    }
    let mut g = scaled * psi.transpose();
    symmetrize(&mut g);
    Ok(g)
}

/// Spectral norm of `G0(w)`: `max_j |w - eps_j -+ i eta|^{-1}`.
pub fn g0_norm(sys: &KsSystem, omega: Complex64, eta: f64) -> f64 {
    (0..sys.n_states())
        .map(|j| g0_diagonal(sys, j, omega, eta).norm())
        .fold(0.0, f64::max)
}

/// `G0(w) X` from shifted linear solves.
///
/// With `eta = 0` this solves `[w I - H_KS] Y = X`; with `eta > 0` the
/// occupied and unoccupied projected systems are solved separately and summed.
/// Components of `X` outside the span of the stored orbitals are discarded, so
/// the result always agrees with [`g0_dense`].
pub fn g0_apply(sys: &KsSystem, omega: Complex64, eta: f64, x: &CMat) -> Result<CMat> {
    if x.nrows() != sys.n_grid() {
        return Err(GwError::DimensionMismatch {
            what: "g0_apply block".into(),
            expected: sys.n_grid(),
            found: x.nrows(),
        });
    }
    check_poles(sys, omega, eta)?;
    let neg = -x;
    if eta == 0.0 {
        return projected_shifted_solve(sys, 0..sys.n_states(), omega, &neg);
    }
    let ieta = Complex64::new(0.0, eta);
    let occ = projected_shifted_solve(sys, 0..sys.n_occ(), omega - ieta, &neg)?;
    let unocc = projected_shifted_solve(sys, sys.n_occ()..sys.n_states(), omega + ieta, &neg)?;
    Ok(occ + unocc)
}
