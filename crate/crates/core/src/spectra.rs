//! Pole structure of `W_p`: the Casida problem, `delta_W`, and the
//! classification of residue-free frequencies.

use nalgebra::Schur;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::ks_model::KsSystem;
use crate::linalg::{complexify, symmetric_eigen_sorted, CMat, RMat};
use crate::response::SPIN_FACTOR;
use crate::HARTREE_TO_EV;
use num_complex::Complex64;

/// Largest `n_v * n_c` handled by the dense Casida eigensolve.
pub const CASIDA_BUDGET: usize = 20_000;

/// Minimum distance between an integration path and any pole.
pub const PATH_GUARD: f64 = 1e-8;

/// RPA excitation energies and the matching pole strengths of `W_p`:
/// `W_p(w) = sum_s b_s b_s^T [1/(w - Omega_s) - 1/(w + Omega_s)]`.
#[derive(Debug, Clone)]
pub struct CasidaSpectrum {
    pub omegas: Vec<f64>,
    /// `n_grid x (n_v n_c)`, column `s` is `b_s`.
    pub amplitudes: RMat,
}

impl CasidaSpectrum {
    /// Smallest excitation energy, i.e. `delta_W`.
    pub fn delta_w(&self) -> f64 {
        self.omegas[0]
    }

    /// `W_p` rebuilt from its pole expansion (time-ordered, `eta -> 0`).
    pub fn wp(&self, omega: Complex64) -> CMat {
        let b = complexify(&self.amplitudes);
        let mut scaled = b.clone();
        for (s, &om) in self.omegas.iter().enumerate() {
            let mut col = scaled.column_mut(s);
            col *= 1.0 / (omega - om) - 1.0 / (omega + om);
        }
        scaled * b.transpose()
    }
}

/// Spin-summed Casida coupling `K = 2 Phi^T v Phi` (pair densities in
/// lexicographic order) and the transition energies `D`.
fn coupling(sys: &KsSystem) -> Result<(RMat, RMat, Vec<f64>)> {
    let size = sys.n_occ() * sys.n_unocc();
    if size > CASIDA_BUDGET {
        return Err(GwError::Budget { size, budget: CASIDA_BUDGET });
    }
    let phi = sys.pair_density_matrix();
    let k = (phi.transpose() * sys.coulomb() * &phi) * SPIN_FACTOR;
    Ok((phi, k, sys.transition_energies()))
}

/// `D^2 + 2 D^{1/2} K D^{1/2}`, whose eigenvalues are `Omega_s^2`.
pub fn reduced_casida_matrix(sys: &KsSystem) -> Result<RMat> {
    let (_, k, d) = coupling(sys)?;
    let n = d.len();
    Ok(RMat::from_fn(n, n, |r, c| {
        let diag = if r == c { d[r] * d[r] } else { 0.0 };
        diag + 2.0 * d[r].sqrt() * k[(r, c)] * d[c].sqrt()
    }))
}

/// The full `2 n_v n_c` Casida matrix `[[D + K, K], [-K, -(D + K)]]`.
pub fn casida_matrix(sys: &KsSystem) -> Result<RMat> {
    let (_, k, d) = coupling(sys)?;
    let n = d.len();
    let mut h = RMat::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let a = k[(r, c)] + if r == c { d[r] } else { 0.0 };
            h[(r, c)] = a;
            h[(r, n + c)] = k[(r, c)];
            h[(n + r, c)] = -k[(r, c)];
            h[(n + r, n + c)] = -a;
        }
    }
    Ok(h)
}

/// Positive eigenvalues of the full Casida matrix, ascending, from a real
/// Schur decomposition. Independent of the reduced symmetric route.
pub fn full_casida_energies(sys: &KsSystem) -> Result<Vec<f64>> {
    let h = casida_matrix(sys)?;
    let schur = Schur::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| GwError::Eigensolver("Schur decomposition did not converge".into()))?;
    let mut pos: Vec<f64> = schur
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.re > 0.0)
        .map(|z| z.re)
        .collect();
    pos.sort_by(f64::total_cmp);
    Ok(pos)
}

/// Poles and pole strengths of `W_p` via the reduced Casida problem.
pub fn casida_full(sys: &KsSystem) -> Result<CasidaSpectrum> {
    let (phi, _, d) = coupling(sys)?;
    let (lambda, z) = symmetric_eigen_sorted(reduced_casida_matrix(sys)?)?;
    if let Some(bad) = lambda.iter().find(|&&l| !(l > 0.0)) {
        return Err(GwError::Eigensolver(format!("non-positive Casida eigenvalue {bad:e}")));
    }
    let omegas: Vec<f64> = lambda.iter().map(|l| l.sqrt()).collect();
    // c_s = v Phi D^{1/2} z_s,  b_s = c_s sqrt(spin / Omega_s)
    let mut dz = z;
    for (r, dr) in d.iter().enumerate() {
        let mut row = dz.row_mut(r);
        row *= dr.sqrt();
    }
    let mut amplitudes = sys.coulomb() * phi * dz;
    for (s, om) in omegas.iter().enumerate() {
        let mut col = amplitudes.column_mut(s);
        col *= (SPIN_FACTOR / om).sqrt();
    }
    Ok(CasidaSpectrum { omegas, amplitudes })
}

/// Poles `Omega_s` of `W_p`, ascending, without the pole strengths.
pub fn casida_energies(sys: &KsSystem) -> Result<Vec<f64>> {
    let lambda = nalgebra::SymmetricEigen::try_new(reduced_casida_matrix(sys)?, f64::EPSILON, 0)
        .ok_or_else(|| GwError::Eigensolver("Casida eigensolver did not converge".into()))?
        .eigenvalues;
    let mut out = Vec::with_capacity(lambda.len());
    for &l in lambda.iter() {
        if !(l > 0.0) {
            return Err(GwError::Eigensolver(format!("non-positive Casida eigenvalue {l:e}")));
        }
        out.push(l.sqrt());
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Smallest positive pole of `W_p`.
pub fn delta_w(sys: &KsSystem) -> Result<f64> {
    Ok(casida_energies(sys)?[0])
}

/// Admissible vertical-path window for a real frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidueFreeReport {
    pub omega: f64,
    pub delta_w: f64,
    pub lb: f64,
    pub ub: f64,
    pub is_residue_free: bool,
    pub suggested_shift: Option<f64>,
}

pub fn residue_free(sys: &KsSystem, omega: f64, delta_w: f64) -> ResidueFreeReport {
    let lb = (-delta_w).max(sys.homo_energy() - omega);
    let ub = (sys.lumo_energy() - omega).min(delta_w);
    let is_residue_free = lb < ub;
    ResidueFreeReport {
        omega,
        delta_w,
        lb,
        ub,
        is_residue_free,
        suggested_shift: is_residue_free.then(|| 0.5 * (lb + ub)),
    }
}

/// A `G0(w + w')` pole enclosed between the real axis and the vertical path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnclosedPole {
    pub state: usize,
    /// Real part of the pole in the `w'` plane, `eps_j - w`.
    pub z: f64,
    pub occupied: bool,
    /// Coefficient of `rho_ij^T W_p(z) rho_ij` in the corrected `Sigma_C`.
    pub sign: f64,
}

/// G0 poles enclosed by the deformed contour through `Re w' = shift`.
///
/// Occupied poles sit just above the axis and are enclosed when they lie to
/// the right of the path; unoccupied poles sit just below and are enclosed
/// when they lie to the left. Occupied residues enter `Sigma_C` with `-1`,
/// unoccupied ones with `+1`.
pub fn enclosed_g0_poles(sys: &KsSystem, omega: f64, shift: f64) -> Result<Vec<EnclosedPole>> {
    let mut out = Vec::new();
    for (j, &e) in sys.eigenvalues().iter().enumerate() {
        let z = e - omega;
        let dist = (z - shift).abs();
        if dist < PATH_GUARD {
            return Err(GwError::PoleOnPath { shift, distance: dist });
        }
        let occupied = sys.is_occupied(j);
        if occupied && z > shift {
            out.push(EnclosedPole { state: j, z, occupied, sign: -1.0 });
        } else if !occupied && z < shift {
            out.push(EnclosedPole { state: j, z, occupied, sign: 1.0 });
        }
    }
    Ok(out)
}

/// Rejects paths that would cross or enclose a pole of `W_p`.
pub fn check_screening_poles(shift: f64, omegas: &[f64]) -> Result<()> {
    for &om in omegas {
        let dist = (shift.abs() - om).abs();
        if dist < PATH_GUARD {
            return Err(GwError::PoleOnPath { shift, distance: dist });
        }
        if shift.abs() > om {
            return Err(GwError::EnclosesScreeningPole { pole: om * shift.signum() });
        }
    }
    Ok(())
}

/// Path shift for an arbitrary real frequency.
///
/// Residue-free frequencies get the midpoint of their window. Otherwise the
/// widest gap between consecutive G0 poles inside `(-delta_W, delta_W)` is
/// used, and the enclosed G0 poles are handled by residues.
pub fn auto_shift(sys: &KsSystem, omega: f64, delta_w: f64) -> Result<f64> {
    let report = residue_free(sys, omega, delta_w);
    if let Some(s) = report.suggested_shift {
        return Ok(s);
    }
    let mut cuts: Vec<f64> = vec![-delta_w, delta_w];
    cuts.extend(
        sys.eigenvalues()
            .iter()
            .map(|e| e - omega)
            .filter(|z| z.abs() < delta_w),
    );
    cuts.sort_by(f64::total_cmp);
    let (lo, hi) = cuts
        .windows(2)
        .map(|w| (w[0], w[1]))
        .max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
        .ok_or_else(|| GwError::InvalidArgument("no admissible path".into()))?;
    if hi - lo < 2.0 * PATH_GUARD {
        return Err(GwError::PoleOnPath { shift: 0.5 * (lo + hi), distance: 0.5 * (hi - lo) });
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleKind {
    G0Occ,
    G0Unocc,
    WpPos,
    WpNeg,
}

impl PoleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PoleKind::G0Occ => "g0_occ",
            PoleKind::G0Unocc => "g0_unocc",
            PoleKind::WpPos => "wp_pos",
            PoleKind::WpNeg => "wp_neg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleRecord {
    pub re: f64,
    pub im: f64,
    pub kind: PoleKind,
}

/// Display broadening for G0 poles in pole maps (0.01 eV).
pub const PLOT_ETA_G0: f64 = 0.01 / HARTREE_TO_EV;
/// Display broadening for `W_p` poles in pole maps (0.02 eV).
pub const PLOT_ETA_WP: f64 = 0.02 / HARTREE_TO_EV;

/// Poles of `G0(w + w')` and `W_p(w')` in the `w'` plane.
pub fn pole_map(sys: &KsSystem, omega: f64, spectrum: &CasidaSpectrum) -> Vec<PoleRecord> {
    let mut out: Vec<PoleRecord> = sys
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let occ = sys.is_occupied(j);
            PoleRecord {
                re: e - omega,
                im: if occ { PLOT_ETA_G0 } else { -PLOT_ETA_G0 },
                kind: if occ { PoleKind::G0Occ } else { PoleKind::G0Unocc },
            }
        })
        .collect();
    for &om in &spectrum.omegas {
        out.push(PoleRecord { re: om, im: -PLOT_ETA_WP, kind: PoleKind::WpPos });
        out.push(PoleRecord { re: -om, im: PLOT_ETA_WP, kind: PoleKind::WpNeg });
    }
    out
}
