//! Exchange and correlation matrix elements, the sum-over-states reference,
//! and the quasiparticle equation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{jacobian, lgr_rule, sigma_c_contour, DenseWp, IntegrationPath, WpProvider};
use crate::error::{GwError, Result};
use crate::ks_model::KsSystem;
use crate::lowrank::{svd_wp, BoundData, ErrorBounds, LowRankScheme, LowRankWp};
use crate::response::POLE_GUARD;
use crate::spectra::{auto_shift, casida_energies, casida_full, CasidaSpectrum};

/// `<psi_i|Sigma_X|psi_i> = -sum_{j occ} rho_ij^T v rho_ij`.
pub fn sigma_x_element(sys: &KsSystem, i: usize) -> Result<f64> {
    sys.check_state(i)?;
    let mut acc = 0.0;
    for j in 0..sys.n_occ() {
        let rho = sys.pair_density(i, j)?;
        acc -= rho.dot(&(sys.coulomb() * &rho));
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftPolicy {
    /// Midpoint of the residue-free window, or the widest pole-free gap.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaConfig {
    /// `None` selects the dense `W_p`.
    pub scheme: Option<LowRankScheme>,
    pub rank: usize,
    pub quad: usize,
    pub shift: ShiftPolicy,
    /// Project onto the `svd-wp` bases of `W_p(0)` instead of refactoring.
    pub reuse_basis: bool,
    /// Attach integrated error bounds to low-rank reports.
    pub bounds: bool,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        Self { scheme: None, rank: 0, quad: 64, shift: ShiftPolicy::Auto, reuse_basis: false, bounds: true }
    }
}

impl SigmaConfig {
    pub fn dense(quad: usize) -> Self {
        Self { quad, ..Self::default() }
    }

    pub fn low_rank(scheme: LowRankScheme, rank: usize, quad: usize) -> Self {
        Self { scheme: Some(scheme), rank, quad, ..Self::default() }
    }

    pub fn with_shift(mut self, shift: ShiftPolicy) -> Self {
        self.shift = shift;
        self
    }

    pub fn scheme_name(&self) -> &'static str {
        self.scheme.map_or("dense", LowRankScheme::as_str)
    }
}

/// One `<psi_i|Sigma(w)|psi_i>` evaluation. Energies in Hartree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaReport {
    /// 0-based state index.
    pub state: usize,
    pub omega: f64,
    pub sigma_x: f64,
    pub sigma_c: f64,
    pub scheme: String,
    pub rank: Option<usize>,
    pub quad: usize,
    pub shift: f64,
    pub residue_count: usize,
    pub delta_w: f64,
    /// Bounds on `|Sigma_C(k) - Sigma_C|`, integrated along the path.
    pub bounds: Option<ErrorBounds>,
    pub oracle_value: Option<f64>,
    pub oracle_error: Option<f64>,
}

impl SigmaReport {
    pub fn with_oracle(mut self, value: f64) -> Self {
        self.oracle_value = Some(value);
        self.oracle_error = Some((self.sigma_c - value).abs());
        self
    }
}

fn resolve_shift(sys: &KsSystem, omega: f64, dw: f64, policy: ShiftPolicy) -> Result<f64> {
    match policy {
        ShiftPolicy::Auto => auto_shift(sys, omega, dw),
        ShiftPolicy::Fixed(s) => Ok(s),
    }
}

/// Builds the path for `cfg` and the matching `W_p` source.
pub fn prepare(
    sys: &KsSystem,
    omega: f64,
    cfg: &SigmaConfig,
) -> Result<(IntegrationPath, Box<dyn WpProvider>, f64)> {
    let poles = casida_energies(sys)?;
    let dw = poles[0];
    let shift = resolve_shift(sys, omega, dw, cfg.shift)?;
    let path = IntegrationPath::new(sys, omega, shift, lgr_rule(cfg.quad)?, &poles)?;
    let provider: Box<dyn WpProvider> = match cfg.scheme {
        None => Box::new(DenseWp),
        Some(scheme) => {
            let mut p = LowRankWp::new(scheme, cfg.rank);
            if cfg.reuse_basis {
                p.basis = Some(svd_wp(sys, Complex64::new(0.0, 0.0), cfg.rank)?);
            }
            Box::new(p)
        }
    };
    Ok((path, provider, dw))
}

/// Rank-independent inputs of the integrated bounds along one path.
///
/// Each node contributes `(w_q J_q / pi) E(w_s + i zeta_q)`; each residue
/// contributes the same bound with `||G0||` replaced by `||rho_ij||^2`.
#[derive(Debug, Clone)]
pub struct PathBounds {
    nodes: Vec<(f64, BoundData)>,
    residues: Vec<BoundData>,
}

impl PathBounds {
    pub fn evaluate(sys: &KsSystem, i: usize, omega: f64, path: &IntegrationPath) -> Result<Self> {
        let nodes = (0..path.rule.m())
            .into_par_iter()
            .map(|q| {
                let scale = path.rule.weights[q] * jacobian(path.rule.nodes[q]) / PI;
                BoundData::evaluate(sys, omega, path.frequency(q)).map(|d| (scale, d))
            })
            .collect::<Result<_>>()?;
        let residues = path
            .residues
            .iter()
            .map(|p| {
                let rho = sys.pair_density(i, p.state)?;
                BoundData::with_g0_norm(sys, Complex64::new(p.z, 0.0), rho.norm_squared())
            })
            .collect::<Result<_>>()?;
        Ok(Self { nodes, residues })
    }

    /// Bounds on `|Sigma_C(k) - Sigma_C|` for a rank-`k` replacement of `W_p`.
    pub fn bounds(&self, k: usize) -> ErrorBounds {
        let mut total = ErrorBounds::ZERO;
        for (scale, d) in &self.nodes {
            total.scaled_add(&d.bounds(k), *scale);
        }
        for d in &self.residues {
            total.scaled_add(&d.bounds(k), 1.0);
        }
        total
    }
}

/// `<psi_i|Sigma_X + Sigma_C(w)|psi_i>` on the deformed contour.
pub fn sigma_c_element(sys: &KsSystem, i: usize, omega: f64, cfg: &SigmaConfig) -> Result<SigmaReport> {
    sys.check_state(i)?;
    let (path, provider, dw) = prepare(sys, omega, cfg)?;
    let sigma_c = sigma_c_contour(sys, i, omega, &path, provider.as_ref())?;
    let bounds = match cfg.scheme {
        Some(_) if cfg.bounds && !cfg.reuse_basis => Some(PathBounds::evaluate(sys, i, omega, &path)?.bounds(cfg.rank)),
        _ => None,
    };
    Ok(SigmaReport {
        state: i,
        omega,
        sigma_x: sigma_x_element(sys, i)?,
        sigma_c,
        scheme: cfg.scheme_name().to_string(),
        rank: cfg.scheme.map(|_| cfg.rank),
        quad: cfg.quad,
        shift: path.shift,
        residue_count: path.residues.len(),
        delta_w: dw,
        bounds,
        oracle_value: None,
        oracle_error: None,
    })
}

/// Closed-form `Sigma_C` from the pole expansions of `G0` and `W_p`:
///
/// `sum_s [ sum_{j occ} a_js / (w - eps_j + Omega_s) + sum_{j unocc} a_js / (w - eps_j - Omega_s) ]`
/// with `a_js = (rho_ij^T b_s)^2`.
pub fn sigma_c_sos_with(sys: &KsSystem, spectrum: &CasidaSpectrum, i: usize, omega: f64) -> Result<f64> {
    sys.check_state(i)?;
    let mut total = 0.0;
    for j in 0..sys.n_states() {
        let rho = sys.pair_density(i, j)?;
        let proj = spectrum.amplitudes.tr_mul(&rho);
        let occupied = sys.is_occupied(j);
        for (s, &om) in spectrum.omegas.iter().enumerate() {
            let denom = omega - sys.eigenvalues()[j] + if occupied { om } else { -om };
            if denom.abs() < POLE_GUARD {
                return Err(GwError::PoleProximity {
                    what: "sum-over-states denominator",
                    omega: format!("{omega}"),
                    distance: denom.abs(),
                });
            }
            total += proj[s] * proj[s] / denom;
        }
    }
    Ok(total)
}

pub fn sigma_c_exact_sos(sys: &KsSystem, i: usize, omega: f64) -> Result<f64> {
    sigma_c_sos_with(sys, &casida_full(sys)?, i, omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpResult {
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `eps_i + Sigma(w) - V_xc - w` at the returned energy.
    pub residual: f64,
}

/// Secant iteration on `w = eps_i + sigma(w) - vxc`, started from
/// `w0 = eps_i` and `w1 = eps_i + sigma(eps_i) - vxc`.
pub fn solve_qp_with(
    eps_i: f64,
    vxc: f64,
    mut sigma: impl FnMut(f64) -> Result<f64>,
    opts: QpOptions,
) -> Result<QpResult> {
    let mut residual = |w: f64| -> Result<f64> { Ok(eps_i + sigma(w)? - vxc - w) };
    let (mut x0, mut f0) = (eps_i, residual(eps_i)?);
    let mut x1 = x0 + f0;
    let mut f1 = residual(x1)?;
    let mut iterations = 1;
    let mut converged = (x1 - x0).abs() <= opts.tol || f1 == 0.0;
    while !converged && iterations < opts.max_iter {
        let slope = (f1 - f0) / (x1 - x0);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let x2 = x1 - f1 / slope;
        let f2 = residual(x2)?;
        iterations += 1;
        converged = (x2 - x1).abs() <= opts.tol || f2 == 0.0;
        (x0, f0, x1, f1) = (x1, f1, x2, f2);
    }
    Ok(QpResult { energy: x1, iterations, converged, residual: f1 })
}

/// Quasiparticle energy of state `i` with `Sigma = Sigma_X + Sigma_C(w)`.
pub fn solve_qp(sys: &KsSystem, i: usize, cfg: &SigmaConfig, opts: QpOptions) -> Result<QpResult> {
    sys.check_state(i)?;
    let vxc = sys.vxc().ok_or(GwError::MissingVxc)?[i];
    let sx = sigma_x_element(sys, i)?;
    solve_qp_with(
        sys.eigenvalues()[i],
        vxc,
        |w| Ok(sx + sigma_c_element(sys, i, w, cfg)?.sigma_c),
        opts,
    )
}
