//! Rank-`k` approximations of `W_p` and their error bounds.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{WpOperator, WpProvider};
use crate::error::{GwError, Result};
use crate::greens::g0_norm;
use crate::ks_model::KsSystem;
use crate::linalg::{
    complexify, condition_number, singular_values, solve, spectral_norm, symmetric_spectral_norm,
    tail_singular_value, truncated_svd, CMat,
};
use crate::response::{chi0_dense, epsilon_inverse, vchi_dense, wp_dense};

/// Largest acceptable condition number of the small SMW/Fourier systems.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LowRankScheme {
    #[serde(rename = "svd-wp")]
    SvdWp,
    #[serde(rename = "svd-vchi")]
    SvdVchi,
    #[serde(rename = "smw-vchi0")]
    SmwVchi0,
    #[serde(rename = "fourier")]
    FourierTrunc,
}

impl LowRankScheme {
    pub const ALL: [LowRankScheme; 4] =
        [Self::SvdWp, Self::SvdVchi, Self::SmwVchi0, Self::FourierTrunc];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SvdWp => "svd-wp",
            Self::SvdVchi => "svd-vchi",
            Self::SmwVchi0 => "smw-vchi0",
            Self::FourierTrunc => "fourier",
        }
    }
}

impl fmt::Display for LowRankScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LowRankScheme {
    type Err = GwError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| GwError::InvalidArgument(format!("unknown low-rank scheme '{s}'")))
    }
}

/// `W_p(omega) ~ U S V^*`.
#[derive(Debug, Clone)]
pub struct LowRankFactor {
    pub scheme: LowRankScheme,
    pub omega: Complex64,
    pub k: usize,
    pub u: CMat,
    pub s: CMat,
    pub v: CMat,
}

impl LowRankFactor {
    /// Truncated SVD of an arbitrary matrix, tagged as `SvdWp`.
    pub fn from_dense(m: CMat, k: usize) -> Self {
        let (u, s, v) = truncated_svd(&m, k).expect("SVD of a finite matrix");
        let k = s.len();
        Self { scheme: LowRankScheme::SvdWp, omega: Complex64::new(0.0, 0.0), k, u, s: diag(&s), v }
    }

    pub fn to_dense(&self) -> CMat {
        &self.u * &self.s * self.v.adjoint()
    }
}

fn diag(s: &[f64]) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        s.len(),
        s.iter().map(|&x| Complex64::new(x, 0.0)),
    ))
}

fn check_rank(sys: &KsSystem, k: usize) -> Result<()> {
    if k == 0 || k > sys.n_grid() {
        return Err(GwError::InvalidArgument(format!("rank {k} outside 1..={}", sys.n_grid())));
    }
    Ok(())
}

/// Best rank-`k` approximation of `W_p` in the 2-norm.
pub fn svd_wp(sys: &KsSystem, omega: Complex64, k: usize) -> Result<LowRankFactor> {
    check_rank(sys, k)?;
    let (u, s, v) = truncated_svd(&wp_dense(sys, omega, 0.0)?, k)?;
    Ok(LowRankFactor { scheme: LowRankScheme::SvdWp, omega, k, u, s: diag(&s), v })
}

/// `W_p ~ U S (v V)^*` from the truncated SVD `U S V^*` of `v chi`.
pub fn svd_vchi(sys: &KsSystem, omega: Complex64, k: usize) -> Result<LowRankFactor> {
    check_rank(sys, k)?;
    let (u, s, v) = truncated_svd(&vchi_dense(sys, omega, 0.0)?, k)?;
    let v = complexify(sys.coulomb()) * v;
    Ok(LowRankFactor { scheme: LowRankScheme::SvdVchi, omega, k, u, s: diag(&s), v })
}

/// SMW route from the truncated SVD `U S V^*` of `v chi0`:
/// `W_p ~ U S (I - V^* U S)^{-1} (v V)^*`, which never inverts `S`.
pub fn smw_vchi0(sys: &KsSystem, omega: Complex64, k: usize) -> Result<LowRankFactor> {
    check_rank(sys, k)?;
    let v_mat = complexify(sys.coulomb());
    let vchi0 = &v_mat * chi0_dense(sys, omega, 0.0)?;
    let (u, s, v) = truncated_svd(&vchi0, k)?;
    let s = diag(&s);
    let k = s.nrows();
    let inner = CMat::identity(k, k) - v.adjoint() * &u * &s;
    let cond = condition_number(&inner);
    if !(cond <= MAX_CONDITION) {
        return Err(GwError::IllConditioned { cond });
    }
    let middle = &s * solve(inner, &CMat::identity(k, k), "SMW core")?;
    Ok(LowRankFactor { scheme: LowRankScheme::SmwVchi0, omega, k, u, s: middle, v: v_mat * v })
}

/// Unitary DFT matrix `F_{jk} = exp(-2 pi i jk / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> CMat {
    let norm = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |j, k| Complex64::from_polar(norm, -2.0 * PI * ((j * k) % n) as f64 / n as f64))
}

/// Frequencies kept by Coulomb truncation: the `k` largest diagonal entries
/// of `F^* v F`, ties going to the lower index.
pub fn fourier_modes(sys: &KsSystem, k: usize) -> Vec<(usize, f64)> {
    let f = dft_matrix(sys.n_grid());
    let vhat = f.adjoint() * complexify(sys.coulomb()) * &f;
    let mut modes: Vec<(usize, f64)> = (0..sys.n_grid()).map(|q| (q, vhat[(q, q)].re)).collect();
    modes.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    modes.truncate(k);
    modes
}

/// Reciprocal-space Coulomb truncation:
/// `W_p ~ (F E_t v_t) X (I - v_t X)^{-1} (F E_t v_t)^*` with
/// `X = E_t^T F^* chi0 F E_t` and `v_t` the kept diagonal of `F^* v F`.
pub fn fourier_trunc(sys: &KsSystem, omega: Complex64, k: usize) -> Result<LowRankFactor> {
    check_rank(sys, k)?;
    let n = sys.n_grid();
    let modes = fourier_modes(sys, k);
    let f = dft_matrix(n);
    let fe = CMat::from_fn(n, k, |r, c| f[(r, modes[c].0)]);
    let vt: Vec<f64> = modes.iter().map(|m| m.1).collect();
    let x = fe.adjoint() * chi0_dense(sys, omega, 0.0)? * &fe;
    let vt_x = diag(&vt) * &x;
    let inner = CMat::identity(k, k) - vt_x;
    let cond = condition_number(&inner);
    if !(cond <= MAX_CONDITION) {
        return Err(GwError::IllConditioned { cond });
    }
    let middle = x * solve(inner, &CMat::identity(k, k), "truncated dielectric core")?;
    let u = fe * diag(&vt);
    Ok(LowRankFactor { scheme: LowRankScheme::FourierTrunc, omega, k, u: u.clone(), s: middle, v: u })
}

pub fn build_factor(sys: &KsSystem, scheme: LowRankScheme, omega: Complex64, k: usize) -> Result<LowRankFactor> {
    match scheme {
        LowRankScheme::SvdWp => svd_wp(sys, omega, k),
        LowRankScheme::SvdVchi => svd_vchi(sys, omega, k),
        LowRankScheme::SmwVchi0 => smw_vchi0(sys, omega, k),
        LowRankScheme::FourierTrunc => fourier_trunc(sys, omega, k),
    }
}

/// Reuses the bases of a factor computed at another frequency:
/// `W_p(omega) ~ U (U^* W_p(omega) V) V^*`. The bases must be orthonormal.
pub fn reuse_basis(sys: &KsSystem, basis: &LowRankFactor, omega: Complex64) -> Result<LowRankFactor> {
    let wp = wp_dense(sys, omega, 0.0)?;
    let s = basis.u.adjoint() * wp * &basis.v;
    Ok(LowRankFactor { omega, s, ..basis.clone() })
}

/// Normalized singular values of `W_p`, `v chi0` and `v chi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularValueProfile {
    pub wp: Vec<f64>,
    pub vchi0: Vec<f64>,
    pub vchi: Vec<f64>,
}

fn normalized(sv: Vec<f64>) -> Vec<f64> {
    match sv.first().copied() {
        Some(top) if top > 0.0 => sv.into_iter().map(|x| x / top).collect(),
        _ => sv,
    }
}

pub fn singular_value_profile(sys: &KsSystem, omega: Complex64) -> Result<SingularValueProfile> {
    let v = complexify(sys.coulomb());
    Ok(SingularValueProfile {
        wp: normalized(singular_values(&wp_dense(sys, omega, 0.0)?)),
        vchi0: normalized(singular_values(&(&v * chi0_dense(sys, omega, 0.0)?))),
        vchi: normalized(singular_values(&vchi_dense(sys, omega, 0.0)?)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    /// `sigma_{k+1}(v chi0) ||eps^{-1}|| <= 1/2`, required for `e3`.
    pub e3_valid: bool,
}

impl ErrorBounds {
    pub const ZERO: ErrorBounds = ErrorBounds { e1: 0.0, e2: 0.0, e3: 0.0, e3_valid: true };

    /// Bound that applies to `scheme`; Coulomb truncation has none.
    pub fn for_scheme(&self, scheme: LowRankScheme) -> Option<f64> {
        match scheme {
            LowRankScheme::SvdWp => Some(self.e1),
            LowRankScheme::SvdVchi => Some(self.e2),
            LowRankScheme::SmwVchi0 => self.e3_valid.then_some(self.e3),
            LowRankScheme::FourierTrunc => None,
        }
    }

    pub fn scaled_add(&mut self, other: &ErrorBounds, a: f64) {
        self.e1 += a * other.e1;
        self.e2 += a * other.e2;
        self.e3 += a * other.e3;
        self.e3_valid &= other.e3_valid;
    }
}

/// Spectra and norms entering the bounds at one `(w, w')` sample.
#[derive(Debug, Clone)]
pub struct BoundData {
    pub sv_wp: Vec<f64>,
    pub sv_vchi: Vec<f64>,
    pub sv_vchi0: Vec<f64>,
    pub norm_v: f64,
    pub norm_eps_inv: f64,
    pub norm_g0: f64,
}

impl BoundData {
    /// `W_p`-side quantities at `omega_prime`, `||G0||` at `omega + omega_prime`.
    pub fn evaluate(sys: &KsSystem, omega: f64, omega_prime: Complex64) -> Result<Self> {
        Self::with_g0_norm(sys, omega_prime, g0_norm(sys, omega_prime + omega, 0.0))
    }

    /// Same, with an explicit factor in place of `||G0||`.
    pub fn with_g0_norm(sys: &KsSystem, omega_prime: Complex64, norm_g0: f64) -> Result<Self> {
        let v = complexify(sys.coulomb());
        Ok(Self {
            sv_wp: singular_values(&wp_dense(sys, omega_prime, 0.0)?),
            sv_vchi: singular_values(&vchi_dense(sys, omega_prime, 0.0)?),
            sv_vchi0: singular_values(&(&v * chi0_dense(sys, omega_prime, 0.0)?)),
            norm_v: symmetric_spectral_norm(sys.coulomb()),
            norm_eps_inv: spectral_norm(&epsilon_inverse(sys, omega_prime, 0.0)?),
            norm_g0,
        })
    }

    pub fn bounds(&self, k: usize) -> ErrorBounds {
        let s3 = tail_singular_value(&self.sv_vchi0, k);
        ErrorBounds {
            e1: tail_singular_value(&self.sv_wp, k) * self.norm_g0,
            e2: tail_singular_value(&self.sv_vchi, k) * self.norm_v * self.norm_g0,
            e3: 2.0 * s3 * self.norm_eps_inv.powi(2) * self.norm_v * self.norm_g0,
            e3_valid: s3 * self.norm_eps_inv <= 0.5,
        }
    }
}

pub fn error_bounds(sys: &KsSystem, omega: f64, omega_prime: Complex64, k: usize) -> Result<ErrorBounds> {
    Ok(BoundData::evaluate(sys, omega, omega_prime)?.bounds(k))
}

/// Provider producing a fresh factor at every frequency, or projecting onto
/// fixed bases when `basis` is set.
#[derive(Debug, Clone)]
pub struct LowRankWp {
    pub scheme: LowRankScheme,
    pub k: usize,
    pub basis: Option<LowRankFactor>,
}

impl LowRankWp {
    pub fn new(scheme: LowRankScheme, k: usize) -> Self {
        Self { scheme, k, basis: None }
    }
}

impl WpProvider for LowRankWp {
    fn at(&self, sys: &KsSystem, omega_prime: Complex64) -> Result<WpOperator> {
        let f = match &self.basis {
            Some(b) => reuse_basis(sys, b, omega_prime)?,
            None => build_factor(sys, self.scheme, omega_prime, self.k)?,
        };
        Ok(WpOperator::LowRank(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ks_model::{build_model_1d, two_level_system, ModelSpec};
    use crate::linalg::RMat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

    fn rel_err(a: &CMat, b: &CMat) -> f64 {
        spectral_norm(&(a - b)) / spectral_norm(b).max(f64::MIN_POSITIVE)
    }

    fn model() -> KsSystem {
        build_model_1d(&ModelSpec::default()).unwrap()
    }

    #[test]
    fn two_level_rank_one_exact() {
        let sys = two_level_system();
        let wp = wp_dense(&sys, ZERO, 0.0).unwrap();
        let f = svd_wp(&sys, ZERO, 1).unwrap();
        assert!((f.s[(0, 0)].re - 0.25).abs() < 1e-14);
        for scheme in [LowRankScheme::SvdWp, LowRankScheme::SvdVchi, LowRankScheme::SmwVchi0] {
            let f = build_factor(&sys, scheme, ZERO, 1).unwrap();
            assert!(spectral_norm(&(f.to_dense() - &wp)) < 1e-14, "{scheme}");
        }
    }

    #[test]
    fn full_rank_lossless() {
        let sys = model();
        let n = sys.n_grid();
        for w in [ZERO, Complex64::new(0.3, 1.5)] {
            let wp = wp_dense(&sys, w, 0.0).unwrap();
            for scheme in LowRankScheme::ALL {
                let f = build_factor(&sys, scheme, w, n).unwrap();
                assert!(rel_err(&f.to_dense(), &wp) < 1e-10, "{scheme}");
            }
        }
    }

    #[test]
    fn eckart_young_and_orthonormality() {
        let sys = model();
        let wp = wp_dense(&sys, ZERO, 0.0).unwrap();
        let sv = singular_values(&wp);
        for k in [1, 4, 8, 16, 32] {
            let f = svd_wp(&sys, ZERO, k).unwrap();
            let err = spectral_norm(&(f.to_dense() - &wp));
            assert!((err - sv[k]).abs() <= 1e-10 * sv[0], "k={k}");
            let eye = CMat::identity(k, k);
            assert!(spectral_norm(&(f.u.adjoint() * &f.u - &eye)) < 1e-12);
            assert!(spectral_norm(&(f.v.adjoint() * &f.v - &eye)) < 1e-12);
            let d: Vec<f64> = (0..k).map(|j| f.s[(j, j)].re).collect();
            assert!(d.windows(2).all(|p| p[0] >= p[1]) && d.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn vchi_truncation_bounded() {
        let sys = model();
        let w = Complex64::new(0.0, 0.7);
        let wp = wp_dense(&sys, w, 0.0).unwrap();
        let sv = singular_values(&vchi_dense(&sys, w, 0.0).unwrap());
        let nv = symmetric_spectral_norm(sys.coulomb());
        // Floor: disagreement of the two dense routes at full rank.
        let full = svd_vchi(&sys, w, sys.n_grid()).unwrap();
        let floor = 2.0 * spectral_norm(&(full.to_dense() - &wp)) + 1e-14 * spectral_norm(&wp);
        for k in 1..=sys.n_grid() {
            let f = svd_vchi(&sys, w, k).unwrap();
            let err = spectral_norm(&(f.to_dense() - &wp));
            assert!(err <= tail_singular_value(&sv, k) * nv * (1.0 + 1e-8) + floor, "k={k}: {err:e}");
        }
    }

    #[test]
    fn identity_coulomb_vchi_gives_chi() {
        let sys = two_level_system().with_coulomb(RMat::identity(2, 2)).unwrap();
        let chi = crate::response::chi_dense(&sys, ZERO, 0.0).unwrap();
        let f = svd_vchi(&sys, ZERO, 2).unwrap();
        assert!(rel_err(&f.to_dense(), &chi) < 1e-12);
        // Flat Fourier spectrum: one kept mode, error by dense subtraction.
        let f = fourier_trunc(&sys, ZERO, 1).unwrap();
        assert_eq!(fourier_modes(&sys, 1)[0].0, 0);
        let wp = wp_dense(&sys, ZERO, 0.0).unwrap();
        assert!(spectral_norm(&(f.to_dense() - &wp)).is_finite());
    }

    #[test]
    fn profiles_normalized() {
        let p = singular_value_profile(&two_level_system(), ZERO).unwrap();
        for prof in [&p.wp, &p.vchi0, &p.vchi] {
            assert!((prof[0] - 1.0).abs() < 1e-14 && prof[1] < 1e-12);
        }
        let p = singular_value_profile(&model(), Complex64::new(0.0, 2.0)).unwrap();
        for prof in [&p.wp, &p.vchi0, &p.vchi] {
            assert_eq!(prof[0], 1.0);
            assert!(prof.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn bound_ordering_and_full_rank() {
        let sys = model();
        let data = BoundData::evaluate(&sys, sys.midgap(), Complex64::new(0.0, 0.5)).unwrap();
        // Trailing singular values are round-off once k exceeds the rank of v.
        let floor = 1e-13 * data.sv_wp[0] * data.norm_g0;
        for k in 1..=sys.n_grid() {
            let b = data.bounds(k);
            assert!(b.e1 <= b.e2 * (1.0 + 1e-12) + floor, "k={k}");
        }
        let b = data.bounds(sys.n_grid());
        assert_eq!((b.e1, b.e2), (0.0, 0.0));
    }

    #[test]
    fn hadamard_norm_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(2..12);
            let mut rnd = || CMat::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let a = rnd();
            let b = rnd();
            let h = a.component_mul(&b);
            assert!(spectral_norm(&h) <= spectral_norm(&a) * spectral_norm(&b) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn basis_reuse_at_reference_frequency() {
        let sys = model();
        let base = svd_wp(&sys, ZERO, 8).unwrap();
        let again = reuse_basis(&sys, &base, ZERO).unwrap();
        assert!(rel_err(&again.to_dense(), &base.to_dense()) < 1e-10);
        assert!("svd-wp".parse::<LowRankScheme>().unwrap() == LowRankScheme::SvdWp);
        assert!("nope".parse::<LowRankScheme>().is_err());
    }
}
