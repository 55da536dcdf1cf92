//! Discrete Kohn–Sham ground state.
//!
//! Orbitals are stored with quadrature weights folded in, so every inner
//! product downstream is a plain dot product and `Psi^T Psi = I`. The Coulomb
//! matrix `v` acts on pair-density vectors built from those orbitals.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::linalg::{min_symmetric_eigenvalue, symmetric_eigen_sorted, symmetric_spectral_norm, RMat};

pub const ORTHONORMALITY_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-12;
pub const GAP_TOL: f64 = 1e-10;

/// Immutable ground-state data: eigenpairs, Coulomb kernel, occupation.
#[derive(Debug, Clone, PartialEq)]
pub struct KsSystem {
    eigenvalues: Vec<f64>,
    orbitals: RMat,
    coulomb: RMat,
    n_v: usize,
    vxc: Option<Vec<f64>>,
}

impl KsSystem {
    /// Validates and wraps ground-state data.
    ///
    /// `orbitals` is `n_grid x n` (columns are states), `coulomb` is
    /// `n_grid x n_grid`.
    pub fn new(
        eigenvalues: Vec<f64>,
        orbitals: RMat,
        coulomb: RMat,
        n_v: usize,
        vxc: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        let n_grid = orbitals.nrows();
        if orbitals.ncols() != n {
            return Err(GwError::DimensionMismatch {
                what: "orbital columns".into(),
                expected: n,
                found: orbitals.ncols(),
            });
        }
        if n > n_grid {
            return Err(GwError::Invariant {
                check: "state count",
                detail: format!("n = {n} exceeds n_grid = {n_grid}"),
            });
        }
        if coulomb.nrows() != n_grid || coulomb.ncols() != n_grid {
            return Err(GwError::DimensionMismatch {
                what: "coulomb matrix".into(),
                expected: n_grid * n_grid,
                found: coulomb.nrows() * coulomb.ncols(),
            });
        }
        if let Some(vxc) = &vxc {
            if vxc.len() != n {
                return Err(GwError::DimensionMismatch {
                    what: "vxc elements".into(),
                    expected: n,
                    found: vxc.len(),
                });
            }
        }
        if n_v == 0 || n_v >= n {
            return Err(GwError::Invariant {
                check: "occupation",
                detail: format!("need 0 < n_v < n, got n_v = {n_v}, n = {n}"),
            });
        }
        if eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(GwError::Invariant { check: "eigenvalues", detail: "non-finite eigenvalue".into() });
        }
        if let Some(k) = eigenvalues.windows(2).position(|w| w[1] < w[0]) {
            return Err(GwError::Invariant {
                check: "eigenvalue ordering",
                detail: format!("eigenvalue {} < eigenvalue {}", k + 1, k),
            });
        }
        let gram = orbitals.transpose() * &orbitals;
        let dev = (gram - RMat::identity(n, n)).amax();
        if !(dev <= ORTHONORMALITY_TOL) {
            return Err(GwError::Invariant {
                check: "orthonormality",
                detail: format!("max |Psi^T Psi - I| = {dev:e}"),
            });
        }
        for r in 0..n_grid {
            for c in (r + 1)..n_grid {
                if coulomb[(r, c)] != coulomb[(c, r)] {
                    return Err(GwError::Invariant {
                        check: "coulomb symmetry",
                        detail: format!("v[{r}][{c}] != v[{c}][{r}]"),
                    });
                }
            }
        }
        let vnorm = symmetric_spectral_norm(&coulomb);
        let lmin = min_symmetric_eigenvalue(&coulomb);
        if lmin < -PSD_TOL * vnorm {
            return Err(GwError::Invariant {
                check: "coulomb positive semidefinite",
                detail: format!("smallest eigenvalue {lmin:e}, norm {vnorm:e}"),
            });
        }
        let gap = eigenvalues[n_v] - eigenvalues[n_v - 1];
        if gap < GAP_TOL {
            return Err(GwError::GapDegeneracy { gap });
        }
        Ok(Self { eigenvalues, orbitals, coulomb, n_v, vxc })
    }

    /// Same ground state with a different Coulomb matrix.
    pub fn with_coulomb(&self, coulomb: RMat) -> Result<Self> {
        Self::new(self.eigenvalues.clone(), self.orbitals.clone(), coulomb, self.n_v, self.vxc.clone())
    }

    pub fn with_vxc(&self, vxc: Option<Vec<f64>>) -> Result<Self> {
        Self::new(self.eigenvalues.clone(), self.orbitals.clone(), self.coulomb.clone(), self.n_v, vxc)
    }

    pub fn n_grid(&self) -> usize {
        self.orbitals.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_occ(&self) -> usize {
        self.n_v
    }

    pub fn n_unocc(&self) -> usize {
        self.n_states() - self.n_v
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn orbitals(&self) -> &RMat {
        &self.orbitals
    }

    pub fn coulomb(&self) -> &RMat {
        &self.coulomb
    }

    pub fn vxc(&self) -> Option<&[f64]> {
        self.vxc.as_deref()
    }

    pub fn is_occupied(&self, j: usize) -> bool {
        j < self.n_v
    }

    pub fn homo_energy(&self) -> f64 {
        self.eigenvalues[self.n_v - 1]
    }

    pub fn lumo_energy(&self) -> f64 {
        self.eigenvalues[self.n_v]
    }

    pub fn gap(&self) -> f64 {
        self.lumo_energy() - self.homo_energy()
    }

    pub fn midgap(&self) -> f64 {
        0.5 * (self.homo_energy() + self.lumo_energy())
    }

    pub fn check_state(&self, i: usize) -> Result<()> {
        if i >= self.n_states() {
            return Err(GwError::IndexOutOfRange { index: i, limit: self.n_states() });
        }
        Ok(())
    }

    /// `rho_ij = psi_i ⊙ psi_j` (0-based state indices).
    pub fn pair_density(&self, i: usize, j: usize) -> Result<DVector<f64>> {
        self.check_state(i)?;
        self.check_state(j)?;
        Ok(self.orbitals.column(i).component_mul(&self.orbitals.column(j)))
    }

    /// Occupied/unoccupied transition pairs in lexicographic `(i, j)` order.
    pub fn transition_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n_v)
            .flat_map(|i| (self.n_v..self.n_states()).map(move |j| (i, j)))
            .collect()
    }

    /// Transition energies `eps_j - eps_i`, ordered like [`Self::transition_pairs`].
    pub fn transition_energies(&self) -> Vec<f64> {
        self.transition_pairs()
            .iter()
            .map(|&(i, j)| self.eigenvalues[j] - self.eigenvalues[i])
            .collect()
    }

    /// Matrix whose columns are the transition pair densities.
    pub fn pair_density_matrix(&self) -> RMat {
        let pairs = self.transition_pairs();
        let mut phi = RMat::zeros(self.n_grid(), pairs.len());
        for (col, &(i, j)) in pairs.iter().enumerate() {
            phi.set_column(col, &self.orbitals.column(i).component_mul(&self.orbitals.column(j)));
        }
        phi
    }

    /// `H_KS = Psi diag(eps) Psi^T`, reconstructed from the eigenpairs.
    pub fn hamiltonian(&self) -> RMat {
        self.projected_hamiltonian(0..self.n_states())
    }

    /// `Psi_S diag(eps_S) Psi_S^T` over a contiguous range of states.
    pub fn projected_hamiltonian(&self, states: std::ops::Range<usize>) -> RMat {
        let cols = self.orbitals.columns(states.start, states.len());
        let mut scaled = cols.into_owned();
        for (c, j) in states.clone().enumerate() {
            scaled.column_mut(c).scale_mut(self.eigenvalues[j]);
        }
        let mut h = &scaled * cols.transpose();
        symmetrize_real(&mut h);
        h
    }

    /// Orthogonal projector onto a contiguous range of states.
    pub fn projector(&self, states: std::ops::Range<usize>) -> RMat {
        let cols = self.orbitals.columns(states.start, states.len());
        let mut p = cols * cols.transpose();
        symmetrize_real(&mut p);
        p
    }
}

fn symmetrize_real(m: &mut RMat) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = avg;
            m[(c, r)] = avg;
        }
    }
}

/// Parameters of a synthetic periodic 1D molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_grid: usize,
    /// Bohr.
    pub box_length: f64,
    /// Hartree, positive numbers give attractive wells.
    pub well_depths: Vec<f64>,
    /// Bohr.
    pub well_centers: Vec<f64>,
    /// Bohr.
    pub well_widths: Vec<f64>,
    /// Soft-Coulomb core radius `a`, Bohr.
    pub soft_core: f64,
    pub n_v: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            n_grid: 64,
            box_length: 16.0,
            well_depths: vec![4.0],
            well_centers: vec![8.0],
            well_widths: vec![1.2],
            soft_core: 1.0,
            n_v: 2,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GwError::InvalidArgument(msg));
        if self.n_grid < 8 {
            return bad(format!("n_grid must be >= 8, got {}", self.n_grid));
        }
        if !(self.soft_core > 0.0) {
            return bad(format!("soft_core must be > 0, got {}", self.soft_core));
        }
        if !(self.box_length > 0.0) {
            return bad(format!("box_length must be > 0, got {}", self.box_length));
        }
        if self.n_v == 0 || self.n_v >= self.n_grid {
            return bad(format!("need 0 < n_v < n_grid, got n_v = {}", self.n_v));
        }
        let nw = self.well_depths.len();
        if self.well_centers.len() != nw || self.well_widths.len() != nw {
            return bad("well depth/center/width vectors differ in length".into());
        }
        if self.well_widths.iter().any(|w| !(*w > 0.0)) {
            return bad("well widths must be positive".into());
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n_grid as f64
    }

    fn periodic_distance(&self, x: f64, y: f64) -> f64 {
        let l = self.box_length;
        let d = (x - y).rem_euclid(l);
        d.min(l - d)
    }

    /// Local potential on the grid.
    pub fn potential(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n_grid)
            .map(|r| {
                let x = r as f64 * h;
                self.well_depths
                    .iter()
                    .zip(&self.well_centers)
                    .zip(&self.well_widths)
                    .map(|((&d, &c), &w)| {
                        let dist = self.periodic_distance(x, c);
                        -d * (-dist * dist / (2.0 * w * w)).exp()
                    })
                    .sum()
            })
            .collect()
    }

    /// Kohn–Sham Hamiltonian: periodic second-order `-d^2/dx^2` plus the wells.
    pub fn hamiltonian(&self) -> RMat {
        let n = self.n_grid;
        let h2 = self.spacing() * self.spacing();
        let pot = self.potential();
        let mut ham = RMat::zeros(n, n);
        for r in 0..n {
            ham[(r, r)] = 2.0 / h2 + pot[r];
            ham[(r, (r + 1) % n)] -= 1.0 / h2;
            ham[(r, (r + n - 1) % n)] -= 1.0 / h2;
        }
        ham
    }

    /// Periodic soft-Coulomb matrix `1/sqrt(d^2 + a^2)`.
    ///
    /// The minimum-image cut at half the box leaves a few slightly negative
    /// Fourier modes; they are clipped to zero so `v` is PSD. The result is
    /// circulant and therefore diagonal in the discrete Fourier basis.
    pub fn coulomb(&self) -> RMat {
        let n = self.n_grid;
        let h = self.spacing();
        let a2 = self.soft_core * self.soft_core;
        let kernel: Vec<f64> = (0..n)
            .map(|d| {
                let dist = d.min(n - d) as f64 * h;
                1.0 / (dist * dist + a2).sqrt()
            })
            .collect();
        let modes: Vec<f64> = (0..n)
            .map(|g| {
                let s: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(d, &k)| k * (2.0 * PI * ((g * d) % n) as f64 / n as f64).cos())
                    .sum();
                s.max(0.0)
            })
            .collect();
        let mut row = vec![0.0; n];
        for d in 0..=n / 2 {
            let s: f64 = modes
                .iter()
                .enumerate()
                .map(|(g, &m)| m * (2.0 * PI * ((g * d) % n) as f64 / n as f64).cos())
                .sum();
            row[d] = s / n as f64;
            row[(n - d) % n] = row[d];
        }
        RMat::from_fn(n, n, |r, c| row[(r + n - c) % n])
    }
}

/// Builds a [`KsSystem`] for a synthetic periodic 1D molecule.
pub fn build_model_1d(spec: &ModelSpec) -> Result<KsSystem> {
    spec.validate()?;
    let (eigenvalues, orbitals) = symmetric_eigen_sorted(spec.hamiltonian())?;
    let gap = eigenvalues[spec.n_v] - eigenvalues[spec.n_v - 1];
    if gap.abs() < GAP_TOL {
        return Err(GwError::GapDegeneracy { gap });
    }
    KsSystem::new(eigenvalues, orbitals, spec.coulomb(), spec.n_v, None)
}

/// The two-point reference system used throughout the tests and docs.
///
/// `eps = (-1/2, 1/2)`, `Psi = [[1, 1], [1, -1]] / sqrt(2)`,
/// `v = [[1, 1/2], [1/2, 1]]`, one occupied state.
pub fn two_level_system() -> KsSystem {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    KsSystem::new(
        vec![-0.5, 0.5],
        RMat::from_row_slice(2, 2, &[s, s, s, -s]),
        RMat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        1,
        None,
    )
    .expect("two-level fixture is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KsdManifest {
    pub format_version: u32,
    pub n_grid: usize,
    pub n: usize,
    pub n_v: usize,
    pub has_vxc: bool,
    pub units: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GwError + '_ {
    move |source| GwError::Io { path: path.display().to_string(), source }
}

fn read_blob(dir: &Path, name: &str, count: usize) -> Result<Vec<f64>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() != count * 8 {
        return Err(GwError::DimensionMismatch {
            what: format!("{name} byte length"),
            expected: count * 8,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_blob(dir: &Path, name: &str, values: &[f64]) -> Result<()> {
    let path = dir.join(name);
    let bytes: Vec<u8> = values.iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(&path, bytes).map_err(io_err(&path))
}

/// Reads a KSD bundle directory.
pub fn load_ksd(dir: impl AsRef<Path>) -> Result<KsSystem> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: KsdManifest =
        serde_json::from_str(&text).map_err(|e| GwError::Manifest(e.to_string()))?;
    if manifest.format_version != 1 {
        return Err(GwError::Manifest(format!("unsupported format_version {}", manifest.format_version)));
    }
    if manifest.units != "hartree" {
        return Err(GwError::Manifest(format!("unsupported units {:?}", manifest.units)));
    }
    let (n_grid, n) = (manifest.n_grid, manifest.n);
    let eigenvalues = read_blob(dir, "eigenvalues.f64", n)?;
    let orbitals = RMat::from_vec(n_grid, n, read_blob(dir, "orbitals.f64", n_grid * n)?);
    let coulomb = RMat::from_vec(n_grid, n_grid, read_blob(dir, "coulomb.f64", n_grid * n_grid)?);
    let vxc = if manifest.has_vxc { Some(read_blob(dir, "vxc.f64", n)?) } else { None };
    KsSystem::new(eigenvalues, orbitals, coulomb, manifest.n_v, vxc)
}

/// Writes a KSD bundle directory (created if missing).
pub fn save_ksd(sys: &KsSystem, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = KsdManifest {
        format_version: 1,
        n_grid: sys.n_grid(),
        n: sys.n_states(),
        n_v: sys.n_occ(),
        has_vxc: sys.vxc().is_some(),
        units: "hartree".into(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| GwError::Manifest(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))?;
    write_blob(dir, "eigenvalues.f64", sys.eigenvalues())?;
    write_blob(dir, "orbitals.f64", sys.orbitals().as_slice())?;
    write_blob(dir, "coulomb.f64", sys.coulomb().as_slice())?;
    if let Some(vxc) = sys.vxc() {
        write_blob(dir, "vxc.f64", vxc)?;
    }
    Ok(())
}
