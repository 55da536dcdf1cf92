//! G0W0 correlation self-energy for small Kohn–Sham systems.
//!
//! The crate evaluates diagonal self-energy matrix elements
//! `<psi_i| Sigma(omega) |psi_i>` from ingested (or synthetic) Kohn–Sham
//! eigenpairs. The frequency convolution of `G0` with the frequency-dependent
//! part of the screened interaction `W_p` is carried out on a vertical
//! contour with Legendre–Gauss–Radau quadrature, and `W_p` can be replaced by
//! one of several low-rank approximations.
//!
//! Module map:
//!
//! * [`ks_model`]: ground-state data, KSD bundle IO, synthetic 1D molecules.
//! * [`response`]: `chi0`, `epsilon`, `chi`, `W_p`, plus the Sternheimer route.
//! * [`greens`]: the non-interacting Green's function.
//! * [`spectra`]: Casida poles of `W_p`, `delta_W`, residue-free analysis.
//! * [`contour`]: quadrature rules and the contour-deformed integral.
//! * [`lowrank`]: low-rank factorizations of `W_p` and their error bounds.
//! * [`sigma`]: exchange/correlation elements, the sum-over-states oracle and
//!   the quasiparticle solve.
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod contour;
pub mod error;
pub mod greens;
pub mod ks_model;
pub mod linalg;
pub mod lowrank;
pub mod response;
pub mod sigma;
pub mod spectra;

pub use error::{GwError, Result};
pub use ks_model::{KsSystem, ModelSpec};

/// Hartree to electron-volt conversion factor.
pub const HARTREE_TO_EV: f64 = 27.211386245988;
