//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. A SiH4 KSD bundle can be supplied
//! through `GWLR_SIH4_KSD=/path/to/bundle` for the conditional criterion.

mod common;

use std::ffi::OsString;
use std::time::Instant;

use gwlr::contour::{integrand_sample, lgr_rule, sigma_c_contour, DenseWp, IntegrationPath};
use gwlr::ks_model::{build_model_1d, load_ksd, two_level_system, KsSystem, ModelSpec};
use gwlr::linalg::{complexify, spectral_norm, CMat, CVec, RMat};
use gwlr::lowrank::{BoundData, LowRankScheme, LowRankWp};
use gwlr::response::{chi0_apply, chi0_dense, chi_dense, epsilon_inverse};
use gwlr::sigma::{sigma_c_element, sigma_c_exact_sos, SigmaConfig};
use gwlr::spectra::{casida_energies, delta_w, full_casida_energies};
use gwlr::{Result, HARTREE_TO_EV};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn model() -> KsSystem {
    build_model_1d(&ModelSpec::default()).unwrap()
}

/// A second model: two wells, three occupied states, coarser grid.
fn double_well() -> KsSystem {
    build_model_1d(&ModelSpec {
        n_grid: 48,
        box_length: 14.0,
        well_depths: vec![3.0, 2.5],
        well_centers: vec![5.0, 9.5],
        well_widths: vec![1.0, 1.3],
        soft_core: 0.8,
        n_v: 3,
    })
    .unwrap()
}

/// Two-level system with a random PSD Coulomb matrix.
fn two_level_random_v(rng: &mut ChaCha8Rng) -> KsSystem {
    let a = RMat::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let v = &a * a.transpose();
    let v = (&v + v.transpose()) * 0.5;
    two_level_system().with_coulomb(v).unwrap()
}

/// Path family `Re w' = (1 - delta) eps_g / 2` at midgap.
fn family_shift(sys: &KsSystem, delta: f64) -> f64 {
    (1.0 - delta) * sys.gap() / 2.0
}

fn contour_value(sys: &KsSystem, i: usize, omega: f64, shift: f64, m: usize, poles: &[f64]) -> Result<f64> {
    let path = IntegrationPath::new(sys, omega, shift, lgr_rule(m)?, poles)?;
    sigma_c_contour(sys, i, omega, &path, &DenseWp)
}

fn criterion_1() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let sys2 = two_level_system();
    let mut cases = vec![(sys2.clone(), 0, 0.0), (sys2.clone(), 1, 0.0), (sys2.clone(), 0, 0.3)];
    let m = model();
    let wm = m.midgap();
    for (i, w) in [(0, wm), (1, wm), (2, wm), (1, wm + 0.3), (3, wm - 0.2)] {
        cases.push((m.clone(), i, w));
    }
    for (sys, i, w) in &cases {
        let rep = sigma_c_element(sys, *i, *w, &SigmaConfig::dense(64))?;
        assert_eq!(rep.residue_count, 0, "residue-free case expected");
        worst = worst.max((rep.sigma_c - sigma_c_exact_sos(sys, *i, *w)?).abs());
    }
    let poles = casida_energies(&sys2)?;
    let sos = sigma_c_exact_sos(&sys2, 0, 0.0)?;
    let real = common::sigma_c_real_axis(&sys2, 0, 0.0, 1e-3, &poles);
    let real_err = (sos - real).abs();
    outcome(
        worst <= 1e-8 && real_err <= 1e-4,
        format!("contour vs sum-over-states max {worst:.2e} Ha over {} cases; sum-over-states vs real axis (eta=1e-3) {real_err:.2e} Ha", cases.len()),
    )
}

fn criterion_2() -> Result<Outcome> {
    let sys = model();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v = complexify(sys.coulomb());
    let n = sys.n_grid();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let w = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.05..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        let inv = epsilon_inverse(&sys, w, 0.0)?;
        let smw = CMat::identity(n, n) + &v * chi_dense(&sys, w, 0.0)?;
        worst = worst.max(spectral_norm(&(&inv - smw)) / spectral_norm(&inv));
    }
    outcome(worst <= 1e-10, format!("max relative ||eps^-1 - (I + v chi)|| = {worst:.2e} over 10 frequencies"))
}

fn criterion_3() -> Result<Outcome> {
    let sys = model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.01..3.0));
        let g = CVec::from_fn(sys.n_grid(), |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let dense = chi0_dense(&sys, w, 0.0)? * &g;
        worst = worst.max((chi0_apply(&sys, w, &g)? - &dense).norm() / dense.norm());
    }
    outcome(worst <= 1e-10, format!("max relative error {worst:.2e} over 20 (omega, g)"))
}

fn criterion_4() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut systems = vec![("two-level", two_level_system()), ("model", model()), ("double well", double_well())];
    for _ in 0..3 {
        systems.push(("two-level random v", two_level_random_v(&mut rng)));
    }
    let mut reduction: f64 = 0.0;
    let mut bound_ok = true;
    for (_, sys) in &systems {
        let full = full_casida_energies(sys)?;
        let reduced = casida_energies(sys)?;
        assert_eq!(full.len(), reduced.len());
        for (a, b) in full.iter().zip(&reduced) {
            reduction = reduction.max(((a - b) / b).abs());
        }
        bound_ok &= reduced[0] >= sys.gap();
    }
    let dw2 = delta_w(&two_level_system())?;
    let target = 1.5f64.sqrt();
    let literal = (dw2 - target).abs() <= 1e-12;
    outcome(
        reduction <= 1e-10 && bound_ok && literal,
        format!(
            "reduced vs full max rel {reduction:.2e}; delta_W >= eps_g on {} systems: {bound_ok}; two-level delta_W = {dw2:.12} vs required sqrt(1.5) = {target:.12} (diff {:.2e})",
            systems.len(),
            (dw2 - target).abs()
        ),
    )
}

fn criterion_5() -> Result<Outcome> {
    let sys = model();
    let poles = casida_energies(&sys)?;
    let (i, w) = (sys.n_occ() - 1, sys.midgap());
    let good = family_shift(&sys, 1.0);
    let i32_64 = (contour_value(&sys, i, w, good, 32, &poles)? - contour_value(&sys, i, w, good, 64, &poles)?).abs();
    let deltas = [1.0, 1e-1, 1e-2, 1e-3];
    let ms = [8, 16, 32, 64];
    let mut monotone = true;
    let mut table = Vec::new();
    for &m in &ms {
        let mut errs = Vec::new();
        for &d in &deltas {
            let s = family_shift(&sys, d);
            let reference = contour_value(&sys, i, w, s, 256, &poles)?;
            errs.push((contour_value(&sys, i, w, s, m, &poles)? - reference).abs());
        }
        // Allow round-off-level wiggles between already converged entries.
        monotone &= errs.windows(2).all(|p| p[1] >= p[0] - 1e-14);
        table.push(format!("m={m}: [{}]", errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(", ")));
    }
    outcome(
        i32_64 <= 1e-6 && monotone,
        format!("|I32 - I64| = {i32_64:.2e} Ha; errors over delta = 1..1e-3: {}", table.join("; ")),
    )
}

fn criterion_6() -> Result<Outcome> {
    let sys = model();
    let poles = casida_energies(&sys)?;
    let (i, w) = (sys.n_occ() - 1, sys.midgap());
    let free: Vec<f64> = [1.0, 0.5, 1.5]
        .iter()
        .map(|&d| contour_value(&sys, i, w, family_shift(&sys, d), 128, &poles))
        .collect::<Result<_>>()?;
    let spread = free.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - free.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let reference = contour_value(&sys, i, w, family_shift(&sys, 1.0), 256, &poles)?;
    let enclosing_path = IntegrationPath::new(&sys, w, family_shift(&sys, -1e-3), lgr_rule(256)?, &poles)?;
    let enclosing = sigma_c_contour(&sys, i, w, &enclosing_path, &DenseWp)?;
    let diff = (enclosing - reference).abs();
    outcome(
        spread <= 1e-8 && diff <= 1e-6 && !enclosing_path.residues.is_empty(),
        format!(
            "residue-free spread {spread:.2e} Ha (m=128, 3 shifts); enclosing path ({} residue) vs residue-free {diff:.2e} Ha (m=256)",
            enclosing_path.residues.len()
        ),
    )
}

fn criterion_7() -> Result<Outcome> {
    let sys = model();
    let (i, w) = (sys.n_occ() - 1, sys.midgap());
    let n = sys.n_grid();
    let samples = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.25),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.0, 4.0),
        Complex64::new(0.3, 0.6),
    ];
    let schemes = [LowRankScheme::SvdWp, LowRankScheme::SvdVchi, LowRankScheme::SmwVchi0];
    let (mut checked, mut violations, mut e3_invalid, mut order_bad) = (0usize, 0usize, 0usize, 0usize);
    let mut worst_ratio: f64 = 0.0;
    for &wp in &samples {
        let exact = integrand_sample(&sys, i, w, wp, &DenseWp)?;
        let data = BoundData::evaluate(&sys, w, wp)?;
        let floor_order = 1e-13 * data.sv_wp[0] * data.norm_g0;
        for &scheme in &schemes {
            // Numerical floor: the discrepancy of the lossless factorization.
            let full = integrand_sample(&sys, i, w, wp, &LowRankWp::new(scheme, n))?;
            let floor = 2.0 * (full - exact).norm() + 1e-14 * exact.norm();
            for k in 1..=n {
                let b = data.bounds(k);
                if scheme == LowRankScheme::SvdWp && b.e1 > b.e2 * (1.0 + 1e-12) + floor_order {
                    order_bad += 1;
                }
                let Some(bound) = b.for_scheme(scheme) else {
                    e3_invalid += 1;
                    continue;
                };
                let approx = integrand_sample(&sys, i, w, wp, &LowRankWp::new(scheme, k))?;
                let err = (approx - exact).norm();
                checked += 1;
                if err > bound + floor {
                    violations += 1;
                }
                if bound > floor {
                    worst_ratio = worst_ratio.max(err / bound);
                }
            }
        }
    }
    outcome(
        violations == 0 && order_bad == 0,
        format!(
            "{checked} (scheme, k, w') checks, {violations} violations, max error/bound {worst_ratio:.3} where the bound exceeds the round-off floor; E3 outside its validity region in {e3_invalid} cases (not asserted); E1 > E2 in {order_bad} cases"
        ),
    )
}

fn criterion_8() -> Result<Outcome> {
    let sys = model();
    let (i, w) = (sys.n_occ() - 1, sys.midgap());
    let n = sys.n_grid();
    let m = 64;
    let dense = sigma_c_element(&sys, i, w, &SigmaConfig::dense(m))?.sigma_c;
    let err = |scheme, k| -> Result<f64> {
        let cfg = SigmaConfig { bounds: false, ..SigmaConfig::low_rank(scheme, k, m) };
        Ok((sigma_c_element(&sys, i, w, &cfg)?.sigma_c - dense).abs())
    };
    let ks = [n / 8, n / 4, n / 2, n];
    let svd: Vec<f64> = ks.iter().map(|&k| err(LowRankScheme::SvdWp, k)).collect::<Result<_>>()?;
    let monotone = svd.windows(2).all(|p| p[1] <= p[0]);
    let full: Vec<f64> = [LowRankScheme::SvdWp, LowRankScheme::SvdVchi, LowRankScheme::SmwVchi0]
        .iter()
        .map(|&s| err(s, n))
        .collect::<Result<_>>()?;
    let lossless = full.iter().all(|&e| e <= 1e-9);
    let fourier: Vec<f64> = ks[..3].iter().map(|&k| err(LowRankScheme::FourierTrunc, k)).collect::<Result<_>>()?;
    let ordered = fourier.iter().zip(&svd).all(|(f, s)| f > s);
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(
        monotone && lossless && ordered,
        format!(
            "svd-wp errors at k={ks:?}: [{}]; full-rank svd-wp/svd-vchi/smw-vchi0: [{}]; fourier at k={:?}: [{}]",
            fmt(&svd),
            fmt(&full),
            &ks[..3],
            fmt(&fourier)
        ),
    )
}

fn criterion_9() -> Result<Option<Outcome>> {
    let Ok(dir) = std::env::var("GWLR_SIH4_KSD") else {
        return Ok(None);
    };
    let sys = load_ksd(&dir)?;
    let dw = delta_w(&sys)? * HARTREE_TO_EV;
    let gap = sys.gap() * HARTREE_TO_EV;
    let i = sys.n_occ() - 1;
    let w = sys.midgap();
    let dense = sigma_c_element(&sys, i, w, &SigmaConfig::dense(64))?.sigma_c * HARTREE_TO_EV;
    let cfg = SigmaConfig { bounds: false, ..SigmaConfig::low_rank(LowRankScheme::SvdWp, 50, 64) };
    let r50 = sigma_c_element(&sys, i, w, &cfg)?.sigma_c * HARTREE_TO_EV;
    let pass = (dw - 3.3952).abs() <= 5e-4
        && (gap - 3.1948).abs() <= 5e-4
        && (dense + 1.4084).abs() <= 1e-3
        && (r50 + 1.1538).abs() <= 1e-2;
    Ok(Some(Outcome {
        pass,
        detail: format!("delta_W {dw:.4} eV, gap {gap:.4} eV, dense {dense:.4} eV, rank-50 {r50:.4} eV"),
    }))
}

fn criterion_10() -> Result<Outcome> {
    let dir = tempfile::tempdir().expect("temp dir");
    let runs: [&[&str]; 3] = [
        &["sweep-quadrature", "--model", "default", "--quads", "8,16,32"],
        &["sweep-rank", "--model", "default", "--ranks", "4,16", "--quad", "32"],
        &["integrand", "--model", "default", "--quad", "32", "--scheme", "svd-wp", "--rank", "8"],
    ];
    let mut identical = true;
    let mut files = 0;
    for (r, args) in runs.iter().enumerate() {
        let mut reference: Option<Vec<u8>> = None;
        // Same path every time: the path is part of the echoed config header.
        let out = dir.path().join(format!("run{r}.csv"));
        for threads in ["1", "2", "4", "1"] {
            let mut argv: Vec<OsString> = vec!["gwlr".into(), "--threads".into(), threads.into()];
            argv.extend(args.iter().map(OsString::from));
            argv.push("--out".into());
            argv.push(out.clone().into());
            assert_eq!(gwlr::cli::run(argv), 0, "{args:?}");
            let bytes = std::fs::read(&out).expect("output written");
            files += 1;
            match &reference {
                None => reference = Some(bytes),
                Some(b) => identical &= *b == bytes,
            }
        }
    }
    outcome(identical, format!("{files} CSV files from 3 subcommands at 1/2/4/1 threads byte-identical: {identical}"))
}

fn main() {
    let names = [
        "oracle equivalence",
        "SMW identity",
        "Sternheimer consistency",
        "Casida reduction",
        "quadrature behavior",
        "contour independence",
        "bound soundness",
        "low-rank fidelity ordering",
        "SiH4 reproduction (conditional)",
        "determinism",
    ];
    let mut failed = 0;
    for (idx, name) in names.iter().enumerate() {
        let t = Instant::now();
        let result = match idx + 1 {
            1 => criterion_1().map(Some),
            2 => criterion_2().map(Some),
            3 => criterion_3().map(Some),
            4 => criterion_4().map(Some),
            5 => criterion_5().map(Some),
            6 => criterion_6().map(Some),
            7 => criterion_7().map(Some),
            8 => criterion_8().map(Some),
            9 => criterion_9(),
            _ => criterion_10().map(Some),
        };
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(Some(o)) => {
                if !o.pass {
                    failed += 1;
                }
                println!("[{}] {:>2} {name}: {} ({secs:.1}s)", if o.pass { "PASS" } else { "FAIL" }, idx + 1, o.detail);
            }
            Ok(None) => println!("[SKIP] {:>2} {name}: set GWLR_SIH4_KSD to a KSD bundle to run", idx + 1),
            Err(e) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: error {e} ({secs:.1}s)", idx + 1);
            }
        }
    }
    println!("acceptance: {failed} failing criteria");
    if failed > 0 {
        std::process::exit(1);
    }
}
