//! Command-line front end. Every output file starts with a `#` line holding
//! the JSON run configuration, followed by plain CSV (or a JSON document).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{integrand_sample, jacobian, lgr_rule, quadrature_error_sweep, zeta_of, IntegrationPath};
use crate::error::{GwError, Result};
use crate::ks_model::{build_model_1d, load_ksd, save_ksd, KsSystem, ModelSpec};
use crate::lowrank::{singular_value_profile, LowRankScheme};
use crate::sigma::{
    prepare, sigma_c_element, sigma_c_sos_with, solve_qp, PathBounds, QpOptions, ShiftPolicy, SigmaConfig,
};
use crate::spectra::{casida_energies, casida_full, pole_map, residue_free};
use crate::HARTREE_TO_EV;

#[derive(Debug, Parser)]
#[command(name = "gwlr", version, about = "G0W0 self-energy with contour deformation and low-rank screening")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Ev,
    Ha,
}

impl Units {
    fn factor(self) -> f64 {
        match self {
            Units::Ev => HARTREE_TO_EV,
            Units::Ha => 1.0,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SourceArgs {
    /// KSD bundle directory.
    #[arg(long, conflicts_with = "model")]
    ksd: Option<PathBuf>,
    /// `default` or a JSON model specification.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct OutArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Unit for reported energies (inputs are always Hartree).
    #[arg(long, value_enum, default_value = "ev")]
    units: Units,
}

#[derive(Debug, Clone, Args)]
struct PointArgs {
    /// 1-based state index, `homo` or `lumo`.
    #[arg(long, default_value = "homo")]
    state: String,
    /// Frequency in Hartree, or `midgap`.
    #[arg(long, default_value = "midgap", allow_hyphen_values = true)]
    omega: String,
}

#[derive(Debug, Clone, Args)]
struct MethodArgs {
    /// dense, svd-wp, svd-vchi, smw-vchi0 or fourier.
    #[arg(long, default_value = "dense")]
    scheme: String,
    #[arg(long, default_value_t = 0)]
    rank: usize,
    #[arg(long, default_value_t = 64)]
    quad: usize,
    /// `auto` or a real-part offset in Hartree.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    shift: String,
    /// Project onto the svd-wp bases of W_p(0) instead of refactoring.
    #[arg(long)]
    reuse_basis: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic model as a KSD bundle.
    GenModel {
        #[arg(long, default_value = "default")]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summary of a system: eigenvalues, gap, delta_W.
    Info {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Poles of G0(w + w') and W_p(w') in the w' plane.
    Poles {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value = "midgap", allow_hyphen_values = true)]
        omega: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Integrand along one vertical path.
    Integrand {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quadrature error against the largest rule, per shift.
    SweepQuadrature {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        shifts: ShiftList,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        quads: Vec<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sigma_C along many shifts against the sum-over-states value.
    SweepContour {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        shifts: ShiftList,
        #[arg(long, default_value_t = 128)]
        quad: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sigma_C error and bounds over schemes and ranks.
    SweepRank {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        point: PointArgs,
        /// Comma list of schemes, or `all`.
        #[arg(long, default_value = "all")]
        schemes: String,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        ranks: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        quad: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Normalized singular values of W_p, v chi0 and v chi.
    Singvals {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        omega: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        omega_im: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// One self-energy matrix element.
    Sigma {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        method: MethodArgs,
        /// Also evaluate the sum-over-states reference.
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quasiparticle energy by secant iteration.
    Qp {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value = "homo")]
        state: String,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Use zero exchange-correlation elements when the input has none.
        #[arg(long)]
        vxc_zero: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quick oracle checks on built-in systems.
    Selftest,
}

#[derive(Debug, Clone, Args)]
struct ShiftList {
    /// Explicit shifts in Hartree.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "deltas")]
    shifts: Option<Vec<f64>>,
    /// Path family `(1 - delta) eps_g / 2`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,0.1,0.01,0.001")]
    deltas: Vec<f64>,
}

/// Echo of a run, written as the first line of every output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ksd: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_im: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quads: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reuse_basis: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub units: Option<Units>,
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit status.
pub fn run(args: Vec<OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return report_error(&GwError::InvalidArgument(e.to_string())),
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &GwError) -> i32 {
    let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{record}");
    1
}

fn parse_model(text: &str) -> Result<ModelSpec> {
    if text == "default" {
        return Ok(ModelSpec::default());
    }
    serde_json::from_str(text).map_err(|e| GwError::InvalidArgument(format!("model spec: {e}")))
}

fn load_source(src: &SourceArgs, cfg: &mut RunConfig) -> Result<KsSystem> {
    match (&src.ksd, &src.model) {
        (Some(dir), _) => {
            cfg.ksd = Some(dir.display().to_string());
            load_ksd(dir)
        }
        (None, model) => {
            let spec = parse_model(model.as_deref().unwrap_or("default"))?;
            cfg.model = Some(spec.clone());
            build_model_1d(&spec)
        }
    }
}

/// 1-based index, `homo` or `lumo`, returned 0-based.
pub fn parse_state(sys: &KsSystem, text: &str) -> Result<usize> {
    let i = match text {
        "homo" => sys.n_occ() - 1,
        "lumo" => sys.n_occ(),
        t => {
            let one: usize = t.parse().map_err(|_| GwError::InvalidArgument(format!("bad state '{t}'")))?;
            if one == 0 {
                return Err(GwError::InvalidArgument("states are numbered from 1".into()));
            }
            one - 1
        }
    };
    sys.check_state(i)?;
    Ok(i)
}

pub fn parse_omega(sys: &KsSystem, text: &str) -> Result<f64> {
    match text {
        "midgap" => Ok(sys.midgap()),
        t => t.parse().map_err(|_| GwError::InvalidArgument(format!("bad frequency '{t}'"))),
    }
}

fn parse_shift(text: &str) -> Result<ShiftPolicy> {
    match text {
        "auto" => Ok(ShiftPolicy::Auto),
        t => t
            .parse()
            .map(ShiftPolicy::Fixed)
            .map_err(|_| GwError::InvalidArgument(format!("bad shift '{t}'"))),
    }
}

fn parse_scheme(text: &str) -> Result<Option<LowRankScheme>> {
    match text {
        "dense" => Ok(None),
        t => t.parse().map(Some),
    }
}

fn sigma_config(m: &MethodArgs, sys: &KsSystem, cfg: &mut RunConfig) -> Result<SigmaConfig> {
    let scheme = parse_scheme(&m.scheme)?;
    cfg.scheme = Some(m.scheme.clone());
    cfg.quad = Some(m.quad);
    cfg.shift = Some(m.shift.clone());
    if scheme.is_some() {
        let rank = if m.rank == 0 { sys.n_grid() } else { m.rank };
        cfg.rank = Some(rank);
        cfg.reuse_basis = Some(m.reuse_basis);
    }
    Ok(SigmaConfig {
        scheme,
        rank: cfg.rank.unwrap_or(0),
        quad: m.quad,
        shift: parse_shift(&m.shift)?,
        reuse_basis: m.reuse_basis,
        bounds: true,
    })
}

fn set_out(cfg: &mut RunConfig, out: &OutArgs, format: &str) {
    cfg.out = out.out.as_ref().map(|p| p.display().to_string());
    cfg.format = Some(format.into());
    cfg.units = Some(out.units);
}

fn is_json(out: &OutArgs) -> bool {
    out.out.as_ref().and_then(|p| p.extension()).is_some_and(|e| e == "json")
}

fn num(x: f64) -> String {
    format!("{x:.15e}")
}

/// Writes `body` after the config header, atomically, or to stdout.
fn emit(cfg: &RunConfig, out: Option<&Path>, body: &str) -> Result<()> {
    let header = serde_json::to_string(cfg).map_err(|e| GwError::InvalidArgument(e.to_string()))?;
    let text = format!("# {header}\n{body}");
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => write_atomic(path, text.as_bytes()),
    }
}

/// Temp file in the destination directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| GwError::Io { path: path.display().to_string(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| GwError::InvalidArgument("output path has no file name".into()))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn shifts_for(sys: &KsSystem, list: &ShiftList, cfg: &mut RunConfig) -> Vec<f64> {
    match &list.shifts {
        Some(s) => {
            cfg.shifts = Some(s.clone());
            s.clone()
        }
        None => {
            cfg.deltas = Some(list.deltas.clone());
            list.deltas.iter().map(|d| (1.0 - d) * sys.gap() / 2.0).collect()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    let mut cfg = RunConfig::default();
    match cmd {
        Command::GenModel { model, out } => {
            cfg.subcommand = "gen-model".into();
            let spec = parse_model(&model)?;
            let sys = build_model_1d(&spec)?;
            save_ksd(&sys, &out)?;
            cfg.model = Some(spec);
            cfg.out = Some(out.display().to_string());
            let header = serde_json::to_string_pretty(&cfg).map_err(|e| GwError::InvalidArgument(e.to_string()))?;
            write_atomic(&out.join("run_config.json"), header.as_bytes())
        }
        Command::Info { source, out } => {
            cfg.subcommand = "info".into();
            let sys = load_source(&source, &mut cfg)?;
            set_out(&mut cfg, &out, "json");
            let f = out.units.factor();
            let omegas = casida_energies(&sys)?;
            let info = serde_json::json!({
                "n_grid": sys.n_grid(),
                "n_states": sys.n_states(),
                "n_occ": sys.n_occ(),
                "eigenvalues": sys.eigenvalues().iter().map(|e| e * f).collect::<Vec<_>>(),
                "homo": sys.homo_energy() * f,
                "lumo": sys.lumo_energy() * f,
                "gap": sys.gap() * f,
                "midgap": sys.midgap() * f,
                "delta_w": omegas[0] * f,
                "has_vxc": sys.vxc().is_some(),
            });
            emit(&cfg, out.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&info).unwrap()))
        }
        Command::Poles { source, omega, out } => {
            cfg.subcommand = "poles".into();
            let sys = load_source(&source, &mut cfg)?;
            let w = parse_omega(&sys, &omega)?;
            cfg.omega = Some(omega);
            set_out(&mut cfg, &out, "csv");
            let f = out.units.factor();
            let spectrum = casida_full(&sys)?;
            let mut body = String::from("re,im,kind\n");
            for p in pole_map(&sys, w, &spectrum) {
                let _ = writeln!(body, "{},{},{}", num(p.re * f), num(p.im * f), p.kind.as_str());
            }
            emit(&cfg, out.out.as_deref(), &body)
        }
        Command::Integrand { source, point, method, out } => {
            cfg.subcommand = "integrand".into();
            let sys = load_source(&source, &mut cfg)?;
            let (i, w) = (parse_state(&sys, &point.state)?, parse_omega(&sys, &point.omega)?);
            cfg.state = Some(point.state);
            cfg.omega = Some(point.omega);
            let sc = sigma_config(&method, &sys, &mut cfg)?;
            set_out(&mut cfg, &out, "csv");
            let (path, provider, _) = prepare(&sys, w, &sc)?;
            let f = out.units.factor();
            let samples: Vec<Complex64> = {
                use rayon::prelude::*;
                (0..path.rule.m())
                    .into_par_iter()
                    .map(|q| integrand_sample(&sys, i, w, path.frequency(q), provider.as_ref()))
                    .collect::<Result<_>>()?
            };
            let mut body = String::from("xi,zeta,re,im\n");
            for (q, s) in samples.iter().enumerate() {
                let xi = path.rule.nodes[q];
                let _ = writeln!(body, "{},{},{},{}", num(xi), num(zeta_of(xi) * f), num(s.re), num(s.im));
            }
            emit(&cfg, out.out.as_deref(), &body)
        }
        Command::SweepQuadrature { source, point, shifts, quads, out } => {
            cfg.subcommand = "sweep-quadrature".into();
            let sys = load_source(&source, &mut cfg)?;
            let (i, w) = (parse_state(&sys, &point.state)?, parse_omega(&sys, &point.omega)?);
            cfg.state = Some(point.state);
            cfg.omega = Some(point.omega);
            let list = shifts_for(&sys, &shifts, &mut cfg);
            cfg.quads = Some(quads.clone());
            set_out(&mut cfg, &out, "csv");
            let poles = casida_energies(&sys)?;
            let rows = quadrature_error_sweep(&sys, i, w, &list, &quads, &poles, &crate::contour::DenseWp)?;
            let f = out.units.factor();
            let mut body = String::from("shift,m,value_Ha,value_eV,abs_error\n");
            for r in rows {
                let _ = writeln!(
                    body,
                    "{},{},{},{},{}",
                    num(r.shift * f),
                    r.m,
                    num(r.value),
                    num(r.value * HARTREE_TO_EV),
                    num(r.abs_error * f)
                );
            }
            emit(&cfg, out.out.as_deref(), &body)
        }
        Command::SweepContour { source, point, shifts, quad, out } => {
            cfg.subcommand = "sweep-contour".into();
            let sys = load_source(&source, &mut cfg)?;
            let (i, w) = (parse_state(&sys, &point.state)?, parse_omega(&sys, &point.omega)?);
            cfg.state = Some(point.state);
            cfg.omega = Some(point.omega);
            let list = shifts_for(&sys, &shifts, &mut cfg);
            cfg.quad = Some(quad);
            set_out(&mut cfg, &out, "csv");
            let spectrum = casida_full(&sys)?;
            let reference = sigma_c_sos_with(&sys, &spectrum, i, w)?;
            let rule = lgr_rule(quad)?;
            let f = out.units.factor();
            let mut body = String::from("shift,m,value_Ha,value_eV,abs_error\n");
            for s in list {
                let path = IntegrationPath::new(&sys, w, s, rule.clone(), &spectrum.omegas)?;
                let v = crate::contour::sigma_c_contour(&sys, i, w, &path, &crate::contour::DenseWp)?;
                let _ = writeln!(
                    body,
                    "{},{},{},{},{}",
                    num(s * f),
                    quad,
                    num(v),
                    num(v * HARTREE_TO_EV),
                    num((v - reference).abs() * f)
                );
            }
            emit(&cfg, out.out.as_deref(), &body)
        }
        Command::SweepRank { source, point, schemes, ranks, quad, out } => {
            cfg.subcommand = "sweep-rank".into();
            let sys = load_source(&source, &mut cfg)?;
            let (i, w) = (parse_state(&sys, &point.state)?, parse_omega(&sys, &point.omega)?);
            cfg.state = Some(point.state);
            cfg.omega = Some(point.omega);
            cfg.scheme = Some(schemes.clone());
            cfg.ranks = Some(ranks.clone());
            cfg.quad = Some(quad);
            set_out(&mut cfg, &out, "csv");
            let list: Vec<LowRankScheme> = if schemes == "all" {
                LowRankScheme::ALL.to_vec()
            } else {
                schemes.split(',').map(str::parse).collect::<Result<_>>()?
            };
            let dense_cfg = SigmaConfig::dense(quad);
            let dense = sigma_c_element(&sys, i, w, &dense_cfg)?.sigma_c;
            let (path, _, _) = prepare(&sys, w, &dense_cfg)?;
            let path_bounds = PathBounds::evaluate(&sys, i, w, &path)?;
            // All columns in Hartree, matching their names.
            let mut body = String::from("scheme,k,sigma_c_Ha,abs_error_Ha,E1,E2,E3\n");
            for scheme in list {
                for &k in &ranks {
                    let cfg_k = SigmaConfig { bounds: false, ..SigmaConfig::low_rank(scheme, k, quad) };
                    let rep = sigma_c_element(&sys, i, w, &cfg_k)?;
                    let b = path_bounds.bounds(k);
                    let _ = writeln!(
                        body,
                        "{},{},{},{},{},{},{}",
                        scheme,
                        k,
                        num(rep.sigma_c),
                        num((rep.sigma_c - dense).abs()),
                        num(b.e1),
                        num(b.e2),
                        num(b.e3)
                    );
                }
            }
            emit(&cfg, out.out.as_deref(), &body)
        }
        Command::Singvals { source, omega, omega_im, out } => {
            cfg.subcommand = "singvals".into();
            let sys = load_source(&source, &mut cfg)?;
            cfg.omega = Some(omega.to_string());
            cfg.omega_im = Some(omega_im);
            set_out(&mut cfg, &out, "csv");
            let p = singular_value_profile(&sys, Complex64::new(omega, omega_im))?;
            let mut body = String::from("index,sv_wp,sv_vchi0,sv_vchi\n");
            for k in 0..p.wp.len() {
                let _ = writeln!(body, "{},{},{},{}", k + 1, num(p.wp[k]), num(p.vchi0[k]), num(p.vchi[k]));
            }
            emit(&cfg, out.out.as_deref(), &body)
        }
        Command::Sigma { source, point, method, oracle, out } => {
            cfg.subcommand = "sigma".into();
            let sys = load_source(&source, &mut cfg)?;
            let (i, w) = (parse_state(&sys, &point.state)?, parse_omega(&sys, &point.omega)?);
            cfg.state = Some(point.state);
            cfg.omega = Some(point.omega);
            let sc = sigma_config(&method, &sys, &mut cfg)?;
            let json = is_json(&out) || out.out.is_none();
            set_out(&mut cfg, &out, if json { "json" } else { "csv" });
            let mut rep = sigma_c_element(&sys, i, w, &sc)?;
            if oracle {
                rep = rep.with_oracle(sigma_c_sos_with(&sys, &casida_full(&sys)?, i, w)?);
            }
            let f = out.units.factor();
            let window = residue_free(&sys, w, rep.delta_w);
            let record = serde_json::json!({
                "state": i + 1,
                "omega": w * f,
                "units": out.units,
                "sigma_x": rep.sigma_x * f,
                "sigma_c": rep.sigma_c * f,
                "sigma_c_Ha": rep.sigma_c,
                "sigma_c_eV": rep.sigma_c * HARTREE_TO_EV,
                "scheme": rep.scheme,
                "rank": rep.rank,
                "quad": rep.quad,
                "shift": rep.shift * f,
                "residue_free": window.is_residue_free,
                "residue_count": rep.residue_count,
                "delta_w": rep.delta_w * f,
                "bounds": rep.bounds.map(|b| serde_json::json!({
                    "E1": b.e1 * f, "E2": b.e2 * f, "E3": b.e3 * f, "E3_valid": b.e3_valid,
                })),
                "oracle_value": rep.oracle_value.map(|v| v * f),
                "oracle_error": rep.oracle_error.map(|v| v * f),
            });
            let body = if json {
                format!("{}\n", serde_json::to_string_pretty(&record).unwrap())
            } else {
                let opt = |v: Option<f64>| v.map(|x| num(x * f)).unwrap_or_default();
                let b = rep.bounds;
                format!(
                    "state,omega,sigma_x,sigma_c,sigma_c_Ha,sigma_c_eV,scheme,rank,quad,shift,residue_count,delta_w,E1,E2,E3,oracle_value,oracle_error\n{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    i + 1,
                    num(w * f),
                    num(rep.sigma_x * f),
                    num(rep.sigma_c * f),
                    num(rep.sigma_c),
                    num(rep.sigma_c * HARTREE_TO_EV),
                    rep.scheme,
                    rep.rank.map(|k| k.to_string()).unwrap_or_default(),
                    rep.quad,
                    num(rep.shift * f),
                    rep.residue_count,
                    num(rep.delta_w * f),
                    opt(b.map(|b| b.e1)),
                    opt(b.map(|b| b.e2)),
                    opt(b.map(|b| b.e3)),
                    opt(rep.oracle_value),
                    opt(rep.oracle_error),
                )
            };
            emit(&cfg, out.out.as_deref(), &body)
        }
        Command::Qp { source, state, method, max_iter, tol, vxc_zero, out } => {
            cfg.subcommand = "qp".into();
            let mut sys = load_source(&source, &mut cfg)?;
            if vxc_zero && sys.vxc().is_none() {
                sys = sys.with_vxc(Some(vec![0.0; sys.n_states()]))?;
            }
            let i = parse_state(&sys, &state)?;
            cfg.state = Some(state);
            let sc = sigma_config(&method, &sys, &mut cfg)?;
            cfg.max_iter = Some(max_iter);
            cfg.tol = Some(tol);
            set_out(&mut cfg, &out, "json");
            let r = solve_qp(&sys, i, &sc, QpOptions { max_iter, tol })?;
            let f = out.units.factor();
            let record = serde_json::json!({
                "state": i + 1,
                "units": out.units,
                "eps_ks": sys.eigenvalues()[i] * f,
                "energy": r.energy * f,
                "energy_Ha": r.energy,
                "energy_eV": r.energy * HARTREE_TO_EV,
                "iterations": r.iterations,
                "converged": r.converged,
                "residual": r.residual * f,
            });
            emit(&cfg, out.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&record).unwrap()))
        }
        Command::Selftest => selftest(),
    }
}

fn selftest() -> Result<()> {
    use crate::ks_model::two_level_system;
    use crate::response::{chi0_apply, chi0_dense, wp_dense};
    use crate::spectra::full_casida_energies;

    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let sys2 = two_level_system();
    let wp = wp_dense(&sys2, Complex64::new(0.0, 0.0), 0.0)?;
    let err = (wp[(0, 0)].re + 0.125).abs() + (wp[(0, 1)].re - 0.125).abs();
    check("two-level static W_p", err < 1e-14, format!("{err:.1e}"));

    let rule = lgr_rule(2)?;
    let err = (rule.nodes[1] - 2.0 / 3.0).abs() + (rule.weights[0] - 0.25).abs();
    check("two-point Radau rule", err < 1e-15, format!("{err:.1e}"));

    let rep = sigma_c_element(&sys2, 0, 0.0, &SigmaConfig::dense(64))?;
    let sos = sigma_c_sos_with(&sys2, &casida_full(&sys2)?, 0, 0.0)?;
    let err = (rep.sigma_c - sos).abs();
    check("two-level contour vs sum over states", err < 1e-8, format!("{err:.1e}"));

    let model = build_model_1d(&ModelSpec::default())?;
    let w = Complex64::new(0.3, 0.7);
    let g = crate::linalg::CVec::from_fn(model.n_grid(), |r, _| Complex64::new((r as f64).sin(), (r as f64 * 0.3).cos()));
    let dense = chi0_dense(&model, w, 0.0)? * &g;
    let err = (chi0_apply(&model, w, &g)? - &dense).norm() / dense.norm();
    check("Sternheimer chi0 application", err < 1e-10, format!("{err:.1e}"));

    let full = full_casida_energies(&model)?;
    let reduced = casida_energies(&model)?;
    let err = full.iter().zip(&reduced).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
    check("Casida reduction", err < 1e-10, format!("{err:.1e}"));

    let i = model.n_occ() - 1;
    let wm = model.midgap();
    let rep = sigma_c_element(&model, i, wm, &SigmaConfig::dense(64))?;
    let sos = sigma_c_sos_with(&model, &casida_full(&model)?, i, wm)?;
    let err = (rep.sigma_c - sos).abs();
    check("model contour vs sum over states", err < 1e-8, format!("{err:.1e}"));

    let shifted = IntegrationPath::new(&model, wm, 0.0, lgr_rule(8)?, &[f64::INFINITY])?;
    let xi = shifted.rule.nodes[7];
    let f = integrand_sample(&model, i, wm, shifted.frequency(7), &crate::contour::DenseWp)? * jacobian(xi);
    check("integrand finite near infinity", f.norm().is_finite(), format!("{:.3e}", f.norm()));

    if failures > 0 {
        return Err(GwError::Invariant { check: "selftest", detail: format!("{failures} check(s) failed") });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<OsString> {
        std::iter::once("gwlr").chain(list.iter().copied()).map(OsString::from).collect()
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(args(&["no-such-command"])), 2);
        assert_eq!(run(args(&["sigma", "--quad"])), 2);
    }

    #[test]
    fn domain_errors_exit_one() {
        assert_eq!(run(args(&["sigma", "--model", "default", "--state", "0"])), 1);
        assert_eq!(run(args(&["sigma", "--model", "default", "--scheme", "bogus"])), 1);
    }

    #[test]
    fn state_and_omega_parsing() {
        let sys = crate::ks_model::two_level_system();
        assert_eq!(parse_state(&sys, "homo").unwrap(), 0);
        assert_eq!(parse_state(&sys, "lumo").unwrap(), 1);
        assert_eq!(parse_state(&sys, "2").unwrap(), 1);
        assert!(parse_state(&sys, "3").is_err());
        assert_eq!(parse_omega(&sys, "midgap").unwrap(), 0.0);
        assert_eq!(parse_omega(&sys, "-0.25").unwrap(), -0.25);
    }
}
