//! Command-line front end: argument parsing, validation, dispatch, and
//! machine-readable output.
//!
//! Subcommands: `linearize` (pencil as JSON), `density` (CSV curve),
//! `locallaw` (CSV window-count report), `deloc` (CSV localization report),
//! `mcsub` (JSON Monte-Carlo subordination estimates).
//!
//! Contract: every numeric parameter is validated before any computation
//! starts; exit code 0 on success, 2 on a validation error (no output file
//! is written), 3 on a solver failure (for `density`, partial results are
//! written with the failed points flagged). Data goes to `--out` or stdout;
//! progress and warnings go to stderr only. Identical configurations and
//! seeds produce byte-identical output files, and every output embeds its
//! resolved configuration.
//!
//! Measures are described by JSON files such as
//! `{"type": "semicircle", "center": 0.0, "radius": 2.0}`; see
//! [`MeasureSpec`] for the accepted shapes. The `POLYSPECTRA_THREADS`
//! environment variable caps the worker-thread count.

use crate::linearize::{linearize_selfadjoint, LinearPencil};
use crate::ncpoly::NCPolynomial;
use crate::rmt::{approx_subordination, deloc_experiment, local_law_experiment};
use crate::spectra::{ScalarMeasure, SpectralPoint};
use crate::subordination::density_curve_with;
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::ArrayView2;
use ndarray_linalg::types::c64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Declarative description of a scalar measure, as stored in measure files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// Semicircle law centered at `center` with support radius `radius`.
    Semicircle {
        #[serde(default)]
        center: f64,
        #[serde(default = "default_semicircle_radius")]
        radius: f64,
    },
    /// Arcsine law on `[a, b]`.
    Arcsine { a: f64, b: f64 },
    /// Uniform (Lebesgue) law on `[a, b]`.
    Uniform { a: f64, b: f64 },
    /// Symmetric Bernoulli: atoms ±1 with weight ½ each.
    Bernoulli,
    /// Point mass at `t`.
    Dirac { t: f64 },
    /// Finite atomic measure: `[position, weight]` pairs.
    Atoms { atoms: Vec<(f64, f64)> },
}

fn default_semicircle_radius() -> f64 {
    2.0
}

impl MeasureSpec {
    /// Builds the concrete measure, validating its parameters.
    pub fn build(&self) -> Result<ScalarMeasure> {
        match self {
            MeasureSpec::Semicircle { center, radius } => {
                ScalarMeasure::semicircle(*center, *radius)
            }
            MeasureSpec::Arcsine { a, b } => ScalarMeasure::arcsine(*a, *b),
            MeasureSpec::Uniform { a, b } => ScalarMeasure::uniform(*a, *b),
            MeasureSpec::Bernoulli => Ok(ScalarMeasure::symmetric_bernoulli()),
            MeasureSpec::Dirac { t } => ScalarMeasure::dirac(*t),
            MeasureSpec::Atoms { atoms } => ScalarMeasure::atoms(atoms.clone()),
        }
    }

    /// Reads and parses a measure file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Measure(format!("cannot read measure file {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Measure(format!("invalid measure file {}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "polyspectra",
    version,
    about = "Spectral densities of self-adjoint polynomials in two free random variables, \
             with finite-dimensional random-matrix experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the self-adjoint linear pencil of a polynomial as JSON.
    Linearize(LinearizeArgs),
    /// Compute a spectral density curve through subordination (CSV).
    Density(DensityArgs),
    /// Eigenvalue window-count experiment against the limiting density (CSV).
    Locallaw(LocallawArgs),
    /// Eigenvector delocalization experiment (CSV).
    Deloc(DelocArgs),
    /// Monte-Carlo approximate subordination functions (JSON).
    Mcsub(McsubArgs),
}

#[derive(Debug, Args)]
struct LinearizeArgs {
    /// Polynomial in letters x and y, e.g. "x*y + y*x".
    #[arg(long)]
    poly: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DensityArgs {
    /// Self-adjoint polynomial in letters x and y.
    #[arg(long)]
    poly: String,
    /// Measure file for the first variable.
    #[arg(long = "mu-c")]
    mu_c: PathBuf,
    /// Measure file for the second variable.
    #[arg(long = "mu-d")]
    mu_d: PathBuf,
    /// Evaluation interval endpoints a b.
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["A", "B"])]
    interval: Vec<f64>,
    /// Number of grid points.
    #[arg(long, default_value_t = 241)]
    grid: usize,
    /// Final boundary-approach parameter of the continuation.
    #[arg(long = "eta-min", default_value_t = 1e-6)]
    eta_min: f64,
    /// Boundary exponent in (0, 1): the query point is x + i·eta_min^alpha.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Solver residual tolerance.
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
    /// Regularity threshold for the flag column.
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    /// Output CSV file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LocallawArgs {
    /// Self-adjoint polynomial in letters x and y.
    #[arg(long)]
    poly: String,
    /// Measure file for the first variable.
    #[arg(long = "mu-c")]
    mu_c: PathBuf,
    /// Measure file for the second variable.
    #[arg(long = "mu-d")]
    mu_d: PathBuf,
    /// Energy points to probe (repeatable).
    #[arg(long, allow_negative_numbers = true, default_values_t = vec![0.0])]
    x: Vec<f64>,
    /// Matrix sizes (repeatable).
    #[arg(long = "N", required = true)]
    sizes: Vec<usize>,
    /// Independent samples per size.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Window exponent in (0, 1): half-width is (eta*)^alpha.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Scale constant c in eta* = c·N^(-1/12)·ln N.
    #[arg(long = "c-const", default_value_t = 1.0)]
    c_const: f64,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DelocArgs {
    /// Self-adjoint polynomial in letters x and y.
    #[arg(long)]
    poly: String,
    /// Measure file for the first variable.
    #[arg(long = "mu-c")]
    mu_c: PathBuf,
    /// Measure file for the second variable.
    #[arg(long = "mu-d")]
    mu_d: PathBuf,
    /// Closed eigenvalue interval endpoints a b.
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["A", "B"])]
    interval: Vec<f64>,
    /// Matrix sizes (repeatable).
    #[arg(long = "N", required = true)]
    sizes: Vec<usize>,
    /// Independent samples per size.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Exponent in the reporting threshold N^(-alpha/12)·ln N.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct McsubArgs {
    /// Self-adjoint polynomial in letters x and y.
    #[arg(long)]
    poly: String,
    /// Measure file for the first variable.
    #[arg(long = "mu-c")]
    mu_c: PathBuf,
    /// Measure file for the second variable.
    #[arg(long = "mu-d")]
    mu_d: PathBuf,
    /// Spectral parameter re im.
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["RE", "IM"],
          default_values_t = vec![0.0, 0.0])]
    z: Vec<f64>,
    /// Imaginary regularization of the query point.
    #[arg(long, default_value_t = 0.2)]
    eta: f64,
    /// Boundary exponent in (0, 1) recorded with the query point.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Matrix sizes (repeatable).
    #[arg(long = "N", required = true)]
    sizes: Vec<usize>,
    /// Independent samples per size (at least 2).
    #[arg(long, default_value_t = 2)]
    trials: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also estimate the covariance corrections (second pass).
    #[arg(long = "with-delta", default_value_t = false)]
    with_delta: bool,
    /// Output JSON file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process entry point: parse, validate, dispatch, map errors to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Solver(_) | Error::Linalg(_) => 3,
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Linearize(a) => run_linearize(a),
        Command::Density(a) => run_density(a),
        Command::Locallaw(a) => run_locallaw(a),
        Command::Deloc(a) => run_deloc(a),
        Command::Mcsub(a) => run_mcsub(a),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("POLYSPECTRA_THREADS") {
        let n: usize = raw.trim().parse().map_err(|_| {
            Error::Config(format!(
                "POLYSPECTRA_THREADS must be a positive integer, got {raw:?}"
            ))
        })?;
        if n == 0 {
            return Err(Error::Config(
                "POLYSPECTRA_THREADS must be a positive integer, got 0".into(),
            ));
        }
        // A duplicate initialization only means a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn parse_selfadjoint_poly(text: &str) -> Result<NCPolynomial> {
    let p: NCPolynomial = text.parse()?;
    if !p.is_selfadjoint() {
        return Err(Error::NotSelfAdjoint(format!(
            "polynomial {text:?} is not self-adjoint"
        )));
    }
    Ok(p)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_interval(interval: &[f64]) -> Result<(f64, f64)> {
    let (a, b) = (interval[0], interval[1]);
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Config(format!(
            "interval must be finite with a < b, got [{a}, {b}]"
        )));
    }
    Ok((a, b))
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::Config("at least one matrix size is required".into()));
    }
    if let Some(&bad) = sizes.iter().find(|&&n| n == 0) {
        return Err(Error::Config(format!(
            "matrix sizes must be at least 1, got {bad}"
        )));
    }
    Ok(())
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn matrix_json(m: &ArrayView2<c64>) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> = m
        .outer_iter()
        .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
        .collect();
    serde_json::json!(rows)
}

fn pencil_json(pencil: &LinearPencil, config: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "config": config,
        "n": pencil.n,
        "gamma0": matrix_json(&pencil.gamma0.view()),
        "gamma1": matrix_json(&pencil.gamma1.view()),
        "gamma2": matrix_json(&pencil.gamma2.view()),
    })
}

fn run_linearize(a: LinearizeArgs) -> Result<u8> {
    let p = parse_selfadjoint_poly(&a.poly)?;
    let pencil = linearize_selfadjoint(&p)?;
    eprintln!("linearize: pencil size n = {}", pencil.n);
    let config = serde_json::json!({
        "subcommand": "linearize",
        "poly": a.poly,
    });
    let doc = pencil_json(&pencil, config);
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct DensityEcho<'a> {
    subcommand: &'static str,
    poly: &'a str,
    mu_c: &'a MeasureSpec,
    mu_d: &'a MeasureSpec,
    interval: [f64; 2],
    grid: usize,
    eta_min: f64,
    alpha: f64,
    tol: f64,
    tau: f64,
}

fn run_density(a: DensityArgs) -> Result<u8> {
    let p = parse_selfadjoint_poly(&a.poly)?;
    let spec_c = MeasureSpec::from_file(&a.mu_c)?;
    let spec_d = MeasureSpec::from_file(&a.mu_d)?;
    let mu_c = spec_c.build()?;
    let mu_d = spec_d.build()?;
    let interval = check_interval(&a.interval)?;
    if a.grid == 0 {
        return Err(Error::Config("grid must have at least one point".into()));
    }
    check_positive("eta-min", a.eta_min)?;
    check_alpha(a.alpha)?;
    check_positive("tol", a.tol)?;
    check_positive("tau", a.tau)?;

    eprintln!(
        "density: {} point(s) on [{}, {}], eta_min = {}",
        a.grid, interval.0, interval.1, a.eta_min
    );
    let curve = density_curve_with(
        &p, &mu_c, &mu_d, interval, a.grid, a.eta_min, a.alpha, a.tol, a.tau,
    )?;

    let echo = serde_json::to_string(&DensityEcho {
        subcommand: "density",
        poly: &a.poly,
        mu_c: &spec_c,
        mu_d: &spec_d,
        interval: [interval.0, interval.1],
        grid: a.grid,
        eta_min: a.eta_min,
        alpha: a.alpha,
        tol: a.tol,
        tau: a.tau,
    })?;
    let mut text = format!("# {echo}\n");
    text.push_str("x,rho,residual,condA_min_sv,condB_min_sv,regular_flag\n");
    for i in 0..curve.x_grid.len() {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            curve.x_grid[i],
            curve.rho[i],
            curve.residuals[i],
            curve.cond_a_min_sv[i],
            curve.cond_b_min_sv[i],
            curve.regularity_flags[i]
        ));
    }
    emit(a.out.as_deref(), &text)?;

    let failed = curve.residuals.iter().filter(|r| !r.is_finite()).count();
    if failed > 0 {
        eprintln!(
            "density: {failed} of {} point(s) did not converge; rows are flagged",
            curve.x_grid.len()
        );
        Ok(3)
    } else {
        Ok(0)
    }
}

#[derive(Serialize)]
struct LocallawEcho<'a> {
    subcommand: &'static str,
    poly: &'a str,
    mu_c: &'a MeasureSpec,
    mu_d: &'a MeasureSpec,
    x: &'a [f64],
    sizes: &'a [usize],
    trials: usize,
    alpha: f64,
    c_const: f64,
    seed: u64,
}

fn run_locallaw(a: LocallawArgs) -> Result<u8> {
    let p = parse_selfadjoint_poly(&a.poly)?;
    let spec_c = MeasureSpec::from_file(&a.mu_c)?;
    let spec_d = MeasureSpec::from_file(&a.mu_d)?;
    let mu_c = spec_c.build()?;
    let mu_d = spec_d.build()?;
    check_alpha(a.alpha)?;
    check_positive("c-const", a.c_const)?;
    check_sizes(&a.sizes)?;
    if a.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if a.x.is_empty() || a.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("x points must be finite and nonempty".into()));
    }

    let echo = serde_json::to_string(&LocallawEcho {
        subcommand: "locallaw",
        poly: &a.poly,
        mu_c: &spec_c,
        mu_d: &spec_d,
        x: &a.x,
        sizes: &a.sizes,
        trials: a.trials,
        alpha: a.alpha,
        c_const: a.c_const,
        seed: a.seed,
    })?;
    eprintln!(
        "locallaw: sizes {:?}, {} trial(s) each, {} energy point(s)",
        a.sizes,
        a.trials,
        a.x.len()
    );
    let report = local_law_experiment(
        &p, &mu_c, &mu_d, &a.x, &a.sizes, a.alpha, a.trials, a.seed, a.c_const,
    )?;

    let mut text = format!("# {echo}\n");
    text.push_str(
        "size,x,eta_star,half_width,trials,mean_ratio,median_ratio,std_ratio,rho_ref,median_rel_error\n",
    );
    for r in &report.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.size,
            r.x,
            r.eta_star,
            r.half_width,
            r.trials,
            r.mean_ratio,
            r.median_ratio,
            r.std_ratio,
            r.rho_ref,
            r.median_rel_error
        ));
    }
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct DelocEcho<'a> {
    subcommand: &'static str,
    poly: &'a str,
    mu_c: &'a MeasureSpec,
    mu_d: &'a MeasureSpec,
    interval: [f64; 2],
    sizes: &'a [usize],
    trials: usize,
    alpha: f64,
    seed: u64,
}

fn run_deloc(a: DelocArgs) -> Result<u8> {
    let p = parse_selfadjoint_poly(&a.poly)?;
    let spec_c = MeasureSpec::from_file(&a.mu_c)?;
    let spec_d = MeasureSpec::from_file(&a.mu_d)?;
    let mu_c = spec_c.build()?;
    let mu_d = spec_d.build()?;
    let interval = check_interval(&a.interval)?;
    check_alpha(a.alpha)?;
    check_sizes(&a.sizes)?;
    if a.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }

    let echo = serde_json::to_string(&DelocEcho {
        subcommand: "deloc",
        poly: &a.poly,
        mu_c: &spec_c,
        mu_d: &spec_d,
        interval: [interval.0, interval.1],
        sizes: &a.sizes,
        trials: a.trials,
        alpha: a.alpha,
        seed: a.seed,
    })?;
    eprintln!(
        "deloc: sizes {:?}, {} trial(s) each, interval [{}, {}]",
        a.sizes, a.trials, interval.0, interval.1
    );
    let report = deloc_experiment(
        &p, &mu_c, &mu_d, interval, &a.sizes, a.alpha, a.trials, a.seed,
    )?;

    let mut text = format!("# {echo}\n");
    text.push_str("size,trials_with_data,median_stat,max_stat,threshold\n");
    for r in &report.rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.size, r.trials_with_data, r.median_stat, r.max_stat, r.threshold
        ));
    }
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct McsubEcho<'a> {
    subcommand: &'static str,
    poly: &'a str,
    mu_c: &'a MeasureSpec,
    mu_d: &'a MeasureSpec,
    z: [f64; 2],
    eta: f64,
    alpha: f64,
    sizes: &'a [usize],
    trials: usize,
    seed: u64,
    with_delta: bool,
}

fn run_mcsub(a: McsubArgs) -> Result<u8> {
    let p = parse_selfadjoint_poly(&a.poly)?;
    let spec_c = MeasureSpec::from_file(&a.mu_c)?;
    let spec_d = MeasureSpec::from_file(&a.mu_d)?;
    let mu_c = spec_c.build()?;
    let mu_d = spec_d.build()?;
    if a.z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("z must be finite".into()));
    }
    check_positive("eta", a.eta)?;
    check_alpha(a.alpha)?;
    check_sizes(&a.sizes)?;
    if a.trials < 2 {
        return Err(Error::Config(format!(
            "mcsub needs at least 2 trials, got {}",
            a.trials
        )));
    }

    let pencil = linearize_selfadjoint(&p)?;
    let z = c64::new(a.z[0], a.z[1]);
    let point = SpectralPoint::new(z, a.eta, a.alpha, &pencil.gamma0.view())?;
    let config = serde_json::to_value(&McsubEcho {
        subcommand: "mcsub",
        poly: &a.poly,
        mu_c: &spec_c,
        mu_d: &spec_d,
        z: [a.z[0], a.z[1]],
        eta: a.eta,
        alpha: a.alpha,
        sizes: &a.sizes,
        trials: a.trials,
        seed: a.seed,
        with_delta: a.with_delta,
    })?;

    let mut runs = Vec::with_capacity(a.sizes.len());
    for &size in &a.sizes {
        eprintln!("mcsub: size {size}, {} trial(s)", a.trials);
        let approx = approx_subordination(
            &pencil,
            &mu_c,
            &mu_d,
            size,
            &point,
            a.trials,
            a.seed,
            a.with_delta,
        )?;
        let delta = approx.delta.as_ref().map(|d| {
            serde_json::json!({
                "delta1_norm": d.delta1_norm,
                "delta1_scaled_norm": d.delta1_scaled_norm,
                "delta2_norm": d.delta2_norm,
                "delta2_scaled_norm": d.delta2_scaled_norm,
                "invariance_gap": d.invariance_gap,
                "remainder_residual": d.remainder_residual,
            })
        });
        runs.push(serde_json::json!({
            "size": size,
            "eg": matrix_json(&approx.eg.view()),
            "ef1": matrix_json(&approx.ef1.view()),
            "ef2": matrix_json(&approx.ef2.view()),
            "omega1n": matrix_json(&approx.omega1n.view()),
            "omega2n": matrix_json(&approx.omega2n.view()),
            "sum_identity_error": approx.sum_identity_error,
            "delta": delta,
        }));
    }
    let doc = serde_json::json!({
        "config": config,
        "runs": runs,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}
