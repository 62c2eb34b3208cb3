//! `fsnet` command line: `solve`, `oracle`, `matrices`, `presets`, `eval`.
//!
//! Exit codes: 0 converged, 1 configuration error, 2 iteration limit,
//! 3 diverged, 4 oracle bracket failure.

pub mod config;
pub mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::network::{loss_gradient, ModelSpec, Network};
use crate::optimize::{train, LineSearch, Stage, Status, TraceEntry, TrainError};
use crate::oracle::{
    error_metrics, shoot, ErrorMetrics, OracleError, DEFAULT_STEP, DEFAULT_TOL, DEFAULT_X_MAX,
};
use crate::orthopoly::{operational_matrix, BasisKind};
use crate::problem::{collocation_points, residual, FlowPreset, Sampling};

use config::{ConfigFile, OutputPaths, RunConfig};
use report::{OracleSummary, ProfileRow, Timings, TraceSummary, TrainingReport, VERSION};

/// Environment variable capping the rayon worker count.
pub const THREADS_ENV: &str = "FSNET_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_BRACKET: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Oracle(OracleError::Bracket { .. }) => EXIT_BRACKET,
            CliError::Oracle(OracleError::Diverged(_)) => EXIT_DIVERGED,
            _ => EXIT_CONFIG,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn status_exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => EXIT_OK,
        Status::MaxIters => EXIT_MAX_ITERS,
        Status::Diverged => EXIT_DIVERGED,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fsnet",
    version,
    about = "Falkner-Skan solver with Legendre/Chebyshev neural blocks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network on one flow and write report, profile and trace.
    Solve(SolveArgs),
    /// Shooting-method reference solution.
    Oracle(OracleArgs),
    /// Print an operational derivative matrix.
    Matrices(MatricesArgs),
    /// List the named flows.
    Presets,
    /// Re-evaluate a saved report's parameters.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Ldnn,
    Lcdnn,
    /// Take the model from the config file.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingChoice {
    Equidistant,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LineSearchChoice {
    Wolfe,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolveArgs {
    /// Named flow (case-insensitive); --alpha/--beta override its values.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingChoice>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub adam_epochs: Option<usize>,
    #[arg(long)]
    pub adam_lr: Option<f64>,
    #[arg(long)]
    pub lbfgs_iters: Option<usize>,
    #[arg(long)]
    pub lbfgs_lr: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub line_search: Option<LineSearchChoice>,
    /// 18000 points and 10000 L-BFGS iterations instead of the desk defaults.
    #[arg(long)]
    pub paper_scale: bool,
    #[arg(long)]
    pub no_oracle: bool,
    /// Report path; profile and trace CSVs are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Profile CSV path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Include wall-clock stage timings in the report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_X_MAX)]
    pub xmax: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub h: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MatricesArgs {
    #[arg(long)]
    pub basis: BasisKind,
    #[arg(long)]
    pub order: usize,
    #[arg(long, default_value_t = 1)]
    pub power: usize,
    #[arg(long, value_enum, default_value_t = MatrixFormat::Csv)]
    pub format: MatrixFormat,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Report written by `solve`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub no_oracle: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Number of worker threads requested through [`THREADS_ENV`].
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` on a dedicated rayon pool of `threads` workers, or on the global
/// pool when `threads` is `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Parses a preset name or reports it as a configuration error.
fn parse_preset(name: &str) -> Result<FlowPreset, CliError> {
    name.parse()
        .map_err(|e: crate::problem::ProblemError| CliError::Config(e.to_string()))
}

/// Resolves defaults, config file and flags into one [`RunConfig`].
pub fn resolve_solve_config(args: &SolveArgs) -> Result<(RunConfig, Option<FlowPreset>), CliError> {
    let mut cfg = if args.paper_scale {
        RunConfig::paper_scale()
    } else {
        RunConfig::desk()
    };
    let file = args.config.as_deref().map(ConfigFile::load).transpose()?;
    let file_has_model = file.as_ref().is_some_and(|f| f.model.is_some());
    if let Some(file) = file {
        cfg.overlay(file);
    }
    let preset = args.preset.as_deref().map(parse_preset).transpose()?;
    if let Some(p) = preset {
        (cfg.flow.alpha, cfg.flow.beta) = p.coefficients();
    }
    if let Some(v) = args.alpha {
        cfg.flow.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.flow.beta = v;
    }
    if let Some(v) = args.xmax {
        cfg.flow.x_max = v;
    }
    if let Some(v) = args.points {
        cfg.flow.n_points = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    match args.sampling {
        Some(SamplingChoice::Equidistant) => cfg.flow.sampling = Sampling::Equidistant,
        Some(SamplingChoice::Random) => cfg.flow.sampling = Sampling::Random { seed: cfg.seed },
        None => {}
    }
    match args.model {
        Some(ModelChoice::Ldnn) => cfg.model = ModelSpec::ldnn(),
        Some(ModelChoice::Lcdnn) => cfg.model = ModelSpec::lcdnn(),
        Some(ModelChoice::File) if !file_has_model => {
            return Err(CliError::Config(
                "--model file needs a config file with a `model` section".into(),
            ))
        }
        Some(ModelChoice::File) | None => {}
    }
    if let Some(v) = args.adam_epochs {
        cfg.adam.epochs = v;
    }
    if let Some(v) = args.adam_lr {
        cfg.adam.lr = v;
    }
    if let Some(v) = args.lbfgs_iters {
        cfg.lbfgs.max_iters = v;
    }
    if let Some(v) = args.lbfgs_lr {
        cfg.lbfgs.lr = v;
    }
    if let Some(v) = args.eps {
        cfg.lbfgs.eps = v;
    }
    match args.line_search {
        Some(LineSearchChoice::Wolfe) => cfg.lbfgs.line_search = LineSearch::Wolfe,
        Some(LineSearchChoice::Fixed) => cfg.lbfgs.line_search = LineSearch::Fixed,
        None => {}
    }
    if args.no_oracle {
        cfg.oracle.enabled = false;
    }
    cfg.validate()?;
    Ok((cfg, preset))
}

/// Result of [`solve`]: the report plus the tables written next to it.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub report: TrainingReport,
    pub profile: Vec<ProfileRow>,
    pub trace: Vec<TraceEntry>,
}

fn test_nodes(cfg: &RunConfig) -> Vec<f64> {
    let n = cfg.oracle.test_points;
    let x_max = cfg.flow.x_max;
    (0..n)
        .map(|i| {
            if i + 1 == n {
                x_max
            } else {
                x_max * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

struct Evaluation {
    g_dd_0: f64,
    profile: Vec<ProfileRow>,
    oracle: Option<OracleSummary>,
    metrics: Option<ErrorMetrics>,
}

fn evaluate(net: &Network, params: &[f64], cfg: &RunConfig) -> Evaluation {
    let g_dd_0 = net.forward_jet(params, 0.0).d2;
    let nodes = test_nodes(cfg);
    let profile: Vec<ProfileRow> = nodes
        .iter()
        .map(|&x| {
            let j = net.forward_jet(params, x);
            ProfileRow {
                x,
                g: j.d0,
                gp: j.d1,
                gpp: j.d2,
                residual: residual(j, cfg.flow.alpha, cfg.flow.beta),
            }
        })
        .collect();

    let (mut oracle, mut metrics) = (None, None);
    if cfg.oracle.enabled {
        let x_max = cfg.oracle.x_max.max(cfg.flow.x_max);
        match shoot(
            cfg.flow.alpha,
            cfg.flow.beta,
            x_max,
            cfg.oracle.h,
            cfg.oracle.tol,
        ) {
            Ok(shot) => {
                let reference: Vec<(f64, f64)> = shot
                    .sample(&nodes)
                    .into_iter()
                    .map(|(x, s)| (x, s.g))
                    .collect();
                let model: Vec<(f64, f64)> = profile.iter().map(|r| (r.x, r.g)).collect();
                metrics = error_metrics(&model, &reference).ok();
                oracle = Some(OracleSummary::new(&shot, g_dd_0));
            }
            Err(e) => eprintln!("[fsnet] oracle unavailable: {e}"),
        }
    }
    Evaluation {
        g_dd_0,
        profile,
        oracle,
        metrics,
    }
}

/// Trains per `cfg` and assembles the report. Deterministic for fixed
/// inputs, whatever the rayon pool size.
pub fn solve(
    cfg: &RunConfig,
    preset: Option<FlowPreset>,
    with_timings: bool,
) -> Result<SolveOutput, CliError> {
    cfg.validate()?;
    let net = Network::new(cfg.model.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let outcome = train(&net, &cfg.flow, &cfg.adam, &cfg.lbfgs, cfg.seed)?;
    let eval = evaluate(&net, &outcome.params, cfg);
    let report = TrainingReport {
        version: VERSION.to_string(),
        model: cfg.model.name.clone(),
        preset: preset.map(|p| p.name().to_string()),
        g_dd_0: eval.g_dd_0,
        final_loss: outcome.final_loss,
        converged: outcome.status,
        adam_epochs: outcome
            .trace
            .iter()
            .filter(|e| e.stage == Stage::Adam)
            .count(),
        lbfgs_iterations: outcome.lbfgs_iterations,
        line_search_fallbacks: outcome.line_search_fallbacks,
        trace_summary: TraceSummary::from_trace(&outcome.trace),
        oracle: eval.oracle,
        metrics: eval.metrics,
        timings: with_timings.then_some(Timings {
            adam_ms: outcome.adam_ms,
            lbfgs_ms: outcome.lbfgs_ms,
        }),
        seed: cfg.seed,
        config: cfg.clone(),
        parameters: outcome.params,
    };
    Ok(SolveOutput {
        report,
        profile: eval.profile,
        trace: outcome.trace,
    })
}

/// Writes to stdout; a closed pipe (`fsnet oracle ... | head -1`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn cmd_solve(args: &SolveArgs) -> Result<i32, CliError> {
    let (cfg, preset) = resolve_solve_config(args)?;
    let paths = OutputPaths::from_flags(args.out.as_deref(), args.csv.as_deref());
    let out = solve(&cfg, preset, args.timings)?;
    write_file(&paths.report, |w| {
        w.write_all(out.report.to_json().as_bytes())
    })?;
    write_file(&paths.profile_csv, |w| {
        report::write_profile_csv(w, &out.profile)
    })?;
    write_file(&paths.trace_csv, |w| report::write_trace_csv(w, &out.trace))?;
    let r = &out.report;
    let status = serde_json::to_string(&r.converged).unwrap_or_default();
    let mut line = format!(
        "model {} alpha {} beta {} g''(0) {:.9} loss {:.6e} status {}",
        r.model,
        cfg.flow.alpha,
        cfg.flow.beta,
        r.g_dd_0,
        r.final_loss,
        status.trim_matches('"')
    );
    if let Some(o) = &r.oracle {
        line += &format!(" oracle {:.9}", o.s_star);
    }
    if let Some(m) = &r.metrics {
        line += &format!(" mae {:.3e}", m.mae);
    }
    emit(&(line + "\n"));
    Ok(status_exit_code(r.converged))
}

fn resolve_flow(
    preset: Option<&str>,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> Result<(f64, f64), CliError> {
    let base = preset
        .map(parse_preset)
        .transpose()?
        .map(FlowPreset::coefficients);
    match (base, alpha, beta) {
        (_, Some(a), Some(b)) => Ok((a, b)),
        (Some((a, b)), alpha, beta) => Ok((alpha.unwrap_or(a), beta.unwrap_or(b))),
        (None, _, _) => Err(CliError::Config(
            "give --preset or both --alpha and --beta".into(),
        )),
    }
}

fn cmd_oracle(args: &OracleArgs) -> Result<i32, CliError> {
    let (alpha, beta) = resolve_flow(args.preset.as_deref(), args.alpha, args.beta)?;
    let shot = shoot(alpha, beta, args.xmax, args.h, args.tol)?;
    if let Some(path) = &args.csv {
        write_file(path, |w| report::write_oracle_csv(w, &shot))?;
    }
    emit(&format!(
        "s_star {:.12}\niterations {}\nfar_field_error {:.3e}\n",
        shot.s_star, shot.iterations, shot.far_field_error
    ));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MatrixDump {
    basis: BasisKind,
    order: usize,
    power: usize,
    rows: Vec<Vec<f64>>,
}

/// Text printed by `matrices`.
pub fn render_matrix(
    basis: BasisKind,
    order: usize,
    power: usize,
    format: MatrixFormat,
) -> Result<String, CliError> {
    let m = operational_matrix(basis, order, power).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(match format {
        MatrixFormat::Csv => {
            m.rows()
                .map(|row| {
                    row.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect::<Vec<_>>()
                .join("\n")
                + "\n"
        }
        MatrixFormat::Json => {
            let dump = MatrixDump {
                basis,
                order,
                power,
                rows: m.rows().map(<[f64]>::to_vec).collect(),
            };
            serde_json::to_string(&dump).expect("matrix serializes") + "\n"
        }
    })
}

/// Text printed by `presets`: `name alpha beta` per line, `beta` as
/// `[low,high]` for the two families.
pub fn render_presets() -> String {
    FlowPreset::ALL
        .iter()
        .map(|p| {
            let (lo, hi) = p.beta_range();
            let beta = if lo == hi {
                lo.to_string()
            } else {
                format!("[{lo},{hi}]")
            };
            format!("{} {} {}\n", p.name(), p.alpha(), beta)
        })
        .collect()
}

#[derive(Serialize)]
struct EvalOutput {
    g_dd_0: f64,
    loss: f64,
    oracle: Option<OracleSummary>,
    metrics: Option<ErrorMetrics>,
}

fn cmd_eval(args: &EvalArgs) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&args.report).map_err(io_err(&args.report))?;
    let saved: TrainingReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.report.display())))?;
    let mut cfg = saved.config;
    if args.no_oracle {
        cfg.oracle.enabled = false;
    }
    cfg.validate()?;
    let net = Network::new(cfg.model.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    net.check_params(&saved.parameters)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let points = collocation_points(&cfg.flow).map_err(|e| CliError::Config(e.to_string()))?;
    let loss = match loss_gradient(&net, &saved.parameters, &cfg.flow, &points) {
        Ok(lg) => lg.loss,
        Err(_) => f64::NAN,
    };
    let eval = evaluate(&net, &saved.parameters, &cfg);
    if let Some(path) = &args.csv {
        write_file(path, |w| report::write_profile_csv(w, &eval.profile))?;
    }
    let out = EvalOutput {
        g_dd_0: eval.g_dd_0,
        loss,
        oracle: eval.oracle,
        metrics: eval.metrics,
    };
    emit(&(serde_json::to_string_pretty(&out).expect("eval output serializes") + "\n"));
    Ok(if loss.is_finite() {
        EXIT_OK
    } else {
        EXIT_DIVERGED
    })
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Matrices(a) => render_matrix(a.basis, a.order, a.power, a.format).map(|s| {
            emit(&s);
            EXIT_OK
        }),
        Command::Presets => {
            emit(&render_presets());
            Ok(EXIT_OK)
        }
        Command::Eval(a) => cmd_eval(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("fsnet: {e}");
        e.exit_code()
    })
}
