//! Command-line experiment runner.
//!
//! Builds a problem, reports the parameter windows, executes seeded
//! repeats (concurrently) and writes per-run traces, an aggregate summary,
//! a resolved configuration file and a JSON manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{self, reference_solve};
use crate::error::Error;
use crate::problems::{self, CsInstance, Dataset, Transform};
use crate::sampling::ParticipationPolicy;
use crate::solver::Solver;
use crate::types::{
    default_gamma, default_lambda, gamma_upper_bound, validate_config, OptimalityCertificate,
    ProblemInstance, SolverConfig, TraceRecord,
};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "SPLITSTOCH_THREADS";

/// Header of every per-run trace file.
pub const TRACE_HEADER: &str = "k,stopping_error,consensus_max,phi,h_value,lyapunov,prox_calls,grad_calls,elapsed_s";

/// Mixed into the run seed to get the participation stream, so the
/// instance and the samples never share a random stream.
const SAMPLING_SALT: u64 = 0x5DEE_CE66_D1CE_4E5B;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Cs,
    Logistic,
    Toy1d,
}

impl ProblemKind {
    fn name(self) -> &'static str {
        match self {
            ProblemKind::Cs => "cs",
            ProblemKind::Logistic => "logistic",
            ProblemKind::Toy1d => "toy1d",
        }
    }
}

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "splitstoch", version, about = "Run stochastic splitting experiments", args_override_self = true)]
pub struct Args {
    #[arg(long, value_enum)]
    pub problem: ProblemKind,

    /// Flat `key = value` file; keys are flag names. Flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 1)]
    pub repeats: usize,

    /// Minimum iteration count K; see `--fixed-iters`.
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,

    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    /// Run exactly `iters` iterations instead of the stopping rule.
    #[arg(long)]
    pub fixed_iters: bool,

    /// Fraction of users sampled per iteration.
    #[arg(long, default_value_t = 1.0)]
    pub participation: f64,

    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,

    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,

    /// Step size or `auto`.
    #[arg(long, default_value = "auto")]
    pub gamma: String,

    /// Relaxation for every user or `auto`.
    #[arg(long, default_value = "auto")]
    pub lambda_relax: String,

    /// Run even when the parameters fall outside their windows.
    #[arg(long)]
    pub force: bool,

    #[arg(long, default_value = "splitstoch-out")]
    #[serde(skip)]
    pub output: PathBuf,

    /// Fill the `elapsed_s` trace column (makes traces run-dependent).
    #[arg(long)]
    pub record_time: bool,

    /// Signal dimension (cs).
    #[arg(long, default_value_t = 512)]
    pub n: usize,

    /// Measurements: a fraction of `n` when below 1, a count otherwise (cs).
    #[arg(long, default_value_t = 0.25)]
    pub rows: f64,

    #[arg(long, default_value_t = 0.01)]
    pub sparsity: f64,

    #[arg(long, default_value = "dct")]
    pub transform: String,

    /// LIBSVM file (logistic); a synthetic set is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Size of the synthetic logistic set.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,

    #[arg(long, default_value_t = 0.75)]
    pub train_frac: f64,

    #[arg(long, default_value_t = 1e-3)]
    pub lambda_lo: f64,

    #[arg(long, default_value_t = 1e-2)]
    pub lambda_hi: f64,

    /// Number of agents (logistic); defaults to one per training sample.
    #[arg(long)]
    pub agents: Option<usize>,

    /// Tolerance for the reference optimum (logistic, toy1d).
    #[arg(long, default_value_t = 1e-10)]
    pub reference_tol: f64,
}

impl Args {
    /// The configuration as `key = value` lines that reproduce the run when
    /// passed back through `--config`.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("problem", self.problem.name().into());
        kv("seed", self.seed.to_string());
        kv("repeats", self.repeats.to_string());
        kv("iters", self.iters.to_string());
        kv("tol", self.tol.to_string());
        kv("fixed-iters", self.fixed_iters.to_string());
        kv("participation", self.participation.to_string());
        kv("alpha", self.alpha.to_string());
        kv("sigma", self.sigma.to_string());
        kv("gamma", self.gamma.clone());
        kv("lambda-relax", self.lambda_relax.clone());
        kv("force", self.force.to_string());
        kv("record-time", self.record_time.to_string());
        kv("n", self.n.to_string());
        kv("rows", self.rows.to_string());
        kv("sparsity", self.sparsity.to_string());
        kv("transform", self.transform.clone());
        if let Some(d) = &self.data {
            kv("data", d.display().to_string());
        }
        kv("samples", self.samples.to_string());
        kv("train-frac", self.train_frac.to_string());
        kv("lambda-lo", self.lambda_lo.to_string());
        kv("lambda-hi", self.lambda_hi.to_string());
        if let Some(a) = self.agents {
            kv("agents", a.to_string());
        }
        kv("reference-tol", self.reference_tol.to_string());
        out
    }
}

/// Errors mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// `--help` or `--version` output.
    Info(String),
    Config(String),
    Parse(String),
    NonFinite(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => EXIT_OK,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::NonFinite(_) => EXIT_NON_FINITE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Info(m) | CliError::Config(m) | CliError::Parse(m) | CliError::NonFinite(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::NonBinaryLabels(_) | Error::Json(_) => CliError::Parse(e.to_string()),
            Error::NonFiniteIterate { .. } => CliError::NonFinite(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Reads a flat `key = value` file (also `key value`), `#` starting a
/// comment, and turns it into flag tokens.
pub fn config_file_tokens(text: &str) -> std::result::Result<Vec<OsString>, CliError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k.trim(), v.trim()),
                None => (line, "true"),
            },
        };
        let key = key.trim_start_matches("--");
        if key.is_empty() || key == "config" {
            return Err(CliError::Parse(format!("config line {}: bad key in `{raw}`", lineno + 1)));
        }
        match key {
            "fixed-iters" | "force" | "record-time" => match value {
                "true" | "1" | "yes" => out.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => {
                    return Err(CliError::Parse(format!(
                        "config line {}: `{key}` expects true/false, got `{other}`",
                        lineno + 1
                    )))
                }
            },
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

fn find_config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Parses the command line, folding in `--config` so that flags win.
pub fn parse_args<I, T>(argv: I) -> std::result::Result<Args, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let mut merged: Vec<OsString> = argv.first().cloned().into_iter().collect();
    if let Some(path) = find_config_path(&argv) {
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        merged.extend(config_file_tokens(&text)?);
    }
    merged.extend(argv.into_iter().skip(1));
    Args::try_parse_from(merged).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Info(e.to_string()),
        _ => CliError::Parse(e.to_string()),
    })
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args = match parse_args(argv) {
        Ok(a) => a,
        Err(CliError::Info(msg)) => {
            print!("{msg}");
            return EXIT_OK;
        }
        Err(e) => {
            eprintln!("{}", e.message());
            return e.exit_code();
        }
    };
    match with_thread_pool(|| run_experiment(&args)) {
        Ok(m) => {
            print_summary(&m);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    match threads {
        Some(t) if t > 0 => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

/// Outcome of one repeat.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub status: String,
    pub iterations: usize,
    pub stopping_error: f64,
    pub phi: f64,
    pub h_value: f64,
    pub prox_calls: u64,
    pub grad_calls: u64,
    /// `|Phi(x^K) - Phi*|` when the optimum is known.
    pub phi_gap: Option<f64>,
    pub recovery_error: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub trace_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowSummary {
    pub gamma: f64,
    pub gamma_upper: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_upper_min: f64,
    pub lambda_upper_max: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub args: Args,
    pub config_file: String,
    pub problem: String,
    pub n: usize,
    pub agents: usize,
    pub windows: WindowSummary,
    pub phi_star: Option<f64>,
    pub runs: Vec<RunSummary>,
    pub summary_file: String,
}

struct Built {
    problem: ProblemInstance,
    phi_star: Option<f64>,
    certificate: Option<OptimalityCertificate>,
    cs: Option<CsInstance>,
    split: Option<(Dataset, Dataset)>,
}

fn load_dataset(args: &Args) -> std::result::Result<Dataset, CliError> {
    match &args.data {
        Some(path) => {
            let f = fs::File::open(path)
                .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
            Ok(problems::parse_libsvm(f)?)
        }
        None => Ok(problems::synthetic_mushrooms(args.samples, args.seed)),
    }
}

fn build(args: &Args, run_seed: u64, data: Option<&Dataset>) -> std::result::Result<Built, CliError> {
    match args.problem {
        ProblemKind::Toy1d => {
            let toy = problems::toy1d();
            Ok(Built {
                phi_star: Some(toy.phi_star),
                problem: toy.problem.clone(),
                certificate: None,
                cs: None,
                split: None,
            })
        }
        ProblemKind::Cs => {
            let transform: Transform = args.transform.parse()?;
            let p = if args.rows < 1.0 {
                (args.rows * args.n as f64).round() as usize
            } else {
                args.rows as usize
            };
            let (inst, problem) = problems::build_compressed_sensing(args.n, p, args.sparsity, transform, run_seed)?;
            Ok(Built {
                problem,
                phi_star: None,
                certificate: None,
                cs: Some(inst),
                split: None,
            })
        }
        ProblemKind::Logistic => {
            let data = data.expect("dataset loaded for logistic runs");
            let (train, test) = problems::split_train_test(data, args.train_frac, run_seed)?;
            let agents = args.agents.unwrap_or(train.len());
            let (problem, _) =
                problems::build_logistic(&train, agents, (args.lambda_lo, args.lambda_hi), run_seed)?;
            let reference = reference_solve(&problem, args.reference_tol)?;
            Ok(Built {
                problem,
                phi_star: Some(reference.phi),
                certificate: None,
                cs: None,
                split: Some((train, test)),
            })
        }
    }
}

fn solver_config(args: &Args, problem: &ProblemInstance, seed: u64) -> std::result::Result<SolverConfig, CliError> {
    let users = problem.users();
    let alpha = vec![args.alpha; users];
    let gamma = if args.gamma == "auto" {
        let (bound, _) = gamma_upper_bound(problem, args.sigma, &alpha)?;
        default_gamma(bound)
    } else {
        args.gamma
            .parse::<f64>()
            .map_err(|_| CliError::Parse(format!("--gamma expects a number or `auto`, got `{}`", args.gamma)))?
    };
    let lambda = if args.lambda_relax == "auto" {
        default_lambda(problem, args.sigma, &alpha, gamma)
    } else {
        let l = args.lambda_relax.parse::<f64>().map_err(|_| {
            CliError::Parse(format!("--lambda-relax expects a number or `auto`, got `{}`", args.lambda_relax))
        })?;
        vec![l; users]
    };
    Ok(SolverConfig {
        gamma,
        sigma: args.sigma,
        alpha,
        lambda,
        participation: ParticipationPolicy::FixedFraction { rho: args.participation },
        max_iters: args.iters,
        tolerance: args.tol,
        seed: seed ^ SAMPLING_SALT,
        record_virtual: false,
    })
}

fn windows(
    problem: &ProblemInstance,
    config: &SolverConfig,
) -> std::result::Result<(WindowSummary, String), CliError> {
    let report = validate_config(problem, config)?;
    let fold = |v: &[f64], init: f64, f: fn(f64, f64) -> f64| v.iter().cloned().fold(init, f);
    let summary = WindowSummary {
        gamma: config.gamma,
        gamma_upper: report.gamma_upper,
        lambda_min: fold(&config.lambda, f64::INFINITY, f64::min),
        lambda_max: fold(&config.lambda, f64::NEG_INFINITY, f64::max),
        lambda_upper_min: fold(&report.lambda_upper, f64::INFINITY, f64::min),
        lambda_upper_max: fold(&report.lambda_upper, f64::NEG_INFINITY, f64::max),
        valid: report.is_valid(),
    };
    Ok((summary, report.describe(config)))
}

/// Shortest round-trip form; scientific notation outside `[1e-4, 1e15)`.
fn fmt_f(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn trace_csv(trace: &[TraceRecord], elapsed: Option<&[f64]>) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (idx, r) in trace.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt_f(r.stopping_error),
            fmt_f(r.consensus_max),
            fmt_f(r.phi),
            fmt_f(r.h_value),
            r.lyapunov.map(fmt_f).unwrap_or_default(),
            r.prox_calls,
            r.grad_calls,
            elapsed.and_then(|e| e.get(idx)).map(|t| fmt_f(*t)).unwrap_or_default(),
        );
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, if values.len() < 2 { 0.0 } else { f64::NAN });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-iteration mean and sample standard deviation across runs; rows for
/// `k` average over the runs that reached `k`.
pub fn summary_csv(traces: &[Vec<TraceRecord>]) -> String {
    let mut out = String::from(
        "k,runs,stopping_error_mean,stopping_error_std,consensus_max_mean,consensus_max_std,phi_mean,phi_std,h_value_mean,h_value_std,lyapunov_mean,lyapunov_std\n",
    );
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    for idx in 0..len {
        let rows: Vec<&TraceRecord> = traces.iter().filter_map(|t| t.get(idx)).collect();
        let col = |f: fn(&TraceRecord) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (se, se_s) = col(|r| r.stopping_error);
        let (cm, cm_s) = col(|r| r.consensus_max);
        let (ph, ph_s) = col(|r| r.phi);
        let (hv, hv_s) = col(|r| r.h_value);
        let lyap: Vec<f64> = rows.iter().filter_map(|r| r.lyapunov).collect();
        let (ly, ly_s) = if lyap.len() == rows.len() {
            let (a, b) = mean_std(&lyap);
            (fmt_f(a), fmt_f(b))
        } else {
            (String::new(), String::new())
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            rows[0].k,
            rows.len(),
            fmt_f(se),
            fmt_f(se_s),
            fmt_f(cm),
            fmt_f(cm_s),
            fmt_f(ph),
            fmt_f(ph_s),
            fmt_f(hv),
            fmt_f(hv_s),
            ly,
            ly_s
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> std::result::Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

struct RunResult {
    summary: RunSummary,
    trace: Vec<TraceRecord>,
}

fn run_one(
    args: &Args,
    run: usize,
    data: Option<&Dataset>,
    out_dir: &Path,
) -> std::result::Result<(RunResult, Option<(WindowSummary, String, Built)>), CliError> {
    let seed = args.seed.wrapping_add(run as u64);
    let mut built = build(args, seed, data)?;
    let config = solver_config(args, &built.problem, seed)?;
    let (window, text) = windows(&built.problem, &config)?;
    if !window.valid && !args.force {
        return Err(CliError::Config(format!(
            "parameters outside their admissible windows (use --force to run anyway)\n{text}"
        )));
    }
    if args.problem == ProblemKind::Toy1d {
        built.certificate = Some(problems::toy1d().certificate(config.gamma, config.sigma)?);
    }
    let mut solver = Solver::new(&built.problem, &config)?;
    if let Some(cert) = &built.certificate {
        solver = solver.with_certificate(cert);
    }

    let start = Instant::now();
    let mut elapsed = Vec::new();
    let (state, trace, status) = {
        let mut state = crate::types::IterateState::zeros(&built.problem);
        let mut trace = vec![solver.record(&state, 0)];
        if args.record_time {
            elapsed.push(start.elapsed().as_secs_f64());
        }
        let cap = 10 * args.iters.max(1);
        let status;
        loop {
            let error = trace.last().map(|r| r.stopping_error).unwrap_or(f64::INFINITY);
            let go = if args.fixed_iters {
                state.k < args.iters
            } else {
                error > args.tol || state.k <= args.iters
            };
            if !go {
                status = "converged";
                break;
            }
            if !args.fixed_iters && state.k >= cap {
                status = "max_iters";
                break;
            }
            let report = solver.advance(&mut state)?;
            trace.push(report.record);
            if args.record_time {
                elapsed.push(start.elapsed().as_secs_f64());
            }
        }
        (state, trace, if args.fixed_iters { "fixed" } else { status })
    };

    let trace_file = format!("trace_run{run:03}.csv");
    write_file(
        &out_dir.join(&trace_file),
        &trace_csv(&trace, args.record_time.then_some(elapsed.as_slice())),
    )?;

    let last = trace.last().expect("trace has the initial record");
    let mut summary = RunSummary {
        run,
        seed,
        status: status.into(),
        iterations: state.k,
        stopping_error: last.stopping_error,
        phi: diagnostics::eval_phi(&built.problem, state.x.view()),
        h_value: last.h_value,
        prox_calls: state.prox_calls,
        grad_calls: state.grad_calls,
        phi_gap: None,
        recovery_error: None,
        train_accuracy: None,
        test_accuracy: None,
        trace_file,
    };
    if let Some(phi_star) = built.phi_star {
        summary.phi_gap = Some((summary.phi - phi_star).abs());
    }
    if let Some(cs) = &built.cs {
        summary.recovery_error = Some(cs.relative_error(&state.x));
        let mut csv = String::from("x,x_true\n");
        for (a, b) in state.x.iter().zip(cs.x_true.iter()) {
            let _ = writeln!(csv, "{a},{b}");
        }
        write_file(&out_dir.join(format!("signal_run{run:03}.csv")), &csv)?;
        write_file(&out_dir.join(format!("instance_run{run:03}.json")), &cs.to_json()?)?;
    }
    if let Some((train, test)) = &built.split {
        summary.train_accuracy = Some(train.accuracy(&state.x));
        summary.test_accuracy = Some(test.accuracy(&state.x));
    }
    let extra = (run == 0).then_some((window, text, built));
    Ok((RunResult { summary, trace }, extra))
}

/// Runs the experiment described by `args` and writes its artifacts.
pub fn run_experiment(args: &Args) -> std::result::Result<Manifest, CliError> {
    if args.repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".into()));
    }
    fs::create_dir_all(&args.output)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", args.output.display())))?;
    let data = match args.problem {
        ProblemKind::Logistic => Some(load_dataset(args)?),
        _ => None,
    };

    let results: Vec<_> = (0..args.repeats)
        .into_par_iter()
        .map(|r| run_one(args, r, data.as_ref(), &args.output))
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    let mut first = None;
    for res in results {
        let (run, extra) = res?;
        if extra.is_some() {
            first = extra;
        }
        runs.push(run);
    }
    let (window, text, built) = first.expect("run 0 always reports its windows");
    print!("{text}");

    let traces: Vec<Vec<TraceRecord>> = runs.iter().map(|r| r.trace.clone()).collect();
    write_file(&args.output.join("summary.csv"), &summary_csv(&traces))?;
    write_file(&args.output.join("config.txt"), &args.to_config_text())?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        args: args.clone(),
        config_file: "config.txt".into(),
        problem: built.problem.name.clone(),
        n: built.problem.n,
        agents: built.problem.m(),
        windows: window,
        phi_star: built.phi_star,
        runs: runs.into_iter().map(|r| r.summary).collect(),
        summary_file: "summary.csv".into(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&args.output.join("manifest.json"), &json)?;
    Ok(manifest)
}

fn print_summary(m: &Manifest) {
    let mut by_status: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &m.runs {
        *by_status.entry(r.status.as_str()).or_default() += 1;
    }
    println!(
        "{}: n = {}, agents = {}, runs = {} {:?}",
        m.problem,
        m.n,
        m.agents,
        m.runs.len(),
        by_status
    );
    for r in &m.runs {
        let mut line = format!(
            "run {:>3} seed {} iters {} error {:e} phi {}",
            r.run, r.seed, r.iterations, r.stopping_error, r.phi
        );
        if let Some(g) = r.phi_gap {
            let _ = write!(line, " |phi - phi*| {g:e}");
        }
        if let Some(e) = r.recovery_error {
            let _ = write!(line, " recovery {e:e}");
        }
        if let Some(a) = r.test_accuracy {
            let _ = write!(line, " test-acc {a:.4}");
        }
        println!("{line}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_tokens() {
        let t = config_file_tokens("# c\nproblem = cs\nseed 4\nfixed-iters = true\nforce = false\n").unwrap();
        let t: Vec<String> = t.into_iter().map(|s| s.into_string().unwrap()).collect();
        assert_eq!(t, ["--problem", "cs", "--seed", "4", "--fixed-iters"]);
        assert!(config_file_tokens("force = maybe\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "problem = toy1d\nseed = 3\niters = 50\n").unwrap();
        let args = parse_args(["splitstoch", "--config", path.to_str().unwrap(), "--seed", "9"]).unwrap();
        assert_eq!(args.problem, ProblemKind::Toy1d);
        assert_eq!(args.seed, 9);
        assert_eq!(args.iters, 50);
    }

    #[test]
    fn resolved_config_round_trips() {
        let args = parse_args(["splitstoch", "--problem", "cs", "--n", "64", "--rows", "16", "--gamma", "0.5"]).unwrap();
        let back = parse_args(
            std::iter::once(OsString::from("splitstoch")).chain(config_file_tokens(&args.to_config_text()).unwrap()),
        )
        .unwrap();
        assert_eq!(back.to_config_text(), args.to_config_text());
    }

    #[test]
    fn summary_statistics() {
        let rec = |k, e| TraceRecord {
            k,
            stopping_error: e,
            consensus_max: 0.0,
            phi: 1.0,
            h_value: 1.0,
            lyapunov: None,
            participants: 1,
            prox_calls: 0,
            grad_calls: 0,
        };
        let s = summary_csv(&[vec![rec(0, 1.0), rec(1, 2.0)], vec![rec(0, 3.0)]]);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[1].starts_with("0,2,2,1.4142135623730951,"));
        assert!(lines[2].starts_with("1,1,2,0,"));
    }
}
