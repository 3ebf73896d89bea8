//! `lpball`: command-line front end for the Monte Carlo studies.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
//! validation failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lpball::analytic::{j_floor, moment_mp, sigma2, variance_v, variance_w};
use lpball::bounds::BoundConstants;
use lpball::experiments::{constants_note, plot_data, run_study, to_csv, to_json, ExperimentConfig};
use lpball::ks::{ks_gaussian_bound_lipschitz, ks_gaussian_bound_quarter, ks_gaussian_exact, tv_gaussian};
use lpball::samplers::sample_yn;
use lpball::validation::{run_suite, Context, Fault, Suite};
use lpball::{Error, Executor, ModelSpec, PIndex, ProjectionVariant, RngStream};

#[derive(Debug, Parser)]
#[command(
    name = "lpball",
    version,
    about = "Monte Carlo checks of central limit rates on l_p balls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; overrides LPBALL_SEED and the config file.
    #[arg(long, global = true, env = "LPBALL_SEED")]
    seed: Option<u64>,

    /// Replicates per grid point; overrides the config file.
    #[arg(long, global = true)]
    replicates: Option<usize>,

    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Moments and limit variances for the given exponents.
    Constants {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// Accept 0 < p < 1.
        #[arg(long)]
        experimental: bool,
    },
    /// KS distance between N(0, sigma^2) and N(0, tau^2) with both bounds.
    KsExact {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        tau: f64,
    },
    /// Draw replicates of Y_n for one model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep n, estimate KS distances, fit the rate, check the envelope.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// Also write (ln n, ln ks) pairs to this file.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Validate {
        /// Reduced sample sizes.
        #[arg(long)]
        quick: bool,
        /// Corrupt an internal value to confirm the suite detects it.
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Domain { .. } | Error::Mode { .. } | Error::LengthMismatch(..) => {
                Failure::Usage(e.to_string())
            }
            Error::Hypothesis(_) | Error::Numeric(_) | Error::Empty(_) | Error::InsufficientSignal { .. } => {
                Failure::Numeric(e.to_string())
            }
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| usage(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))
}

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                // A closed reader (`| head`) is not an error.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(usage(format!("cannot write stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

fn resolve_seed(cli_or_env: Option<u64>, config: Option<u64>) -> u64 {
    cli_or_env.or(config).unwrap_or(0)
}

fn json_string<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Numeric(e.to_string()))
}

fn cmd_constants(cli: &Cli, p: f64, q: f64, lambda: f64, experimental: bool) -> CmdResult {
    let pi = if experimental {
        PIndex::experimental(p)?
    } else {
        PIndex::new(p)?
    };
    let mut moments = Vec::new();
    for (label, r) in [
        ("1", 1.0),
        ("2", 2.0),
        ("q", q),
        ("p", p),
        ("2p", 2.0 * p),
        ("2q", 2.0 * q),
        ("p+q", p + q),
    ] {
        moments.push((label, r, moment_mp(pi, r)?));
    }
    let s2 = sigma2(pi, q)?.value;
    let v = variance_v(lambda, pi)?.value;
    let w = variance_w(lambda, pi)?.value;
    let j_fixed = j_floor(pi, ProjectionVariant::Grassmann)?;
    let j_random = j_floor(pi, ProjectionVariant::RandomDim)?;
    let note = constants_note(&BoundConstants::default());
    let text = if cli.format == Some(Format::Json) {
        let moments: Vec<_> = moments
            .iter()
            .map(|(label, r, m)| serde_json::json!({"label": label, "r": r, "value": m}))
            .collect();
        json_string(&serde_json::json!({
            "p": p, "q": q, "lambda": lambda,
            "experimental_p": pi.is_experimental(),
            "moments": moments,
            "sigma2": s2, "v": v, "w": w,
            "j_p_fixed": j_fixed, "j_p_random": j_random,
            "constants": note,
        }))?
    } else {
        let mut t = String::new();
        writeln!(t, "p = {p}, q = {q}, lambda = {lambda}").unwrap();
        if pi.is_experimental() {
            writeln!(t, "warning: p < 1 is outside the proved range").unwrap();
        }
        for (label, r, m) in &moments {
            writeln!(t, "M_p({label}) = M_{p}({r}) = {m}").unwrap();
        }
        writeln!(t, "sigma2(p,q) = {s2}").unwrap();
        writeln!(t, "v(lambda) = {v}").unwrap();
        writeln!(t, "w(lambda) = {w}").unwrap();
        writeln!(t, "J_p (fixed dimension) = {j_fixed}").unwrap();
        writeln!(t, "J_p (random dimension) = {j_random}").unwrap();
        writeln!(t, "{note}").unwrap();
        t
    };
    emit(cli.out.as_deref(), &text)
}

fn bound_or_reason(r: lpball::Result<f64>) -> Result<serde_json::Value, Failure> {
    match r {
        Ok(v) => Ok(serde_json::json!(v)),
        Err(Error::Hypothesis(msg)) => Ok(serde_json::json!(format!("not applicable: {msg}"))),
        Err(e) => Err(e.into()),
    }
}

fn cmd_ks_exact(cli: &Cli, sigma: f64, tau: f64) -> CmdResult {
    let exact = ks_gaussian_exact(sigma, tau)?;
    let tv = tv_gaussian(sigma, tau)?;
    let (lo, hi) = if sigma <= tau { (sigma, tau) } else { (tau, sigma) };
    let quarter = if lo == hi {
        serde_json::json!(0.0)
    } else {
        bound_or_reason(ks_gaussian_bound_quarter(lo, hi))?
    };
    let lipschitz = bound_or_reason(ks_gaussian_bound_lipschitz(sigma, tau))?;
    let show = |v: &serde_json::Value| match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let text = if cli.format == Some(Format::Json) {
        json_string(&serde_json::json!({
            "sigma": sigma, "tau": tau, "ks_exact": exact, "tv": tv,
            "bound_quarter": quarter, "bound_lipschitz": lipschitz,
        }))?
    } else {
        format!(
            "sigma = {sigma}, tau = {tau}\nks_exact = {exact}\ntv = {tv}\nbound_quarter = {}\nbound_lipschitz = {}\n",
            show(&quarter),
            show(&lipschitz)
        )
    };
    emit(cli.out.as_deref(), &text)
}

fn default_sim_replicates() -> usize {
    100_000
}

/// Input of `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    model: ModelSpec,
    #[serde(default = "default_sim_replicates")]
    replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn cmd_simulate(cli: &Cli, path: &Path) -> CmdResult {
    let mut cfg: SimulateConfig = read_json(path)?;
    cfg.model.validate()?;
    if let Some(m) = cli.replicates {
        cfg.replicates = m;
    }
    if cfg.replicates == 0 {
        return Err(usage("replicates must be >= 1"));
    }
    let seed = resolve_seed(cli.seed, cfg.seed);
    cfg.seed = Some(seed);
    let stream = RngStream::for_experiment(seed, "simulate");
    let batch = sample_yn(&cfg.model, cfg.replicates, &stream, &Executor::new(cli.workers))?;
    let summary = batch.summary();
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Json => json_string(&serde_json::json!({
            "seed": seed,
            "config": cfg,
            "experimental_p": cfg.model.p.is_experimental(),
            "summary": summary,
            "values": batch.values,
        }))?,
        Format::Csv => {
            let echo = serde_json::to_string(&cfg).map_err(|e| Failure::Numeric(e.to_string()))?;
            let mut t = String::new();
            writeln!(t, "# seed: {seed}").unwrap();
            writeln!(t, "# config: {echo}").unwrap();
            if cfg.model.p.is_experimental() {
                writeln!(t, "# warning: p < 1 is outside the proved range").unwrap();
            }
            writeln!(t, "# mean: {:?} variance: {:?}", summary.mean, summary.variance).unwrap();
            t.push_str("y\n");
            for v in &batch.values {
                writeln!(t, "{v:?}").unwrap();
            }
            t
        }
    };
    emit(cli.out.as_deref(), &text)
}

fn cmd_convergence(cli: &Cli, path: &Path, plot: Option<&Path>) -> CmdResult {
    let mut cfg: ExperimentConfig = read_json(path)?;
    if let Some(m) = cli.replicates {
        cfg.replicates = m;
    }
    cfg.validate()?;
    let seed = resolve_seed(cli.seed, cfg.seed);
    let report = run_study(&cfg, seed, &Executor::new(cli.workers))?;
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => to_csv(&report)?,
        Format::Json => to_json(&report)? + "\n",
    };
    emit(cli.out.as_deref(), &text)?;
    if let Some(plot) = plot {
        emit(Some(plot), &plot_data(&report)?)?;
    }
    let failed: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("n={}: {e}", r.n)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("failed rows: {}", failed.join("; "))))
    }
}

fn cmd_validate(cli: &Cli, quick: bool, fault: Option<Fault>) -> CmdResult {
    let ctx = Context {
        fault,
        ..Context::new(cli.seed.unwrap_or(0), Executor::new(cli.workers))
    };
    let suite = if quick { Suite::Quick } else { Suite::Full };
    let checks = run_suite(suite, &ctx);
    let text = if cli.format == Some(Format::Json) {
        json_string(&serde_json::json!({"seed": ctx.seed, "suite": suite, "checks": checks}))?
    } else {
        let mut t = String::new();
        for c in &checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            writeln!(t, "{verdict} {} ({} ms): {}", c.name, c.elapsed_ms, c.detail).unwrap();
        }
        t
    };
    emit(cli.out.as_deref(), &text)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("{failed} of {} checks failed", checks.len())))
    }
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Constants {
            p,
            q,
            lambda,
            experimental,
        } => cmd_constants(cli, *p, *q, *lambda, *experimental),
        Command::KsExact { sigma, tau } => cmd_ks_exact(cli, *sigma, *tau),
        Command::Simulate { config } => cmd_simulate(cli, config),
        Command::Convergence { config, plot_data } => cmd_convergence(cli, config, plot_data.as_deref()),
        Command::Validate { quick, inject_fault } => cmd_validate(cli, *quick, *inject_fault),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
