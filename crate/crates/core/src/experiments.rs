//! Convergence studies: the KS distance of `Y_n` to its Gaussian limit along
//! a grid of `n`, compared with the predicted rate shape.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic::{sigma2, variance_v, variance_w, PIndex};
use crate::bounds::{thm_a_bound_shape, thm_b_bound_shape, thm_c_bound_shape, BoundConstants, BoundShape};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::ks::{ks_one_sample_gaussian, Ecdf, DEFAULT_ALPHA};
use crate::rng::RngStream;
use crate::samplers::{sample_yn, Mode, ModelSpec, WSpec};

/// CSV header shared by every convergence report.
pub const CSV_HEADER: &str = "n,k_or_lambda,m,ks,dkw,target_var,bound_shape,wall_ms";

/// Limit variances at or below this are rounding residue of zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Minimum replicates per grid point.
pub const MIN_REPLICATES: usize = 1_000;

/// Subspace dimension rule for fixed-dimension projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KRule {
    /// `k_n = ceil(lambda n)`.
    FixedRatio { lambda: f64 },
    /// `k_n = ceil(n^a)`, `0 < a <= 1`.
    Power { a: f64 },
    /// One value per grid point.
    Explicit { values: Vec<usize> },
}

/// Inclusion probability rule for random-dimension projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    Constant { lambda: f64 },
    Explicit { values: Vec<f64> },
}

/// The statistic of a study, with its dimension rule. `lambda_limit` is the
/// limit of `k_n / n` (or `lambda_n`); it is derived when the rule
/// determines it and required otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeTemplate {
    GrassmannFixed {
        k_rule: KRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda_limit: Option<f64>,
    },
    GrassmannRandom {
        lambda_rule: LambdaRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda_limit: Option<f64>,
    },
    QNorm {
        q: f64,
    },
}

/// Mixing law as written in a config. `cone` and `uniform` resolve against
/// the study's `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WTemplate {
    Cone {},
    Uniform {},
    DiracZero {},
    Exponential { scale: f64 },
    Gamma { shape: f64, scale: f64 },
    PointMass { w0: f64 },
}

impl WTemplate {
    pub fn resolve(&self, p: PIndex) -> WSpec {
        match *self {
            WTemplate::Cone {} | WTemplate::DiracZero {} => WSpec::DiracZero,
            WTemplate::Uniform {} => WSpec::uniform(p),
            WTemplate::Exponential { scale } => WSpec::Exponential { scale },
            WTemplate::Gamma { shape, scale } => WSpec::Gamma { shape, scale },
            WTemplate::PointMass { w0 } => WSpec::PointMass { w0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTemplate {
    pub p: PIndex,
    pub mode: ModeTemplate,
    pub w: WTemplate,
}

fn default_grid() -> Vec<usize> {
    (7..=13).map(|e| 1usize << e).collect()
}

fn default_replicates() -> usize {
    100_000
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// A convergence study as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelTemplate,
    #[serde(default = "default_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub constants: BoundConstants,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Wall times make output bytes run-dependent; off by default.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn check_unit_open(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} = {x} must lie in (0, 1]")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = &self.n_grid;
        if grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "n_grid must be strictly ascending positive integers".into(),
            ));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::Config(format!(
                "replicates = {} is below the minimum of {MIN_REPLICATES}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        self.constants.validate()?;
        let explicit_len = |len: usize| {
            if len == grid.len() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "explicit rule has {len} values for {} grid points",
                    grid.len()
                )))
            }
        };
        match &self.model.mode {
            ModeTemplate::GrassmannFixed { k_rule, lambda_limit } => {
                match k_rule {
                    KRule::FixedRatio { lambda } => check_unit_open("k_rule.lambda", *lambda)?,
                    KRule::Power { a } => check_unit_open("k_rule.a", *a)?,
                    KRule::Explicit { values } => {
                        explicit_len(values.len())?;
                        if lambda_limit.is_none() {
                            return Err(Error::Config("explicit k_rule requires lambda_limit".into()));
                        }
                    }
                }
                if let Some(l) = lambda_limit {
                    if !(0.0..=1.0).contains(l) {
                        return Err(Error::Config(format!("lambda_limit = {l} must lie in [0, 1]")));
                    }
                }
            }
            ModeTemplate::GrassmannRandom {
                lambda_rule,
                lambda_limit,
            } => {
                match lambda_rule {
                    LambdaRule::Constant { lambda } => check_unit_open("lambda_rule.lambda", *lambda)?,
                    LambdaRule::Explicit { values } => {
                        explicit_len(values.len())?;
                        for v in values {
                            check_unit_open("lambda_rule value", *v)?;
                        }
                        if lambda_limit.is_none() {
                            return Err(Error::Config("explicit lambda_rule requires lambda_limit".into()));
                        }
                    }
                }
                if let Some(l) = lambda_limit {
                    if !(0.0..=1.0).contains(l) {
                        return Err(Error::Config(format!("lambda_limit = {l} must lie in [0, 1]")));
                    }
                }
            }
            ModeTemplate::QNorm { .. } => {
                if grid[0] < 2 {
                    return Err(Error::Config("q_norm studies need n >= 2".into()));
                }
            }
        }
        for i in 0..grid.len() {
            self.spec_at(i)?;
        }
        Ok(())
    }

    pub fn w(&self) -> WSpec {
        self.model.w.resolve(self.model.p)
    }

    /// Cell for grid point `i` and its `k_n` or `lambda_n`.
    pub fn spec_at(&self, i: usize) -> Result<(ModelSpec, Option<f64>)> {
        let n = self.n_grid[i];
        let (mode, label) = match &self.model.mode {
            ModeTemplate::GrassmannFixed { k_rule, .. } => {
                let k = match k_rule {
                    KRule::FixedRatio { lambda } => (lambda * n as f64).ceil() as usize,
                    KRule::Power { a } => (n as f64).powf(*a).ceil() as usize,
                    KRule::Explicit { values } => values[i],
                };
                // ceil can overshoot by rounding when the exact value is n.
                let k = if matches!(k_rule, KRule::Explicit { .. }) {
                    k
                } else {
                    k.clamp(1, n)
                };
                (Mode::GrassmannFixed { k }, Some(k as f64))
            }
            ModeTemplate::GrassmannRandom { lambda_rule, .. } => {
                let lambda = match lambda_rule {
                    LambdaRule::Constant { lambda } => *lambda,
                    LambdaRule::Explicit { values } => values[i],
                };
                (Mode::GrassmannRandom { lambda }, Some(lambda))
            }
            ModeTemplate::QNorm { q } => (Mode::QNorm { q: *q }, None),
        };
        Ok((ModelSpec::new(self.model.p, n, mode, self.w())?, label))
    }

    /// Limit of `k_n / n` or `lambda_n`; `None` for q-norm studies.
    pub fn lambda_limit(&self) -> Option<f64> {
        match &self.model.mode {
            ModeTemplate::GrassmannFixed { k_rule, lambda_limit } => Some(lambda_limit.unwrap_or(match k_rule {
                KRule::FixedRatio { lambda } => *lambda,
                KRule::Power { a } if *a >= 1.0 => 1.0,
                KRule::Power { .. } => 0.0,
                KRule::Explicit { .. } => unreachable!("validated"),
            })),
            ModeTemplate::GrassmannRandom {
                lambda_rule,
                lambda_limit,
            } => Some(lambda_limit.unwrap_or(match lambda_rule {
                LambdaRule::Constant { lambda } => *lambda,
                LambdaRule::Explicit { .. } => unreachable!("validated"),
            })),
            ModeTemplate::QNorm { .. } => None,
        }
    }

    /// Variance of the Gaussian limit; a degenerate limit is an error.
    pub fn target_variance(&self) -> Result<f64> {
        let p = self.model.p;
        let v = match &self.model.mode {
            ModeTemplate::GrassmannFixed { .. } => variance_v(self.lambda_limit().unwrap(), p)?.value,
            ModeTemplate::GrassmannRandom { .. } => variance_w(self.lambda_limit().unwrap(), p)?.value,
            ModeTemplate::QNorm { q } => sigma2(p, *q)?.value,
        };
        if v > DEGENERATE_VARIANCE {
            Ok(v)
        } else {
            Err(Error::Hypothesis(format!("limit variance {v:e} is degenerate")))
        }
    }

    fn shape(&self, spec: &ModelSpec) -> Result<BoundShape> {
        let w = spec.w;
        match spec.mode {
            Mode::GrassmannFixed { k } => {
                thm_a_bound_shape(spec.n, k, self.lambda_limit().unwrap(), &w, &self.constants)
            }
            Mode::GrassmannRandom { lambda } => {
                thm_b_bound_shape(spec.n, lambda, self.lambda_limit().unwrap(), &w, &self.constants)
            }
            Mode::QNorm { .. } => thm_c_bound_shape(spec.n, &w, &self.constants),
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self.model.mode {
            ModeTemplate::GrassmannFixed { .. } => "grassmann_fixed",
            ModeTemplate::GrassmannRandom { .. } => "grassmann_random",
            ModeTemplate::QNorm { .. } => "q_norm",
        }
    }
}

/// One grid point of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `k_n` in fixed mode, `lambda_n` in random mode, absent for q-norms.
    pub k_or_lambda: Option<f64>,
    pub m: usize,
    pub ks: f64,
    pub dkw: f64,
    pub target_var: f64,
    pub bound_shape: f64,
    pub wall_ms: u64,
    /// Components of `bound_shape`.
    pub shape_terms: Option<BoundShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ConvergenceRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn at_noise_floor(&self) -> bool {
        self.ks <= self.dkw
    }

    fn failed(n: usize, k_or_lambda: Option<f64>, m: usize, e: &Error) -> Self {
        ConvergenceRow {
            n,
            k_or_lambda,
            m,
            ks: f64::NAN,
            dkw: f64::NAN,
            target_var: f64::NAN,
            bound_shape: f64::NAN,
            wall_ms: 0,
            shape_terms: None,
            error: Some(e.to_string()),
        }
    }
}

fn study_stream(seed: u64) -> RngStream {
    RngStream::for_experiment(seed, "convergence")
}

fn run_row(cfg: &ExperimentConfig, i: usize, target: f64, seed: u64, exec: &Executor) -> Result<ConvergenceRow> {
    let started = Instant::now();
    let (spec, label) = cfg.spec_at(i)?;
    let shape = cfg.shape(&spec)?;
    // Keyed by n, so extending the grid leaves existing rows unchanged.
    let stream = study_stream(seed).substream(spec.n as u64);
    let batch = sample_yn(&spec, cfg.replicates, &stream, exec)?;
    let report = ks_one_sample_gaussian(&Ecdf::new(batch.values)?, target, cfg.alpha)?;
    Ok(ConvergenceRow {
        n: spec.n,
        k_or_lambda: label,
        m: cfg.replicates,
        ks: report.statistic,
        dkw: report.dkw_radius,
        target_var: target,
        bound_shape: shape.value,
        wall_ms: if cfg.record_wall_time {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
        shape_terms: Some(shape),
        error: None,
    })
}

/// One row per grid point. Configuration errors abort; a failure inside a
/// row is recorded on that row and the sweep continues.
pub fn run_convergence(cfg: &ExperimentConfig, seed: u64, exec: &Executor) -> Result<Vec<ConvergenceRow>> {
    cfg.validate()?;
    let target = cfg.target_variance();
    Ok((0..cfg.n_grid.len())
        .map(|i| {
            let res = target.clone().and_then(|t| run_row(cfg, i, t, seed, exec));
            res.unwrap_or_else(|e| {
                let label = cfg.spec_at(i).ok().and_then(|(_, l)| l);
                ConvergenceRow::failed(cfg.n_grid[i], label, cfg.replicates, &e)
            })
        })
        .collect())
}

/// Regressor of a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateAxis {
    N,
    /// `k_n`; fixed-dimension studies only.
    K,
}

/// Least squares fit of `ln ks` on `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    /// Rows at or below the DKW radius, or failed.
    pub excluded: usize,
}

pub fn fit_rate(rows: &[ConvergenceRow], axis: RateAxis) -> Result<RateFit> {
    let mut pts = Vec::with_capacity(rows.len());
    for r in rows {
        if !r.is_ok() || r.at_noise_floor() || !(r.ks > 0.0) {
            continue;
        }
        let x = match axis {
            RateAxis::N => r.n as f64,
            RateAxis::K => r.k_or_lambda.ok_or(Error::Mode {
                mode: "q_norm",
                what: "rate fit against k",
            })?,
        };
        pts.push((x.ln(), r.ks.ln()));
    }
    let excluded = rows.len() - pts.len();
    if pts.len() < 3 {
        return Err(Error::InsufficientSignal {
            usable: pts.len(),
            excluded,
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numeric("rate fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    // A constant response is fitted exactly.
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        used: pts.len(),
        excluded,
    })
}

/// Smallest envelope constant and its stability on the upper half of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub passes: bool,
    /// Smallest `C` with `ks <= C * shape + dkw` on every row, where `shape`
    /// is the bound with unit constant. Empirical only; no proved value of
    /// the constant exists.
    pub fitted_c: f64,
    /// `max / min` of `ks / shape` over the upper half of the grid.
    pub stability_ratio: f64,
    pub upper_rows: usize,
}

/// Factor within which `ks / shape` must stay on the upper half of the grid.
pub const ENVELOPE_STABILITY: f64 = 2.0;

/// `bound_shape` is rescaled by `consts.big_c` to unit constant.
pub fn envelope_check(rows: &[ConvergenceRow], consts: &BoundConstants) -> EnvelopeReport {
    let ok: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.is_ok()).collect();
    let unit = |r: &ConvergenceRow| r.bound_shape / consts.big_c;
    let fitted_c = ok.iter().map(|r| (r.ks - r.dkw).max(0.0) / unit(r)).fold(0.0, f64::max);
    let upper: Vec<f64> = ok[ok.len() / 2..].iter().map(|r| r.ks / unit(r)).collect();
    let hi = upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = upper.iter().copied().fold(f64::INFINITY, f64::min);
    let stability_ratio = if upper.is_empty() { f64::INFINITY } else { hi / lo };
    EnvelopeReport {
        passes: ok.len() == rows.len()
            && !rows.is_empty()
            && fitted_c.is_finite()
            && upper.len() >= 2
            && stability_ratio <= ENVELOPE_STABILITY,
        fitted_c,
        stability_ratio,
        upper_rows: upper.len(),
    }
}

/// A finished study with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub seed: u64,
    pub mode: &'static str,
    pub config: ExperimentConfig,
    pub constants_note: String,
    pub experimental_p: bool,
    pub rows: Vec<ConvergenceRow>,
    pub fit_n: std::result::Result<RateFit, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_k: Option<std::result::Result<RateFit, String>>,
    pub envelope: EnvelopeReport,
}

pub fn constants_note(c: &BoundConstants) -> String {
    format!(
        "theorem constants c = {}, C = {} are user-supplied (default 1); K_BE = {}",
        c.c, c.big_c, c.kbe
    )
}

/// Runs a study and its rate and envelope analyses. `seed` overrides the
/// config's seed and is echoed into the stored config.
pub fn run_study(cfg: &ExperimentConfig, seed: u64, exec: &Executor) -> Result<StudyReport> {
    let rows = run_convergence(cfg, seed, exec)?;
    let fit_n = fit_rate(&rows, RateAxis::N).map_err(|e| e.to_string());
    let fit_k = matches!(cfg.model.mode, ModeTemplate::GrassmannFixed { .. })
        .then(|| fit_rate(&rows, RateAxis::K).map_err(|e| e.to_string()));
    let envelope = envelope_check(&rows, &cfg.constants);
    let mut config = cfg.clone();
    config.seed = Some(seed);
    Ok(StudyReport {
        seed,
        mode: cfg.mode_name(),
        constants_note: constants_note(&cfg.constants),
        experimental_p: cfg.model.p.is_experimental(),
        config,
        rows,
        fit_n,
        fit_k,
        envelope,
    })
}

/// Shortest round-trip form, scientific at extreme magnitudes.
fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:?}"))
}

fn fit_line(name: &str, fit: &std::result::Result<RateFit, String>) -> String {
    match fit {
        Ok(f) => format!(
            "# {name}: slope={} intercept={} r2={} used={} excluded={}",
            f.slope, f.intercept, f.r_squared, f.used, f.excluded
        ),
        Err(e) => format!("# {name}: unavailable ({e})"),
    }
}

/// `#` header lines shared by every report.
fn header(report: &StudyReport) -> Result<String> {
    let mut out = String::new();
    let config = serde_json::to_string(&report.config).map_err(|e| Error::Numeric(e.to_string()))?;
    writeln!(out, "# seed: {}", report.seed).unwrap();
    writeln!(out, "# mode: {}", report.mode).unwrap();
    writeln!(out, "# config: {config}").unwrap();
    writeln!(out, "# {}", report.constants_note).unwrap();
    if report.experimental_p {
        writeln!(out, "# warning: p < 1 is outside the proved range").unwrap();
    }
    Ok(out)
}

/// CSV rows between `#` comment lines that carry the provenance and analyses.
pub fn to_csv(report: &StudyReport) -> Result<String> {
    let mut out = header(report)?;
    writeln!(out, "{CSV_HEADER}").unwrap();
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?},{:?},{}",
            r.n,
            opt(r.k_or_lambda),
            r.m,
            r.ks,
            r.dkw,
            r.target_var,
            r.bound_shape,
            r.wall_ms
        )
        .unwrap();
    }
    for r in report.rows.iter().filter(|r| !r.is_ok()) {
        writeln!(out, "# error at n={}: {}", r.n, r.error.as_deref().unwrap_or_default()).unwrap();
    }
    writeln!(out, "{}", fit_line("fit_n", &report.fit_n)).unwrap();
    if let Some(f) = &report.fit_k {
        writeln!(out, "{}", fit_line("fit_k", f)).unwrap();
    }
    let e = &report.envelope;
    writeln!(
        out,
        "# envelope: passes={} fitted_c={} stability_ratio={} upper_rows={}",
        e.passes, e.fitted_c, e.stability_ratio, e.upper_rows
    )
    .unwrap();
    Ok(out)
}

pub fn to_json(report: &StudyReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Numeric(e.to_string()))
}

/// Two columns `ln n  ln ks`; rows without a positive statistic are skipped.
pub fn plot_data(report: &StudyReport) -> Result<String> {
    let mut out = header(report)?;
    out.push_str("# ln_n ln_ks\n");
    for r in report.rows.iter().filter(|r| r.is_ok() && r.ks > 0.0) {
        writeln!(out, "{:?} {:?}", (r.n as f64).ln(), r.ks.ln()).unwrap();
    }
    Ok(out)
}
