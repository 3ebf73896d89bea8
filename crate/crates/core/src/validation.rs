//! Invariant checks, grouped into a quick and a full suite. Each check is parameterized by its sample
//! sizes so the same code runs at smoke-test and at reference scale.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic::{moment_mp, sigma2, variance_v, variance_w, PIndex};
use crate::bounds::{gaussish_check, gaussish_sequences, BoundConstants, SummandFamily, KBE_SHEVTSOVA};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::experiments::{
    envelope_check, fit_rate, run_study, to_csv, ExperimentConfig, KRule, LambdaRule, ModeTemplate, ModelTemplate,
    RateAxis, StudyReport, WTemplate,
};
use crate::ks::{
    ks_gaussian_bound_lipschitz, ks_gaussian_bound_quarter, ks_gaussian_exact, ks_two_sample, tv_gaussian, Ecdf,
    DEFAULT_ALPHA,
};
use crate::numerics::normal_cdf;
use crate::rng::RngStream;
use crate::samplers::{sample_p_gaussian, sample_projnorm_direct, sample_yn, Mode, ModelSpec, Power, WSpec, YnSampler};
use crate::stats::Summary;

/// Deliberate corruption used to confirm that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Moments entering the identity and sampler checks are scaled by `1.05`.
    CorruptMoment,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrupt-moment" | "corrupt_moment" => Ok(Fault::CorruptMoment),
            other => Err(Error::Config(format!("unknown fault `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub exec: Executor,
    pub fault: Option<Fault>,
}

impl Context {
    pub fn new(seed: u64, exec: Executor) -> Self {
        Context {
            seed,
            exec,
            fault: None,
        }
    }

    fn moment(&self, p: PIndex, r: f64) -> Result<f64> {
        let m = moment_mp(p, r)?;
        Ok(match self.fault {
            Some(Fault::CorruptMoment) => m * 1.05,
            None => m,
        })
    }

    fn stream(&self, label: &str) -> RngStream {
        RngStream::for_experiment(self.seed, label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u64,
}

impl Check {
    fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
        let start = Instant::now();
        let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        Check {
            name: name.to_string(),
            passed,
            detail,
            elapsed_ms: start.elapsed().as_millis() as u64,
        }
    }
}

/// Collects per-case failures into a verdict and a one-line summary.
#[derive(Default)]
struct Tally {
    cases: usize,
    failures: Vec<String>,
    worst: f64,
}

impl Tally {
    fn record(&mut self, ok: bool, score: f64, what: impl FnOnce() -> String) {
        self.cases += 1;
        if score.is_nan() {
            self.worst = f64::NAN;
        } else if score > self.worst {
            self.worst = score;
        }
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, unit: &str) -> (bool, String) {
        let head = format!("{} cases, worst {unit} {:.3e}", self.cases, self.worst);
        if self.failures.is_empty() {
            (true, head)
        } else {
            (false, format!("{head}; failed: {}", self.failures.join("; ")))
        }
    }
}

pub const IDENTITY_PS: [f64; 6] = [1.0, 1.5, 2.0, 2.5, 3.0, 4.0];

/// `M_p(p) = 1`, `sigma^2(p,p) = 0`, `M_2(2) = 1`, `M_2(4) = 3`.
pub fn check_analytic_identities(ctx: &Context) -> Check {
    Check::timed("analytic identities", || {
        let mut t = Tally::default();
        for &p in &IDENTITY_PS {
            let pi = PIndex::new(p)?;
            let m = ctx.moment(pi, p)?;
            t.record((m - 1.0).abs() <= 1e-10, (m - 1.0).abs(), || {
                format!("M_{p}({p}) = {m}")
            });
            let s = sigma2(pi, p)?.value;
            t.record(s.abs() <= 1e-10, s.abs(), || format!("sigma2({p},{p}) = {s}"));
        }
        let two = PIndex::new(2.0)?;
        for (r, want) in [(2.0, 1.0), (4.0, 3.0)] {
            let m = ctx.moment(two, r)?;
            t.record((m - want).abs() <= 1e-12, (m - want).abs(), || {
                format!("M_2({r}) = {m}")
            });
        }
        Ok(t.finish("abs error"))
    })
}

/// Empirical means of `|Z|^r` against `M_p(r)` for `p in {1,2,3}`,
/// `r in {1,2,p,2p}`, within 5 standard errors.
pub fn check_sampler_moments(draws: usize, ctx: &Context) -> Check {
    Check::timed("sampler moments", || {
        let mut t = Tally::default();
        for (i, p) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            let pi = PIndex::new(p)?;
            let stream = ctx.stream("sampler-moments").substream(i as u64);
            // Chunks keep the draws reproducible for any worker count.
            let chunk = 1 << 16;
            let chunks = draws.div_ceil(chunk);
            let z: Vec<f64> = ctx
                .exec
                .map(chunks, |c| {
                    sample_p_gaussian(pi, chunk.min(draws - c * chunk), &stream.substream(c as u64))
                })
                .concat();
            let mut rs = vec![1.0, 2.0, p, 2.0 * p];
            rs.dedup();
            for r in rs {
                let pow = Power::new(r);
                let vals: Vec<f64> = z.iter().map(|x| pow.apply(x.abs())).collect();
                let s = Summary::of(&vals);
                let zscore = (s.mean - ctx.moment(pi, r)?) / s.se_mean();
                t.record(zscore.abs() <= 5.0, zscore.abs(), || {
                    format!("p={p} r={r}: z={zscore:.2}")
                });
            }
        }
        Ok(t.finish("|z|"))
    })
}

/// `(n, k)` pairs of the representation oracle.
pub const REPRESENTATION_CASES: [(usize, usize); 3] = [(32, 8), (64, 16), (128, 32)];

/// Two-sample KS critical value at level 0.01.
pub fn two_sample_critical(m: usize) -> f64 {
    1.63 * (2.0 / m as f64).sqrt()
}

/// Identity-based projection norms against literal Haar projections.
pub fn check_representation(cases: &[(usize, usize)], m: usize, ctx: &Context) -> Check {
    Check::timed("projection representation", || {
        let mut t = Tally::default();
        let crit = two_sample_critical(m);
        let mut case_id = 0u64;
        for &(n, k) in cases {
            for p in [1.0, 3.0] {
                let pi = PIndex::new(p)?;
                for (wname, w) in [("cone", WSpec::cone()), ("uniform", WSpec::uniform(pi))] {
                    let spec = ModelSpec::new(pi, n, Mode::GrassmannFixed { k }, w)?;
                    let base = ctx.stream("representation").substream(case_id);
                    case_id += 1;
                    let sampler = YnSampler::new(&spec)?;
                    let a_stream = base.substream(0);
                    let b_stream = base.substream(1);
                    let a = ctx
                        .exec
                        .map(m, |i| sampler.projection_norm(&mut a_stream.substream(i as u64).rng()));
                    let b = ctx.exec.try_map(m, |i| {
                        sample_projnorm_direct(&spec, &mut b_stream.substream(i as u64).rng())
                    })?;
                    let d = ks_two_sample(&Ecdf::new(a)?, &Ecdf::new(b)?);
                    t.record(d < crit, d / crit, || format!("n={n} k={k} p={p} W={wname}: {d:.5}"));
                }
            }
        }
        let (ok, detail) = t.finish("KS / critical");
        Ok((ok, format!("{detail}; critical {crit:.5}")))
    })
}

/// Exact Gaussian KS against a grid oracle and against both upper bounds.
/// Also checks that KS is half the total variation.
pub fn check_gaussian_ks_geometry() -> Check {
    Check::timed("gaussian KS geometry", || {
        let mut t = Tally::default();
        let exact = ks_gaussian_exact(1.0, 2.0)?;
        let oracle = (0..=2_000_000)
            .map(|i| {
                let x = 6.0 * i as f64 / 2_000_000.0;
                normal_cdf(x / 2.0) - normal_cdf(x)
            })
            .fold(0.0f64, |a, b| a.max(b.abs()));
        let e = (exact - oracle).abs();
        t.record(e <= 1e-8, e, || format!("exact {exact} vs grid {oracle}"));
        let steps = 400;
        for i in 0..=steps {
            let r = (1.001f64.ln() + (4.0f64.ln() - 1.001f64.ln()) * i as f64 / steps as f64).exp();
            let ks = ks_gaussian_exact(1.0, r)?;
            let q = ks_gaussian_bound_quarter(1.0, r)?;
            t.record(q >= ks, 0.0, || format!("quarter bound at ratio {r}"));
            let l = ks_gaussian_bound_lipschitz(1.0, r)?;
            t.record(l >= ks, 0.0, || format!("Lipschitz bound at ratio {r}"));
            if 1.0 / r > 0.5 {
                let l = ks_gaussian_bound_lipschitz(r, 1.0)?;
                t.record(l >= ks, 0.0, || format!("swapped Lipschitz bound at ratio {r}"));
            }
            if i % 20 == 0 {
                let gap = (0.5 * tv_gaussian(1.0, r)? - ks).abs();
                t.record(gap <= 1e-8, gap, || format!("L1 identity at ratio {r}: gap {gap:e}"));
            }
        }
        Ok(t.finish("abs error"))
    })
}

/// Variance of `Y_n` against the limit variance of each mode, and the
/// random-minus-fixed gap at `lambda = 1/2` against `(1 - lambda) / 4`. `p = 1`, uniform `W`.
pub fn check_limit_variances(n: usize, m: usize, ctx: &Context) -> Check {
    Check::timed("limit variances", || {
        let mut t = Tally::default();
        let p = PIndex::new(1.0)?;
        let w = WSpec::uniform(p);
        let mut id = 0u64;
        let mut run = |mode: Mode| -> Result<Summary> {
            let spec = ModelSpec::new(p, n, mode, w)?;
            id += 1;
            Ok(sample_yn(&spec, m, &ctx.stream("limit-variances").substream(id), &ctx.exec)?.summary())
        };
        for lambda in [0.25, 1.0] {
            let k = ((lambda * n as f64).ceil() as usize).clamp(1, n);
            let s = run(Mode::GrassmannFixed { k })?;
            let target = variance_v(lambda, p)?.value;
            let z = s.variance_z(target);
            t.record(z.abs() <= 5.0, z.abs(), || format!("fixed lambda={lambda}: z={z:.2}"));
        }
        for lambda in [0.25, 0.5] {
            let s = run(Mode::GrassmannRandom { lambda })?;
            let target = variance_w(lambda, p)?.value;
            let z = s.variance_z(target);
            t.record(z.abs() <= 5.0, z.abs(), || format!("random lambda={lambda}: z={z:.2}"));
        }
        let s = run(Mode::QNorm { q: 2.0 })?;
        let z = s.variance_z(sigma2(p, 2.0)?.value);
        t.record(z.abs() <= 5.0, z.abs(), || format!("q-norm: z={z:.2}"));
        let lambda = 0.5;
        let fixed = run(Mode::GrassmannFixed {
            k: (lambda * n as f64).ceil() as usize,
        })?;
        let random = run(Mode::GrassmannRandom { lambda })?;
        let gap = random.variance - fixed.variance;
        let se = fixed.se_variance().hypot(random.se_variance());
        let z = (gap - 0.25 * (1.0 - lambda)) / se;
        t.record(z.abs() <= 5.0, z.abs(), || format!("gap {gap:.4}: z={z:.2}"));
        let (ok, detail) = t.finish("|z|");
        Ok((ok, format!("{detail}; gap {gap:.5} vs 0.125")))
    })
}

/// Fixed-size sum tails against `C* / sqrt(beta_m)` with the extreme
/// admissible `alpha_m`, `beta_m`.
pub fn check_gaussish(ms: &[usize], runs: usize, ctx: &Context) -> Check {
    Check::timed("gaussish tail bound", || {
        let mut t = Tally::default();
        let mut id = 0u64;
        for family in [SummandFamily::CenteredExponential, SummandFamily::Gaussian] {
            for &m in ms {
                let (alpha, beta) = gaussish_sequences(family, m);
                id += 1;
                let stream = ctx.stream("gaussish").substream(id);
                let r = gaussish_check(family, m, alpha, beta, runs, KBE_SHEVTSOVA, &stream, &ctx.exec)?;
                t.record(r.passes, r.empirical_tail / r.bound, || {
                    format!("{} m={m}: {} > {}", family.name(), r.empirical_tail, r.bound)
                });
            }
        }
        Ok(t.finish("tail / bound"))
    })
}

/// Default study grid, `2^7 .. 2^13`.
pub fn default_grid() -> Vec<usize> {
    (7..=13).map(|e| 1usize << e).collect()
}

fn study(mode: ModeTemplate, w: WTemplate, grid: &[usize], m: usize) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelTemplate {
            p: PIndex::new(1.0).expect("p = 1 is valid"),
            mode,
            w,
        },
        n_grid: grid.to_vec(),
        replicates: m,
        seed: None,
        constants: BoundConstants::default(),
        alpha: DEFAULT_ALPHA,
        record_wall_time: false,
    }
}

/// `q = 2` norm study, `p = 1`, uniform `W`.
pub fn qnorm_study(grid: &[usize], m: usize) -> ExperimentConfig {
    study(ModeTemplate::QNorm { q: 2.0 }, WTemplate::Uniform {}, grid, m)
}

/// Fixed-dimension study with `k_n = ceil(sqrt n)`, cone measure.
pub fn sqrt_k_study(grid: &[usize], m: usize) -> ExperimentConfig {
    study(
        ModeTemplate::GrassmannFixed {
            k_rule: KRule::Power { a: 0.5 },
            lambda_limit: None,
        },
        WTemplate::Cone {},
        grid,
        m,
    )
}

/// Random-dimension study with `lambda_n = 1/2`, cone measure.
pub fn half_random_study(grid: &[usize], m: usize) -> ExperimentConfig {
    study(
        ModeTemplate::GrassmannRandom {
            lambda_rule: LambdaRule::Constant { lambda: 0.5 },
            lambda_limit: None,
        },
        WTemplate::Cone {},
        grid,
        m,
    )
}

pub const RATE_SLOPE_MAX: f64 = -0.35;
pub const RATE_R2_MIN: f64 = 0.9;

fn failed_rows(report: &StudyReport) -> Option<String> {
    let bad: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("n={}: {e}", r.n)))
        .collect();
    (!bad.is_empty()).then(|| bad.join("; "))
}

/// Slope of `ln ks` on `ln n` at most -0.35 with `r^2 >= 0.9`.
pub fn judge_rate(report: &StudyReport) -> (bool, String) {
    if let Some(e) = failed_rows(report) {
        return (false, e);
    }
    match fit_rate(&report.rows, RateAxis::N) {
        Ok(f) => (
            f.slope <= RATE_SLOPE_MAX && f.r_squared >= RATE_R2_MIN,
            format!("slope {:.4}, r2 {:.4}, {} rows used", f.slope, f.r_squared, f.used),
        ),
        Err(e) => (false, e.to_string()),
    }
}

/// KS decreasing along the grid (each step may rise by at most one DKW
/// radius, and the fitted slope is negative) and a finite envelope
/// constant stable within a factor of 2 on the upper half of the grid.
pub fn judge_envelope(report: &StudyReport) -> (bool, String) {
    if let Some(e) = failed_rows(report) {
        return (false, e);
    }
    let rows = &report.rows;
    let monotone = rows.windows(2).all(|w| w[1].ks <= w[0].ks + w[1].dkw);
    let slope = fit_rate(rows, RateAxis::N).map(|f| f.slope);
    let env = envelope_check(rows, &report.config.constants);
    let decreasing = monotone && matches!(slope, Ok(s) if s < 0.0);
    let ks: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.ks)).collect();
    (
        decreasing && env.passes,
        format!(
            "ks [{}], slope {}, fitted C {:.4}, stability {:.3}",
            ks.join(" "),
            slope.map_or_else(|e| e.to_string(), |s| format!("{s:.4}")),
            env.fitted_c,
            env.stability_ratio
        ),
    )
}

fn study_check(name: &str, cfg: &ExperimentConfig, ctx: &Context, judge: fn(&StudyReport) -> (bool, String)) -> Check {
    Check::timed(name, || Ok(judge(&run_study(cfg, ctx.seed, &ctx.exec)?)))
}

pub fn check_rate_qnorm(grid: &[usize], m: usize, ctx: &Context) -> Check {
    study_check("rate: q-norm", &qnorm_study(grid, m), ctx, judge_rate)
}

pub fn check_envelope_sqrt_k(grid: &[usize], m: usize, ctx: &Context) -> Check {
    study_check("envelope: k = sqrt(n)", &sqrt_k_study(grid, m), ctx, judge_envelope)
}

pub fn check_envelope_random(grid: &[usize], m: usize, ctx: &Context) -> Check {
    study_check(
        "envelope: lambda = 1/2",
        &half_random_study(grid, m),
        ctx,
        judge_envelope,
    )
}

/// Byte equality of study CSVs computed with two worker counts.
pub fn check_determinism(cfg: &ExperimentConfig, workers: (usize, usize), seed: u64) -> Check {
    Check::timed("determinism", || {
        let a = to_csv(&run_study(cfg, seed, &Executor::new(workers.0))?)?;
        let b = to_csv(&run_study(cfg, seed, &Executor::new(workers.1))?)?;
        Ok((
            a == b,
            format!("{} vs {} workers, {} bytes", workers.0, workers.1, a.len()),
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Reduced sample sizes, under a minute on one core.
    Quick,
    /// Reference sample sizes, including the convergence studies.
    Full,
}

pub fn run_suite(suite: Suite, ctx: &Context) -> Vec<Check> {
    match suite {
        Suite::Quick => vec![
            check_analytic_identities(ctx),
            check_gaussian_ks_geometry(),
            check_sampler_moments(100_000, ctx),
            check_representation(&REPRESENTATION_CASES[..1], 10_000, ctx),
            check_limit_variances(512, 20_000, ctx),
            check_gaussish(&[1_000], 10_000, ctx),
            check_determinism(&qnorm_study(&[64, 128, 256], 5_000), (1, 4), ctx.seed),
        ],
        Suite::Full => {
            let grid = default_grid();
            vec![
                check_analytic_identities(ctx),
                check_gaussian_ks_geometry(),
                check_sampler_moments(1_000_000, ctx),
                check_representation(&REPRESENTATION_CASES, 100_000, ctx),
                check_limit_variances(4096, 100_000, ctx),
                check_gaussish(&[1_000, 10_000], 100_000, ctx),
                check_rate_qnorm(&grid, 100_000, ctx),
                check_envelope_sqrt_k(&grid, 100_000, ctx),
                check_envelope_random(&grid, 100_000, ctx),
                check_determinism(&qnorm_study(&grid, 100_000), (1, 8), ctx.seed),
            ]
        }
    }
}
