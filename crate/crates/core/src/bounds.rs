//! Quantitative bounds: Berry-Esseen, the three rate shapes, the tail bound
//! for rescaled sums, and an empirical check of the three-term splitting
//! inequality.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::ks::{dkw_radius, ks_one_sample, Ecdf};
use crate::numerics::{normal_cdf, FRAC_1_SQRT_2PI};
use crate::rng::RngStream;
use crate::samplers::WSpec;

/// Berry-Esseen constant from Shevtsova (2013).
pub const KBE_SHEVTSOVA: f64 = 0.5583;
/// Berry's original constant.
pub const KBE_BERRY: f64 = 1.88;

/// Variance and third absolute moment of one summand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTriple {
    pub sigma2: f64,
    pub rho: f64,
}

impl MomentTriple {
    /// Rejects `rho < sigma2^{3/2}` beyond rounding.
    pub fn new(sigma2: f64, rho: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && rho >= 0.0) || !sigma2.is_finite() || !rho.is_finite() {
            return Err(Error::Hypothesis(format!(
                "moments must be finite and nonnegative (sigma2 = {sigma2}, rho = {rho})"
            )));
        }
        if rho < sigma2.powf(1.5) * (1.0 - 1e-12) {
            return Err(Error::Hypothesis(format!(
                "third absolute moment {rho} below sigma^3 = {}",
                sigma2.powf(1.5)
            )));
        }
        Ok(MomentTriple { sigma2, rho })
    }
}

/// Rate constants. Only their existence is known, so `c` and `C` are
/// user-supplied and default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConstants {
    pub c: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub kbe: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            c: 1.0,
            big_c: 1.0,
            kbe: KBE_SHEVTSOVA,
        }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c", self.c), ("C", self.big_c), ("kbe", self.kbe)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("constant {name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// `K_BE max_i(rho_i / sigma_i^2) / sqrt(sum sigma_i^2)`.
pub fn berry_esseen_bound(triples: &[MomentTriple], kbe: f64) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::Empty("Berry-Esseen bound needs at least one summand"));
    }
    if let Some(t) = triples.iter().find(|t| !(t.sigma2 > 0.0)) {
        return Err(Error::domain("summand variance must be > 0", t.sigma2));
    }
    let first = triples[0];
    if triples.iter().all(|t| *t == first) {
        return berry_esseen_iid(first, triples.len(), kbe);
    }
    let ratio = triples.iter().map(|t| t.rho / t.sigma2).fold(0.0, f64::max);
    let total: f64 = triples.iter().map(|t| t.sigma2).sum();
    Ok(kbe * ratio / total.sqrt())
}

/// `K_BE rho / (sigma^3 sqrt(m))`.
pub fn berry_esseen_iid(triple: MomentTriple, m: usize, kbe: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Empty("Berry-Esseen bound needs at least one summand"));
    }
    if !(triple.sigma2 > 0.0) {
        return Err(Error::domain("summand variance must be > 0", triple.sigma2));
    }
    Ok(kbe * triple.rho / (triple.sigma2.powf(1.5) * (m as f64).sqrt()))
}

/// Value of a rate shape and the terms it is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundShape {
    pub value: f64,
    /// `log k / sqrt k`, `log n / sqrt(lambda_n n)` or `C log n / sqrt n`.
    pub log_term: f64,
    /// `|k/n - lambda|` or `|lambda_n - lambda|`; absent for q-norms.
    pub lambda_gap: Option<f64>,
    pub w_tail: f64,
    /// Set when `k < 3`, where the log term is not yet decreasing.
    pub low_k: bool,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::domain("lambda must lie in [0, 1]", lambda))
    }
}

/// `C max{ log k / sqrt k, |k/n - lambda|, P[W > c n log k / k] }`.
pub fn thm_a_bound_shape(n: usize, k: usize, lambda: f64, w: &WSpec, consts: &BoundConstants) -> Result<BoundShape> {
    consts.validate()?;
    check_lambda(lambda)?;
    if k == 0 || k > n {
        return Err(Error::Config(format!("need 1 <= k <= n (k = {k}, n = {n})")));
    }
    let (nf, kf) = (n as f64, k as f64);
    let log_term = kf.ln() / kf.sqrt();
    let gap = (kf / nf - lambda).abs();
    let w_tail = w.tail_probability(consts.c * nf * kf.ln() / kf);
    Ok(BoundShape {
        value: consts.big_c * log_term.max(gap).max(w_tail),
        log_term,
        lambda_gap: Some(gap),
        w_tail,
        low_k: k < 3,
    })
}

/// `C max{ log n / sqrt(lambda_n n), |lambda_n - lambda|, P[W > c log n / lambda_n] }`.
pub fn thm_b_bound_shape(
    n: usize,
    lambda_n: f64,
    lambda: f64,
    w: &WSpec,
    consts: &BoundConstants,
) -> Result<BoundShape> {
    consts.validate()?;
    check_lambda(lambda)?;
    if !(lambda_n > 0.0 && lambda_n <= 1.0) {
        return Err(Error::domain("lambda_n must lie in (0, 1]", lambda_n));
    }
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let nf = n as f64;
    let log_term = nf.ln() / (lambda_n * nf).sqrt();
    let gap = (lambda_n - lambda).abs();
    let w_tail = w.tail_probability(consts.c * nf.ln() / lambda_n);
    Ok(BoundShape {
        value: consts.big_c * log_term.max(gap).max(w_tail),
        log_term,
        lambda_gap: Some(gap),
        w_tail,
        low_k: false,
    })
}

/// `C log n / sqrt n + P[W > c sqrt(n log n)]`.
pub fn thm_c_bound_shape(n: usize, w: &WSpec, consts: &BoundConstants) -> Result<BoundShape> {
    consts.validate()?;
    if n < 2 {
        return Err(Error::Config(format!("q-norm shape needs n >= 2 (n = {n})")));
    }
    let nf = n as f64;
    let log_term = consts.big_c * nf.ln() / nf.sqrt();
    let w_tail = w.tail_probability(consts.c * (nf * nf.ln()).sqrt());
    Ok(BoundShape {
        value: log_term + w_tail,
        log_term,
        lambda_gap: None,
        w_tail,
        low_k: false,
    })
}

/// `C* = 2 (K_BE + 1)`.
pub fn gaussish_constant(kbe: f64) -> f64 {
    2.0 * (kbe + 1.0)
}

/// I.i.d. centred summand laws with known moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummandFamily {
    /// `E - 1` with `E ~ Exp(1)`.
    CenteredExponential,
    Gaussian,
    /// `Uniform(-1, 1)`.
    Uniform,
}

impl SummandFamily {
    pub const ALL: [SummandFamily; 3] = [
        SummandFamily::CenteredExponential,
        SummandFamily::Gaussian,
        SummandFamily::Uniform,
    ];

    pub fn moments(self) -> MomentTriple {
        match self {
            // E|E - 1|^3 = 12/e - 2.
            SummandFamily::CenteredExponential => MomentTriple {
                sigma2: 1.0,
                rho: 12.0 / std::f64::consts::E - 2.0,
            },
            SummandFamily::Gaussian => MomentTriple {
                sigma2: 1.0,
                rho: 2.0 * (2.0 / std::f64::consts::PI).sqrt(),
            },
            SummandFamily::Uniform => MomentTriple {
                sigma2: 1.0 / 3.0,
                rho: 0.25,
            },
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            SummandFamily::CenteredExponential => rng.sample::<f64, _>(Exp1) - 1.0,
            SummandFamily::Gaussian => rng.sample(StandardNormal),
            SummandFamily::Uniform => rng.random_range(-1.0..1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SummandFamily::CenteredExponential => "centered_exponential",
            SummandFamily::Gaussian => "gaussian",
            SummandFamily::Uniform => "uniform",
        }
    }
}

/// Outcome of an empirical tail check for rescaled sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussishReport {
    pub family: SummandFamily,
    pub m: usize,
    pub runs: usize,
    pub alpha_m: f64,
    pub beta_m: f64,
    pub empirical_tail: f64,
    /// `C* / sqrt(beta_m)`.
    pub bound: f64,
    pub passes: bool,
}

/// `beta_m = m / gamma^2` and `alpha_m = sigma sqrt(log beta_m)_+`, the
/// extreme admissible choices for i.i.d. summands.
pub fn gaussish_sequences(family: SummandFamily, m: usize) -> (f64, f64) {
    let t = family.moments();
    let gamma = t.rho / t.sigma2.powf(1.5);
    let beta = m as f64 / (gamma * gamma);
    let alpha = t.sigma2.sqrt() * beta.ln().max(0.0).sqrt();
    (alpha, beta)
}

/// Empirical `P[|S_m| > alpha_m]` over `runs` independent sums
/// `S_m = m^{-1/2} sum X_i`, compared against `C* / sqrt(beta_m)`.
///
/// `alpha_m` must be at least `sigma sqrt(log beta_m)_+` and `beta_m` at most
/// `m / gamma^2`; a violation is an error.
#[allow(clippy::too_many_arguments)]
pub fn gaussish_check(
    family: SummandFamily,
    m: usize,
    alpha_m: f64,
    beta_m: f64,
    runs: usize,
    kbe: f64,
    stream: &RngStream,
    exec: &Executor,
) -> Result<GaussishReport> {
    if m == 0 || runs == 0 {
        return Err(Error::Config("m and runs must be >= 1".into()));
    }
    let t = family.moments();
    let gamma = t.rho / t.sigma2.powf(1.5);
    let beta_max = m as f64 / (gamma * gamma);
    if !(beta_m > 0.0) || beta_m > beta_max * (1.0 + 1e-12) {
        return Err(Error::Hypothesis(format!(
            "beta_m = {beta_m} must lie in (0, m / gamma^2 = {beta_max}]"
        )));
    }
    let alpha_min = t.sigma2.sqrt() * beta_m.ln().max(0.0).sqrt();
    if !(alpha_m > 0.0) || alpha_m < alpha_min * (1.0 - 1e-12) {
        return Err(Error::Hypothesis(format!(
            "alpha_m = {alpha_m} must be positive and >= sigma sqrt(log beta_m)_+ = {alpha_min}"
        )));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let exceed = exec.map(runs, |i| {
        let mut rng = stream.substream(i as u64).rng();
        let s: f64 = (0..m).map(|_| family.sample(&mut rng)).sum::<f64>() * scale;
        s.abs() > alpha_m
    });
    let hits = exceed.iter().filter(|&&b| b).count();
    let empirical_tail = hits as f64 / runs as f64;
    let bound = gaussish_constant(kbe) / beta_m.sqrt();
    Ok(GaussishReport {
        family,
        m,
        runs,
        alpha_m,
        beta_m,
        empirical_tail,
        bound,
        passes: empirical_tail <= bound,
    })
}

/// Both sides of the splitting inequality evaluated on shared samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatingReport {
    /// Gap of `X1 + X2 + X3` to `N(0, variance)` over the quantile grid.
    pub lhs: f64,
    /// Gap of `X1` alone, over all sample points.
    pub ks_x1: f64,
    pub tail_x2: f64,
    pub tail_x3: f64,
    /// `epsilon / sqrt(2 pi variance)`.
    pub smoothing: f64,
    pub rhs: f64,
    /// `2 * DKW radius` at level `alpha`.
    pub allowance: f64,
    pub holds: bool,
}

/// Number of quantile-spaced evaluation points for the left side.
pub const SEPARATING_GRID: usize = 512;

/// Checks `lhs <= rhs + 2 * dkw` for jointly sampled `(x1, x2, x3)`.
pub fn separating_check(
    x1: &[f64],
    x2: &[f64],
    x3: &[f64],
    variance: f64,
    epsilon: f64,
    alpha: f64,
) -> Result<SeparatingReport> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch(x1.len(), x2.len()));
    }
    if x1.len() != x3.len() {
        return Err(Error::LengthMismatch(x1.len(), x3.len()));
    }
    if !(variance > 0.0) {
        return Err(Error::domain("variance must be > 0", variance));
    }
    if !(epsilon > 0.0) {
        return Err(Error::domain("epsilon must be > 0", epsilon));
    }
    let m = x1.len();
    let sd = variance.sqrt();
    let target = |t: f64| normal_cdf(t / sd);

    let sum = Ecdf::new(x1.iter().zip(x2).zip(x3).map(|((a, b), c)| a + b + c).collect())?;
    // Both one-sided limits at each grid point, as in the exact statistic.
    let lhs = (1..=SEPARATING_GRID)
        .map(|j| {
            let t = sum.quantile((j as f64 - 0.5) / SEPARATING_GRID as f64);
            let f = target(t);
            (sum.eval(t) - f).abs().max((sum.eval_left(t) - f).abs())
        })
        .fold(0.0, f64::max);
    let ks_x1 = ks_one_sample(&Ecdf::from_slice(x1)?, target);
    let tail = |xs: &[f64]| xs.iter().filter(|x| x.abs() > 0.5 * epsilon).count() as f64 / m as f64;
    let (tail_x2, tail_x3) = (tail(x2), tail(x3));
    let smoothing = epsilon * FRAC_1_SQRT_2PI / sd;
    let rhs = ks_x1 + tail_x2 + tail_x3 + smoothing;
    let allowance = 2.0 * dkw_radius(m, alpha);
    Ok(SeparatingReport {
        lhs,
        ks_x1,
        tail_x2,
        tail_x3,
        smoothing,
        rhs,
        allowance,
        holds: lhs <= rhs + allowance,
    })
}
