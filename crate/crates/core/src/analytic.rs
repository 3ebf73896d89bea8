//! Closed-form constants: p-Gaussian absolute moments and the limit variances
//! built from them, plus a Gaussian tail estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_gamma, FRAC_1_SQRT_2PI};

/// Exponent of the `l_p` norm.
///
/// The validated constructor accepts `1 <= p < inf`. Exponents in `(0, 1)` are
/// only reachable through [`PIndex::experimental`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct PIndex(f64);

impl PIndex {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(PIndex(p))
        } else {
            Err(Error::domain("p must satisfy 1 <= p < inf", p))
        }
    }

    /// Accepts any finite `p > 0`. Quasi-norms with `p < 1` are outside the
    /// range where the limit theorems are proved.
    pub fn experimental(p: f64) -> Result<Self> {
        if p.is_finite() && p > 0.0 {
            Ok(PIndex(p))
        } else {
            Err(Error::domain("p must satisfy 0 < p < inf", p))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_experimental(self) -> bool {
        self.0 < 1.0
    }
}

impl<'de> Deserialize<'de> for PIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = f64::deserialize(d)?;
        PIndex::experimental(p).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceKind {
    Sigma2 { p: f64, q: f64 },
    V { s: f64, p: f64 },
    W { s: f64, p: f64 },
}

/// A limiting variance together with the formula that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitVariance {
    pub value: f64,
    pub kind: VarianceKind,
}

/// Which variance function the floor `J_p` is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionVariant {
    /// Uniform subspaces of fixed dimension.
    Grassmann,
    /// Subspaces of binomially distributed dimension.
    RandomDim,
}

/// `ln M_p(r)`.
pub fn ln_moment(p: PIndex, r: f64) -> Result<f64> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::domain("moment order r must be >= 0", r));
    }
    let p = p.get();
    if let Some(m) = moment_product(p, r) {
        return Ok(m.ln());
    }
    Ok((r / p) * p.ln() - (r + 1.0).ln() + log_gamma(1.0 + (r + 1.0) / p)? - log_gamma(1.0 + 1.0 / p)?)
}

/// Largest `r / p` evaluated as a finite product.
const MAX_PRODUCT_TERMS: f64 = 64.0;

/// `M_p(j p) = prod_{i < j} (1 + i p)` for integer `j >= 0`, exact for
/// integer `p`.
fn moment_product(p: f64, r: f64) -> Option<f64> {
    let j = r / p;
    (j.fract() == 0.0 && j <= MAX_PRODUCT_TERMS).then(|| (0..j as u32).map(|i| 1.0 + i as f64 * p).product())
}

/// `M_p(r) = E|Z|^r` for a p-Gaussian `Z`.
pub fn moment_mp(p: PIndex, r: f64) -> Result<f64> {
    let lm = ln_moment(p, r)?;
    Ok(moment_product(p.get(), r).unwrap_or_else(|| lm.exp()))
}

/// `Cov(|Z|^q, |Z|^r) = M_p(q + r) - M_p(q) M_p(r)`.
pub fn covariance_abs_powers(p: PIndex, q: f64, r: f64) -> Result<f64> {
    Ok(moment_mp(p, q + r)? - moment_mp(p, q)? * moment_mp(p, r)?)
}

/// Variance of `(|Z|^q - M_p(q)) / (q M_p(q)) - (|Z|^p - 1) / p`.
pub fn sigma2(p: PIndex, q: f64) -> Result<LimitVariance> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::domain("q must be > 0", q));
    }
    let pv = p.get();
    let ln_mq = ln_moment(p, q)?;
    // Ratios in log space; M_p(2q) / M_p(q)^2 overflows long before its logs do.
    let t1 = (ln_moment(p, 2.0 * q)? - 2.0 * ln_mq).exp_m1() / (q * q);
    let t2 = (ln_moment(p, pv + q)? - ln_mq).exp_m1() * 2.0 / (pv * q);
    let t3 = ln_moment(p, 2.0 * pv)?.exp_m1() / (pv * pv);
    let value = t1 - t2 + t3;
    // Below the cancellation error of the three terms the value is zero
    // (p == q leaves residues of either sign).
    let scale = t1.abs() + t2.abs() + t3.abs();
    let value = if value.abs() <= 64.0 * f64::EPSILON * scale {
        0.0
    } else {
        value
    };
    Ok(LimitVariance {
        value,
        kind: VarianceKind::Sigma2 { p: pv, q },
    })
}

fn check_unit(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::domain("s must lie in [0, 1]", s))
    }
}

/// `v(s) = s sigma^2(p,2) + (1 - s)/2`, the limit variance for projections
/// onto uniform subspaces of dimension `~ s n`.
pub fn variance_v(s: f64, p: PIndex) -> Result<LimitVariance> {
    check_unit(s)?;
    let value = s * sigma2(p, 2.0)?.value + 0.5 * (1.0 - s);
    Ok(LimitVariance {
        value,
        kind: VarianceKind::V { s, p: p.get() },
    })
}

/// `w(s) = s sigma^2(p,2) + 3(1 - s)/4`, the limit variance for subspaces of
/// binomial dimension.
pub fn variance_w(s: f64, p: PIndex) -> Result<LimitVariance> {
    check_unit(s)?;
    let value = s * sigma2(p, 2.0)?.value + 0.75 * (1.0 - s);
    Ok(LimitVariance {
        value,
        kind: VarianceKind::W { s, p: p.get() },
    })
}

/// Infimum of `v` (or `w`) over `[0, 1]`; the functions are affine so the
/// infimum is the smaller endpoint.
pub fn j_floor(p: PIndex, variant: ProjectionVariant) -> Result<f64> {
    let s2 = sigma2(p, 2.0)?.value;
    Ok(match variant {
        ProjectionVariant::Grassmann => s2.min(0.5),
        ProjectionVariant::RandomDim => s2.min(0.75),
    })
}

/// Mills-ratio upper bound `phi(t) / t` on the standard normal tail.
pub fn gaussian_tail_upper(t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain("tail bound requires t > 0", t));
    }
    Ok(FRAC_1_SQRT_2PI * (-0.5 * t * t).exp() / t)
}
