//! The normalized statistics `Y_n` and their linear parts.
//!
//! Every statistic is a function of a handful of sums over one draw of `n`
//! p-Gaussians together with the mixing variable `W`. Projections add two
//! chi-square variables standing in for `sum_{i<=k} g_i^2` and
//! `sum_{i>k} g_i^2`. Only the p-Gaussian sums cost `O(n)`.

use rand::Rng;
use rand_distr::{Binomial, ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use super::mixing::WSampler;
use super::{Mode, ModelSpec, PGaussian, Power};
use crate::analytic::ln_moment;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::numerics::CompensatedSum;
use crate::rng::{RngStream, StreamRng};
use crate::stats::Summary;

#[derive(Debug, Clone, Copy)]
enum GaussianWeights {
    Fixed {
        inside: ChiSquared<f64>,
        outside: Option<ChiSquared<f64>>,
    },
    Random {
        active: Binomial,
    },
    None,
}

/// Sums of one replicate.
#[derive(Debug, Clone, Copy, Default)]
struct Parts {
    /// `sum (|Z_i|^a - M_p(a))` where `a = 2` (projections) or `a = q`.
    a: f64,
    /// `sum (|Z_i|^p - 1)`.
    c: f64,
    w: f64,
    /// Gaussian mass inside the subspace.
    g_in: f64,
    g_out: f64,
    active: u64,
}

/// Prepared sampler for one [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct YnSampler {
    spec: ModelSpec,
    z: PGaussian,
    pow_a: Power,
    pow_p: Power,
    moment_a: f64,
    inv_a: f64,
    inv_p: f64,
    w: WSampler,
    weights: GaussianWeights,
}

impl YnSampler {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let p = spec.p;
        let a = match spec.mode {
            Mode::QNorm { q } => q,
            _ => 2.0,
        };
        let chi =
            |dof: usize| ChiSquared::new(dof as f64).map_err(|e| Error::Numeric(format!("chi-square({dof}): {e}")));
        let weights = match spec.mode {
            Mode::GrassmannFixed { k } => GaussianWeights::Fixed {
                inside: chi(k)?,
                outside: if k < spec.n { Some(chi(spec.n - k)?) } else { None },
            },
            Mode::GrassmannRandom { lambda } => GaussianWeights::Random {
                active: Binomial::new(spec.n as u64, lambda).map_err(|e| Error::Numeric(format!("binomial: {e}")))?,
            },
            Mode::QNorm { .. } => GaussianWeights::None,
        };
        Ok(YnSampler {
            spec: *spec,
            z: PGaussian::new(p),
            pow_a: Power::new(a),
            pow_p: Power::new(p.get()),
            moment_a: ln_moment(p, a)?.exp(),
            inv_a: 1.0 / a,
            inv_p: 1.0 / p.get(),
            w: spec.w.sampler()?,
            weights,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    #[inline]
    fn chi2<R: Rng + ?Sized>(dof: u64, rng: &mut R) -> f64 {
        if dof == 0 {
            0.0
        } else {
            ChiSquared::new(dof as f64).expect("positive dof").sample(rng)
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Parts {
        let mut a = CompensatedSum::new();
        let mut c = CompensatedSum::new();
        for _ in 0..self.spec.n {
            let z = self.z.sample_abs(rng);
            a.add(self.pow_a.apply(z) - self.moment_a);
            c.add(self.pow_p.apply(z) - 1.0);
        }
        let w = self.w.sample(rng);
        let (g_in, g_out, active) = match self.weights {
            GaussianWeights::Fixed { inside, outside } => {
                let g_in = inside.sample(rng);
                let g_out = outside.map_or(0.0, |d| d.sample(rng));
                (g_in, g_out, 0)
            }
            GaussianWeights::Random { active } => {
                let k = active.sample(rng);
                let g_in = Self::chi2(k, rng);
                let g_out = Self::chi2(self.spec.n as u64 - k, rng);
                (g_in, g_out, k)
            }
            GaussianWeights::None => (0.0, 0.0, 0),
        };
        Parts {
            a: a.value(),
            c: c.value(),
            w,
            g_in,
            g_out,
            active,
        }
    }

    fn n(&self) -> f64 {
        self.spec.n as f64
    }

    /// `ln( n^{1/p} / (sum |Z_i|^p + W)^{1/p} )`.
    #[inline]
    fn ln_radial(&self, parts: &Parts) -> f64 {
        -self.inv_p * ((parts.c + parts.w) / self.n()).ln_1p()
    }

    fn y_from(&self, parts: &Parts) -> f64 {
        let n = self.n();
        match self.spec.centering_dimension() {
            Some(centre) => {
                let r = 0.5 * (parts.a / (n * self.moment_a)).ln_1p() + 0.5 * (parts.g_in / centre).ln()
                    - 0.5 * ((parts.g_in + parts.g_out) / n).ln()
                    + self.ln_radial(parts);
                centre.sqrt() * r.exp_m1()
            }
            None => {
                let r = self.inv_a * (parts.a / (n * self.moment_a)).ln_1p() + self.ln_radial(parts);
                n.sqrt() * r.exp_m1()
            }
        }
    }

    /// One draw of the mode's statistic `Y_n`.
    pub fn sample_y<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.y_from(&self.draw(rng))
    }

    /// One draw of `||P_E X||_2` (projection modes) or `||X||_q` (q-norm mode).
    pub fn projection_norm<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let parts = self.draw(rng);
        let n = self.n();
        let ln_a = (n * self.moment_a + parts.a).ln();
        let ln_p = (n + parts.c + parts.w).ln();
        let ln = match self.spec.mode {
            Mode::QNorm { .. } => self.inv_a * ln_a - self.inv_p * ln_p,
            _ => 0.5 * ln_a + 0.5 * parts.g_in.ln() - 0.5 * (parts.g_in + parts.g_out).ln() - self.inv_p * ln_p,
        };
        ln.exp()
    }

    /// The centred sums of one replicate and the linear statistic `xi_n`.
    pub fn sample_decomposition<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DecomposedSums> {
        let parts = self.draw(rng);
        let n = self.n();
        let p = self.spec.p.get();
        let (b, centre, active) = match self.spec.mode {
            Mode::GrassmannFixed { k } => (parts.g_in - k as f64, k as f64, None),
            Mode::GrassmannRandom { lambda } => (parts.g_in - lambda * n, lambda * n, Some(parts.active)),
            Mode::QNorm { .. } => {
                return Err(Error::Mode {
                    mode: "q_norm",
                    what: "projection decomposition",
                })
            }
        };
        let d = parts.g_in + parts.g_out - n;
        // For fixed k the b-term is b / (2k); for binomial dimension it is
        // b' / (2 n lambda). Both equal b / (2 * centre).
        let xi = centre.sqrt()
            * (parts.a / (2.0 * n * self.moment_a) + b / (2.0 * centre) - parts.c / (p * n) - d / (2.0 * n));
        Ok(DecomposedSums {
            a: parts.a,
            b,
            c: parts.c,
            d,
            xi,
            y: self.y_from(&parts),
            active,
        })
    }
}

/// Centred sums of one replicate, sharing the same underlying draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposedSums {
    /// `sum (Z_i^2 - M_p(2))`.
    pub a: f64,
    /// `sum_{i<=k} (g_i^2 - 1)`, or `sum (I_i g_i^2 - lambda)` in random mode.
    pub b: f64,
    /// `sum (|Z_i|^p - 1)`.
    pub c: f64,
    /// `sum (g_i^2 - 1)`.
    pub d: f64,
    /// The linear part of `Y_n`.
    pub xi: f64,
    /// `Y_n` from the same draws.
    pub y: f64,
    /// Number of active indicators (random mode only).
    pub active: Option<u64>,
}

/// Replicates of `Y_n` with the seeding needed to regenerate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub spec: ModelSpec,
    pub stream: RngStream,
    pub values: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn summary(&self) -> Summary {
        Summary::of(&self.values)
    }
}

fn replicate_rng(stream: &RngStream, i: usize) -> StreamRng {
    stream.substream(i as u64).rng()
}

/// `batch` i.i.d. draws of `Y_n`; replicate `i` uses `stream.substream(i)`.
pub fn sample_yn(spec: &ModelSpec, batch: usize, stream: &RngStream, exec: &Executor) -> Result<SampleBatch> {
    if batch == 0 {
        return Err(Error::Config("batch must be >= 1".into()));
    }
    let sampler = YnSampler::new(spec)?;
    let values = exec.map(batch, |i| sampler.sample_y(&mut replicate_rng(stream, i)));
    Ok(SampleBatch {
        spec: *spec,
        stream: *stream,
        values,
    })
}

/// `batch` replicates of the decomposition of `Y_n` (projection modes only).
pub fn sample_decomposition(
    spec: &ModelSpec,
    batch: usize,
    stream: &RngStream,
    exec: &Executor,
) -> Result<Vec<DecomposedSums>> {
    if batch == 0 {
        return Err(Error::Config("batch must be >= 1".into()));
    }
    let sampler = YnSampler::new(spec)?;
    exec.try_map(batch, |i| sampler.sample_decomposition(&mut replicate_rng(stream, i)))
}
