//! Exact samplers for the ball distributions, their random projections and
//! the three normalized statistics `Y_n`.

mod ball;
mod mixing;
mod pgauss;
mod projection;
mod statistic;

pub use ball::{lp_norm, sample_ball_point};
pub use mixing::{sample_w, WSpec};
pub use pgauss::{sample_p_gaussian, PGaussian, Power};
pub use projection::{
    haar_frame, sample_projnorm_direct, sample_projnorm_identity_fixed, sample_projnorm_identity_random,
    MAX_DIRECT_DIMENSION,
};
pub use statistic::{sample_decomposition, sample_yn, DecomposedSums, SampleBatch, YnSampler};

use serde::{Deserialize, Serialize};

use crate::analytic::PIndex;
use crate::error::{Error, Result};

/// How `Y_n` is formed from a random point of the ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    /// Projection onto a uniform random subspace of dimension `k`.
    GrassmannFixed { k: usize },
    /// Projection onto a random subspace of dimension `Binomial(n, lambda)`.
    GrassmannRandom { lambda: f64 },
    /// The `l_q` norm of the point.
    QNorm { q: f64 },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::GrassmannFixed { .. } => "grassmann_fixed",
            Mode::GrassmannRandom { .. } => "grassmann_random",
            Mode::QNorm { .. } => "q_norm",
        }
    }
}

/// One experiment cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub p: PIndex,
    pub n: usize,
    pub mode: Mode,
    pub w: WSpec,
}

impl ModelSpec {
    pub fn new(p: PIndex, n: usize, mode: Mode, w: WSpec) -> Result<Self> {
        let spec = ModelSpec { p, n, mode, w };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("ambient dimension n must be >= 1".into()));
        }
        self.w.validate()?;
        match self.mode {
            Mode::GrassmannFixed { k } => {
                if k == 0 || k > self.n {
                    return Err(Error::Config(format!(
                        "subspace dimension k = {k} must satisfy 1 <= k <= n = {}",
                        self.n
                    )));
                }
            }
            Mode::GrassmannRandom { lambda } => {
                if !(lambda > 0.0 && lambda <= 1.0) {
                    return Err(Error::Config(format!("lambda = {lambda} must satisfy 0 < lambda <= 1")));
                }
            }
            Mode::QNorm { q } => {
                if !(q > 0.0 && q.is_finite()) {
                    return Err(Error::domain("q must be > 0", q));
                }
                if q == self.p.get() {
                    return Err(Error::Config(format!(
                        "q-norm statistic requires p != q (both are {q})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nominal projection dimension (`k`, or `lambda n` in random mode).
    pub fn centering_dimension(&self) -> Option<f64> {
        match self.mode {
            Mode::GrassmannFixed { k } => Some(k as f64),
            Mode::GrassmannRandom { lambda } => Some(lambda * self.n as f64),
            Mode::QNorm { .. } => None,
        }
    }
}
