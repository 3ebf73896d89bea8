//! p-Gaussian variates: density `exp(-|s|^p / p) / (2 p^{1/p} Gamma(1 + 1/p))`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::analytic::PIndex;
use crate::rng::RngStream;

/// `x -> x^e` for `x >= 0`, with the common exponents special-cased.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Power {
    One,
    Two,
    General(f64),
}

impl Power {
    pub fn new(e: f64) -> Self {
        if e == 1.0 {
            Power::One
        } else if e == 2.0 {
            Power::Two
        } else {
            Power::General(e)
        }
    }

    #[inline(always)]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Power::One => x,
            Power::Two => x * x,
            Power::General(e) => x.powf(e),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Magnitude {
    /// `|Z| ~ Exp(1)`.
    Laplace,
    /// `|Z| = |N(0,1)|`.
    Normal,
    /// `|Z| = (p G)^{1/p}`, `G ~ Gamma(1/p, 1)`.
    Gamma { gamma: Gamma<f64>, p: f64, inv_p: f64 },
}

/// Sampler for one p-Gaussian coordinate.
///
/// The magnitude is `(p G)^{1/p}` with `G ~ Gamma(1/p, 1)` and the sign is an
/// independent fair coin. For `p = 1` and `p = 2` the magnitude law is drawn
/// directly (exponential and half-normal), which is the same law.
#[derive(Debug, Clone, Copy)]
pub struct PGaussian {
    p: PIndex,
    magnitude: Magnitude,
}

impl PGaussian {
    pub fn new(p: PIndex) -> Self {
        let pv = p.get();
        let magnitude = if pv == 1.0 {
            Magnitude::Laplace
        } else if pv == 2.0 {
            Magnitude::Normal
        } else {
            Magnitude::Gamma {
                gamma: Gamma::new(1.0 / pv, 1.0).expect("1/p is positive and finite"),
                p: pv,
                inv_p: 1.0 / pv,
            }
        };
        PGaussian { p, magnitude }
    }

    pub fn p(&self) -> PIndex {
        self.p
    }

    /// Draw `|Z|`.
    #[inline(always)]
    pub fn sample_abs<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.magnitude {
            Magnitude::Laplace => rng.sample::<f64, _>(Exp1),
            Magnitude::Normal => rng.sample::<f64, _>(StandardNormal).abs(),
            Magnitude::Gamma { gamma, p, inv_p } => (p * gamma.sample(rng)).powf(inv_p),
        }
    }
}

impl Distribution<f64> for PGaussian {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.magnitude {
            Magnitude::Normal => rng.sample(StandardNormal),
            _ => {
                let m = self.sample_abs(rng);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
        }
    }
}

/// `count` i.i.d. p-Gaussian draws from `stream`.
pub fn sample_p_gaussian(p: PIndex, count: usize, stream: &RngStream) -> Vec<f64> {
    let dist = PGaussian::new(p);
    let mut rng = stream.rng();
    (0..count).map(|_| dist.sample(&mut rng)).collect()
}
