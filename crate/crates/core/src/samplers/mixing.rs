//! The radial mixing law `W` on `[0, inf)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::analytic::PIndex;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Distribution of the nonnegative mixing variable `W`.
///
/// `DiracZero` yields the cone measure on the sphere; `Exponential` with
/// `scale = p` (density `p^{-1} e^{-s/p}`) yields the uniform measure on the
/// ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", from = "WSpecRepr")]
pub enum WSpec {
    DiracZero,
    Exponential { scale: f64 },
    Gamma { shape: f64, scale: f64 },
    PointMass { w0: f64 },
}

// Unit variants of a tagged enum ignore `deny_unknown_fields`; parse through
// struct variants instead.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum WSpecRepr {
    DiracZero {},
    Exponential { scale: f64 },
    Gamma { shape: f64, scale: f64 },
    PointMass { w0: f64 },
}

impl From<WSpecRepr> for WSpec {
    fn from(r: WSpecRepr) -> Self {
        match r {
            WSpecRepr::DiracZero {} => WSpec::DiracZero,
            WSpecRepr::Exponential { scale } => WSpec::Exponential { scale },
            WSpecRepr::Gamma { shape, scale } => WSpec::Gamma { shape, scale },
            WSpecRepr::PointMass { w0 } => WSpec::PointMass { w0 },
        }
    }
}

impl WSpec {
    pub fn cone() -> Self {
        WSpec::DiracZero
    }

    /// The choice that makes the ball distribution uniform.
    pub fn uniform(p: PIndex) -> Self {
        WSpec::Exponential { scale: p.get() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, what, v| if c { Ok(()) } else { Err(Error::domain(what, v)) };
        match *self {
            WSpec::DiracZero => Ok(()),
            WSpec::Exponential { scale } => {
                ok(scale > 0.0 && scale.is_finite(), "exponential scale must be > 0", scale)
            }
            WSpec::Gamma { shape, scale } => {
                ok(shape > 0.0 && shape.is_finite(), "gamma shape must be > 0", shape)?;
                ok(scale > 0.0 && scale.is_finite(), "gamma scale must be > 0", scale)
            }
            WSpec::PointMass { w0 } => ok(w0 >= 0.0 && w0.is_finite(), "point mass must be >= 0", w0),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            WSpec::DiracZero => 0.0,
            WSpec::Exponential { scale } => scale,
            WSpec::Gamma { shape, scale } => shape * scale,
            WSpec::PointMass { w0 } => w0,
        }
    }

    /// `P[W > t]` in closed form.
    pub fn tail_probability(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        match *self {
            WSpec::DiracZero => 0.0,
            WSpec::Exponential { scale } => (-t / scale).exp(),
            WSpec::Gamma { shape, scale } => {
                if t == 0.0 {
                    1.0
                } else {
                    gamma_ur(shape, t / scale)
                }
            }
            WSpec::PointMass { w0 } => {
                if w0 > t {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn sampler(&self) -> Result<WSampler> {
        self.validate()?;
        Ok(match *self {
            WSpec::DiracZero => WSampler::Const(0.0),
            WSpec::PointMass { w0 } => WSampler::Const(w0),
            WSpec::Exponential { scale } => WSampler::Exp(scale),
            WSpec::Gamma { shape, scale } => {
                WSampler::Gamma(Gamma::new(shape, scale).map_err(|e| Error::Config(e.to_string()))?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum WSampler {
    Const(f64),
    Exp(f64),
    Gamma(Gamma<f64>),
}

impl Distribution<f64> for WSampler {
    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WSampler::Const(c) => *c,
            WSampler::Exp(scale) => scale * rng.sample::<f64, _>(Exp1),
            WSampler::Gamma(g) => g.sample(rng),
        }
    }
}

/// `count` i.i.d. draws of `W`.
pub fn sample_w(spec: &WSpec, count: usize, stream: &RngStream) -> Result<Vec<f64>> {
    let s = spec.sampler()?;
    let mut rng = stream.rng();
    Ok((0..count).map(|_| s.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;
    use crate::stats::Summary;

    #[test]
    fn degenerate_kinds() {
        let z = sample_w(&WSpec::DiracZero, 1000, &RngStream::new(0, 0)).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
        let c = sample_w(&WSpec::PointMass { w0: 7.0 }, 1000, &RngStream::new(0, 0)).unwrap();
        assert!(c.iter().all(|&x| x == 7.0));
    }

    #[test]
    fn exponential_mean_is_p() {
        let w = WSpec::uniform(PIndex::new(2.0).unwrap());
        let x = sample_w(&w, 1_000_000, &RngStream::new(4, 2)).unwrap();
        assert!(x.iter().all(|&v| v >= 0.0));
        let s = Summary::of(&x);
        assert!((s.mean - 2.0).abs() <= 5.0 * s.se_mean());
    }

    #[test]
    fn gamma_mean() {
        let w = WSpec::Gamma { shape: 2.0, scale: 1.5 };
        let x = sample_w(&w, 400_000, &RngStream::new(4, 3)).unwrap();
        let s = Summary::of(&x);
        assert!((s.mean - 3.0).abs() <= 5.0 * s.se_mean());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(WSpec::Exponential { scale: 0.0 }.validate().is_err());
        assert!(WSpec::Gamma {
            shape: -1.0,
            scale: 1.0
        }
        .validate()
        .is_err());
        assert!(WSpec::PointMass { w0: -3.0 }.validate().is_err());
        assert!(sample_w(&WSpec::Exponential { scale: f64::NAN }, 1, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn tails_match_density_quadrature() {
        let cases = [
            (
                WSpec::Exponential { scale: 2.0 },
                Box::new(|s: f64| 0.5 * (-s / 2.0).exp()) as Box<dyn Fn(f64) -> f64>,
            ),
            (
                WSpec::Gamma { shape: 2.0, scale: 1.0 },
                Box::new(|s: f64| s * (-s).exp()),
            ),
            (
                WSpec::Gamma { shape: 0.7, scale: 3.0 },
                Box::new(|s: f64| {
                    s.powf(-0.3) * (-s / 3.0).exp() / (3f64.powf(0.7) * statrs::function::gamma::gamma(0.7))
                }),
            ),
        ];
        for (spec, dens) in cases {
            for t in [0.1, 1.0, 2.5, 7.0] {
                let quad = integrate(&dens, t, t + 400.0, 1e-15).unwrap();
                let closed = spec.tail_probability(t);
                assert!((quad - closed).abs() < 1e-10, "{spec:?} t={t}: {quad} vs {closed}");
            }
        }
    }

    #[test]
    fn tail_edge_cases() {
        assert_eq!(WSpec::DiracZero.tail_probability(0.0), 0.0);
        assert_eq!(WSpec::DiracZero.tail_probability(-1.0), 1.0);
        assert_eq!(WSpec::PointMass { w0: 3.0 }.tail_probability(2.9), 1.0);
        assert_eq!(WSpec::PointMass { w0: 3.0 }.tail_probability(3.0), 0.0);
        assert_eq!(WSpec::Exponential { scale: 1.0 }.tail_probability(0.0), 1.0);
    }

    #[test]
    fn json_round_trip_is_strict() {
        let w: WSpec = serde_json::from_str(r#"{"kind":"gamma","shape":2.0,"scale":1.0}"#).unwrap();
        assert_eq!(w, WSpec::Gamma { shape: 2.0, scale: 1.0 });
        assert!(serde_json::from_str::<WSpec>(r#"{"kind":"dirac_zero","extra":1}"#).is_err());
        assert!(serde_json::from_str::<WSpec>(r#"{"kind":"exponential","scale":1,"rate":2}"#).is_err());
    }
}
