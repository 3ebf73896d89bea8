use rand::Rng;
use rand_distr::Distribution;

use super::{ModelSpec, PGaussian, Power};
use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// `||x||_p` (a quasi-norm for `p < 1`).
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    let pw = Power::new(p);
    let s: CompensatedSum = x.iter().map(|v| pw.apply(v.abs())).collect();
    s.value().powf(1.0 / p)
}

/// One point `Z / (||Z||_p^p + W)^{1/p}` with i.i.d. p-Gaussian `Z` and an
/// independent `W`; only `p`, `n` and `w` of `spec` are used.
pub fn sample_ball_point<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let dist = PGaussian::new(spec.p);
    let pw = Power::new(spec.p.get());
    let mut z: Vec<f64> = (0..spec.n).map(|_| dist.sample(rng)).collect();
    let mut norm_p = CompensatedSum::new();
    for v in &z {
        norm_p.add(pw.apply(v.abs()));
    }
    let w = spec.w.sampler()?.sample(rng);
    let denom = norm_p.value() + w;
    if !(denom > 0.0) {
        return Err(Error::Numeric("||Z||_p^p + W vanished".into()));
    }
    let scale = denom.powf(-1.0 / spec.p.get());
    z.iter_mut().for_each(|v| *v *= scale);
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::PIndex;
    use crate::ks::{dkw_radius, ks_one_sample, Ecdf};
    use crate::rng::RngStream;
    use crate::samplers::{Mode, WSpec};

    fn spec(p: f64, n: usize, w: WSpec) -> ModelSpec {
        ModelSpec::new(PIndex::new(p).unwrap(), n, Mode::QNorm { q: p + 1.0 }, w).unwrap()
    }

    #[test]
    fn cone_points_lie_on_the_sphere() {
        for p in [1.0, 1.5, 3.0] {
            let s = spec(p, 17, WSpec::DiracZero);
            let mut rng = RngStream::new(1, 2).rng();
            for _ in 0..2000 {
                let x = sample_ball_point(&s, &mut rng).unwrap();
                assert!((lp_norm(&x, p) - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn points_stay_inside_the_ball() {
        let cases = [
            WSpec::Exponential { scale: 2.0 },
            WSpec::Gamma { shape: 3.0, scale: 0.5 },
            WSpec::PointMass { w0: 0.1 },
        ];
        for w in cases {
            let s = spec(2.5, 9, w);
            let mut rng = RngStream::new(3, 4).rng();
            for _ in 0..2000 {
                let x = sample_ball_point(&s, &mut rng).unwrap();
                assert!(lp_norm(&x, 2.5) <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn uniform_ball_radius_law() {
        // Uniform on the ball: P(||x||_p <= r) = r^n, so ||x||_p^n ~ U(0, 1).
        let (p, n) = (1.0, 6);
        let s = spec(p, n, WSpec::uniform(PIndex::new(p).unwrap()));
        let mut rng = RngStream::new(5, 6).rng();
        let m = 100_000;
        let u: Vec<f64> = (0..m)
            .map(|_| lp_norm(&sample_ball_point(&s, &mut rng).unwrap(), p).powi(n as i32))
            .collect();
        let d = ks_one_sample(&Ecdf::new(u).unwrap(), |t| t.clamp(0.0, 1.0));
        assert!(d < dkw_radius(m, 0.01), "KS = {d}");
    }
}
