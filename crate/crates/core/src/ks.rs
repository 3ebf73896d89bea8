//! Empirical distribution functions and Kolmogorov-Smirnov distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, normal_cdf, normal_pdf};

/// Default confidence parameter for DKW bands.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Sorted sample with step-function evaluation. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    /// Sorts `samples` in place. NaN is rejected.
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("empirical CDF needs at least one sample"));
        }
        if let Some(&x) = samples.iter().find(|x| x.is_nan()) {
            return Err(Error::domain("sample contains NaN", x));
        }
        samples.sort_unstable_by(f64::total_cmp);
        Ok(Ecdf { sorted: samples })
    }

    pub fn from_slice(samples: &[f64]) -> Result<Self> {
        Self::new(samples.to_vec())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// `F_m(t) = #{x <= t} / m`.
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.len() as f64
    }

    /// `F_m(t-) = #{x < t} / m`.
    pub fn eval_left(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x < t) as f64 / self.len() as f64
    }

    /// Distinct jump points with the step value just below and at each.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let m = self.len() as f64;
        let mut i = 0;
        std::iter::from_fn(move || {
            if i >= self.sorted.len() {
                return None;
            }
            let x = self.sorted[i];
            let left = i as f64 / m;
            while i < self.sorted.len() && self.sorted[i] == x {
                i += 1;
            }
            Some((x, left, i as f64 / m))
        })
    }

    /// Empirical quantile by the inverse step function.
    pub fn quantile(&self, u: f64) -> f64 {
        let m = self.len();
        let idx = ((u * m as f64).ceil() as usize).clamp(1, m) - 1;
        self.sorted[idx]
    }
}

/// Exact `sup_t |F_m(t) - F(t)|` for a continuous `cdf`.
pub fn ks_one_sample(ecdf: &Ecdf, cdf: impl Fn(f64) -> f64) -> f64 {
    ecdf.jumps()
        .map(|(x, left, right)| {
            let f = cdf(x);
            (left - f).abs().max((right - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `sqrt(ln(2/alpha) / (2m))`.
pub fn dkw_radius(m: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * m as f64)).sqrt()
}

/// One-sample KS result against a centred Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub dkw_radius: f64,
    pub m: usize,
    /// Target is `N(0, variance)`.
    pub variance: f64,
    pub alpha: f64,
}

impl KsReport {
    /// Whether the statistic is indistinguishable from zero at level `alpha`.
    pub fn at_noise_floor(&self) -> bool {
        self.statistic <= self.dkw_radius
    }
}

pub fn ks_one_sample_gaussian(ecdf: &Ecdf, variance: f64, alpha: f64) -> Result<KsReport> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::domain("target variance must be > 0", variance));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha must lie in (0, 1)", alpha));
    }
    let sd = variance.sqrt();
    Ok(KsReport {
        statistic: ks_one_sample(ecdf, |t| normal_cdf(t / sd)),
        dkw_radius: dkw_radius(ecdf.len(), alpha),
        m: ecdf.len(),
        variance,
        alpha,
    })
}

/// `sup_t |F_a(t) - F_b(t)|` by a merge scan over both samples.
pub fn ks_two_sample(a: &Ecdf, b: &Ecdf) -> f64 {
    let (xa, xb) = (a.samples(), b.samples());
    let (ma, mb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let t = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] == t {
            i += 1;
        }
        while j < xb.len() && xb[j] == t {
            j += 1;
        }
        d = d.max((i as f64 / ma - j as f64 / mb).abs());
    }
    // Once one side is exhausted the gap only shrinks toward zero.
    d
}

fn check_scale(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(what, x))
    }
}

/// Positive crossing point of the densities of `N(0, sigma^2)` and
/// `N(0, tau^2)` divided by the smaller deviation, and the ratio `r >= 1`.
fn crossing(sigma: f64, tau: f64) -> (f64, f64) {
    let (lo, hi) = if sigma <= tau { (sigma, tau) } else { (tau, sigma) };
    let d = (hi - lo) / lo;
    let r = 1.0 + d;
    // 2 ln r / (r^2 - 1) with r - 1 = d; tends to 1 as d -> 0.
    let u = if d < 1e-8 {
        1.0 - d
    } else {
        2.0 * d.ln_1p() / (d * (2.0 + d))
    };
    (r * u.sqrt(), r)
}

/// Exact KS distance between `N(0, sigma^2)` and `N(0, tau^2)`.
pub fn ks_gaussian_exact(sigma: f64, tau: f64) -> Result<f64> {
    check_scale("sigma must be > 0", sigma)?;
    check_scale("tau must be > 0", tau)?;
    if sigma == tau {
        return Ok(0.0);
    }
    let (z_lo, r) = crossing(sigma, tau);
    let z_hi = z_lo / r;
    // Phi(z_lo) - Phi(z_hi) as a tail difference keeps precision for r near 1.
    let v = crate::numerics::normal_sf(z_hi) - crate::numerics::normal_sf(z_lo);
    Ok(v.max(0.0))
}

/// `(1/4)(1 - sigma/tau) + (1/8)(tau^2/sigma^2 - 1)`, requires `sigma < tau`.
pub fn ks_gaussian_bound_quarter(sigma: f64, tau: f64) -> Result<f64> {
    check_scale("sigma must be > 0", sigma)?;
    check_scale("tau must be > 0", tau)?;
    if sigma >= tau {
        return Err(Error::Hypothesis(format!(
            "quarter bound requires sigma < tau (got {sigma} and {tau})"
        )));
    }
    Ok(0.25 * (1.0 - sigma / tau) + 0.125 * ((tau / sigma).powi(2) - 1.0))
}

/// `(3/8) |alpha^2 - beta^2| / alpha^2`, requires `beta / alpha > 1/2`.
pub fn ks_gaussian_bound_lipschitz(alpha: f64, beta: f64) -> Result<f64> {
    check_scale("alpha must be > 0", alpha)?;
    check_scale("beta must be > 0", beta)?;
    if beta / alpha <= 0.5 {
        return Err(Error::Hypothesis(format!(
            "Lipschitz bound requires beta/alpha > 1/2 (got {})",
            beta / alpha
        )));
    }
    Ok(0.375 * (alpha * alpha - beta * beta).abs() / (alpha * alpha))
}

/// Total variation distance between `N(0, sigma^2)` and `N(0, tau^2)` by
/// quadrature, split at the density crossings.
pub fn tv_gaussian(sigma: f64, tau: f64) -> Result<f64> {
    check_scale("sigma must be > 0", sigma)?;
    check_scale("tau must be > 0", tau)?;
    if sigma == tau {
        return Ok(0.0);
    }
    let (lo, hi) = if sigma < tau { (sigma, tau) } else { (tau, sigma) };
    let s0 = crossing(sigma, tau).0 * lo;
    let f = |t: f64| (normal_pdf(t / lo) / lo - normal_pdf(t / hi) / hi).abs();
    let tol = 1e-13;
    // Symmetric integrand: (1/2) * 2 * int_0^inf.
    let inner = integrate(f, 0.0, s0, tol)?;
    let outer = integrate(f, s0, s0 + 40.0 * hi, tol)?;
    Ok(inner + outer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::RngStream;

    /// Grid search of `|Phi(t/s) - Phi(t/t2)|` with local refinement.
    fn grid_sup(s: f64, t2: f64) -> f64 {
        let g = |t: f64| (normal_cdf(t / s) - normal_cdf(t / t2)).abs();
        let (mut best_t, mut best) = (0.0, 0.0);
        let top = 10.0 * s.max(t2);
        let steps = 200_000;
        for i in 0..=steps {
            let t = top * i as f64 / steps as f64;
            if g(t) > best {
                best = g(t);
                best_t = t;
            }
        }
        let h = top / steps as f64;
        for i in 0..=20_000 {
            let t = best_t - h + 2.0 * h * i as f64 / 20_000.0;
            best = best.max(g(t));
        }
        best
    }

    #[test]
    fn ecdf_steps_and_ties() {
        let e = Ecdf::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.eval(0.5), 0.0);
        assert!((e.eval(1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.eval_left(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.eval(3.0), 1.0);

        let e = Ecdf::new(vec![5.0, 5.0]).unwrap();
        let jumps: Vec<_> = e.jumps().collect();
        assert_eq!(jumps, vec![(5.0, 0.0, 1.0)]);
        assert!(matches!(Ecdf::new(vec![]), Err(Error::Empty(_))));
        assert!(Ecdf::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn one_sample_single_point() {
        let e = Ecdf::new(vec![0.0]).unwrap();
        let r = ks_one_sample_gaussian(&e, 1.0, DEFAULT_ALPHA).unwrap();
        assert_eq!(r.statistic, 0.5);
        assert!(ks_one_sample_gaussian(&e, 0.0, DEFAULT_ALPHA).is_err());
    }

    #[test]
    fn uniform_within_dkw_at_million() {
        let mut rng = RngStream::new(11, 0).rng();
        let u: Vec<f64> = (0..1_000_000).map(|_| rng.random()).collect();
        let d = ks_one_sample(&Ecdf::new(u).unwrap(), |t| t.clamp(0.0, 1.0));
        assert!(d <= dkw_radius(1_000_000, 0.001), "KS = {d}");
    }

    #[test]
    fn gaussian_within_dkw() {
        let mut rng = RngStream::new(12, 0).rng();
        let z: Vec<f64> = (0..100_000)
            .map(|_| 1.7 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = ks_one_sample_gaussian(&Ecdf::new(z).unwrap(), 1.7 * 1.7, DEFAULT_ALPHA).unwrap();
        assert!(r.at_noise_floor(), "{r:?}");
    }

    #[test]
    fn shifted_gaussian_distance() {
        let mut rng = RngStream::new(13, 0).rng();
        let z: Vec<f64> = (0..100_000)
            .map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = ks_one_sample_gaussian(&Ecdf::new(z).unwrap(), 1.0, DEFAULT_ALPHA).unwrap();
        let exact = normal_cdf(0.5) - normal_cdf(-0.5);
        assert!((r.statistic - exact).abs() < 0.01, "{} vs {exact}", r.statistic);
    }

    #[test]
    fn dkw_band_holds_under_repetition() {
        let root = RngStream::new(14, 0);
        let m = 2_000;
        let radius = dkw_radius(m, DEFAULT_ALPHA);
        let misses = (0..200)
            .filter(|&i| {
                let mut rng = root.substream(i).rng();
                let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                ks_one_sample_gaussian(&Ecdf::new(z).unwrap(), 1.0, DEFAULT_ALPHA)
                    .unwrap()
                    .statistic
                    > radius
            })
            .count();
        // Expected <= 2; P[Binomial(200, 0.01) > 8] < 1e-4.
        assert!(misses <= 8, "{misses} misses");
    }

    #[test]
    fn scaling_invariance_of_empirical_ks() {
        let mut rng = RngStream::new(15, 0).rng();
        let y: Vec<f64> = (0..5_000).map(|_| 1.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        let base = ks_one_sample_gaussian(&Ecdf::from_slice(&y).unwrap(), 1.5, DEFAULT_ALPHA)
            .unwrap()
            .statistic;
        let half: Vec<f64> = y.iter().map(|v| 0.5 * v).collect();
        let s = ks_one_sample_gaussian(&Ecdf::new(half).unwrap(), 0.25 * 1.5, DEFAULT_ALPHA)
            .unwrap()
            .statistic;
        assert_eq!(s, base);
        let triple: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        let s = ks_one_sample_gaussian(&Ecdf::new(triple).unwrap(), 9.0 * 1.5, DEFAULT_ALPHA)
            .unwrap()
            .statistic;
        assert!((s - base).abs() < 1e-12);
    }

    #[test]
    fn two_sample_basics() {
        let a = Ecdf::new(vec![0.1, 0.5, 0.9]).unwrap();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b = Ecdf::new(vec![2.0, 2.5, 3.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        assert_eq!(ks_two_sample(&b, &a), 1.0);
        // Ties across samples must be stepped together.
        let c = Ecdf::new(vec![1.0, 2.0]).unwrap();
        let d = Ecdf::new(vec![1.0, 2.0, 2.0, 2.0]).unwrap();
        assert!((ks_two_sample(&c, &d) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_sample_null_below_threshold() {
        let m = 100_000;
        let draw = |seed| {
            let mut rng = RngStream::new(seed, 0).rng();
            Ecdf::new((0..m).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
        };
        let d = ks_two_sample(&draw(16), &draw(17));
        assert!(d < 1.63 * (2.0 / m as f64).sqrt(), "{d}");
    }

    #[test]
    fn exact_matches_grid_oracle() {
        let v = ks_gaussian_exact(1.0, 2.0).unwrap();
        assert!((v - grid_sup(1.0, 2.0)).abs() < 1e-8, "{v}");
        // mpmath: 0.16133728441738433; quoted elsewhere to four places as 0.1614.
        assert!((v - 0.161_337_284_417_384_33).abs() < 1e-13, "{v}");
        assert_eq!(ks_gaussian_exact(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(ks_gaussian_exact(2.0, 1.0).unwrap(), v);
        assert!((ks_gaussian_exact(2.0, 4.0).unwrap() - v).abs() < 1e-15);
        for (s, t) in [(1.0, 1.05), (0.7, 3.0), (1.0, 1.001)] {
            assert!((ks_gaussian_exact(s, t).unwrap() - grid_sup(s, t)).abs() < 1e-8);
        }
        assert!(ks_gaussian_exact(0.0, 1.0).is_err());
    }

    #[test]
    fn exact_near_unit_ratio_is_smooth() {
        // Leading order for tau = 1 + e is e / sqrt(2 pi e_const).
        let e = 1e-9;
        let v = ks_gaussian_exact(1.0, 1.0 + e).unwrap();
        let lead = e * normal_pdf(1.0);
        assert!((v / lead - 1.0).abs() < 1e-4, "{v} vs {lead}");
    }

    #[test]
    fn ratio_invariance() {
        for (s, t) in [(1.0, 2.0), (0.3, 0.5), (2.0, 1.1)] {
            let base = ks_gaussian_exact(s, t).unwrap();
            for c in [0.1, 10.0] {
                assert!((ks_gaussian_exact(c * s, c * t).unwrap() - base).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bound_values() {
        assert!((ks_gaussian_bound_quarter(1.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(
            (ks_gaussian_bound_quarter(1.0, 1.1).unwrap() - (0.25 * (1.0 - 1.0 / 1.1) + 0.125 * 0.21)).abs() < 1e-14
        );
        assert!(ks_gaussian_bound_quarter(2.0, 1.0).is_err());
        assert!(ks_gaussian_bound_quarter(1.0, 1.0).is_err());
        assert!((ks_gaussian_bound_lipschitz(1.0, 2.0).unwrap() - 1.125).abs() < 1e-15);
        assert_eq!(ks_gaussian_bound_lipschitz(1.0, 1.0).unwrap(), 0.0);
        let l = ks_gaussian_bound_lipschitz(2.0, 1.5).unwrap();
        assert!((l - 0.375 * 1.75 / 4.0).abs() < 1e-15);
        assert!(l >= ks_gaussian_exact(1.5, 2.0).unwrap());
        assert!(matches!(
            ks_gaussian_bound_lipschitz(1.0, 0.5),
            Err(Error::Hypothesis(_))
        ));
        let e = 1e-6;
        let q = ks_gaussian_bound_quarter(1.0, 1.0 + e).unwrap();
        assert!(q >= ks_gaussian_exact(1.0, 1.0 + e).unwrap());
        assert!((q / (0.5 * e) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn bounds_dominate_on_ratio_grid() {
        for i in 0..=200 {
            let r = (1.001f64.ln() + (4.0f64.ln() - 1.001f64.ln()) * i as f64 / 200.0).exp();
            let exact = ks_gaussian_exact(1.0, r).unwrap();
            assert!(ks_gaussian_bound_quarter(1.0, r).unwrap() >= exact);
            // Both orientations where the hypothesis holds.
            assert!(ks_gaussian_bound_lipschitz(1.0, r).unwrap() >= exact);
            if 1.0 / r > 0.5 {
                assert!(ks_gaussian_bound_lipschitz(r, 1.0).unwrap() >= exact);
            }
        }
    }

    #[test]
    fn tv_is_twice_ks() {
        assert_eq!(tv_gaussian(1.0, 1.0).unwrap(), 0.0);
        let tv = tv_gaussian(1.0, 2.0).unwrap();
        assert!((tv - 0.322_674_568_834_768_7).abs() < 1e-10, "{tv}");
        for (s, t) in [(1.0, 2.0), (0.5, 0.6), (3.0, 1.0), (1.0, 1.001), (1.0, 4.0)] {
            let ks = ks_gaussian_exact(s, t).unwrap();
            let tv = tv_gaussian(s, t).unwrap();
            assert!((0.5 * tv - ks).abs() < 1e-8, "({s},{t}): {tv} vs {ks}");
            assert!(tv >= ks);
        }
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in 0.05f64..20.0, b in 0.05f64..20.0, c in 0.05f64..20.0) {
            let ac = ks_gaussian_exact(a, c).unwrap();
            let ab = ks_gaussian_exact(a, b).unwrap();
            let bc = ks_gaussian_exact(b, c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-15);
        }

        #[test]
        fn exact_is_a_probability(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            let v = ks_gaussian_exact(a, b).unwrap();
            prop_assert!((0.0..1.0).contains(&v));
        }
    }
}
