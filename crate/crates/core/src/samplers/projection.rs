//! Euclidean norms of projections of ball points onto random subspaces.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{sample_ball_point, Mode, ModelSpec, YnSampler};
use crate::error::{Error, Result};

/// Largest ambient dimension accepted by the dense Haar-frame sampler.
pub const MAX_DIRECT_DIMENSION: usize = 4096;

/// One draw of `||P_E X||_2` for a uniform `k`-dimensional subspace `E`,
/// through the representation
/// `|Z|_2 |g_{1..k}|_2 / ((|Z|_p^p + W)^{1/p} |g_{1..n}|_2)`.
pub fn sample_projnorm_identity_fixed<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<f64> {
    if !matches!(spec.mode, Mode::GrassmannFixed { .. }) {
        return Err(Error::Mode {
            mode: spec.mode.name(),
            what: "fixed-dimension projection",
        });
    }
    Ok(YnSampler::new(spec)?.projection_norm(rng))
}

/// Same as [`sample_projnorm_identity_fixed`] with the first `k` Gaussian
/// weights replaced by independent `Bernoulli(lambda)` indicators.
pub fn sample_projnorm_identity_random<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<f64> {
    if !matches!(spec.mode, Mode::GrassmannRandom { .. }) {
        return Err(Error::Mode {
            mode: spec.mode.name(),
            what: "random-dimension projection",
        });
    }
    Ok(YnSampler::new(spec)?.projection_norm(rng))
}

fn gaussian_matrix<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal `n x k` frame, Haar distributed on the Stiefel manifold.
///
/// Householder QR of a Gaussian matrix, with each column of `Q` multiplied by
/// the sign of the matching diagonal entry of `R` so that the factorization is
/// the unique one with positive diagonal.
pub fn haar_frame<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "frame size k = {k} must satisfy 1 <= k <= n = {n}"
        )));
    }
    for _attempt in 0..2 {
        let qr = gaussian_matrix(n, k, rng).qr();
        let r = qr.r();
        let tol = 1e-10 * (n as f64).sqrt();
        if (0..k).any(|j| r[(j, j)].abs() <= tol) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..k {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return Ok(q);
    }
    Err(Error::Numeric(
        "Gaussian matrix was numerically rank deficient twice".into(),
    ))
}

/// `||P_E X||_2` computed literally as the norm of the Haar-frame coordinates
/// of a ball point. Used as an oracle for the identity samplers.
pub fn sample_projnorm_direct<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<f64> {
    let Mode::GrassmannFixed { k } = spec.mode else {
        return Err(Error::Mode {
            mode: spec.mode.name(),
            what: "direct Haar projection",
        });
    };
    if spec.n > MAX_DIRECT_DIMENSION {
        return Err(Error::Config(format!(
            "direct projection limited to n <= {MAX_DIRECT_DIMENSION}, got {}",
            spec.n
        )));
    }
    let x = DVector::from_vec(sample_ball_point(spec, rng)?);
    let frame = haar_frame(spec.n, k, rng)?;
    Ok(frame.tr_mul(&x).norm())
}
