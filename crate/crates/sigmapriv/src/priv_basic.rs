//! Noise-adding and local-DP privatizers: plain Gaussian noise, L2 norm
//! clipping, the classic and analytically calibrated Gaussian mechanisms, and
//! the truncated Laplacian mechanism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Gaussian noise privatizer parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Std of added noise per normalized feature.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LdpMechanism {
    GaussianClassic,
    GaussianAnalytic,
    TruncatedLaplacian,
}

/// Local-DP privatizer parameters. `clip_half` is the clip radius, i.e. half
/// the L2 sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpParams {
    pub epsilon: f64,
    pub delta: f64,
    pub clip_half: f64,
    pub mechanism: LdpMechanism,
}

impl LdpParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(0.0..1.0).contains(&self.delta) || self.delta == 0.0 {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.clip_half <= 0.0 {
            return Err(Error::Config(format!("clip radius must be positive, got {}", self.clip_half)));
        }
        if self.mechanism == LdpMechanism::TruncatedLaplacian && self.delta >= 0.5 {
            return Err(Error::Config(
                "truncated Laplacian requires delta < 1/2".into(),
            ));
        }
        Ok(())
    }
}

/// Standard normal CDF.
pub fn phi(t: f64) -> f64 {
    0.5 * (1.0 + erf(t / std::f64::consts::SQRT_2))
}

/// Add i.i.d. `N(0, sigma^2)` to every entry. Pure function of (input, params, seed).
pub fn noise_obfuscate(x: &FeatureMatrix, p: &NoiseParams, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.clone();
    for v in out.values.data.iter_mut() {
        *v += p.sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    }
    out
}

/// Clip radius from a pilot block: the `(1 - clip_fraction)` quantile of row
/// L2 norms (nearest-rank).
pub fn choose_clip(pilot: &FeatureMatrix, clip_fraction: f64) -> f64 {
    let mut norms: Vec<f64> = (0..pilot.n())
        .map(|i| pilot.values.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((1.0 - clip_fraction) * norms.len() as f64).ceil() as usize;
    norms[rank.clamp(1, norms.len()) - 1]
}

/// Rescale each row to L2 norm at most `clip_half`, preserving direction.
/// Zero-norm rows pass through unchanged.
pub fn clip(x: &FeatureMatrix, clip_half: f64) -> Result<FeatureMatrix> {
    if clip_half <= 0.0 {
        return Err(Error::Config(format!("clip radius must be positive, got {clip_half}")));
    }
    let mut out = x.clone();
    for i in 0..out.n() {
        let row = out.values.row_mut(i);
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > clip_half {
            let scale = clip_half / norm;
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
    }
    Ok(out)
}

/// Classic Gaussian-mechanism variance: `b = (Delta^2 / eps^2) * 2 ln(1.25 / delta)`.
pub fn gaussian_mech_variance(epsilon: f64, delta: f64, sensitivity: f64) -> f64 {
    (sensitivity * sensitivity / (epsilon * epsilon)) * 2.0 * (1.25 / delta).ln()
}

/// Analytically calibrated Gaussian-mechanism variance: the smallest
/// `b = sigma^2` satisfying
/// `Phi(Delta/(2 sigma) - eps sigma / Delta) - e^eps Phi(-Delta/(2 sigma) - eps sigma / Delta) <= delta`,
/// found by bisection to 1e-9 relative width.
pub fn gaussian_mech_variance_analytic(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64> {
    if sensitivity == 0.0 {
        return Ok(0.0);
    }
    let gap = |sigma: f64| -> f64 {
        let a = sensitivity / (2.0 * sigma) - epsilon * sigma / sensitivity;
        let b = -sensitivity / (2.0 * sigma) - epsilon * sigma / sensitivity;
        // e^eps * Phi(b) in log space: at large eps the direct product is
        // inf * 0 = NaN even though the true value is finite
        phi(a) - (epsilon + phi(b).ln()).exp()
    };
    // bracket: the privacy-loss gap is decreasing in sigma
    let mut lo = 1e-12 * sensitivity;
    let mut hi = sensitivity;
    let mut iters = 0;
    while gap(hi) > delta {
        lo = hi;
        hi *= 2.0;
        iters += 1;
        if iters > 200 {
            return Err(Error::Numerical("analytic Gaussian calibration did not bracket".into()));
        }
    }
    iters = 0;
    while (hi - lo) / hi > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
        iters += 1;
        if iters > 200 {
            return Err(Error::Numerical("analytic Gaussian calibration did not converge".into()));
        }
    }
    Ok(hi * hi)
}

/// Truncated-Laplacian distribution parameters (scale, support bound,
/// normalization height).
pub fn trunclap_params(epsilon: f64, delta: f64, sensitivity: f64) -> (f64, f64, f64) {
    let lambda = sensitivity / epsilon;
    let a = lambda * (1.0 + (epsilon.exp() - 1.0) / (2.0 * delta)).ln();
    let b = 1.0 / (2.0 * lambda * (1.0 - (-a / lambda).exp()));
    (lambda, a, b)
}

/// Draw `count` truncated-Laplacian samples by inverse-CDF; every sample lies
/// in `[-A, A]`.
pub fn trunclap_sample(
    epsilon: f64,
    delta: f64,
    sensitivity: f64,
    seed: u64,
    count: usize,
) -> Vec<f64> {
    let (lambda, a, b) = trunclap_params(epsilon, delta, sensitivity);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tail = (-a / lambda).exp();
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            // CDF on [-A, 0] is B*lambda*(e^{x/lambda} - e^{-A/lambda}); the
            // upper half follows by symmetry
            let x = if u < 0.5 {
                lambda * (u / (b * lambda) + tail).ln()
            } else {
                -lambda * ((1.0 - u) / (b * lambda) + tail).ln()
            };
            x.clamp(-a, a)
        })
        .collect()
}

/// Clip then add per-entry mechanism noise. Pure function of
/// (input, params, seed).
pub fn ldp_obfuscate(x: &FeatureMatrix, p: &LdpParams, seed: u64) -> Result<FeatureMatrix> {
    p.validate()?;
    let sensitivity = 2.0 * p.clip_half;
    let mut out = clip(x, p.clip_half)?;
    let n_entries = out.values.data.len();
    match p.mechanism {
        LdpMechanism::GaussianClassic | LdpMechanism::GaussianAnalytic => {
            let b = if p.mechanism == LdpMechanism::GaussianClassic {
                gaussian_mech_variance(p.epsilon, p.delta, sensitivity)
            } else {
                gaussian_mech_variance_analytic(p.epsilon, p.delta, sensitivity)?
            };
            let std = b.sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in out.values.data.iter_mut() {
                *v += std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            }
        }
        LdpMechanism::TruncatedLaplacian => {
            let noise = trunclap_sample(p.epsilon, p.delta, sensitivity, seed, n_entries);
            for (v, z) in out.values.data.iter_mut().zip(noise) {
                *v += z;
            }
        }
    }
    Ok(out)
}
