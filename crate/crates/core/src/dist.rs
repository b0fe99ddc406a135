//! Discrete noise distributions used by noisy assignments.
//!
//! Both families are parameterised by a scale `b > 0` through the ratio
//! `alpha = exp(-1/b)`:
//!
//! ```text
//! Laplace(mean, b):      pmf(k) = (1 - alpha) / (1 + alpha) * alpha^|k - mean|
//! Exponential(offset, b): pmf(k) = (1 - alpha) * alpha^(k - offset),   k >= offset
//! ```
//!
//! Sampling is inverse-CDF on the closed-form geometric tails, so one uniform
//! draw yields one sample and results are reproducible from the stream state.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("noise scale must be a positive finite number, got {0}")]
    NonPositiveScale(f64),
    #[error("weight ratio requested for a hole without noise")]
    NoiseFreeTarget,
}

/// Noise family of a sketch hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Laplace,
    Exponential,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Laplace => "Lap",
            Family::Exponential => "Exp",
        }
    }
}

fn check_scale(scale: f64) -> Result<f64, DistError> {
    if scale.is_finite() && scale > 0.0 {
        Ok(scale)
    } else {
        Err(DistError::NonPositiveScale(scale))
    }
}

/// Zero-centred noise kernel: a family together with a validated scale.
///
/// Holds the logarithmic constants so that repeated pmf evaluations inside
/// estimators cost one multiply-add.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    family: Family,
    scale: f64,
    alpha: f64,
    ln_alpha: f64,
    ln_norm: f64,
}

impl Noise {
    pub fn new(family: Family, scale: f64) -> Result<Self, DistError> {
        let scale = check_scale(scale)?;
        let ln_alpha = -1.0 / scale;
        let alpha = ln_alpha.exp();
        // ln(1 - alpha), accurate for large scales.
        let ln_one_minus = (-(ln_alpha.exp_m1())).ln();
        let ln_norm = match family {
            Family::Laplace => ln_one_minus - alpha.ln_1p(),
            Family::Exponential => ln_one_minus,
        };
        Ok(Self {
            family,
            scale,
            alpha,
            ln_alpha,
            ln_norm,
        })
    }

    pub fn laplace(scale: f64) -> Result<Self, DistError> {
        Self::new(Family::Laplace, scale)
    }

    pub fn exponential(scale: f64) -> Result<Self, DistError> {
        Self::new(Family::Exponential, scale)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Log of the normalising constant `(1 - alpha) / (1 + alpha)` (Laplace) or
    /// `1 - alpha` (Exponential).
    pub fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    /// Coefficient `-1/b` multiplying the offset magnitude in the log-pmf.
    pub fn ln_alpha(&self) -> f64 {
        self.ln_alpha
    }

    /// Magnitude of an offset as it enters the log-pmf, or `None` when the
    /// offset lies outside the support.
    #[inline]
    pub fn magnitude(&self, offset: i64) -> Option<i64> {
        match self.family {
            Family::Laplace => Some(offset.abs()),
            Family::Exponential if offset >= 0 => Some(offset),
            Family::Exponential => None,
        }
    }

    /// Log-probability of drawing `offset` from the zero-centred kernel.
    #[inline]
    pub fn ln_pmf_offset(&self, offset: i64) -> f64 {
        match self.magnitude(offset) {
            Some(m) => self.ln_norm + self.ln_alpha * m as f64,
            None => f64::NEG_INFINITY,
        }
    }

    pub fn pmf_offset(&self, offset: i64) -> f64 {
        self.ln_pmf_offset(offset).exp()
    }

    /// Probability that the zero-centred draw is at most `x`.
    pub fn cdf_offset(&self, x: i64) -> f64 {
        let a = self.alpha;
        match self.family {
            Family::Laplace if x < 0 => a.powi(-x as i32) / (1.0 + a),
            Family::Laplace => 1.0 - a.powf(x as f64 + 1.0) / (1.0 + a),
            Family::Exponential if x < 0 => 0.0,
            Family::Exponential => 1.0 - a.powf(x as f64 + 1.0),
        }
    }

    /// Inverse CDF: the smallest offset `x` with `cdf(x) >= u`, for `u` in (0, 1).
    pub fn quantile_offset(&self, u: f64) -> i64 {
        let a = self.alpha;
        let ln_a = self.ln_alpha;
        match self.family {
            Family::Laplace => {
                if u <= a / (1.0 + a) {
                    let m = ((u * (1.0 + a)).ln() / ln_a).floor();
                    -(m.max(1.0) as i64)
                } else {
                    let x = ((1.0 - u) * (1.0 + a)).ln() / ln_a - 1.0;
                    x.ceil().max(0.0) as i64
                }
            }
            Family::Exponential => {
                let x = (1.0 - u).ln() / ln_a - 1.0;
                x.ceil().max(0.0) as i64
            }
        }
    }

    /// Draws a zero-centred offset.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        // `random::<f64>()` is in [0, 1); reflect to keep the draw inside (0, 1).
        let u: f64 = rng.random();
        let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
        self.quantile_offset(u)
    }
}

/// Discrete Laplace distribution on the integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteLaplace {
    pub mean: i64,
    kernel: Noise,
}

impl DiscreteLaplace {
    pub fn new(mean: i64, scale: f64) -> Result<Self, DistError> {
        Ok(Self {
            mean,
            kernel: Noise::laplace(scale)?,
        })
    }

    /// Closed-form normaliser `sum_y exp(-|y|/b) = (1 + e^{-1/b}) / (1 - e^{-1/b})`.
    pub fn normalizer(scale: f64) -> Result<f64, DistError> {
        let b = check_scale(scale)?;
        let a = (-1.0 / b).exp();
        Ok((1.0 + a) / -(-1.0 / b).exp_m1())
    }
}

/// One-sided geometric distribution on `offset, offset + 1, ...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteExponential {
    pub offset: i64,
    kernel: Noise,
}

impl DiscreteExponential {
    pub fn new(offset: i64, scale: f64) -> Result<Self, DistError> {
        Ok(Self {
            offset,
            kernel: Noise::exponential(scale)?,
        })
    }
}

/// Common interface of the two integer-valued distributions.
pub trait IntDistribution {
    fn pmf(&self, value: i64) -> f64 {
        self.ln_pmf(value).exp()
    }
    fn ln_pmf(&self, value: i64) -> f64;
    fn cdf(&self, value: i64) -> f64;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64;
}

impl IntDistribution for DiscreteLaplace {
    fn ln_pmf(&self, value: i64) -> f64 {
        self.kernel.ln_pmf_offset(value - self.mean)
    }
    fn cdf(&self, value: i64) -> f64 {
        self.kernel.cdf_offset(value - self.mean)
    }
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.mean + self.kernel.sample_offset(rng)
    }
}

impl IntDistribution for DiscreteExponential {
    fn ln_pmf(&self, value: i64) -> f64 {
        self.kernel.ln_pmf_offset(value - self.offset)
    }
    fn cdf(&self, value: i64) -> f64 {
        self.kernel.cdf_offset(value - self.offset)
    }
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.offset + self.kernel.sample_offset(rng)
    }
}

/// Importance weight `pmf_target(value) / pmf_proposal(value)` for a Laplace
/// draw centred at `mean`. A target of `None` (no noise) is a contract
/// violation: such holes never draw.
pub fn weight_ratio(
    value: i64,
    mean: i64,
    target_scale: Option<f64>,
    proposal_scale: f64,
) -> Result<f64, DistError> {
    family_weight_ratio(Family::Laplace, value, mean, target_scale, proposal_scale)
}

/// [`weight_ratio`] for an arbitrary family.
pub fn family_weight_ratio(
    family: Family,
    value: i64,
    mean: i64,
    target_scale: Option<f64>,
    proposal_scale: f64,
) -> Result<f64, DistError> {
    let proposal = Noise::new(family, proposal_scale)?;
    let target = Noise::new(family, target_scale.ok_or(DistError::NoiseFreeTarget)?)?;
    let offset = value - mean;
    Ok((target.ln_pmf_offset(offset) - proposal.ln_pmf_offset(offset)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn laplace_pmf_at_mean() {
        // (1 - e^-1) / (1 + e^-1)
        let d = DiscreteLaplace::new(0, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((d.pmf(0) - (1.0 - e) / (1.0 + e)).abs() < 1e-15);
        assert!((d.pmf(0) - 0.462117).abs() < 1e-6);
    }

    #[test]
    fn laplace_symmetric() {
        let d = DiscreteLaplace::new(0, 2.0).unwrap();
        for k in 0..30 {
            assert_eq!(d.pmf(k), d.pmf(-k));
        }
        let shifted = DiscreteLaplace::new(7, 2.0).unwrap();
        assert_eq!(shifted.pmf(10), shifted.pmf(4));
    }

    #[test]
    fn exponential_one_sided() {
        let d = DiscreteExponential::new(0, 2.0).unwrap();
        assert_eq!(d.pmf(-1), 0.0);
        assert!(d.pmf(0) > d.pmf(1));
        let a = (-0.5f64).exp();
        assert!((d.pmf(3) - (1.0 - a) * a.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_scales() {
        for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(DiscreteLaplace::new(0, s).is_err());
            assert!(DiscreteExponential::new(0, s).is_err());
        }
    }

    #[test]
    fn exponential_draws_respect_support() {
        let d = DiscreteExponential::new(3, 1.0).unwrap();
        let mut rng = stream(11, &[0]);
        assert!((0..10_000).all(|_| d.sample(&mut rng) >= 3));
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = DiscreteLaplace::new(0, 2.0).unwrap();
        let a: Vec<i64> = {
            let mut r = stream(5, &[1, 2]);
            (0..100).map(|_| d.sample(&mut r)).collect()
        };
        let b: Vec<i64> = {
            let mut r = stream(5, &[1, 2]);
            (0..100).map(|_| d.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for fam in [Family::Laplace, Family::Exponential] {
            let n = Noise::new(fam, 1.7).unwrap();
            for i in 1..200 {
                let u = i as f64 / 200.0;
                let x = n.quantile_offset(u);
                assert!(n.cdf_offset(x) >= u - 1e-12, "{fam:?} u={u} x={x}");
                if fam == Family::Laplace || x > 0 {
                    assert!(n.cdf_offset(x - 1) < u + 1e-12, "{fam:?} u={u} x={x}");
                }
            }
        }
    }

    #[test]
    fn weight_ratio_examples() {
        assert!((weight_ratio(0, 0, Some(4.0), 4.0).unwrap() - 1.0).abs() < 1e-15);
        // Plug into both closed forms by hand.
        let z = |b: f64| (1.0 + (-1.0 / b).exp()) / (1.0 - (-1.0 / b).exp());
        let expected = z(4.0) / z(2.0) * (-1.5f64 + 0.75).exp();
        let got = weight_ratio(3, 0, Some(2.0), 4.0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert_eq!(
            weight_ratio(5, 0, Some(1.3), 4.0).unwrap(),
            weight_ratio(-5, 0, Some(1.3), 4.0).unwrap()
        );
        assert_eq!(
            weight_ratio(0, 0, None, 4.0),
            Err(DistError::NoiseFreeTarget)
        );
    }

    #[test]
    fn log_pmf_agrees_with_pmf() {
        for b in [0.5, 1.0, 2.0, 4.0] {
            let d = DiscreteLaplace::new(0, b).unwrap();
            let a = (-1.0 / b).exp();
            for k in -50..=50i64 {
                let direct = (1.0 - a) / (1.0 + a) * a.powi(k.abs() as i32);
                assert!((d.ln_pmf(k).exp() - direct).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn adjacent_mean_ratio_bound() {
        for b in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let d0 = DiscreteLaplace::new(0, b).unwrap();
            let d1 = DiscreteLaplace::new(1, b).unwrap();
            let bound = (1.0 / b).exp();
            for k in -40..40 {
                let r = d0.pmf(k) / d1.pmf(k);
                assert!(r <= bound * (1.0 + 1e-12));
                if k <= 0 {
                    assert!((r - bound).abs() <= 1e-9 * bound);
                }
            }
        }
    }
}
