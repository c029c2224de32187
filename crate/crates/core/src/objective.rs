//! Binary classification objectives: focal loss and its cross-entropy
//! ablation fallback.
//!
//! Focal loss FL(p_t) = −α_c·(1−p_t)^γ·ln(p_t) down-weights well-classified
//! samples (large p_t) so training signal concentrates on the hard,
//! typically minority-class examples. α_c applies `alpha` to positive
//! samples and `1 − alpha` to negatives.
//!
//! All operations take the model's positive-class probability `p` per sample
//! (as produced by [`sigmoid`] over the classifier logit) together with the
//! label, and derive p_t = p for positives, 1 − p for negatives. p_t is
//! clamped into `[PROB_EPS, 1 − PROB_EPS]` before any logarithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Scalar;

/// Clamping bound keeping `ln` finite.
pub const PROB_EPS: f64 = 1e-7;

/// Focusing and class-balance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocalConfig {
    /// Class-balance weight for the positive class, in (0, 1]; negatives
    /// get `1 − alpha`.
    pub alpha: f64,
    /// Focusing exponent γ ≥ 0; 0 reduces to alpha-weighted cross-entropy.
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        FocalConfig {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid_input(format!(
                "focal alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid_input(format!(
                "focal gamma must be ≥ 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn check_batch<T: Scalar>(p: &[T], y: &[bool]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid_input("loss over an empty batch"));
    }
    if p.len() != y.len() {
        return Err(Error::invalid_input(format!(
            "probability/label length mismatch: {} vs {}",
            p.len(),
            y.len()
        )));
    }
    Ok(())
}

fn clamped_pt<T: Scalar>(p: T, y: bool) -> T {
    let pt = if y { p } else { T::one() - p };
    let eps = T::from_f64(PROB_EPS);
    pt.max(eps).min(T::one() - eps)
}

/// Mean focal loss of a batch.
pub fn focal_loss<T: Scalar>(p: &[T], y: &[bool], config: &FocalConfig) -> Result<T> {
    check_batch(p, y)?;
    config.validate()?;
    let alpha = T::from_f64(config.alpha);
    let gamma = T::from_f64(config.gamma);
    let mut total = T::zero();
    for (&pi, &yi) in p.iter().zip(y) {
        let pt = clamped_pt(pi, yi);
        let weight = if yi { alpha } else { T::one() - alpha };
        total += -weight * (T::one() - pt).powf(gamma) * pt.ln();
    }
    Ok(total / T::from_f64(p.len() as f64))
}

/// Mean binary cross-entropy, −ln(p_t), with the same clamping.
pub fn cross_entropy<T: Scalar>(p: &[T], y: &[bool]) -> Result<T> {
    check_batch(p, y)?;
    let mut total = T::zero();
    for (&pi, &yi) in p.iter().zip(y) {
        total += -clamped_pt(pi, yi).ln();
    }
    Ok(total / T::from_f64(p.len() as f64))
}

/// Gradient of the mean focal loss with respect to the per-sample logits
/// (`p` being the sigmoid of those logits).
///
/// Chain rule: dp_t/dz = (2y−1)·p·(1−p) and
/// dFL/dp_t = α_c·(γ·(1−p_t)^{γ−1}·ln(p_t) − (1−p_t)^γ/p_t); the γ term is
/// skipped when γ = 0 to avoid 0·∞ at p_t → 1. Gradients are evaluated at
/// the clamped p_t.
pub fn focal_loss_grad_logits<T: Scalar>(
    p: &[T],
    y: &[bool],
    config: &FocalConfig,
) -> Result<Vec<T>> {
    check_batch(p, y)?;
    config.validate()?;
    let alpha = T::from_f64(config.alpha);
    let gamma = T::from_f64(config.gamma);
    let n = T::from_f64(p.len() as f64);
    let mut grads = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(y) {
        let pt = clamped_pt(pi, yi);
        let weight = if yi { alpha } else { T::one() - alpha };
        let one_minus = T::one() - pt;
        let focus_term = if config.gamma == 0.0 {
            T::zero()
        } else {
            gamma * one_minus.powf(gamma - T::one()) * pt.ln()
        };
        let d_loss_d_pt = weight * (focus_term - one_minus.powf(gamma) / pt);
        let sign = if yi { T::one() } else { -T::one() };
        let d_pt_d_z = sign * pi * (T::one() - pi);
        grads.push(d_loss_d_pt * d_pt_d_z / n);
    }
    Ok(grads)
}

/// Gradient of the mean cross-entropy with respect to the logits: the
/// stable closed form (p − y)/n.
pub fn cross_entropy_grad_logits<T: Scalar>(p: &[T], y: &[bool]) -> Result<Vec<T>> {
    check_batch(p, y)?;
    let n = T::from_f64(p.len() as f64);
    Ok(p.iter()
        .zip(y)
        .map(|(&pi, &yi)| (pi - if yi { T::one() } else { T::zero() }) / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn perfectly_classified_sample_is_nearly_free() {
        let config = FocalConfig::default();
        let loss = focal_loss(&[1.0f64], &[true], &config).unwrap();
        assert!(loss >= 0.0);
        assert!(loss < 1e-6, "clamped perfect sample cost {loss}");
    }

    #[test]
    fn gamma_zero_alpha_half_is_half_cross_entropy() {
        let config = FocalConfig {
            alpha: 0.5,
            gamma: 0.0,
        };
        let p = [0.9f64, 0.2, 0.5, 0.731, 0.004];
        let y = [true, false, true, false, true];
        let fl = focal_loss(&p, &y, &config).unwrap();
        let ce = cross_entropy(&p, &y).unwrap();
        assert!((fl - 0.5 * ce).abs() <= 1e-9, "fl={fl}, 0.5ce={}", 0.5 * ce);
    }

    #[test]
    fn hand_computed_focal_value() {
        // y=1, p_t=0.9, γ=2, α=0.25 → 0.25·(0.1)²·(−ln 0.9) ≈ 2.634e−4.
        let config = FocalConfig {
            alpha: 0.25,
            gamma: 2.0,
        };
        let loss = focal_loss(&[0.9f64], &[true], &config).unwrap();
        assert!((loss - 2.634e-4).abs() <= 1e-7, "got {loss}");
    }

    #[test]
    fn cross_entropy_hand_values() {
        let ce = cross_entropy(&[0.5f64], &[true]).unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() <= 1e-12);
        // y=0 with positive-probability 0.2 → p_t = 0.8.
        let ce = cross_entropy(&[0.2f64], &[false]).unwrap();
        assert!((ce - 0.223_143_551_3).abs() <= 1e-9);
    }

    #[test]
    fn empty_and_mismatched_batches_are_rejected() {
        let config = FocalConfig::default();
        assert!(focal_loss::<f64>(&[], &[], &config).is_err());
        assert!(cross_entropy::<f64>(&[], &[]).is_err());
        assert!(focal_loss(&[0.5f64], &[true, false], &config).is_err());
        assert!(cross_entropy_grad_logits(&[0.5f64, 0.1], &[true]).is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        for (alpha, gamma) in [(0.0, 2.0), (1.5, 2.0), (0.25, -1.0), (f64::NAN, 2.0)] {
            let config = FocalConfig { alpha, gamma };
            assert!(
                focal_loss(&[0.5f64], &[true], &config).is_err(),
                "accepted alpha={alpha}, gamma={gamma}"
            );
        }
    }

    #[test]
    fn loss_strictly_decreases_as_pt_grows() {
        let config = FocalConfig::default();
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let pt = i as f64 / 100.0;
            let loss = focal_loss(&[pt], &[true], &config).unwrap();
            assert!(loss < prev, "not decreasing at p_t={pt}");
            prev = loss;
        }
    }

    #[test]
    fn higher_gamma_down_weights_easy_samples() {
        for pt in [0.6f64, 0.75, 0.9, 0.99] {
            let lo = focal_loss(
                &[pt],
                &[true],
                &FocalConfig {
                    alpha: 0.25,
                    gamma: 1.0,
                },
            )
            .unwrap();
            let hi = focal_loss(
                &[pt],
                &[true],
                &FocalConfig {
                    alpha: 0.25,
                    gamma: 3.0,
                },
            )
            .unwrap();
            let ratio = hi / lo;
            let expected = (1.0 - pt).powf(2.0);
            assert!((ratio - expected).abs() <= 1e-9, "p_t={pt}: {ratio} vs {expected}");
            assert!(ratio < 1.0);
        }
    }

    /// Central finite differences over logits for an arbitrary loss.
    fn fd_grad(
        z: &[f64],
        y: &[bool],
        loss: impl Fn(&[f64], &[bool]) -> f64,
    ) -> Vec<f64> {
        let eps = 1e-6;
        (0..z.len())
            .map(|i| {
                let mut plus = z.to_vec();
                plus[i] += eps;
                let mut minus = z.to_vec();
                minus[i] -= eps;
                let p_plus: Vec<f64> = plus.iter().map(|&v| sigmoid(v)).collect();
                let p_minus: Vec<f64> = minus.iter().map(|&v| sigmoid(v)).collect();
                (loss(&p_plus, y) - loss(&p_minus, y)) / (2.0 * eps)
            })
            .collect()
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.random_range(1..12);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let config = FocalConfig {
                alpha: rng.random_range(0.05..1.0),
                gamma: [0.0, 0.5, 1.0, 2.0, 5.0][rng.random_range(0..5)],
            };
            let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            let analytic = focal_loss_grad_logits(&p, &y, &config).unwrap();
            let numeric = fd_grad(&z, &y, |p, y| focal_loss(p, y, &config).unwrap());
            for (a, f) in analytic.iter().zip(&numeric) {
                assert!(
                    (a - f).abs() <= 1e-4 * f.abs().max(1e-3),
                    "analytic {a} vs fd {f} (γ={}, α={})",
                    config.gamma,
                    config.alpha
                );
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(1..12);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            let analytic = cross_entropy_grad_logits(&p, &y).unwrap();
            let numeric = fd_grad(&z, &y, |p, y| cross_entropy(p, y).unwrap());
            for (a, f) in analytic.iter().zip(&numeric) {
                assert!((a - f).abs() <= 1e-4 * f.abs().max(1e-3), "{a} vs {f}");
            }
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!(sigmoid(500.0f64) <= 1.0);
        assert!(sigmoid(-500.0f64) >= 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
        assert!((sigmoid(2.0f64) + sigmoid(-2.0f64) - 1.0).abs() < 1e-12);
    }
}
