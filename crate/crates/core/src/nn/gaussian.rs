use rand::Rng;
use rand_distr::StandardNormal;

use super::{NnError, Result, Tensor};

pub const LOG_STD_MIN: f32 = -5.0;
pub const LOG_STD_MAX: f32 = 2.0;
/// `0.5 · ln(2π)`
pub const HALF_LN_2PI: f32 = 0.918_938_5;

/// Diagonal Gaussian over joint-position targets with a state-independent
/// log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicyHead {
    pub mean: Tensor,
    pub log_std: Tensor,
}

impl GaussianPolicyHead {
    pub fn new(mean: Tensor, log_std: Tensor) -> Result<Self> {
        if mean.numel() != log_std.numel() {
            return Err(NnError::Shape {
                op: "gaussian head",
                lhs: mean.shape().to_vec(),
                rhs: log_std.shape().to_vec(),
            });
        }
        Ok(Self { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.numel()
    }

    /// Clamped log standard deviations.
    pub fn clamped_log_std(&self) -> Vec<f32> {
        self.log_std
            .data()
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    /// Mean action (deterministic evaluation mode).
    pub fn mode(&self) -> Vec<f32> {
        self.mean.data().to_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f32> {
        self.mean
            .data()
            .iter()
            .zip(self.clamped_log_std())
            .map(|(&m, ls)| {
                let eps: f32 = rng.sample(StandardNormal);
                m + ls.exp() * eps
            })
            .collect()
    }

    pub fn log_prob(&self, action: &[f32]) -> Result<f32> {
        gaussian_log_prob(self, action)
    }
}

/// `Σ_j −½((a_j − μ_j)/σ_j)² − ln σ_j − ½ ln 2π`
pub fn gaussian_log_prob(head: &GaussianPolicyHead, action: &[f32]) -> Result<f32> {
    if action.len() != head.dim() {
        return Err(NnError::Dimension {
            layer: "gaussian_log_prob".into(),
            expected: head.dim(),
            actual: action.len(),
        });
    }
    Ok(head
        .mean
        .data()
        .iter()
        .zip(head.clamped_log_std())
        .zip(action)
        .map(|((&m, ls), &a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn head(mean: Vec<f32>, log_std: Vec<f32>) -> GaussianPolicyHead {
        GaussianPolicyHead::new(Tensor::vector(mean), Tensor::vector(log_std)).unwrap()
    }

    #[test]
    fn at_mean_with_unit_std() {
        let h = head(vec![0.3; 12], vec![0.0; 12]);
        let lp = h.log_prob(&[0.3; 12]).unwrap();
        let expected = -0.5 * 12.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((lp as f64 - expected).abs() < 1e-4, "{lp} vs {expected}");
        assert!((lp as f64 + 11.0272).abs() < 1e-3);
    }

    #[test]
    fn one_sigma_offset_costs_half() {
        let h = head(vec![0.0; 12], vec![-0.7; 12]);
        let base = h.log_prob(&[0.0; 12]).unwrap();
        let mut a = [0.0f32; 12];
        a[4] = (-0.7f32).exp();
        let off = h.log_prob(&a).unwrap();
        assert!((base - off - 0.5).abs() < 1e-5);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mean: Vec<f32> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ls: Vec<f32> = (0..12).map(|_| rng.random_range(-3.0..1.5)).collect();
            let act: Vec<f32> = (0..12)
                .map(|j| mean[j] + ls[j].exp() * rng.random_range(-4.0f32..4.0))
                .collect();
            let h = head(mean.clone(), ls.clone());
            let got = h.log_prob(&act).unwrap() as f64;
            let mut oracle = 0.0f64;
            for j in 0..12 {
                let sigma = (ls[j] as f64).exp();
                let density = (-(act[j] as f64 - mean[j] as f64).powi(2) / (2.0 * sigma * sigma)).exp()
                    / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                oracle += density.ln();
            }
            assert!((got - oracle).abs() < 1e-5 * oracle.abs().max(1.0), "{got} vs {oracle}");
        }
    }

    #[test]
    fn log_std_is_clamped_and_samples_finite() {
        let h = head(vec![0.0; 12], vec![40.0; 12]);
        assert!(h.clamped_log_std().iter().all(|&v| v == LOG_STD_MAX));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert!(h.sample(&mut rng).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_action_length() {
        let h = head(vec![0.0; 12], vec![0.0; 12]);
        assert!(h.log_prob(&[0.0; 11]).is_err());
    }
}
