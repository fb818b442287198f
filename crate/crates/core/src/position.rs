//! Decoder position indices: the usual forward count and the reversed
//! countdown of remaining tokens.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionScheme {
    Forward,
    Reverse,
}

/// Position assignment for one decoder sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionPlan {
    pub scheme: PositionScheme,
    /// Requested length in tokens; required by `Reverse`.
    pub target_len: Option<usize>,
    /// Per-sequence offset; zero at inference.
    pub noise: i64,
    pub max_index: usize,
}

impl PositionPlan {
    pub fn forward(max_index: usize) -> Self {
        PositionPlan { scheme: PositionScheme::Forward, target_len: None, noise: 0, max_index }
    }

    pub fn reverse(target_len: usize, noise: i64, max_index: usize) -> Self {
        PositionPlan { scheme: PositionScheme::Reverse, target_len: Some(target_len), noise, max_index }
    }

    /// Index of decoder step `t` (step 0 consumes BOS).
    pub fn index(&self, t: usize) -> Result<usize> {
        match self.scheme {
            PositionScheme::Forward => {
                if t > self.max_index {
                    return Err(Error::Parameter(format!("step {t} exceeds position table bound {}", self.max_index)));
                }
                Ok(t)
            }
            PositionScheme::Reverse => {
                let len = match self.target_len {
                    Some(l) if l >= 1 => l as i64,
                    _ => return Err(Error::Parameter("reverse positions need a target length >= 1".into())),
                };
                Ok((len - 1 + self.noise - t as i64).clamp(0, self.max_index as i64) as usize)
            }
        }
    }
}

/// Indices for steps `0..steps`.
pub fn position_indices(plan: &PositionPlan, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 {
        return Err(Error::Parameter("position_indices needs at least one step".into()));
    }
    (0..steps).map(|t| plan.index(t)).collect()
}

/// Standard normal draw truncated toward zero.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R) -> i64 {
    truncate_noise(rng.sample(StandardNormal))
}

pub fn truncate_noise(draw: f64) -> i64 {
    draw.trunc() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn countdown_examples() {
        assert_eq!(position_indices(&PositionPlan::reverse(8, 0, 64), 8).unwrap(), vec![7, 6, 5, 4, 3, 2, 1, 0]);
        assert_eq!(position_indices(&PositionPlan::reverse(3, 0, 64), 5).unwrap(), vec![2, 1, 0, 0, 0]);
        assert_eq!(position_indices(&PositionPlan::reverse(8, 1, 64), 8).unwrap(), vec![8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(position_indices(&PositionPlan::forward(64), 4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn errors() {
        let missing = PositionPlan { target_len: None, ..PositionPlan::reverse(1, 0, 8) };
        assert!(matches!(position_indices(&missing, 3), Err(Error::Parameter(_))));
        assert!(position_indices(&PositionPlan::reverse(0, 0, 8), 1).is_err());
        assert!(position_indices(&PositionPlan::forward(8), 0).is_err());
        assert!(position_indices(&PositionPlan::forward(3), 5).is_err());
    }

    #[test]
    fn forward_ignores_length_and_noise() {
        let a = PositionPlan::forward(30);
        let b = PositionPlan { target_len: Some(9), noise: 3, ..a };
        assert_eq!(position_indices(&a, 20).unwrap(), position_indices(&b, 20).unwrap());
    }

    #[test]
    fn truncation_toward_zero() {
        assert_eq!(truncate_noise(0.99), 0);
        assert_eq!(truncate_noise(-0.99), 0);
        assert_eq!(truncate_noise(1.7), 1);
        assert_eq!(truncate_noise(-1.7), -1);
    }

    #[test]
    fn zero_noise_fraction() {
        // P(|z| < 1) for a standard normal
        let expected = 0.682_689_492;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| sample_noise(&mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - expected).abs() < 0.01);
    }
}
