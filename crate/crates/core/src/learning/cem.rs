//! Cross-entropy search over day-ahead policy parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

use super::td::{dot, TestStatePool};
use super::LearningError;

/// Equal-weight Gaussian mixture with a shared diagonal variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    pub means: Vec<Vec<f64>>,
    pub variance: Vec<f64>,
    pub iteration: usize,
}

impl SamplingDistribution {
    /// A single component at the origin, where every action scores 0.
    pub fn initial(dim: usize, std: f64) -> Self {
        Self {
            means: vec![vec![0.0; dim]],
            variance: vec![std * std; dim],
            iteration: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.variance.len()
    }

    /// Picks a component uniformly, then draws from it.
    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        let k = rng.random_range(0..self.means.len());
        self.means[k]
            .iter()
            .zip(&self.variance)
            .map(|(m, v)| {
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            })
            .collect()
    }
}

/// One component per elite, shared variance equal to the per-coordinate
/// population variance of the elites, floored at `var_floor`.
pub fn cross_entropy_update(dist: &SamplingDistribution, elites: &[Vec<f64>], var_floor: f64) -> SamplingDistribution {
    cross_entropy_update_scaled(dist, elites, var_floor, 1.0)
}

/// [`cross_entropy_update`] with the component variance multiplied by
/// `scale` before flooring.
///
/// The mixture's total variance is the spread of the component means plus
/// the component variance, so at `scale = 1` every coordinate the elite
/// selection leaves alone roughly doubles per iteration. `scale = 1/n_elite`
/// keeps those coordinates stationary.
pub fn cross_entropy_update_scaled(
    dist: &SamplingDistribution,
    elites: &[Vec<f64>],
    var_floor: f64,
    scale: f64,
) -> SamplingDistribution {
    assert!(!elites.is_empty(), "cross-entropy update needs at least one elite");
    let dim = elites[0].len();
    let n = elites.len() as f64;
    let variance = (0..dim)
        .map(|j| {
            let mean = elites.iter().map(|e| e[j]).sum::<f64>() / n;
            let var = elites.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / n;
            (scale * var).max(var_floor)
        })
        .collect();
    SamplingDistribution {
        means: elites.to_vec(),
        variance,
        iteration: dist.iteration + 1,
    }
}

/// Candidates sorted by their mean value over `pool`, best first, ties by
/// index.
pub fn rank_policies(thetas: &[Vec<f64>], pool: &TestStatePool) -> Vec<(usize, f64)> {
    let mean = pool.mean();
    let mut ranked: Vec<(usize, f64)> = thetas.iter().map(|t| dot(t, &mean)).enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Mean squared difference of rank-paired elite values.
pub fn convergence_statistic(prev: &[f64], curr: &[f64]) -> Result<f64, LearningError> {
    if prev.len() != curr.len() || prev.is_empty() {
        return Err(LearningError::EliteMismatch {
            prev: prev.len(),
            curr: curr.len(),
        });
    }
    Ok(prev.iter().zip(curr).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / prev.len() as f64)
}

pub fn check_convergence(prev: &[f64], curr: &[f64], epsilon: f64) -> Result<bool, LearningError> {
    Ok(convergence_statistic(prev, curr)? < epsilon)
}
