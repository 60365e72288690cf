//! The outer policy-improvement loop.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Config, DemandBasis, LearningConfig, PoolMode};
use crate::env::{Environment, ProfileLibrary};
use crate::features::{build_action_catalog, ActionCatalog, RT_FEATURE_DIM};
use crate::grid::GridCase;
use crate::parallel::ordered_map;
use crate::rng::{derive_seed, purpose, stream};

use super::cem::{convergence_statistic, cross_entropy_update_scaled, rank_policies, SamplingDistribution};
use super::td::{td0_evaluate, EvalSeeds, TdOutcome, TestStatePool};
use super::{ArgmaxPolicy, LearningError};

/// Turns a candidate parameter vector into a fitted value function and the
/// states it visited.
pub trait CandidateEvaluator: Sync {
    fn evaluate(&self, psi: &[f64], seeds: EvalSeeds) -> Result<TdOutcome, LearningError>;
}

/// Evaluates candidates by simulation and TD(0).
#[derive(Debug)]
pub struct EnvEvaluator<'a> {
    pub case: &'a GridCase,
    pub config: &'a Config,
    pub catalog: &'a ActionCatalog,
}

impl CandidateEvaluator for EnvEvaluator<'_> {
    fn evaluate(&self, psi: &[f64], seeds: EvalSeeds) -> Result<TdOutcome, LearningError> {
        let policy = ArgmaxPolicy::new(psi, self.catalog, self.config.learning.demand_basis)?;
        let mut env = Environment::new(self.case, &self.config.scenario);
        td0_evaluate(&mut env, &policy, &self.config.learning, seeds)
    }
}

/// Stand-in evaluator with a known answer: a candidate's value is a concave
/// function of the action its indicator block prefers, peaking at `optimum`,
/// plus Gaussian noise of scale `noise`.
#[derive(Debug, Clone)]
pub struct PlantedSurrogate {
    pub n_actions: usize,
    pub optimum: usize,
    pub noise: f64,
}

impl PlantedSurrogate {
    pub fn preferred_action(psi: &[f64]) -> usize {
        psi[4..]
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (k, &v)| if v > best.1 { (k, v) } else { best },
            )
            .0
    }

    /// `1 - (action - optimum)^2 / n_actions`, so the optimum leads its
    /// neighbours by `1 / n_actions`.
    pub fn value_of(&self, action: usize) -> f64 {
        let d = action as f64 - self.optimum as f64;
        1.0 - d * d / self.n_actions as f64
    }
}

impl CandidateEvaluator for PlantedSurrogate {
    fn evaluate(&self, psi: &[f64], seeds: EvalSeeds) -> Result<TdOutcome, LearningError> {
        let z: f64 = stream(seeds.candidate, &[]).sample(StandardNormal);
        let mut theta = vec![0.0; RT_FEATURE_DIM];
        theta[0] = self.value_of(Self::preferred_action(psi)) + self.noise * z;
        let mut unit = [0.0; RT_FEATURE_DIM];
        unit[0] = 1.0;
        Ok(TdOutcome {
            theta,
            pool: TestStatePool::from_states([&unit[..]]),
            transitions: 0,
            mean_reward: 0.0,
            restarted: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub candidates: Vec<Vec<f64>>,
    pub thetas: Vec<Vec<f64>>,
    /// Mean value of each candidate over the test pool.
    pub values: Vec<f64>,
    pub elite: Vec<bool>,
    /// Elite values, best first.
    pub elite_values: Vec<f64>,
    pub elite_mean: f64,
    pub elite_std: f64,
    /// Mean squared change of the rank-paired elite values; absent on the
    /// first iteration.
    pub statistic: Option<f64>,
    pub pool_size: u64,
    pub transitions: u64,
    pub restarts: usize,
    /// Mean simulated reward of each candidate.
    pub mean_rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IapiReport {
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub psi_star: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub demand_basis: DemandBasis,
    pub catalog: Option<ActionCatalog>,
}

impl IapiReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn elite_means(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.elite_mean).collect()
    }

    /// `iteration,elite_mean,elite_std,statistic`; the statistic column is
    /// empty on the first iteration.
    pub fn convergence_csv(&self) -> String {
        let mut out = String::from("iteration,elite_mean,elite_std,statistic\n");
        for r in &self.iterations {
            let stat = r.statistic.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.iteration, r.elite_mean, r.elite_std, stat);
        }
        out
    }
}

/// Cross-entropy search over `dim`-dimensional policy parameters.
///
/// Each iteration draws `n_candidates` parameter vectors, evaluates them
/// (in parallel, one seed per candidate), ranks them by the mean learned
/// value over the shared test pool and refits the sampling mixture on the
/// elite. Stops once the rank-paired elite values move by less than
/// `epsilon` in mean square, or at `max_iterations`.
pub fn run_iapi(
    evaluator: &dyn CandidateEvaluator,
    config: &LearningConfig,
    dim: usize,
    seed: u64,
    workers: usize,
) -> Result<IapiReport, LearningError> {
    let n = config.n_candidates;
    let n_elite = config.elite_size();
    let shared = derive_seed(seed, &[purpose::INITIAL]);
    let mut dist = SamplingDistribution::initial(dim, config.init_std);
    let mut kept = TestStatePool::default();
    let mut prev_elite: Option<Vec<f64>> = None;
    let mut report = IapiReport {
        seed,
        iterations: Vec::new(),
        converged: false,
        psi_star: vec![0.0; dim],
        theta_star: vec![0.0; RT_FEATURE_DIM],
        demand_basis: config.demand_basis,
        catalog: None,
    };

    for k in 0..config.max_iterations {
        let mut rng = stream(seed, &[purpose::SAMPLING, k as u64]);
        let candidates: Vec<Vec<f64>> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let outcomes = ordered_map(workers, n, |i| {
            let seeds = EvalSeeds {
                candidate: derive_seed(seed, &[purpose::CANDIDATE, k as u64, i as u64]),
                shared,
            };
            evaluator.evaluate(&candidates[i], seeds)
        });
        let mut fitted = Vec::with_capacity(n);
        for (i, out) in outcomes.into_iter().enumerate() {
            fitted.push(out.map_err(|e| LearningError::Candidate {
                iteration: k,
                candidate: i,
                source: Box::new(e),
            })?);
        }

        let mut pool = TestStatePool::default();
        for out in &fitted {
            pool.merge(&out.pool);
        }
        let pool = match config.pool_mode {
            PoolMode::PerIteration => pool,
            PoolMode::Cumulative => {
                kept.merge(&pool);
                kept.clone()
            }
            PoolMode::First => {
                if kept.is_empty() {
                    kept = pool;
                }
                kept.clone()
            }
        };

        let thetas: Vec<Vec<f64>> = fitted.iter().map(|o| o.theta.clone()).collect();
        let ranked = rank_policies(&thetas, &pool);
        let mut values = vec![0.0; n];
        for &(i, v) in &ranked {
            values[i] = v;
        }
        let mut elite = vec![false; n];
        for &(i, _) in &ranked[..n_elite] {
            elite[i] = true;
        }
        let elite_values: Vec<f64> = ranked[..n_elite].iter().map(|r| r.1).collect();
        let elite_mean = elite_values.iter().sum::<f64>() / n_elite as f64;
        let elite_std = (elite_values.iter().map(|v| (v - elite_mean).powi(2)).sum::<f64>() / n_elite as f64).sqrt();
        let statistic = match &prev_elite {
            Some(prev) => Some(convergence_statistic(prev, &elite_values)?),
            None => None,
        };

        let best = ranked[0].0;
        report.psi_star = candidates[best].clone();
        report.theta_star = thetas[best].clone();
        let elites: Vec<Vec<f64>> = ranked[..n_elite].iter().map(|&(i, _)| candidates[i].clone()).collect();
        report.iterations.push(IterationRecord {
            iteration: k,
            thetas,
            values,
            elite,
            elite_values: elite_values.clone(),
            elite_mean,
            elite_std,
            statistic,
            pool_size: pool.count,
            transitions: fitted.iter().map(|o| o.transitions).sum(),
            restarts: fitted.iter().filter(|o| o.restarted).count(),
            mean_rewards: fitted.iter().map(|o| o.mean_reward).collect(),
            candidates,
        });

        if statistic.is_some_and(|s| s < config.epsilon) {
            report.converged = true;
            break;
        }
        dist = cross_entropy_update_scaled(&dist, &elites, config.var_floor, config.component_scale);
        prev_elite = Some(elite_values);
    }
    Ok(report)
}

/// Builds the action catalog for `case` and runs the full search on it.
pub fn train(case: &GridCase, config: &Config, seed: u64, workers: usize) -> Result<IapiReport, LearningError> {
    let library = ProfileLibrary::new(case, &config.scenario);
    let catalog = build_action_catalog(case, &library, &config.learning, &mut stream(seed, &[purpose::CATALOG]))?;
    let evaluator = EnvEvaluator {
        case,
        config,
        catalog: &catalog,
    };
    let mut report = run_iapi(&evaluator, &config.learning, catalog.len() + 4, seed, workers)?;
    report.catalog = Some(catalog);
    Ok(report)
}
