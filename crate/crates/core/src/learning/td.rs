//! Linear TD(0) policy evaluation.

use serde::{Deserialize, Serialize};

use crate::config::LearningConfig;
use crate::env::{DaPolicy, Environment};
use crate::features::{rt_features, RT_FEATURE_DIM};
use crate::rng::{derive_seed, purpose, stream, EpisodeStreams};

use super::LearningError;

/// Linear value estimate trained with decaying-step TD(0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Td0 {
    pub theta: Vec<f64>,
    pub gamma: f64,
    pub alpha0: f64,
    pub tau: f64,
    /// Updates applied so far.
    pub steps: u64,
}

impl Td0 {
    pub fn new(dim: usize, gamma: f64, alpha0: f64, tau: f64) -> Self {
        Self {
            theta: vec![0.0; dim],
            gamma,
            alpha0,
            tau,
            steps: 0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.alpha0 / (1.0 + self.steps as f64 / self.tau)
    }

    pub fn value(&self, phi: &[f64]) -> f64 {
        dot(&self.theta, phi)
    }

    /// One update on the transition `phi --reward--> next`; `None` marks a
    /// terminal successor with value 0.
    pub fn update(&mut self, phi: &[f64], reward: f64, next: Option<&[f64]>) {
        let bootstrap = next.map_or(0.0, |n| self.gamma * self.value(n));
        let delta = reward + bootstrap - self.value(phi);
        let step = self.step_size() * delta;
        for (t, f) in self.theta.iter_mut().zip(phi) {
            *t += step * f;
        }
        self.steps += 1;
    }

    pub fn sup_norm(&self) -> f64 {
        self.theta
            .iter()
            .fold(0.0, |m, t| if t.is_nan() { f64::INFINITY } else { m.max(t.abs()) })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Real-time states visited during evaluation, kept as a running sum: every
/// statistic the ranking needs is linear in the feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStatePool {
    pub sum: Vec<f64>,
    pub count: u64,
}

impl Default for TestStatePool {
    fn default() -> Self {
        Self::new(RT_FEATURE_DIM)
    }
}

impl TestStatePool {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn from_states<'a>(states: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut pool = Self::default();
        for s in states {
            pool.add(s);
        }
        pool
    }

    pub fn add(&mut self, phi: &[f64]) {
        if self.sum.len() < phi.len() {
            self.sum.resize(phi.len(), 0.0);
        }
        for (s, f) in self.sum.iter_mut().zip(phi) {
            *s += f;
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &TestStatePool) {
        if self.sum.len() < other.sum.len() {
            self.sum.resize(other.sum.len(), 0.0);
        }
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += o;
        }
        self.count += other.count;
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Mean of `theta . phi` over the pool.
    pub fn mean_value(&self, theta: &[f64]) -> f64 {
        dot(theta, &self.mean())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdOutcome {
    pub theta: Vec<f64>,
    pub pool: TestStatePool,
    pub transitions: u64,
    /// Mean real-time reward over the evaluation episodes.
    pub mean_reward: f64,
    /// Set when the first pass diverged and the step size was halved.
    pub restarted: bool,
}

/// Seeds of one policy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalSeeds {
    pub candidate: u64,
    /// Scenario seed shared by every candidate when common scenarios are on.
    pub shared: u64,
}

impl EvalSeeds {
    pub fn streams(&self, episode: usize, common: bool) -> EpisodeStreams {
        let e = episode as u64;
        if common {
            let mut s = EpisodeStreams::new(derive_seed(self.shared, &[e]));
            s.policy = stream(self.candidate, &[purpose::POLICY, e]);
            s
        } else {
            EpisodeStreams::new(derive_seed(self.candidate, &[e]))
        }
    }
}

fn td_pass(
    env: &mut Environment<'_>,
    policy: &dyn DaPolicy,
    config: &LearningConfig,
    seeds: EvalSeeds,
    alpha0: f64,
) -> Option<TdOutcome> {
    let mut td = Td0::new(RT_FEATURE_DIM, config.gamma, alpha0, config.tau);
    let mut pool = TestStatePool::default();
    let mut reward_sum = 0.0;
    let mut reward_count = 0usize;
    for e in 0..config.n_episodes {
        let mut streams = seeds.streams(e, config.common_scenarios);
        let trace = env.rollout(policy, &mut streams);
        let phis: Vec<[f64; RT_FEATURE_DIM]> = trace
            .steps
            .iter()
            .map(|s| rt_features(&s.post.state, env.case))
            .collect();
        for (t, pair) in phis.windows(2).enumerate() {
            td.update(&pair[0], trace.steps[t].reward, Some(&pair[1]));
        }
        if td.sup_norm() > config.theta_bound {
            return None;
        }
        for phi in &phis {
            pool.add(phi);
        }
        reward_sum += trace.steps.iter().map(|s| s.reward).sum::<f64>();
        reward_count += trace.steps.len();
    }
    Some(TdOutcome {
        theta: td.theta,
        pool,
        transitions: td.steps,
        mean_reward: reward_sum / reward_count.max(1) as f64,
        restarted: false,
    })
}

/// Runs `config.n_episodes` episodes under `policy` and fits the real-time
/// value function on consecutive post-decision states. If |theta| leaves
/// `theta_bound`, the evaluation restarts once with half the step size.
pub fn td0_evaluate(
    env: &mut Environment<'_>,
    policy: &dyn DaPolicy,
    config: &LearningConfig,
    seeds: EvalSeeds,
) -> Result<TdOutcome, LearningError> {
    if let Some(out) = td_pass(env, policy, config, seeds, config.alpha0) {
        return Ok(out);
    }
    match td_pass(env, policy, config, seeds, config.alpha0 / 2.0) {
        Some(out) => Ok(TdOutcome { restarted: true, ..out }),
        None => Err(LearningError::Diverged {
            bound: config.theta_bound,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::env::{DaAction, DaState};
    use crate::grid::GridCase;
    use crate::rng::SimRng;

    fn one_hot(i: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        v
    }

    /// s0 -> s1 -> s2 -> end with rewards 0, 0, 1.
    fn train_chain(episodes: usize) -> Td0 {
        let d = LearningConfig::default();
        let mut td = Td0::new(3, d.gamma, d.alpha0, d.tau);
        let rewards = [0.0, 0.0, 1.0];
        for _ in 0..episodes {
            for (s, &r) in rewards.iter().enumerate() {
                let next = (s < 2).then(|| one_hot(s + 1));
                td.update(&one_hot(s), r, next.as_ref().map(|n| &n[..]));
            }
        }
        td
    }

    #[test]
    fn chain_values_match_discounting() {
        let td = train_chain(20_000);
        let expected = [0.9025, 0.95, 1.0];
        for (t, e) in td.theta.iter().zip(&expected) {
            assert!((t - e).abs() < 1e-3, "{:?}", td.theta);
        }
    }

    #[test]
    fn zero_rewards_keep_theta_at_zero() {
        let mut td = Td0::new(3, 0.95, 0.01, 1e4);
        for _ in 0..1000 {
            td.update(&[1.0, 0.5, 0.2], 0.0, Some(&[0.3, 1.0, 0.0]));
        }
        assert!(td.theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn step_size_decays() {
        let mut td = Td0::new(1, 0.9, 0.01, 100.0);
        assert_eq!(td.step_size(), 0.01);
        td.steps = 100;
        assert!((td.step_size() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn pool_mean_value_equals_mean_of_values() {
        let states: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..RT_FEATURE_DIM)
                    .map(|j| (i * 7 + j * 3) as f64 % 5.0 - 1.5)
                    .collect()
            })
            .collect();
        let pool = TestStatePool::from_states(states.iter().map(|s| &s[..]));
        let theta: Vec<f64> = (0..RT_FEATURE_DIM).map(|j| 0.3 * j as f64 - 1.0).collect();
        let direct = states.iter().map(|s| dot(&theta, s)).sum::<f64>() / 5.0;
        assert!((pool.mean_value(&theta) - direct).abs() < 1e-12);
    }

    fn all_on(n: usize) -> impl Fn(&DaState, &mut SimRng) -> DaAction {
        move |_: &DaState, _: &mut SimRng| DaAction {
            subset_index: 0,
            active: vec![true; n],
        }
    }

    #[test]
    fn transition_count_matches_traces() {
        let case = GridCase::builtin("case6").unwrap();
        let scen = ScenarioConfig::default();
        let mut env = Environment::new(&case, &scen);
        let cfg = LearningConfig {
            n_episodes: 4,
            ..LearningConfig::default()
        };
        let seeds = EvalSeeds {
            candidate: 1,
            shared: 2,
        };
        let out = td0_evaluate(&mut env, &all_on(case.generators.len()), &cfg, seeds).unwrap();
        assert_eq!(out.transitions, 4 * 71);
        assert_eq!(out.pool.count, 4 * 72);
        assert!(!out.restarted);
    }

    #[test]
    fn divergence_guard_restarts_then_reports() {
        let case = GridCase::builtin("case6").unwrap();
        let scen = ScenarioConfig::default();
        let mut env = Environment::new(&case, &scen);
        let cfg = LearningConfig {
            n_episodes: 2,
            theta_bound: 1e-6,
            ..LearningConfig::default()
        };
        let seeds = EvalSeeds {
            candidate: 1,
            shared: 2,
        };
        let err = td0_evaluate(&mut env, &all_on(case.generators.len()), &cfg, seeds);
        assert!(matches!(err, Err(LearningError::Diverged { .. })));
    }
}
