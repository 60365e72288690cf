//! Heuristic day-ahead baselines and seeded rollout evaluation.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DemandBasis, ScenarioConfig};
use crate::env::{DaAction, DaPolicy, DaState, Environment, EpisodeTrace};
use crate::features::{ActionCatalog, DemandSummary};
use crate::grid::GridCase;
use crate::learning::{ArgmaxPolicy, IapiReport};
use crate::parallel::ordered_map;
use crate::rng::{derive_seed, purpose, EpisodeStreams, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Random,
    Cost,
    Elastic,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Random, BaselineKind::Cost, BaselineKind::Elastic];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Cost => "cost",
            BaselineKind::Elastic => "elastic",
        }
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(BaselineKind::Random),
            "cost" => Ok(BaselineKind::Cost),
            "elastic" => Ok(BaselineKind::Elastic),
            other => Err(format!("unknown baseline '{other}'")),
        }
    }
}

/// Subsets whose capacity covers the peak hourly effective demand.
pub fn eligible_subsets(state: &DaState, catalog: &ActionCatalog) -> Vec<usize> {
    let peak = DemandSummary::of(state, DemandBasis::Effective).peak;
    (0..catalog.len())
        .filter(|&k| catalog.aggregates[k].g_max >= peak)
        .collect()
}

fn best_by(candidates: &[usize], key: impl Fn(usize) -> f64) -> usize {
    let mut best = candidates[0];
    for &k in &candidates[1..] {
        if key(k) > key(best) {
            best = k;
        }
    }
    best
}

/// Random picks uniformly among eligible subsets, Cost the one with the
/// lowest capacity-weighted cost, Elastic the one with the largest
/// capacity to minimum-output ratio. Without an eligible subset every kind
/// falls back to the largest-capacity subset.
pub fn baseline_act(state: &DaState, kind: BaselineKind, catalog: &ActionCatalog, rng: &mut SimRng) -> DaAction {
    let eligible = eligible_subsets(state, catalog);
    let agg = &catalog.aggregates;
    let index = if eligible.is_empty() {
        let all: Vec<usize> = (0..catalog.len()).collect();
        best_by(&all, |k| agg[k].g_max)
    } else {
        match kind {
            BaselineKind::Random => eligible[rng.random_range(0..eligible.len())],
            BaselineKind::Cost => best_by(&eligible, |k| -agg[k].cost),
            BaselineKind::Elastic => best_by(&eligible, |k| agg[k].elasticity),
        }
    };
    catalog.action(index)
}

#[derive(Debug, Clone)]
pub struct BaselinePolicy<'a> {
    pub kind: BaselineKind,
    pub catalog: &'a ActionCatalog,
}

impl DaPolicy for BaselinePolicy<'_> {
    fn act(&self, state: &DaState, rng: &mut SimRng) -> DaAction {
        baseline_act(state, self.kind, self.catalog, rng)
    }
}

/// Argmax policy that owns its parameters, e.g. loaded from a training
/// report.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedPolicy {
    pub psi: Vec<f64>,
    pub catalog: ActionCatalog,
    pub basis: DemandBasis,
}

impl LearnedPolicy {
    pub fn from_report(report: &IapiReport) -> Option<Self> {
        Some(Self {
            psi: report.psi_star.clone(),
            catalog: report.catalog.clone()?,
            basis: report.demand_basis,
        })
    }
}

impl DaPolicy for LearnedPolicy {
    fn act(&self, state: &DaState, rng: &mut SimRng) -> DaAction {
        let policy = ArgmaxPolicy {
            psi: &self.psi,
            catalog: &self.catalog,
            basis: self.basis,
        };
        policy.act(state, rng)
    }
}

/// Linear-interpolation quantile of sorted data (position q * (n - 1)).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    /// Mean real-time reward of each episode, in episode order.
    pub episode_means: Vec<f64>,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl RolloutStats {
    pub fn from_episode_means(episode_means: Vec<f64>) -> Self {
        let mut sorted = episode_means.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            episode_means,
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    pub fn episodes_csv(&self) -> String {
        let mut out = String::from("episode,mean_reward\n");
        for (i, m) in self.episode_means.iter().enumerate() {
            let _ = writeln!(out, "{i},{m}");
        }
        out
    }

    pub fn summary_header() -> &'static str {
        "policy,episodes,mean,q1,median,q3,min,max\n"
    }

    pub fn summary_row(&self, name: &str) -> String {
        format!(
            "{name},{},{},{},{},{},{},{}\n",
            self.episode_means.len(),
            self.mean,
            self.q1,
            self.median,
            self.q3,
            self.min,
            self.max
        )
    }
}

/// Streams of evaluation episode `episode`. Identical for every policy, so
/// policies are compared on the same forecasts and failures.
pub fn evaluation_streams(seed: u64, episode: usize) -> EpisodeStreams {
    EpisodeStreams::new(derive_seed(seed, &[purpose::EVALUATION, episode as u64]))
}

pub fn rollout_episode(
    case: &GridCase,
    scenario: &ScenarioConfig,
    policy: &dyn DaPolicy,
    seed: u64,
    episode: usize,
) -> EpisodeTrace {
    let mut env = Environment::new(case, scenario);
    env.rollout(policy, &mut evaluation_streams(seed, episode))
}

/// Runs `episodes` seeded episodes of `policy` on `workers` threads.
pub fn evaluate_policy(
    case: &GridCase,
    scenario: &ScenarioConfig,
    policy: &(dyn DaPolicy + Sync),
    episodes: usize,
    seed: u64,
    workers: usize,
) -> RolloutStats {
    assert!(episodes >= 1, "evaluation needs at least one episode");
    let means = ordered_map(workers, episodes, |e| {
        rollout_episode(case, scenario, policy, seed, e).mean_reward()
    });
    RolloutStats::from_episode_means(means)
}
