//! Day-ahead policy search: TD(0) value fitting of the real-time layer,
//! argmax policies over the action catalog and the cross-entropy loop
//! that alternates the two.

mod cem;
mod iapi;
mod td;

pub use cem::{
    check_convergence, convergence_statistic, cross_entropy_update, cross_entropy_update_scaled, rank_policies,
    SamplingDistribution,
};
pub use iapi::{run_iapi, train, CandidateEvaluator, EnvEvaluator, IapiReport, IterationRecord, PlantedSurrogate};
pub use td::{dot, td0_evaluate, EvalSeeds, Td0, TdOutcome, TestStatePool};

use rand::Rng;
use thiserror::Error;

use crate::config::DemandBasis;
use crate::env::{DaAction, DaPolicy, DaState};
use crate::features::{barrier, ActionCatalog, CatalogError, DemandSummary};
use crate::rng::SimRng;

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("TD(0) diverged twice (|theta| above {bound})")]
    Diverged { bound: f64 },
    #[error("candidate {candidate} of iteration {iteration}: {source}")]
    Candidate {
        iteration: usize,
        candidate: usize,
        #[source]
        source: Box<LearningError>,
    },
    #[error("elite value lists differ in length ({prev} vs {curr})")]
    EliteMismatch { prev: usize, curr: usize },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("policy parameters have length {got}, catalog needs {expected}")]
    Dimension { got: usize, expected: usize },
}

/// Day-ahead policy that commits the catalog subset maximising
/// `psi . Phi(state, action)`.
#[derive(Debug, Clone)]
pub struct ArgmaxPolicy<'a> {
    pub psi: &'a [f64],
    pub catalog: &'a ActionCatalog,
    pub basis: DemandBasis,
}

impl<'a> ArgmaxPolicy<'a> {
    pub fn new(psi: &'a [f64], catalog: &'a ActionCatalog, basis: DemandBasis) -> Result<Self, LearningError> {
        if psi.len() != catalog.len() + 4 {
            return Err(LearningError::Dimension {
                got: psi.len(),
                expected: catalog.len() + 4,
            });
        }
        Ok(Self { psi, catalog, basis })
    }

    /// `psi . Phi` for every action, without building the feature vectors.
    pub fn scores(&self, state: &DaState) -> Vec<f64> {
        let summary = DemandSummary::of(state, self.basis);
        let psi = self.psi;
        self.catalog
            .aggregates
            .iter()
            .enumerate()
            .map(|(k, agg)| {
                let u = if agg.g_max >= summary.peak { psi[1] } else { 0.0 };
                let l = if agg.g_min <= summary.trough { psi[2] } else { 0.0 };
                psi[0] + u + l + psi[3] * barrier(agg, summary.mean) + psi[4 + k]
            })
            .collect()
    }
}

/// Index of the largest score, ties broken uniformly with `rng`.
pub fn argmax_with_ties(scores: &[f64], rng: &mut SimRng) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..scores.len()).filter(|&k| scores[k] == best).collect();
    match tied.len() {
        0 => 0,
        1 => tied[0],
        n => tied[rng.random_range(0..n)],
    }
}

pub fn da_policy_act(policy: &ArgmaxPolicy<'_>, state: &DaState, rng: &mut SimRng) -> DaAction {
    policy.catalog.action(argmax_with_ties(&policy.scores(state), rng))
}

impl DaPolicy for ArgmaxPolicy<'_> {
    fn act(&self, state: &DaState, rng: &mut SimRng) -> DaAction {
        da_policy_act(self, state, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::HOURS_PER_DAY;
    use crate::features::da_features;
    use crate::grid::GridCase;
    use crate::rng::stream;

    fn setup() -> (GridCase, ActionCatalog) {
        let case = GridCase::builtin("case6").unwrap();
        let n = case.generators.len();
        let subsets = (0..5).map(|k| (0..n).map(|i| i <= k + 3).collect()).collect();
        let cat = ActionCatalog::from_subsets(&case, subsets).unwrap();
        (case, cat)
    }

    fn flat(case: &GridCase, total: f64) -> DaState {
        let n = case.n_buses();
        DaState {
            demand_forecast: vec![vec![total / n as f64; n]; HOURS_PER_DAY],
            wind_forecast: vec![vec![0.0; case.wind.len()]; HOURS_PER_DAY],
            day_index: 0,
            profile: 0,
        }
    }

    #[test]
    fn indicator_weight_selects_its_action() {
        let (case, cat) = setup();
        let mut psi = vec![0.0; cat.len() + 4];
        psi[4 + 3] = 1.0;
        let p = ArgmaxPolicy::new(&psi, &cat, DemandBasis::Effective).unwrap();
        let mut rng = stream(1, &[]);
        for d in [50.0, 200.0, 350.0] {
            assert_eq!(p.act(&flat(&case, d), &mut rng).subset_index, 3);
        }
    }

    #[test]
    fn zero_parameters_choose_uniformly() {
        let (case, cat) = setup();
        let psi = vec![0.0; cat.len() + 4];
        let p = ArgmaxPolicy::new(&psi, &cat, DemandBasis::Effective).unwrap();
        let mut rng = stream(2, &[]);
        let mut counts = [0usize; 5];
        let n = 10_000;
        for _ in 0..n {
            counts[p.act(&flat(&case, 200.0), &mut rng).subset_index] += 1;
        }
        let sd = (n as f64 * 0.2 * 0.8).sqrt();
        assert!(
            counts.iter().all(|&c| (c as f64 - 2000.0).abs() < 3.0 * sd),
            "{counts:?}"
        );
    }

    #[test]
    fn scores_match_feature_inner_products() {
        let (case, cat) = setup();
        let psi: Vec<f64> = (0..cat.len() + 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = ArgmaxPolicy::new(&psi, &cat, DemandBasis::Effective).unwrap();
        let s = flat(&case, 230.0);
        for (k, score) in p.scores(&s).iter().enumerate() {
            let phi = da_features(&s, k, &cat, DemandBasis::Effective);
            assert!((score - dot(&psi, &phi)).abs() < 1e-12);
        }
    }

    #[test]
    fn upper_indicator_weight_separates_states() {
        let (case, cat) = setup();
        // prefer small subsets unless they cannot cover the peak
        let mut psi = vec![0.0; cat.len() + 4];
        psi[1] = 10.0;
        for k in 0..cat.len() {
            psi[4 + k] = -(k as f64);
        }
        let p = ArgmaxPolicy::new(&psi, &cat, DemandBasis::Effective).unwrap();
        let mut rng = stream(3, &[]);
        let low = flat(&case, 100.0);
        let high = flat(&case, 300.0);
        let a = p.act(&low, &mut rng).subset_index;
        let b = p.act(&high, &mut rng).subset_index;
        let brute = |s: &DaState| {
            (0..cat.len())
                .map(|k| (k, dot(&psi, &da_features(s, k, &cat, DemandBasis::Effective))))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(a, brute(&low));
        assert_eq!(b, brute(&high));
        assert_ne!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn argmax_set_is_scale_invariant(
            psi in proptest::collection::vec(-3.0f64..3.0, 9),
            c in 0.01f64..100.0,
            demand in 50.0f64..400.0,
        ) {
            let (case, cat) = setup();
            let s = flat(&case, demand);
            let scaled: Vec<f64> = psi.iter().map(|x| x * c).collect();
            let a = ArgmaxPolicy::new(&psi, &cat, DemandBasis::Effective).unwrap().scores(&s);
            let b = ArgmaxPolicy::new(&scaled, &cat, DemandBasis::Effective).unwrap().scores(&s);
            let best = |v: &[f64]| {
                let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (0..v.len()).filter(|&k| v[k] >= m - 1e-9 * m.abs().max(1.0)).collect::<Vec<_>>()
            };
            proptest::prop_assert_eq!(best(&a), best(&b));
        }
    }
}
