//! Feature maps for the day-ahead policy and the real-time value function,
//! and the fixed catalog of generator subsets the day-ahead policy picks
//! from.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DemandBasis, LearningConfig};
use crate::env::{DaAction, DaState, ProfileLibrary, RtState, HOURS_PER_DAY};
use crate::grid::GridCase;
use crate::rng::SimRng;
use crate::text::{records, ParseError};

/// Floor on the barrier margins.
pub const BARRIER_FLOOR: f64 = 1e-3;
/// Lower bound on the minimum-output denominator of the elasticity ratio, MW.
pub const ELASTICITY_KAPPA: f64 = 1.0;
pub const RT_FEATURE_DIM: usize = 10;

const SUBSET_ATTEMPTS: usize = 200;
const CATALOG_ATTEMPTS: usize = 50;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog needs at least one subset")]
    Empty,
    #[error("cannot draw {wanted} distinct subsets from {units} generators")]
    TooFewDistinct { wanted: usize, units: usize },
    #[error("no catalog covering demand range [{min:.1}, {max:.1}] MW after {attempts} attempts")]
    Coverage { min: f64, max: f64, attempts: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("catalog row has {got} entries, case has {expected} generators")]
    Width { got: usize, expected: usize },
    #[error("catalog subset {0} commits no generator")]
    EmptySubset(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetAggregate {
    pub g_min: f64,
    pub g_max: f64,
    /// Capacity-weighted cost, sum of cost * g_max.
    pub cost: f64,
    /// g_max / max(g_min, kappa).
    pub elasticity: f64,
}

impl SubsetAggregate {
    pub fn of(case: &GridCase, active: &[bool]) -> Self {
        let mut agg = SubsetAggregate {
            g_min: 0.0,
            g_max: 0.0,
            cost: 0.0,
            elasticity: 0.0,
        };
        for (g, _) in case.generators.iter().zip(active).filter(|(_, &on)| on) {
            agg.g_min += g.g_min;
            agg.g_max += g.g_max;
            agg.cost += g.cost * g.g_max;
        }
        agg.elasticity = agg.g_max / agg.g_min.max(ELASTICITY_KAPPA);
        agg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCatalog {
    pub subsets: Vec<Vec<bool>>,
    pub aggregates: Vec<SubsetAggregate>,
}

impl ActionCatalog {
    pub fn from_subsets(case: &GridCase, subsets: Vec<Vec<bool>>) -> Result<Self, CatalogError> {
        if subsets.is_empty() {
            return Err(CatalogError::Empty);
        }
        for (i, s) in subsets.iter().enumerate() {
            if s.len() != case.generators.len() {
                return Err(CatalogError::Width {
                    got: s.len(),
                    expected: case.generators.len(),
                });
            }
            if !s.iter().any(|&b| b) {
                return Err(CatalogError::EmptySubset(i));
            }
        }
        let aggregates = subsets.iter().map(|s| SubsetAggregate::of(case, s)).collect();
        Ok(Self { subsets, aggregates })
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn action(&self, index: usize) -> DaAction {
        DaAction {
            subset_index: index,
            active: self.subsets[index].clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("SUBSET\n");
        for s in &self.subsets {
            let row: Vec<&str> = s.iter().map(|&b| if b { "1" } else { "0" }).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(case: &GridCase, text: &str) -> Result<Self, CatalogError> {
        let mut subsets = Vec::new();
        for rec in records(text, &["SUBSET"])? {
            let row = (0..rec.fields.len())
                .map(|i| rec.parse_flag(i, "active"))
                .collect::<Result<Vec<_>, _>>()?;
            subsets.push(row);
        }
        Self::from_subsets(case, subsets)
    }
}

/// Draws `config.n_actions` distinct subsets whose capacities are spread
/// between `catalog_low` times the smallest daily peak and `catalog_high`
/// times the largest daily peak of the profile library. The last subset
/// commits every unit.
///
/// Each subset is grown from a random unit order until its capacity reaches
/// its target; a target that keeps reproducing existing subsets is lowered
/// step by step. The catalog is redrawn if no subset can serve both the
/// largest and the smallest hourly demand of the library.
pub fn build_action_catalog(
    case: &GridCase,
    library: &ProfileLibrary,
    config: &LearningConfig,
    rng: &mut SimRng,
) -> Result<ActionCatalog, CatalogError> {
    let k = config.n_actions;
    if k == 0 {
        return Err(CatalogError::Empty);
    }
    let n = case.generators.len();
    if n < 63 && k as u64 > (1u64 << n) - 1 {
        return Err(CatalogError::TooFewDistinct { wanted: k, units: n });
    }
    let total = case.total_g_max();
    let max_demand = library.max_effective_demand();
    let min_demand = library.min_effective_demand();
    let lo = (config.catalog_low * library.min_peak_effective_demand()).min(total);
    let hi = (config.catalog_high * max_demand).clamp(lo, total);

    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..CATALOG_ATTEMPTS {
        let mut subsets: Vec<Vec<bool>> = Vec::with_capacity(k);
        for j in 0..k {
            let mut target = if j + 1 == k {
                total
            } else if k > 2 {
                lo + (hi - lo) * j as f64 / (k - 2) as f64
            } else {
                hi
            };
            let mut drawn = None;
            for attempt in 0..SUBSET_ATTEMPTS {
                if attempt > 0 && attempt % 20 == 0 {
                    // near the total capacity few distinct subsets exist
                    target *= 0.95;
                }
                order.shuffle(rng);
                let mut active = vec![false; n];
                let mut cap = 0.0;
                for &i in &order {
                    if cap >= target {
                        break;
                    }
                    active[i] = true;
                    cap += case.generators[i].g_max;
                }
                if !subsets.contains(&active) {
                    drawn = Some(active);
                    break;
                }
            }
            let Some(active) = drawn else { break };
            subsets.push(active);
        }
        if subsets.len() < k {
            continue;
        }
        let catalog = ActionCatalog::from_subsets(case, subsets)?;
        let covers_max = catalog.aggregates.iter().any(|a| a.g_max >= max_demand);
        let covers_min = catalog
            .aggregates
            .iter()
            .any(|a| a.g_min <= min_demand && a.g_max >= min_demand);
        if covers_max && covers_min {
            return Ok(catalog);
        }
    }
    Err(CatalogError::Coverage {
        min: min_demand,
        max: max_demand,
        attempts: CATALOG_ATTEMPTS,
    })
}

/// Demand statistics of a day-ahead state that the policy features use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandSummary {
    pub peak: f64,
    pub trough: f64,
    pub mean: f64,
}

impl DemandSummary {
    pub fn of(state: &DaState, basis: DemandBasis) -> Self {
        let hourly: Vec<f64> = (0..HOURS_PER_DAY)
            .map(|h| match basis {
                DemandBasis::Effective => state.effective_demand(h),
                DemandBasis::Raw => state.total_demand(h),
            })
            .collect();
        Self {
            peak: hourly.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            trough: hourly.iter().copied().fold(f64::INFINITY, f64::min),
            mean: hourly.iter().sum::<f64>() / hourly.len() as f64,
        }
    }
}

/// Log barrier on the distance of mean demand from the subset's limits.
pub fn barrier(agg: &SubsetAggregate, mean_demand: f64) -> f64 {
    let upper = (agg.g_max - mean_demand) / agg.g_max;
    let lower = (mean_demand - agg.g_min) / agg.g_max;
    upper.max(BARRIER_FLOOR).ln() + lower.max(BARRIER_FLOOR).ln()
}

pub fn da_features_from(summary: &DemandSummary, index: usize, catalog: &ActionCatalog) -> Vec<f64> {
    let agg = &catalog.aggregates[index];
    let mut phi = vec![0.0; catalog.len() + 4];
    phi[0] = 1.0;
    phi[1] = if agg.g_max >= summary.peak { 1.0 } else { 0.0 };
    phi[2] = if agg.g_min <= summary.trough { 1.0 } else { 0.0 };
    phi[3] = barrier(agg, summary.mean);
    phi[4 + index] = 1.0;
    phi
}

/// `(1, U, L, P, one-hot(index))`.
pub fn da_features(state: &DaState, index: usize, catalog: &ActionCatalog, basis: DemandBasis) -> Vec<f64> {
    da_features_from(&DemandSummary::of(state, basis), index, catalog)
}

/// Shannon entropy (natural log) of the normalised positive entries.
pub fn entropy(values: &[f64]) -> f64 {
    let total: f64 = values.iter().filter(|&&v| v > 0.0).sum();
    if total <= 0.0 {
        return 0.0;
    }
    -values
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let p = v / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Degree-2 monomials of (D, demand entropy, generation entropy), with D the
/// effective demand as a fraction of total capacity.
pub fn rt_features(state: &RtState, case: &GridCase) -> [f64; RT_FEATURE_DIM] {
    let d = (state.total_demand() - state.total_wind()) / case.total_g_max();
    let e_d = entropy(&state.demand);
    let mut per_bus = vec![0.0; case.n_buses()];
    for (g, &p) in case.generators.iter().zip(&state.generation) {
        per_bus[g.bus] += p;
    }
    let e_g = entropy(&per_bus);
    [
        1.0,
        d,
        e_d,
        e_g,
        d * d,
        e_d * e_d,
        e_g * e_g,
        d * e_d,
        d * e_g,
        e_d * e_g,
    ]
}
