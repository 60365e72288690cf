//! Linearised (DC) power flow, feasibility judgement and N-1 screening.
//!
//! Each island of the post-outage network is solved independently. One
//! slack bus per island absorbs the island's injection imbalance; the
//! reduced susceptance matrix is factorised once per topology and reused
//! for every injection profile screened on that topology.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BusId, GridCase, LineId};

/// System base used to turn per-unit susceptances into MW/rad.
pub const BASE_MVA: f64 = 100.0;

/// A limit is violated only when exceeded by more than this many MW.
pub const LIMIT_TOLERANCE_MW: f64 = 1e-6;

/// Cholesky pivots below this fraction of the largest diagonal entry mark
/// the island matrix as numerically singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Islands whose demand stays below this are treated as load-free.
const DEMAND_EPS_MW: f64 = 1e-9;

const SCREEN_CACHE_LIMIT: usize = 2048;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PowerFlowError {
    #[error("island containing bus {bus} has a singular susceptance matrix")]
    Singular { bus: BusId },
}

/// Nodal injections together with the committed generator outputs that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionProfile {
    /// generation + wind - demand, per bus (MW).
    pub net_injection: Vec<f64>,
    /// Demand per bus (MW).
    pub demand: Vec<f64>,
    /// Output of each controllable generator; `None` for uncommitted units.
    pub dispatch: Vec<Option<f64>>,
}

impl InjectionProfile {
    pub fn from_dispatch(case: &GridCase, demand: &[f64], wind: &[f64], generation: &[f64], active: &[bool]) -> Self {
        let mut net: Vec<f64> = demand.iter().map(|d| -d).collect();
        for (w, unit) in wind.iter().zip(&case.wind) {
            net[unit.bus] += w;
        }
        let mut dispatch = Vec::with_capacity(case.generators.len());
        for ((g, unit), &on) in generation.iter().zip(&case.generators).zip(active) {
            if on {
                net[unit.bus] += g;
                dispatch.push(Some(*g));
            } else {
                dispatch.push(None);
            }
        }
        Self {
            net_injection: net,
            demand: demand.to_vec(),
            dispatch,
        }
    }

    /// Raw nodal injections with no committed generator. Negative entries
    /// count as demand.
    pub fn from_net(case: &GridCase, net_injection: Vec<f64>) -> Self {
        let demand = net_injection.iter().map(|p| (-p).max(0.0)).collect();
        Self {
            net_injection,
            demand,
            dispatch: vec![None; case.generators.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    /// Bus voltage angles in radians; each island's slack bus sits at 0.
    pub angles: Vec<f64>,
    /// MW flowing from `from_bus` to `to_bus`; exactly 0 on outaged lines.
    pub line_flows: Vec<f64>,
    pub islands: Vec<Vec<BusId>>,
    pub slack_bus: Vec<BusId>,
    /// MW added at each island's slack bus to balance the island.
    pub slack_adjustment: Vec<f64>,
}

impl FlowSolution {
    /// Diagnostic dump: one `bus,<id>,<angle>` row per bus followed by one
    /// `line,<id>,<flow>` row per line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("element,id,value\n");
        for (i, a) in self.angles.iter().enumerate() {
            let _ = writeln!(s, "bus,{i},{a}");
        }
        for (i, f) in self.line_flows.iter().enumerate() {
            let _ = writeln!(s, "line,{i},{f}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    IslandWithoutGeneration,
    SlackLimitExceeded,
    LineOverload,
    SingularSystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub violation: Option<Violation>,
}

impl FeasibilityVerdict {
    pub const FEASIBLE: Self = Self { violation: None };

    pub fn feasible(&self) -> bool {
        self.violation.is_none()
    }
}

/// Dense lower-triangular Cholesky factor, row-major.
#[derive(Debug, Clone)]
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    fn factor(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
        let floor = PIVOT_TOLERANCE * max_diag.max(f64::MIN_POSITIVE);
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if d.is_nan() || d <= floor {
                return None;
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                a[i * n + j] = 0.0;
            }
        }
        Some(Self { n, l: a })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = x[i];
            let row = &self.l[i * n..i * n + i];
            for (k, lik) in row.iter().enumerate() {
                s -= lik * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().skip(i + 1) {
                s -= self.l[k * n + i] * xk;
            }
            x[i] = s / self.l[i * n + i];
        }
    }
}

#[derive(Debug, Clone)]
struct Island {
    /// Ascending; `buses[0]` is the angle reference of the factorisation.
    buses: Vec<BusId>,
    factor: Option<Cholesky>,
}

/// Island structure and factorised susceptance matrices of one outage set.
#[derive(Debug, Clone)]
pub struct Topology {
    outaged: Vec<bool>,
    islands: Vec<Island>,
    island_of: Vec<usize>,
}

impl Topology {
    pub fn new(case: &GridCase, outages: &[LineId]) -> Self {
        let mut outaged = vec![false; case.n_lines()];
        for &l in outages {
            outaged[l] = true;
        }
        let alive = case.lines.iter().filter(|l| !outaged[l.id]);
        let groups = crate::grid::components_of(case.n_buses(), alive.map(|l| (l.from_bus, l.to_bus)));

        let n_b = case.n_buses();
        let mut island_of = vec![0; n_b];
        let mut local = vec![0; n_b];
        for (k, buses) in groups.iter().enumerate() {
            for (pos, &b) in buses.iter().enumerate() {
                island_of[b] = k;
                local[b] = pos;
            }
        }

        let mut matrices: Vec<Vec<f64>> = groups
            .iter()
            .map(|buses| {
                let m = buses.len() - 1;
                vec![0.0; m * m]
            })
            .collect();
        for line in case.lines.iter().filter(|l| !outaged[l.id]) {
            let k = island_of[line.from_bus];
            let m = groups[k].len() - 1;
            let b = line.susceptance;
            // reduced index: local position minus the dropped reference
            let i = local[line.from_bus].checked_sub(1);
            let j = local[line.to_bus].checked_sub(1);
            let a = &mut matrices[k];
            if let Some(i) = i {
                a[i * m + i] += b;
            }
            if let Some(j) = j {
                a[j * m + j] += b;
            }
            if let (Some(i), Some(j)) = (i, j) {
                a[i * m + j] -= b;
                a[j * m + i] -= b;
            }
        }

        let islands = groups
            .into_iter()
            .zip(matrices)
            .map(|(buses, a)| {
                let m = buses.len() - 1;
                Island {
                    buses,
                    factor: Cholesky::factor(m, a),
                }
            })
            .collect();

        Self {
            outaged,
            islands,
            island_of,
        }
    }

    pub fn islands(&self) -> Vec<Vec<BusId>> {
        self.islands.iter().map(|i| i.buses.clone()).collect()
    }

    /// Per island: index of the slack generator, if any unit is committed.
    fn slack_generators(&self, case: &GridCase, inj: &InjectionProfile) -> Vec<Option<usize>> {
        let mut best: Vec<Option<usize>> = vec![None; self.islands.len()];
        for (gi, g) in case.generators.iter().enumerate() {
            if inj.dispatch[gi].is_none() {
                continue;
            }
            let k = self.island_of[g.bus];
            let replace = match best[k] {
                None => true,
                Some(cur) => {
                    let c = &case.generators[cur];
                    g.g_max > c.g_max || (g.g_max == c.g_max && g.bus < c.bus)
                }
            };
            if replace {
                best[k] = Some(gi);
            }
        }
        best
    }

    /// Solves island `k` for angles (reference = lowest bus id at 0) with
    /// the imbalance placed at `slack`. Angles are written into `angles`
    /// for the island's buses; `work` is scratch space.
    fn solve_island(
        &self,
        k: usize,
        net: &[f64],
        slack: BusId,
        imbalance: f64,
        angles: &mut [f64],
        work: &mut Vec<f64>,
    ) -> Result<(), PowerFlowError> {
        let island = &self.islands[k];
        let reference = island.buses[0];
        angles[reference] = 0.0;
        if island.buses.len() == 1 {
            return Ok(());
        }
        let factor = island
            .factor
            .as_ref()
            .ok_or(PowerFlowError::Singular { bus: reference })?;
        work.clear();
        work.extend(island.buses[1..].iter().map(|&b| {
            let p = if b == slack { net[b] - imbalance } else { net[b] };
            p / BASE_MVA
        }));
        factor.solve_in_place(work);
        for (&b, &theta) in island.buses[1..].iter().zip(work.iter()) {
            angles[b] = theta;
        }
        // shift so the slack bus is the angle reference
        let shift = angles[slack];
        if shift != 0.0 {
            for &b in &island.buses {
                angles[b] -= shift;
            }
        }
        Ok(())
    }

    fn flow(&self, case: &GridCase, line: LineId, angles: &[f64]) -> f64 {
        if self.outaged[line] {
            return 0.0;
        }
        let l = &case.lines[line];
        BASE_MVA * l.susceptance * (angles[l.from_bus] - angles[l.to_bus])
    }

    pub fn solve(&self, case: &GridCase, inj: &InjectionProfile) -> Result<FlowSolution, PowerFlowError> {
        let slack_gens = self.slack_generators(case, inj);
        let mut angles = vec![0.0; case.n_buses()];
        let mut work = Vec::new();
        let mut slack_bus = Vec::with_capacity(self.islands.len());
        let mut slack_adjustment = Vec::with_capacity(self.islands.len());
        for (k, island) in self.islands.iter().enumerate() {
            let imbalance: f64 = island.buses.iter().map(|&b| inj.net_injection[b]).sum();
            let slack = match slack_gens[k] {
                Some(g) => case.generators[g].bus,
                None => island.buses[0],
            };
            self.solve_island(k, &inj.net_injection, slack, imbalance, &mut angles, &mut work)?;
            slack_bus.push(slack);
            slack_adjustment.push(-imbalance);
        }
        let line_flows = (0..case.n_lines()).map(|l| self.flow(case, l, &angles)).collect();
        Ok(FlowSolution {
            angles,
            line_flows,
            islands: self.islands(),
            slack_bus,
            slack_adjustment,
        })
    }

    pub fn check(&self, case: &GridCase, inj: &InjectionProfile) -> FeasibilityVerdict {
        let mut angles = vec![0.0; case.n_buses()];
        let mut work = Vec::new();
        self.check_with(case, inj, &mut angles, &mut work)
    }

    fn check_with(
        &self,
        case: &GridCase,
        inj: &InjectionProfile,
        angles: &mut [f64],
        work: &mut Vec<f64>,
    ) -> FeasibilityVerdict {
        let verdict = |v| FeasibilityVerdict { violation: Some(v) };
        let slack_gens = self.slack_generators(case, inj);

        // (a) every island carrying load needs a committed generator
        for (k, island) in self.islands.iter().enumerate() {
            if slack_gens[k].is_none() {
                let demand: f64 = island.buses.iter().map(|&b| inj.demand[b]).sum();
                if demand > DEMAND_EPS_MW {
                    return verdict(Violation::IslandWithoutGeneration);
                }
            }
        }
        for (k, island) in self.islands.iter().enumerate() {
            let imbalance: f64 = island.buses.iter().map(|&b| inj.net_injection[b]).sum();
            let slack = match slack_gens[k] {
                Some(g) => {
                    // (b) slack unit stays inside its limits
                    let unit = &case.generators[g];
                    let out = inj.dispatch[g].unwrap_or(0.0) - imbalance;
                    if out > unit.g_max + LIMIT_TOLERANCE_MW || out < unit.g_min - LIMIT_TOLERANCE_MW {
                        return verdict(Violation::SlackLimitExceeded);
                    }
                    unit.bus
                }
                // load-free island: surplus wind is spilled at the reference
                None => island.buses[0],
            };
            // (d) the linear solve succeeds
            if self
                .solve_island(k, &inj.net_injection, slack, imbalance, angles, work)
                .is_err()
            {
                return verdict(Violation::SingularSystem);
            }
        }
        // (c) thermal limits
        for (l, line) in case.lines.iter().enumerate() {
            if self.flow(case, l, angles).abs() > line.thermal_limit + LIMIT_TOLERANCE_MW {
                return verdict(Violation::LineOverload);
            }
        }
        FeasibilityVerdict::FEASIBLE
    }
}

/// DC power flow for the network with `outages` removed.
pub fn solve_dc(
    case: &GridCase,
    outages: &[LineId],
    injections: &InjectionProfile,
) -> Result<FlowSolution, PowerFlowError> {
    Topology::new(case, outages).solve(case, injections)
}

pub fn check_feasibility(case: &GridCase, outages: &[LineId], injections: &InjectionProfile) -> FeasibilityVerdict {
    Topology::new(case, outages).check(case, injections)
}

/// Fraction of single-line contingency tests passed. The contingency list
/// is every line of the case; base outages are the lines with a positive
/// countdown plus `realized_outage`.
pub fn n1_reward(
    case: &GridCase,
    countdown: &[u32],
    injections: &InjectionProfile,
    realized_outage: Option<LineId>,
) -> f64 {
    ContingencyScreener::new().n1_reward(case, countdown, injections, realized_outage)
}

/// Outcome of every contingency test for one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub verdicts: Vec<FeasibilityVerdict>,
}

impl ScreeningReport {
    pub fn reward(&self) -> f64 {
        if self.verdicts.is_empty() {
            return 1.0;
        }
        let passed = self.verdicts.iter().filter(|v| v.feasible()).count();
        passed as f64 / self.verdicts.len() as f64
    }
}

/// N-1 screener that keeps factorised topologies keyed by their outage set.
///
/// One screener belongs to one worker; results never depend on what the
/// cache holds.
#[derive(Debug, Default)]
pub struct ContingencyScreener {
    cache: HashMap<Vec<LineId>, Topology>,
    angles: Vec<f64>,
    work: Vec<f64>,
}

impl ContingencyScreener {
    pub fn new() -> Self {
        Self::default()
    }

    fn base_outages(countdown: &[u32], realized: Option<LineId>) -> Vec<LineId> {
        let mut base = crate::grid::outaged_lines(countdown);
        if let Some(r) = realized {
            if let Err(pos) = base.binary_search(&r) {
                base.insert(pos, r);
            }
        }
        base
    }

    fn verdict_for(&mut self, case: &GridCase, key: Vec<LineId>, inj: &InjectionProfile) -> FeasibilityVerdict {
        if self.cache.len() >= SCREEN_CACHE_LIMIT && !self.cache.contains_key(&key) {
            self.cache.clear();
        }
        let topo = self.cache.entry(key).or_insert_with_key(|k| Topology::new(case, k));
        self.angles.resize(case.n_buses(), 0.0);
        topo.check_with(case, inj, &mut self.angles, &mut self.work)
    }

    pub fn screen(
        &mut self,
        case: &GridCase,
        countdown: &[u32],
        injections: &InjectionProfile,
        realized_outage: Option<LineId>,
    ) -> ScreeningReport {
        let base = Self::base_outages(countdown, realized_outage);
        let verdicts = (0..case.n_lines())
            .map(|c| {
                let key = match base.binary_search(&c) {
                    Ok(_) => base.clone(),
                    Err(pos) => {
                        let mut k = base.clone();
                        k.insert(pos, c);
                        k
                    }
                };
                self.verdict_for(case, key, injections)
            })
            .collect();
        ScreeningReport { verdicts }
    }

    pub fn n1_reward(
        &mut self,
        case: &GridCase,
        countdown: &[u32],
        injections: &InjectionProfile,
        realized_outage: Option<LineId>,
    ) -> f64 {
        self.screen(case, countdown, injections, realized_outage).reward()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures::case_from_edges;

    fn triangle(limit01: f64) -> GridCase {
        case_from_edges(
            3,
            &[(0, 1, 10.0, limit01), (0, 2, 10.0, 500.0), (1, 2, 10.0, 500.0)],
            &[(0, 0.0, 200.0)],
        )
    }

    fn triangle_injection(case: &GridCase) -> InjectionProfile {
        InjectionProfile::from_dispatch(case, &[0.0, 45.0, 45.0], &[], &[90.0], &[true])
    }

    #[test]
    fn two_bus_flow_is_forced() {
        let case = case_from_edges(2, &[(0, 1, 10.0, 500.0)], &[(0, 0.0, 200.0)]);
        let sol = solve_dc(&case, &[], &InjectionProfile::from_net(&case, vec![100.0, -100.0])).unwrap();
        assert!((sol.line_flows[0] - 100.0).abs() < 1e-9);
        assert_eq!(sol.angles[0], 0.0);
    }

    #[test]
    fn triangle_flows() {
        let case = triangle(500.0);
        let sol = solve_dc(&case, &[], &triangle_injection(&case)).unwrap();
        let expect = [45.0, 45.0, 0.0];
        for (f, e) in sol.line_flows.iter().zip(expect) {
            assert!((f - e).abs() < 1e-9, "{f} vs {e}");
        }
        assert_eq!(sol.slack_bus, vec![0]);
        assert!(sol.slack_adjustment[0].abs() < 1e-12);
    }

    #[test]
    fn zero_injection_gives_zero_flows() {
        let case = GridCase::builtin("case6").unwrap();
        let sol = solve_dc(&case, &[], &InjectionProfile::from_net(&case, vec![0.0; 6])).unwrap();
        assert!(sol.line_flows.iter().all(|&f| f == 0.0));
        assert!(sol.angles.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn outaged_line_carries_nothing() {
        let case = triangle(500.0);
        let sol = solve_dc(&case, &[1], &triangle_injection(&case)).unwrap();
        assert_eq!(sol.line_flows[1], 0.0);
        // all 90 MW leave bus 0 through line 0; 45 continue to bus 2
        assert!((sol.line_flows[0] - 90.0).abs() < 1e-9);
        assert!((sol.line_flows[2] - 45.0).abs() < 1e-9);
    }

    #[test]
    fn slack_absorbs_imbalance() {
        let case = triangle(500.0);
        let inj = InjectionProfile::from_dispatch(&case, &[0.0, 50.0, 50.0], &[], &[90.0], &[true]);
        let sol = solve_dc(&case, &[], &inj).unwrap();
        assert!((sol.slack_adjustment[0] - 10.0).abs() < 1e-12);
        let out_of_0 = sol.line_flows[0] + sol.line_flows[1];
        assert!((out_of_0 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn generous_limits_are_feasible() {
        let case = triangle(500.0);
        assert!(check_feasibility(&case, &[], &triangle_injection(&case)).feasible());
    }

    #[test]
    fn overload_detected() {
        let case = triangle(40.0);
        let v = check_feasibility(&case, &[], &triangle_injection(&case));
        assert_eq!(v.violation, Some(Violation::LineOverload));
        assert!(!v.feasible());
    }

    #[test]
    fn limit_is_not_flapping_at_equality() {
        let case = triangle(45.0);
        assert!(check_feasibility(&case, &[], &triangle_injection(&case)).feasible());
    }

    #[test]
    fn isolated_load_bus() {
        let case = triangle(500.0);
        let v = check_feasibility(&case, &[1, 2], &triangle_injection(&case));
        assert_eq!(v.violation, Some(Violation::IslandWithoutGeneration));
    }

    #[test]
    fn slack_limit_exceeded() {
        let case = case_from_edges(
            3,
            &[(0, 1, 10.0, 500.0), (0, 2, 10.0, 500.0), (1, 2, 10.0, 500.0)],
            &[(0, 0.0, 95.0)],
        );
        let inj = InjectionProfile::from_dispatch(&case, &[0.0, 50.0, 50.0], &[], &[90.0], &[true]);
        let v = check_feasibility(&case, &[], &inj);
        assert_eq!(v.violation, Some(Violation::SlackLimitExceeded));
    }

    #[test]
    fn load_free_island_spills_wind() {
        let mut case = triangle(500.0);
        case.wind.push(crate::grid::WindGenerator {
            id: 0,
            bus: 2,
            capacity: 50.0,
        });
        case.buses[2].has_load = false;
        let inj = InjectionProfile::from_dispatch(&case, &[0.0, 45.0, 0.0], &[20.0], &[45.0], &[true]);
        assert!(check_feasibility(&case, &[1, 2], &inj).feasible());
    }

    #[test]
    fn singular_cholesky_is_reported() {
        assert!(Cholesky::factor(2, vec![1.0, 1.0, 1.0, 1.0]).is_none());
        assert!(Cholesky::factor(2, vec![2.0, -1.0, -1.0, 2.0]).is_some());
    }

    #[test]
    fn reward_counts_passed_tests() {
        let r = ScreeningReport {
            verdicts: (0..120)
                .map(|i| FeasibilityVerdict {
                    violation: (i == 7).then_some(Violation::LineOverload),
                })
                .collect(),
        };
        assert_eq!(r.reward(), 119.0 / 120.0);
    }

    #[test]
    fn screener_matches_fresh_topologies() {
        let case = triangle(60.0);
        let inj = triangle_injection(&case);
        let mut screener = ContingencyScreener::new();
        for countdown in [[0, 0, 0], [3, 0, 0], [0, 0, 1]] {
            for realized in [None, Some(0), Some(2)] {
                let cached = screener.n1_reward(&case, &countdown, &inj, realized);
                let fresh = n1_reward(&case, &countdown, &inj, realized);
                assert_eq!(cached, fresh);
            }
        }
    }

    #[test]
    fn islands_are_sorted_by_lowest_bus() {
        let case = triangle(500.0);
        let topo = Topology::new(&case, &[0, 1]);
        assert_eq!(topo.islands(), vec![vec![0], vec![1, 2]]);
    }

    #[test]
    fn csv_dump_lists_buses_and_lines() {
        let case = triangle(500.0);
        let sol = solve_dc(&case, &[], &triangle_injection(&case)).unwrap();
        let csv = sol.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 + 3);
        assert!(csv.contains("line,0,"));
    }
}
