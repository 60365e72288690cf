//! Static grid model: buses, lines, controllable and wind generators, the
//! case-file loader and the topology helpers built on top of it.

use std::collections::BTreeSet;
use std::path::Path;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{self, ParseError};

pub type BusId = usize;
pub type LineId = usize;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case file")]
    Io(#[from] std::io::Error),
    #[error("case parse error")]
    Parse(#[from] ParseError),
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("unknown builtin case '{0}'")]
    UnknownBuiltin(String),
    #[error("line {line} out of range (case has {count} lines)")]
    LineOutOfRange { line: LineId, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub has_load: bool,
    /// Relative share of system demand placed on this bus. Zero when the
    /// bus carries no load.
    pub load_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: LineId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Per-unit susceptance on a 100 MVA base.
    pub susceptance: f64,
    /// MW.
    pub thermal_limit: f64,
    /// Failure probability per real-time step while operational.
    pub fail_prob: f64,
    /// Countdown assigned when the line fails.
    pub repair_steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: BusId,
    pub g_min: f64,
    pub g_max: f64,
    /// Currency per MWh.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindGenerator {
    pub id: usize,
    pub bus: BusId,
    pub capacity: f64,
}

/// Immutable network description shared by every simulation worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub name: String,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub wind: Vec<WindGenerator>,
    pub reference_bus: BusId,
}

const SECTIONS: [&str; 5] = ["BUS", "LINE", "GEN", "WIND", "REF"];

const CASE6: &str = include_str!("../data/case6.case");
const RTS96: &str = include_str!("../data/rts96.case");

impl GridCase {
    /// Names accepted by [`GridCase::builtin`].
    pub const BUILTIN: [&'static str; 2] = ["case6", "rts96"];

    pub fn builtin(name: &str) -> Result<Self, CaseError> {
        let text = match name.trim_end_matches(".case") {
            "case6" => CASE6,
            "rts96" => RTS96,
            other => return Err(CaseError::UnknownBuiltin(other.to_string())),
        };
        Self::parse(name.trim_end_matches(".case"), text)
    }

    /// Loads a case from disk. A bare builtin name ("case6", "rts96") that
    /// does not exist as a file resolves to the bundled case.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CaseError> {
        let path = path.as_ref();
        if !path.exists() {
            if let Some(name) = path.to_str() {
                let stem = name.trim_end_matches(".case");
                if Self::BUILTIN.contains(&stem) {
                    return Self::builtin(stem);
                }
            }
        }
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("case").to_string();
        Self::parse(&name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, CaseError> {
        let mut buses = Vec::new();
        let mut lines = Vec::new();
        let mut generators = Vec::new();
        let mut wind = Vec::new();
        let mut reference = None;

        for rec in text::records(text, &SECTIONS)? {
            match rec.section {
                "BUS" => {
                    rec.expect_len(2, 3)?;
                    let id = rec.parse(0, "id")?;
                    let has_load = rec.parse_flag(1, "has_load")?;
                    let load_share = if rec.fields.len() == 3 {
                        rec.parse(2, "load_share")?
                    } else if has_load {
                        1.0
                    } else {
                        0.0
                    };
                    check_index(rec.line, "BUS", id, buses.len())?;
                    buses.push(Bus {
                        id,
                        has_load,
                        load_share,
                    });
                }
                "LINE" => {
                    rec.expect_len(7, 7)?;
                    let id = rec.parse(0, "id")?;
                    check_index(rec.line, "LINE", id, lines.len())?;
                    lines.push(Line {
                        id,
                        from_bus: rec.parse(1, "from_bus")?,
                        to_bus: rec.parse(2, "to_bus")?,
                        susceptance: rec.parse(3, "susceptance")?,
                        thermal_limit: rec.parse(4, "thermal_limit")?,
                        fail_prob: rec.parse(5, "fail_prob")?,
                        repair_steps: rec.parse(6, "repair_steps")?,
                    });
                }
                "GEN" => {
                    rec.expect_len(5, 5)?;
                    let id = rec.parse(0, "id")?;
                    check_index(rec.line, "GEN", id, generators.len())?;
                    generators.push(Generator {
                        id,
                        bus: rec.parse(1, "bus")?,
                        g_min: rec.parse(2, "g_min")?,
                        g_max: rec.parse(3, "g_max")?,
                        cost: rec.parse(4, "cost")?,
                    });
                }
                "WIND" => {
                    rec.expect_len(3, 3)?;
                    let id = rec.parse(0, "id")?;
                    check_index(rec.line, "WIND", id, wind.len())?;
                    wind.push(WindGenerator {
                        id,
                        bus: rec.parse(1, "bus")?,
                        capacity: rec.parse(2, "capacity")?,
                    });
                }
                "REF" => {
                    rec.expect_len(1, 1)?;
                    if reference.is_some() {
                        return Err(ParseError::new(rec.line, "REF given more than once").into());
                    }
                    reference = Some(rec.parse(0, "bus")?);
                }
                _ => unreachable!("section names are checked by the reader"),
            }
        }

        let mut case = GridCase {
            name: name.to_string(),
            buses,
            lines,
            generators,
            wind,
            reference_bus: 0,
        };
        case.reference_bus = match reference {
            Some(r) => r,
            None => case.largest_generator_bus().unwrap_or(0),
        };
        case.validate()?;
        Ok(case)
    }

    fn largest_generator_bus(&self) -> Option<BusId> {
        self.generators
            .iter()
            .fold(None::<&Generator>, |best, g| match best {
                Some(b) if b.g_max >= g.g_max => Some(b),
                _ => Some(g),
            })
            .map(|g| g.bus)
    }

    /// Checks every structural invariant of a case.
    pub fn validate(&self) -> Result<(), CaseError> {
        let n_b = self.buses.len();
        let invalid = |msg: String| Err(CaseError::Invalid(msg));
        if n_b < 2 {
            return invalid(format!("case needs at least 2 buses, found {n_b}"));
        }
        if self.generators.is_empty() {
            return invalid("case has no controllable generator".into());
        }
        for b in &self.buses {
            if !(b.load_share.is_finite() && b.load_share >= 0.0) {
                return invalid(format!("bus {}: load_share must be finite and >= 0", b.id));
            }
            if !b.has_load && b.load_share > 0.0 {
                return invalid(format!("bus {}: load_share set on a bus without load", b.id));
            }
        }
        for l in &self.lines {
            if l.from_bus >= n_b || l.to_bus >= n_b {
                return invalid(format!("line {}: references a missing bus", l.id));
            }
            if l.from_bus == l.to_bus {
                return invalid(format!("line {}: from_bus equals to_bus ({})", l.id, l.from_bus));
            }
            if !(l.susceptance.is_finite() && l.susceptance > 0.0) {
                return invalid(format!("line {}: susceptance must be finite and > 0", l.id));
            }
            if !(l.thermal_limit.is_finite() && l.thermal_limit > 0.0) {
                return invalid(format!("line {}: thermal_limit must be finite and > 0", l.id));
            }
            if !(0.0..=1.0).contains(&l.fail_prob) {
                return invalid(format!("line {}: fail_prob outside [0, 1]", l.id));
            }
            if l.repair_steps < 1 {
                return invalid(format!("line {}: repair_steps must be >= 1", l.id));
            }
        }
        for g in &self.generators {
            if g.bus >= n_b {
                return invalid(format!("generator {}: references a missing bus", g.id));
            }
            if !(g.g_min >= 0.0 && g.g_min <= g.g_max && g.g_max > 0.0 && g.g_max.is_finite()) {
                return invalid(format!(
                    "generator {}: limits must satisfy 0 <= g_min <= g_max, g_max > 0",
                    g.id
                ));
            }
            if !g.cost.is_finite() {
                return invalid(format!("generator {}: cost must be finite", g.id));
            }
        }
        for w in &self.wind {
            if w.bus >= n_b {
                return invalid(format!("wind unit {}: references a missing bus", w.id));
            }
            if !(w.capacity.is_finite() && w.capacity > 0.0) {
                return invalid(format!("wind unit {}: capacity must be finite and > 0", w.id));
            }
        }
        if self.reference_bus >= n_b {
            return invalid(format!("reference bus {} does not exist", self.reference_bus));
        }
        if connected_components(self, &[]).len() != 1 {
            return invalid("base network is disconnected".into());
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn total_g_max(&self) -> f64 {
        self.generators.iter().map(|g| g.g_max).sum()
    }

    pub fn total_wind_capacity(&self) -> f64 {
        self.wind.iter().map(|w| w.capacity).sum()
    }

    /// Renders the case back into the text format accepted by
    /// [`GridCase::parse`].
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.name);
        s.push_str("BUS\n");
        for b in &self.buses {
            let _ = writeln!(s, "{} {} {}", b.id, b.has_load as u8, b.load_share);
        }
        s.push_str("LINE\n");
        for l in &self.lines {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {}",
                l.id, l.from_bus, l.to_bus, l.susceptance, l.thermal_limit, l.fail_prob, l.repair_steps
            );
        }
        s.push_str("GEN\n");
        for g in &self.generators {
            let _ = writeln!(s, "{} {} {} {} {}", g.id, g.bus, g.g_min, g.g_max, g.cost);
        }
        s.push_str("WIND\n");
        for w in &self.wind {
            let _ = writeln!(s, "{} {} {}", w.id, w.bus, w.capacity);
        }
        let _ = writeln!(s, "REF\n{}", self.reference_bus);
        s
    }
}

fn check_index(line: usize, section: &str, id: usize, expected: usize) -> Result<(), ParseError> {
    if id != expected {
        return Err(ParseError::new(
            line,
            format!("{section} ids must be contiguous from 0: expected {expected}, found {id}"),
        ));
    }
    Ok(())
}

/// Partitions the buses into islands joined by lines not in `outages`.
///
/// Islands are returned with their buses in ascending order and sorted by
/// their smallest bus id, so the output is canonical for a given topology.
pub fn connected_components(case: &GridCase, outages: &[LineId]) -> Vec<Vec<BusId>> {
    let out: BTreeSet<LineId> = outages.iter().copied().collect();
    let alive = case.lines.iter().filter(|l| !out.contains(&l.id));
    components_of(case.n_buses(), alive.map(|l| (l.from_bus, l.to_bus)))
}

pub(crate) fn components_of(n_buses: usize, edges: impl Iterator<Item = (BusId, BusId)>) -> Vec<Vec<BusId>> {
    let mut uf = UnionFind::<usize>::new(n_buses);
    for (a, b) in edges {
        uf.union(a, b);
    }
    let labels = uf.into_labeling();
    let mut root_slot = vec![usize::MAX; n_buses];
    let mut islands: Vec<Vec<BusId>> = Vec::new();
    for (bus, &root) in labels.iter().enumerate() {
        if root_slot[root] == usize::MAX {
            root_slot[root] = islands.len();
            islands.push(Vec::new());
        }
        islands[root_slot[root]].push(bus);
    }
    islands
}

/// Marks `line` as failed by setting its countdown to `repair_steps`.
/// Re-failing a line that is already counting down resets its countdown.
pub fn apply_outage(countdown: &[u32], line: LineId, repair_steps: u32) -> Result<Vec<u32>, CaseError> {
    if line >= countdown.len() {
        return Err(CaseError::LineOutOfRange {
            line,
            count: countdown.len(),
        });
    }
    let mut next = countdown.to_vec();
    next[line] = repair_steps;
    Ok(next)
}

/// Lines whose countdown is positive.
pub fn outaged_lines(countdown: &[u32]) -> Vec<LineId> {
    countdown
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Builds a case from `(from, to, susceptance, limit)` tuples with one
    /// generator per listed bus.
    pub fn case_from_edges(n_buses: usize, edges: &[(BusId, BusId, f64, f64)], gens: &[(BusId, f64, f64)]) -> GridCase {
        GridCase {
            name: "fixture".into(),
            buses: (0..n_buses)
                .map(|id| Bus {
                    id,
                    has_load: true,
                    load_share: 1.0,
                })
                .collect(),
            lines: edges
                .iter()
                .enumerate()
                .map(|(id, &(f, t, b, lim))| Line {
                    id,
                    from_bus: f,
                    to_bus: t,
                    susceptance: b,
                    thermal_limit: lim,
                    fail_prob: 5e-4,
                    repair_steps: 5,
                })
                .collect(),
            generators: gens
                .iter()
                .enumerate()
                .map(|(id, &(bus, g_min, g_max))| Generator {
                    id,
                    bus,
                    g_min,
                    g_max,
                    cost: 10.0,
                })
                .collect(),
            wind: Vec::new(),
            reference_bus: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::case_from_edges;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_rts96_counts() {
        let case = GridCase::builtin("rts96").unwrap();
        assert_eq!(case.n_buses(), 73);
        assert_eq!(case.generators.len(), 99);
        assert_eq!(case.n_lines(), 120);
        assert_eq!(case.wind.len(), 9);
    }

    #[test]
    fn builtin_case6_counts() {
        let case = GridCase::builtin("case6").unwrap();
        assert_eq!(case.n_buses(), 6);
        assert_eq!(case.n_lines(), 11);
    }

    #[test]
    fn self_loop_is_rejected() {
        let text = "BUS\n0 1\n1 0\nLINE\n0 0 1 10 100 0 5\n1 1 1 10 100 0 5\nGEN\n0 0 0 100 1\n";
        match GridCase::parse("bad", text) {
            Err(CaseError::Invalid(msg)) => assert!(msg.contains("from_bus equals to_bus")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn disconnected_base_is_rejected() {
        let text = "BUS\n0 1\n1 0\n2 1\nLINE\n0 0 1 10 100 0 5\nGEN\n0 0 0 100 1\n";
        match GridCase::parse("bad", text) {
            Err(CaseError::Invalid(msg)) => assert!(msg.contains("disconnected")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_reports_line_and_field() {
        let text = "BUS\n0 1\n1 0\nLINE\n0 0 1 ten 100 0 5\nGEN\n0 0 0 100 1\n";
        match GridCase::parse("bad", text) {
            Err(CaseError::Parse(e)) => {
                assert_eq!(e.line, 5);
                assert!(e.message.contains("susceptance"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_section_is_rejected() {
        let text = "BUS\n0 1\n1 0\nSHUNT\n0 1\n";
        assert!(matches!(GridCase::parse("bad", text), Err(CaseError::Parse(_))));
    }

    #[test]
    fn reference_defaults_to_largest_generator() {
        let text = "BUS\n0 1\n1 0\n2 0\nLINE\n0 0 1 10 100 0 5\n1 1 2 10 100 0 5\n\
                    GEN\n0 1 0 50 1\n1 2 0 80 1\n";
        let case = GridCase::parse("t", text).unwrap();
        assert_eq!(case.reference_bus, 2);
    }

    #[test]
    fn loading_twice_is_identical() {
        let a = GridCase::builtin("rts96").unwrap();
        let b = GridCase::builtin("rts96").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip() {
        let case = GridCase::builtin("case6").unwrap();
        let again = GridCase::parse("case6", &case.to_text()).unwrap();
        assert_eq!(case, again);
    }

    #[test]
    fn no_outage_gives_single_island() {
        let case = GridCase::builtin("case6").unwrap();
        assert_eq!(connected_components(&case, &[]), vec![(0..6).collect::<Vec<_>>()]);
    }

    #[test]
    fn all_outaged_gives_singletons() {
        let case = GridCase::builtin("case6").unwrap();
        let all: Vec<_> = (0..case.n_lines()).collect();
        let islands = connected_components(&case, &all);
        assert_eq!(islands, (0..6).map(|b| vec![b]).collect::<Vec<_>>());
    }

    #[test]
    fn cut_set_on_six_bus_ring() {
        // ring 0-1-2-3-4-5-0 with a chord 1-4; cutting 2-3, 5-0 and 1-4
        // leaves {0,1,2} and {3,4,5}
        let edges = [
            (0, 1, 1.0, 1.0),
            (1, 2, 1.0, 1.0),
            (2, 3, 1.0, 1.0),
            (3, 4, 1.0, 1.0),
            (4, 5, 1.0, 1.0),
            (5, 0, 1.0, 1.0),
            (1, 4, 1.0, 1.0),
        ];
        let case = case_from_edges(6, &edges, &[(0, 0.0, 10.0)]);
        let islands = connected_components(&case, &[2, 5, 6]);
        assert_eq!(islands, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        let islands = connected_components(&case, &[2, 5]);
        assert_eq!(islands.len(), 1);
    }

    #[test]
    fn apply_outage_sets_countdown() {
        let next = apply_outage(&[0; 6], 3, 5).unwrap();
        assert_eq!(next, vec![0, 0, 0, 5, 0, 0]);
        let next = apply_outage(&next, 1, 5).unwrap();
        assert_eq!(next, vec![0, 5, 0, 5, 0, 0]);
    }

    #[test]
    fn apply_outage_resets_existing_countdown() {
        for c in 1..=5u32 {
            let next = apply_outage(&[0, c, 0], 1, 5).unwrap();
            assert_eq!(next, vec![0, 5, 0]);
        }
    }

    #[test]
    fn apply_outage_out_of_range() {
        assert!(matches!(
            apply_outage(&[0; 3], 3, 5),
            Err(CaseError::LineOutOfRange { line: 3, count: 3 })
        ));
    }

    /// Transitive closure of the adjacency relation, computed the slow way.
    fn reachability(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
        let mut r = vec![vec![false; n]; n];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(a, b) in edges {
            r[a][b] = true;
            r[b][a] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if r[i][k] && r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
        r
    }

    proptest! {
        #[test]
        fn components_match_closure(
            n in 2usize..=12,
            raw_edges in prop::collection::vec((0usize..12, 0usize..12), 1..30),
            mask in prop::collection::vec(any::<bool>(), 30),
        ) {
            let mut edges: Vec<(usize, usize)> = raw_edges
                .into_iter()
                .map(|(a, b)| (a % n, b % n))
                .filter(|(a, b)| a != b)
                .collect();
            // spanning path keeps the base case connected
            edges.extend((1..n).map(|i| (i - 1, i)));
            let tuples: Vec<_> = edges.iter().map(|&(a, b)| (a, b, 1.0, 1.0)).collect();
            let case = case_from_edges(n, &tuples, &[(0, 0.0, 1.0)]);
            let outages: Vec<usize> = (0..edges.len()).filter(|&i| mask[i % mask.len()]).collect();
            let alive: Vec<_> = edges
                .iter()
                .enumerate()
                .filter(|(i, _)| !outages.contains(i))
                .map(|(_, &e)| e)
                .collect();
            let closure = reachability(n, &alive);
            let islands = connected_components(&case, &outages);

            let mut seen = vec![0usize; n];
            for island in &islands {
                for &b in island {
                    seen[b] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));

            let mut island_of = vec![0usize; n];
            for (k, island) in islands.iter().enumerate() {
                for &b in island {
                    island_of[b] = k;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(island_of[i] == island_of[j], closure[i][j]);
                }
            }
        }
    }
}
