//! Operating-point files: nodal demand, wind output, committed dispatch and
//! outaged lines for a one-shot screen.
//!
//! ```text
//! DEMAND
//! # bus mw
//! 3 70
//! WIND
//! # id mw
//! 0 12
//! GEN
//! # id mw (listed units are committed)
//! 3 40
//! OUTAGE
//! # line
//! 9
//! ```
//!
//! Buses and wind farms that are not listed take 0 MW; generators that are
//! not listed are uncommitted.

use std::fmt::Write as _;

use crate::env::RtPostState;
use crate::grid::{GridCase, LineId};
use crate::powerflow::InjectionProfile;
use crate::text::{records, ParseError, Record};

const SECTIONS: [&str; 4] = ["DEMAND", "WIND", "GEN", "OUTAGE"];

const HEALTHY: [(&str, &str); 2] = [
    ("case6", include_str!("../data/case6-base.inj")),
    ("rts96", include_str!("../data/rts96-base.inj")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub demand: Vec<f64>,
    pub wind: Vec<f64>,
    pub generation: Vec<f64>,
    pub active: Vec<bool>,
    pub outages: Vec<LineId>,
}

fn index(rec: &Record<'_>, what: &str, len: usize) -> Result<usize, ParseError> {
    let i: usize = rec.parse(0, what)?;
    if i >= len {
        return Err(ParseError::new(
            rec.line,
            format!("{} {what} {i} out of range (case has {len})", rec.section),
        ));
    }
    Ok(i)
}

impl OperatingPoint {
    pub fn parse(case: &GridCase, text: &str) -> Result<Self, ParseError> {
        let mut p = Self {
            demand: vec![0.0; case.n_buses()],
            wind: vec![0.0; case.wind.len()],
            generation: vec![0.0; case.generators.len()],
            active: vec![false; case.generators.len()],
            outages: Vec::new(),
        };
        for rec in records(text, &SECTIONS)? {
            match rec.section {
                "DEMAND" => {
                    rec.expect_len(2, 2)?;
                    let b = index(&rec, "bus", case.n_buses())?;
                    p.demand[b] = rec.parse(1, "mw")?;
                }
                "WIND" => {
                    rec.expect_len(2, 2)?;
                    let w = index(&rec, "id", case.wind.len())?;
                    p.wind[w] = rec.parse(1, "mw")?;
                }
                "GEN" => {
                    rec.expect_len(2, 2)?;
                    let g = index(&rec, "id", case.generators.len())?;
                    p.generation[g] = rec.parse(1, "mw")?;
                    p.active[g] = true;
                }
                _ => {
                    rec.expect_len(1, 1)?;
                    let l = index(&rec, "line", case.n_lines())?;
                    if !p.outages.contains(&l) {
                        p.outages.push(l);
                    }
                }
            }
        }
        p.outages.sort_unstable();
        Ok(p)
    }

    /// Bundled N-1 secure operating point of a built-in case.
    pub fn healthy(case: &GridCase) -> Option<Self> {
        let (_, text) = HEALTHY.iter().find(|(name, _)| *name == case.name)?;
        Some(Self::parse(case, text).expect("bundled operating point parses"))
    }

    /// The post-redispatch state of the real-time layer, with every line on
    /// a repair countdown listed as outaged.
    pub fn from_post_state(post: &RtPostState) -> Self {
        let s = &post.state;
        Self {
            demand: s.demand.clone(),
            wind: s.wind.clone(),
            generation: s.generation.clone(),
            active: s.active.clone(),
            outages: (0..s.line_countdown.len())
                .filter(|&l| s.line_countdown[l] > 0)
                .collect(),
        }
    }

    pub fn profile(&self, case: &GridCase) -> InjectionProfile {
        InjectionProfile::from_dispatch(case, &self.demand, &self.wind, &self.generation, &self.active)
    }

    /// Countdown vector marking the outaged lines as under repair.
    pub fn countdown(&self, case: &GridCase) -> Vec<u32> {
        let mut c = vec![0; case.n_lines()];
        for &l in &self.outages {
            c[l] = 1;
        }
        c
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("DEMAND\n");
        for (b, d) in self.demand.iter().enumerate().filter(|(_, d)| **d != 0.0) {
            let _ = writeln!(s, "{b} {d}");
        }
        s.push_str("WIND\n");
        for (w, p) in self.wind.iter().enumerate() {
            let _ = writeln!(s, "{w} {p}");
        }
        s.push_str("GEN\n");
        for (g, p) in self.generation.iter().enumerate().filter(|(g, _)| self.active[*g]) {
            let _ = writeln!(s, "{g} {p}");
        }
        s.push_str("OUTAGE\n");
        for l in &self.outages {
            let _ = writeln!(s, "{l}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::env::Environment;
    use crate::powerflow::n1_reward;

    #[test]
    fn post_state_round_trips_through_text() {
        let case = GridCase::builtin("case6").unwrap();
        let mut post = Environment::new(&case, &ScenarioConfig::default()).base_post_state();
        post.state.line_countdown[3] = 2;
        let p = OperatingPoint::from_post_state(&post);
        assert_eq!(p.outages, vec![3]);
        assert_eq!(OperatingPoint::parse(&case, &p.to_text()).unwrap(), p);
    }

    #[test]
    fn bundled_points_are_secure() {
        for name in GridCase::BUILTIN {
            let case = GridCase::builtin(name).unwrap();
            let p = OperatingPoint::healthy(&case).unwrap();
            assert_eq!(
                n1_reward(&case, &p.countdown(&case), &p.profile(&case), None),
                1.0,
                "{name}"
            );
        }
    }

    #[test]
    fn unlisted_units_are_uncommitted() {
        let case = GridCase::builtin("case6").unwrap();
        let p = OperatingPoint::parse(&case, "DEMAND\n3 50\nGEN\n3 50\nOUTAGE\n4\n4\n").unwrap();
        assert_eq!(p.active.iter().filter(|&&a| a).count(), 1);
        assert_eq!(p.outages, vec![4]);
        assert_eq!(p.profile(&case).dispatch[0], None);
    }

    #[test]
    fn out_of_range_index_names_the_line() {
        let case = GridCase::builtin("case6").unwrap();
        let err = OperatingPoint::parse(&case, "DEMAND\n3 50\nGEN\n9 10\n").unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.message.contains("out of range"));
    }
}
