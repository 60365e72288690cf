//! Browser bindings: DC power flow with user-chosen outages, the N-1
//! screen of the same operating point, and a one-episode rollout of a
//! baseline commitment policy.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use gridproxy::env::Environment;
use gridproxy::features::build_action_catalog;
use gridproxy::harness::{rollout_episode, BaselineKind, BaselinePolicy};
use gridproxy::injection::OperatingPoint;
use gridproxy::powerflow::{solve_dc, ContingencyScreener};
use gridproxy::rng::{purpose, stream};
use gridproxy::{env::ProfileLibrary, GridCase, ScenarioConfig};

#[derive(Serialize)]
struct FlowView {
    buses: usize,
    lines: Vec<LineView>,
    islands: Vec<Vec<usize>>,
    slack_adjustment: Vec<f64>,
    demand: f64,
    generation: f64,
}

#[derive(Serialize)]
struct LineView {
    from: usize,
    to: usize,
    flow: f64,
    limit: f64,
    out: bool,
}

#[derive(Serialize)]
struct ScreenView {
    reward: f64,
    violations: Vec<Option<String>>,
}

#[derive(Serialize)]
struct RolloutView {
    policy: String,
    rewards: Vec<f64>,
    failed_lines: Vec<Option<usize>>,
    commitments: Vec<Vec<bool>>,
    mean: f64,
}

fn parse_case(text: &str) -> Result<GridCase, String> {
    GridCase::parse("web", text).map_err(|e| e.to_string())
}

fn parse_outages(case: &GridCase, list: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for tok in list
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
    {
        let l: usize = tok.parse().map_err(|_| format!("bad line id '{tok}'"))?;
        if l >= case.n_lines() {
            return Err(format!("line {l} out of range"));
        }
        if !out.contains(&l) {
            out.push(l);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Flat hour at load level `load` with every unit committed.
fn operating_point(case: &GridCase, load: f64, outages: &[usize]) -> OperatingPoint {
    let scenario = ScenarioConfig::default();
    let mut p = OperatingPoint::from_post_state(&Environment::new(case, &scenario).flat_post_state(load));
    p.outages = outages.to_vec();
    p
}

pub fn flow_json(case_text: &str, outages: &str, load: f64) -> Result<String, String> {
    let case = parse_case(case_text)?;
    let outages = parse_outages(&case, outages)?;
    let point = operating_point(&case, load, &outages);
    let sol = solve_dc(&case, &outages, &point.profile(&case)).map_err(|e| e.to_string())?;
    let view = FlowView {
        buses: case.n_buses(),
        lines: case
            .lines
            .iter()
            .zip(&sol.line_flows)
            .map(|(l, &flow)| LineView {
                from: l.from_bus,
                to: l.to_bus,
                flow,
                limit: l.thermal_limit,
                out: outages.contains(&l.id),
            })
            .collect(),
        islands: sol.islands,
        slack_adjustment: sol.slack_adjustment,
        demand: point.demand.iter().sum(),
        generation: point.generation.iter().sum::<f64>() + point.wind.iter().sum::<f64>(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

pub fn screen_json(case_text: &str, outages: &str, load: f64) -> Result<String, String> {
    let case = parse_case(case_text)?;
    let outages = parse_outages(&case, outages)?;
    let point = operating_point(&case, load, &outages);
    let report = ContingencyScreener::new().screen(&case, &point.countdown(&case), &point.profile(&case), None);
    let view = ScreenView {
        reward: report.reward(),
        violations: report
            .verdicts
            .iter()
            .map(|v| v.violation.map(|x| format!("{x:?}")))
            .collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

pub fn rollout_json(case_text: &str, policy: &str, seed: u64) -> Result<String, String> {
    let case = parse_case(case_text)?;
    let kind: BaselineKind = policy.parse()?;
    let config = gridproxy::Config::default();
    let library = ProfileLibrary::new(&case, &config.scenario);
    let catalog = build_action_catalog(
        &case,
        &library,
        &config.learning,
        &mut stream(seed, &[purpose::CATALOG]),
    )
    .map_err(|e| e.to_string())?;
    let trace = rollout_episode(
        &case,
        &config.scenario,
        &BaselinePolicy {
            kind,
            catalog: &catalog,
        },
        seed,
        0,
    );
    let view = RolloutView {
        policy: kind.name().to_string(),
        rewards: trace.rewards(),
        failed_lines: trace.steps.iter().map(|s| s.event.failed_line).collect(),
        commitments: trace.da_actions.iter().map(|a| a.active.clone()).collect(),
        mean: trace.mean_reward(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn bundled_case(name: &str) -> Result<String, JsError> {
    GridCase::builtin(name)
        .map(|c| c.to_text())
        .map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn power_flow(case_text: &str, outages: &str, load: f64) -> Result<String, JsError> {
    flow_json(case_text, outages, load).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn n1_screen(case_text: &str, outages: &str, load: f64) -> Result<String, JsError> {
    screen_json(case_text, outages, load).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rollout(case_text: &str, policy: &str, seed: u32) -> Result<String, JsError> {
    rollout_json(case_text, policy, seed as u64).map_err(|e| JsError::new(&e))
}
