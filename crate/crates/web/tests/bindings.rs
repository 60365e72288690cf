use gridproxy::GridCase;
use gridproxy_web::{flow_json, rollout_json, screen_json};
use serde_json::Value;

fn case6() -> String {
    GridCase::builtin("case6").unwrap().to_text()
}

#[test]
fn healthy_flow_balances_and_respects_limits() {
    let v: Value = serde_json::from_str(&flow_json(&case6(), "", 1.0).unwrap()).unwrap();
    assert_eq!(v["lines"].as_array().unwrap().len(), 11);
    assert!((v["demand"].as_f64().unwrap() - v["generation"].as_f64().unwrap()).abs() < 1e-6);
    for l in v["lines"].as_array().unwrap() {
        assert!(l["flow"].as_f64().unwrap().abs() <= l["limit"].as_f64().unwrap());
    }
}

#[test]
fn outaged_lines_carry_nothing() {
    let v: Value = serde_json::from_str(&flow_json(&case6(), "3, 7", 1.0).unwrap()).unwrap();
    let lines = v["lines"].as_array().unwrap();
    assert_eq!(lines[3]["flow"].as_f64().unwrap(), 0.0);
    assert!(lines[7]["out"].as_bool().unwrap());
}

#[test]
fn base_screen_passes_and_heavy_load_does_not() {
    let ok: Value = serde_json::from_str(&screen_json(&case6(), "", 0.7).unwrap()).unwrap();
    assert_eq!(ok["reward"].as_f64().unwrap(), 1.0);
    let stressed: Value = serde_json::from_str(&screen_json(&case6(), "", 1.8).unwrap()).unwrap();
    assert!(stressed["reward"].as_f64().unwrap() < 1.0);
}

#[test]
fn rollout_covers_the_horizon_and_is_seeded() {
    let a = rollout_json(&case6(), "cost", 4).unwrap();
    assert_eq!(a, rollout_json(&case6(), "cost", 4).unwrap());
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["rewards"].as_array().unwrap().len(), 72);
    assert_eq!(v["commitments"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_input_is_reported() {
    assert!(flow_json(&case6(), "42", 1.0).unwrap_err().contains("out of range"));
    assert!(rollout_json(&case6(), "greedy", 1).is_err());
    assert!(screen_json("BUS\n0 x\n", "", 1.0).is_err());
}
