use gridproxy::env::ProfileLibrary;
use gridproxy::features::{build_action_catalog, ActionCatalog};
use gridproxy::harness::{evaluate_policy, rollout_episode, BaselineKind, BaselinePolicy, LearnedPolicy};
use gridproxy::learning::{train, IapiReport};
use gridproxy::rng::{purpose, stream};
use gridproxy::{Config, GridCase};

fn small_config() -> Config {
    Config::parse("LEARNING\nn_candidates 8\nmax_iterations 2\nn_episodes 3\n").unwrap()
}

#[test]
fn bundled_cases_survive_text_round_trip() {
    for name in GridCase::BUILTIN {
        let case = GridCase::builtin(name).unwrap();
        let again = GridCase::parse(name, &case.to_text()).unwrap();
        assert_eq!(again.to_text(), case.to_text());
    }
}

#[test]
fn catalog_file_reproduces_rollouts() {
    let case = GridCase::builtin("case6").unwrap();
    let cfg = Config::default();
    let library = ProfileLibrary::new(&case, &cfg.scenario);
    let catalog = build_action_catalog(&case, &library, &cfg.learning, &mut stream(5, &[purpose::CATALOG])).unwrap();
    let reread = ActionCatalog::parse(&case, &catalog.to_text()).unwrap();
    let run = |c: &ActionCatalog| {
        let p = BaselinePolicy {
            kind: BaselineKind::Elastic,
            catalog: c,
        };
        rollout_episode(&case, &cfg.scenario, &p, 11, 0).to_jsonl()
    };
    assert_eq!(run(&catalog), run(&reread));
}

#[test]
fn report_round_trip_keeps_the_policy() {
    let case = GridCase::builtin("case6").unwrap();
    let cfg = small_config();
    let report = train(&case, &cfg, 7, 2).unwrap();
    assert_eq!(report.iterations.len(), 2);
    let back = IapiReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);

    let a = LearnedPolicy::from_report(&report).unwrap();
    let b = LearnedPolicy::from_report(&back).unwrap();
    let sa = evaluate_policy(&case, &cfg.scenario, &a, 6, 3, 1);
    let sb = evaluate_policy(&case, &cfg.scenario, &b, 6, 3, 2);
    assert_eq!(sa.episodes_csv(), sb.episodes_csv());
    assert!(sa.episode_means.iter().all(|m| (0.0..=1.0).contains(m)));
}

#[test]
fn evaluation_seed_changes_scenarios() {
    let case = GridCase::builtin("case6").unwrap();
    let cfg = Config::default();
    let library = ProfileLibrary::new(&case, &cfg.scenario);
    let catalog = build_action_catalog(&case, &library, &cfg.learning, &mut stream(1, &[purpose::CATALOG])).unwrap();
    let p = BaselinePolicy {
        kind: BaselineKind::Cost,
        catalog: &catalog,
    };
    let a = evaluate_policy(&case, &cfg.scenario, &p, 5, 1, 1);
    let b = evaluate_policy(&case, &cfg.scenario, &p, 5, 2, 1);
    assert_ne!(a.episodes_csv(), b.episodes_csv());
}
