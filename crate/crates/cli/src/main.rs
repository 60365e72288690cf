use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use gridproxy::env::{DaPolicy, Environment};
use gridproxy::features::{build_action_catalog, ActionCatalog};
use gridproxy::harness::{evaluate_policy, rollout_episode, BaselineKind, BaselinePolicy, LearnedPolicy, RolloutStats};
use gridproxy::injection::OperatingPoint;
use gridproxy::learning::{train, IapiReport};
use gridproxy::powerflow::ContingencyScreener;
use gridproxy::rng::{purpose, stream};
use gridproxy::{env::ProfileLibrary, Config, GridCase};

#[derive(Parser, Debug)]
#[command(
    name = "gridproxy",
    version,
    about = "Day-ahead unit commitment learned against an N-1 reliability proxy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Case file, or the name of a bundled case (case6, rts96).
    #[arg(long, default_value = "case6")]
    case: String,
    /// Scenario/learning config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory; without it results go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Feasibility and N-1 screen of one operating point.
    PfCheck {
        #[command(flatten)]
        common: Common,
        /// Operating-point file; defaults to the bundled healthy point of a
        /// built-in case, else the nominal all-committed hour.
        #[arg(long)]
        injection: Option<PathBuf>,
    },
    /// Roll out a policy and write the hourly trace as JSON lines.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// random, cost, elastic or a training report.
        #[arg(long, default_value = "random")]
        policy: String,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Run the policy search and write its report.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Per-episode mean rewards and summary statistics of a policy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "random")]
        policy: String,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Build an action catalog.
    Catalog {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Invalid<T> {
    fn invalid(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Invalid<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }
}

trait Runtime<T> {
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Runtime<T> for Result<T, E> {
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

struct Inputs {
    case: GridCase,
    config: Config,
}

fn load_inputs(c: &Common) -> Result<Inputs, Failure> {
    if c.workers == 0 {
        return Err(Failure::Invalid(anyhow!("--workers must be at least 1")));
    }
    let case = GridCase::load(&c.case)
        .with_context(|| format!("--case {}", c.case))
        .invalid()?;
    let config = match &c.config {
        Some(p) => Config::load(p)
            .with_context(|| format!("--config {}", p.display()))
            .invalid()?,
        None => Config::default(),
    };
    config.validate().context("--config").invalid()?;
    Ok(Inputs { case, config })
}

/// Writes each `(name, contents)` into `--out`, or all of them to stdout.
fn emit(out: &Option<PathBuf>, files: &[(&str, String)]) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .runtime()?;
            for (name, body) in files {
                let path = dir.join(name);
                fs::write(&path, body)
                    .with_context(|| format!("writing {}", path.display()))
                    .runtime()?;
            }
        }
        None => {
            for (_, body) in files {
                print!("{body}");
            }
        }
    }
    Ok(())
}

fn catalog_for(inputs: &Inputs, seed: u64, file: &Option<PathBuf>) -> Result<ActionCatalog, Failure> {
    if let Some(p) = file {
        let text = fs::read_to_string(p)
            .with_context(|| format!("--catalog {}", p.display()))
            .invalid()?;
        return ActionCatalog::parse(&inputs.case, &text)
            .with_context(|| format!("--catalog {}", p.display()))
            .invalid();
    }
    let library = ProfileLibrary::new(&inputs.case, &inputs.config.scenario);
    build_action_catalog(
        &inputs.case,
        &library,
        &inputs.config.learning,
        &mut stream(seed, &[purpose::CATALOG]),
    )
    .runtime()
}

enum NamedPolicy {
    Baseline(BaselineKind, ActionCatalog),
    Learned(LearnedPolicy),
}

fn resolve_policy(inputs: &Inputs, seed: u64, name: &str, catalog: &Option<PathBuf>) -> Result<NamedPolicy, Failure> {
    if let Ok(kind) = name.parse::<BaselineKind>() {
        return Ok(NamedPolicy::Baseline(kind, catalog_for(inputs, seed, catalog)?));
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(Failure::Invalid(anyhow!(
            "--policy {name}: expected random, cost, elastic or a report file"
        )));
    }
    let text = fs::read_to_string(path)
        .with_context(|| format!("--policy {name}"))
        .invalid()?;
    let report = IapiReport::from_json(&text)
        .with_context(|| format!("--policy {name}"))
        .invalid()?;
    let policy = LearnedPolicy::from_report(&report)
        .ok_or_else(|| Failure::Invalid(anyhow!("--policy {name}: report carries no action catalog")))?;
    let dim = policy.catalog.len() + 4;
    if policy.psi.len() != dim {
        return Err(Failure::Invalid(anyhow!(
            "--policy {name}: {} parameters for a {}-action catalog",
            policy.psi.len(),
            policy.catalog.len()
        )));
    }
    if let Err(e) = ActionCatalog::parse(&inputs.case, &policy.catalog.to_text()) {
        return Err(Failure::Invalid(anyhow!(
            "--policy {name}: catalog does not fit the case: {e}"
        )));
    }
    Ok(NamedPolicy::Learned(policy))
}

fn with_policy<T>(p: &NamedPolicy, f: impl FnOnce(&(dyn DaPolicy + Sync)) -> T) -> T {
    match p {
        NamedPolicy::Baseline(kind, catalog) => f(&BaselinePolicy { kind: *kind, catalog }),
        NamedPolicy::Learned(l) => f(l),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::PfCheck { common, injection } => {
            let inputs = load_inputs(&common)?;
            let point = match &injection {
                Some(p) => {
                    let text = fs::read_to_string(p)
                        .with_context(|| format!("--injection {}", p.display()))
                        .invalid()?;
                    OperatingPoint::parse(&inputs.case, &text)
                        .with_context(|| format!("--injection {}", p.display()))
                        .invalid()?
                }
                None => OperatingPoint::healthy(&inputs.case).unwrap_or_else(|| {
                    OperatingPoint::from_post_state(
                        &Environment::new(&inputs.case, &inputs.config.scenario).base_post_state(),
                    )
                }),
            };
            let profile = point.profile(&inputs.case);
            let report =
                ContingencyScreener::new().screen(&inputs.case, &point.countdown(&inputs.case), &profile, None);
            let headline = format!("reward {:.3}\n", report.reward());
            let mut text = headline.clone();
            for (line, v) in report.verdicts.iter().enumerate() {
                let status = match v.violation {
                    None => "ok".to_string(),
                    Some(x) => serde_json::to_string(&x)
                        .unwrap_or_default()
                        .trim_matches('"')
                        .to_string(),
                };
                text.push_str(&format!("contingency {line} {status}\n"));
            }
            if common.out.is_some() {
                print!("{headline}");
            }
            emit(&common.out, &[("screen.txt", text)])
        }
        Command::Simulate {
            common,
            policy,
            episodes,
            catalog,
        } => {
            let inputs = load_inputs(&common)?;
            if episodes == 0 {
                return Err(Failure::Invalid(anyhow!("--episodes must be at least 1")));
            }
            let p = resolve_policy(&inputs, common.seed, &policy, &catalog)?;
            let mut trace = String::new();
            with_policy(&p, |pol| {
                for e in 0..episodes {
                    let t = rollout_episode(&inputs.case, &inputs.config.scenario, pol, common.seed, e);
                    for line in t.to_jsonl().lines() {
                        trace.push_str(&format!("{{\"episode\":{e},{}\n", &line[1..]));
                    }
                }
            });
            emit(&common.out, &[("trace.jsonl", trace)])
        }
        Command::Train { common } => {
            let inputs = load_inputs(&common)?;
            let report = train(&inputs.case, &inputs.config, common.seed, common.workers).runtime()?;
            let catalog = report.catalog.as_ref().map(|c| c.to_text()).unwrap_or_default();
            let summary = format!(
                "converged {} after {} iterations\n",
                report.converged,
                report.iterations.len()
            );
            match &common.out {
                Some(_) => {
                    eprint!("{summary}");
                    emit(
                        &common.out,
                        &[
                            ("report.json", report.to_json() + "\n"),
                            ("convergence.csv", report.convergence_csv()),
                            ("catalog.txt", catalog),
                        ],
                    )
                }
                None => emit(&None, &[("report.json", report.to_json() + "\n")]),
            }
        }
        Command::Evaluate {
            common,
            policy,
            episodes,
            catalog,
        } => {
            let inputs = load_inputs(&common)?;
            if episodes == 0 {
                return Err(Failure::Invalid(anyhow!("--episodes must be at least 1")));
            }
            let p = resolve_policy(&inputs, common.seed, &policy, &catalog)?;
            let stats = with_policy(&p, |pol| {
                evaluate_policy(
                    &inputs.case,
                    &inputs.config.scenario,
                    pol,
                    episodes,
                    common.seed,
                    common.workers,
                )
            });
            let label = match &p {
                NamedPolicy::Baseline(kind, _) => kind.name().to_string(),
                NamedPolicy::Learned(_) => "learned".to_string(),
            };
            let summary = format!("{}{}", RolloutStats::summary_header(), stats.summary_row(&label));
            match &common.out {
                Some(_) => {
                    print!("{summary}");
                    emit(
                        &common.out,
                        &[("episodes.csv", stats.episodes_csv()), ("summary.csv", summary)],
                    )
                }
                None => emit(&None, &[("episodes.csv", stats.episodes_csv())]),
            }
        }
        Command::Catalog { common } => {
            let inputs = load_inputs(&common)?;
            let catalog = catalog_for(&inputs, common.seed, &None)?;
            emit(&common.out, &[("catalog.txt", catalog.to_text())])
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
