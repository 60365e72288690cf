//! Scenario and learning parameters, read from the sectioned text format.
//!
//! ```text
//! SCENARIO
//! sigma_demand0 0.01
//! profile_levels 0.8 0.9 1.0
//! LEARNING
//! gamma 0.95
//! pool_mode per-iteration
//! ```
//!
//! Keys left out keep their defaults; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{self, ParseError, Record};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file")]
    Io(#[from] std::io::Error),
    #[error("config parse error")]
    Parse(#[from] ParseError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Std of the initial demand forecast error, as a fraction of the
    /// hour-0 forecast per bus.
    pub sigma_demand0: f64,
    /// Std of the initial wind forecast error, as a fraction of the hour-0
    /// forecast per unit.
    pub sigma_wind0: f64,
    /// Std of the hourly bias increment, as a fraction of |initial bias|.
    pub sigma_eps: f64,
    /// Overrides every line's failure probability when set.
    pub fail_prob: Option<f64>,
    /// Overrides every line's repair countdown when set.
    pub repair_steps: Option<u32>,
    pub horizon_days: usize,
    /// Peak system demand of a level-1.0 profile, as a fraction of the
    /// total controllable capacity.
    pub demand_peak_fraction: f64,
    /// Demand multipliers of the profile library.
    pub profile_levels: Vec<f64>,
    /// Wind multipliers (fraction of capacity) of the profile library.
    pub wind_levels: Vec<f64>,
    /// Relative std of the per-entry noise on an initial day-ahead state.
    pub da_noise: f64,
    /// Relative std of the per-bus day-over-day forecast bias.
    pub da_bias: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            sigma_demand0: 0.01,
            sigma_wind0: 0.05,
            sigma_eps: 0.05,
            fail_prob: None,
            repair_steps: None,
            horizon_days: 3,
            demand_peak_fraction: 0.5,
            profile_levels: vec![0.7, 0.85, 1.0],
            wind_levels: vec![0.2, 0.6],
            da_noise: 0.02,
            da_bias: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    /// Test states are collected afresh every iteration.
    PerIteration,
    /// Test states accumulate over all iterations.
    Cumulative,
    /// The states of the first iteration are kept for every later one.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandBasis {
    /// Demand minus wind forecast.
    Effective,
    /// Demand forecast alone.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    /// Number of day-ahead actions (generator subsets).
    pub n_actions: usize,
    /// Smallest subset capacity target, as a multiple of the lowest
    /// library peak effective demand.
    pub catalog_low: f64,
    /// Largest subset capacity target, as a multiple of the highest
    /// library peak effective demand (capped at the total capacity).
    pub catalog_high: f64,
    pub demand_basis: DemandBasis,
    pub gamma: f64,
    pub alpha0: f64,
    /// Step-size decay constant, in transitions.
    pub tau: f64,
    /// Divergence guard on |theta|_inf.
    pub theta_bound: f64,
    pub n_episodes: usize,
    /// Candidates drawn per cross-entropy iteration.
    pub n_candidates: usize,
    pub elite_fraction: f64,
    /// Std of the initial zero-centred sampling distribution.
    pub init_std: f64,
    /// Variance floor of the sampling distribution.
    pub var_floor: f64,
    /// Multiplier on the elite variance used for each mixture component.
    pub component_scale: f64,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub pool_mode: PoolMode,
    /// Evaluate every candidate on the same episode scenarios (forecasts,
    /// real-time noise, failures); only tie-breaking differs per candidate.
    pub common_scenarios: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            n_actions: 20,
            catalog_low: 1.0,
            catalog_high: 1.6,
            demand_basis: DemandBasis::Effective,
            gamma: 0.95,
            alpha0: 0.01,
            tau: 1e4,
            theta_bound: 1e6,
            n_episodes: 50,
            n_candidates: 200,
            elite_fraction: 0.2,
            init_std: 1.0,
            var_floor: 1e-4,
            component_scale: 1.0,
            max_iterations: 30,
            epsilon: 1e-4,
            pool_mode: PoolMode::PerIteration,
            common_scenarios: false,
        }
    }
}

impl LearningConfig {
    /// Elite set size, ceil(rho * N).
    pub fn elite_size(&self) -> usize {
        let n = (self.elite_fraction * self.n_candidates as f64 - 1e-9).ceil() as usize;
        n.clamp(1, self.n_candidates.max(1))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub learning: LearningConfig,
}

fn one<T: std::str::FromStr>(rec: &Record<'_>, what: &str) -> Result<T, ParseError> {
    rec.expect_len(2, 2)?;
    rec.parse(1, what)
}

fn list(rec: &Record<'_>, what: &str) -> Result<Vec<f64>, ParseError> {
    rec.expect_len(2, usize::MAX)?;
    (1..rec.fields.len()).map(|i| rec.parse(i, what)).collect()
}

fn optional<T: std::str::FromStr>(rec: &Record<'_>, what: &str) -> Result<Option<T>, ParseError> {
    rec.expect_len(2, 2)?;
    if rec.fields[1] == "none" {
        Ok(None)
    } else {
        rec.parse(1, what).map(Some)
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for rec in text::records(text, &["SCENARIO", "LEARNING"])? {
            let key = rec.fields[0];
            let s = &mut cfg.scenario;
            let l = &mut cfg.learning;
            match (rec.section, key) {
                ("SCENARIO", "sigma_demand0") => s.sigma_demand0 = one(&rec, key)?,
                ("SCENARIO", "sigma_wind0") => s.sigma_wind0 = one(&rec, key)?,
                ("SCENARIO", "sigma_eps") => s.sigma_eps = one(&rec, key)?,
                ("SCENARIO", "fail_prob") => s.fail_prob = optional(&rec, key)?,
                ("SCENARIO", "repair_steps") => s.repair_steps = optional(&rec, key)?,
                ("SCENARIO", "horizon_days") => s.horizon_days = one(&rec, key)?,
                ("SCENARIO", "demand_peak_fraction") => s.demand_peak_fraction = one(&rec, key)?,
                ("SCENARIO", "profile_levels") => s.profile_levels = list(&rec, key)?,
                ("SCENARIO", "wind_levels") => s.wind_levels = list(&rec, key)?,
                ("SCENARIO", "da_noise") => s.da_noise = one(&rec, key)?,
                ("SCENARIO", "da_bias") => s.da_bias = one(&rec, key)?,
                ("SCENARIO", "seed") => s.seed = one(&rec, key)?,
                ("LEARNING", "n_actions") => l.n_actions = one(&rec, key)?,
                ("LEARNING", "catalog_low") => l.catalog_low = one(&rec, key)?,
                ("LEARNING", "catalog_high") => l.catalog_high = one(&rec, key)?,
                ("LEARNING", "demand_basis") => {
                    l.demand_basis = match one::<String>(&rec, key)?.as_str() {
                        "effective" => DemandBasis::Effective,
                        "raw" => DemandBasis::Raw,
                        other => {
                            return Err(ParseError::new(rec.line, format!("unknown demand_basis '{other}'")).into())
                        }
                    }
                }
                ("LEARNING", "gamma") => l.gamma = one(&rec, key)?,
                ("LEARNING", "alpha0") => l.alpha0 = one(&rec, key)?,
                ("LEARNING", "tau") => l.tau = one(&rec, key)?,
                ("LEARNING", "theta_bound") => l.theta_bound = one(&rec, key)?,
                ("LEARNING", "n_episodes") => l.n_episodes = one(&rec, key)?,
                ("LEARNING", "n_candidates") => l.n_candidates = one(&rec, key)?,
                ("LEARNING", "elite_fraction") => l.elite_fraction = one(&rec, key)?,
                ("LEARNING", "init_std") => l.init_std = one(&rec, key)?,
                ("LEARNING", "var_floor") => l.var_floor = one(&rec, key)?,
                ("LEARNING", "component_scale") => l.component_scale = one(&rec, key)?,
                ("LEARNING", "max_iterations") => l.max_iterations = one(&rec, key)?,
                ("LEARNING", "epsilon") => l.epsilon = one(&rec, key)?,
                ("LEARNING", "pool_mode") => {
                    l.pool_mode = match one::<String>(&rec, key)?.as_str() {
                        "per-iteration" => PoolMode::PerIteration,
                        "cumulative" => PoolMode::Cumulative,
                        "first" => PoolMode::First,
                        other => return Err(ParseError::new(rec.line, format!("unknown pool_mode '{other}'")).into()),
                    }
                }
                ("LEARNING", "common_scenarios") => l.common_scenarios = one(&rec, key)?,
                (section, key) => {
                    return Err(ParseError::new(rec.line, format!("unknown {section} key '{key}'")).into())
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        let l = &self.learning;
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let scales = [s.sigma_demand0, s.sigma_wind0, s.sigma_eps, s.da_noise, s.da_bias];
        if scales.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise scales must be finite and >= 0");
        }
        if let Some(p) = s.fail_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad("fail_prob must lie in [0, 1]");
            }
        }
        if s.repair_steps == Some(0) {
            return bad("repair_steps must be >= 1");
        }
        if s.horizon_days == 0 {
            return bad("horizon_days must be >= 1");
        }
        if s.profile_levels.is_empty() || s.wind_levels.is_empty() {
            return bad("profile library must not be empty");
        }
        if s.profile_levels
            .iter()
            .chain(&s.wind_levels)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("profile levels must be finite and >= 0");
        }
        if s.wind_levels.iter().any(|&w| w > 1.0) {
            return bad("wind levels are fractions of capacity and must be <= 1");
        }
        if !(s.demand_peak_fraction.is_finite() && s.demand_peak_fraction > 0.0) {
            return bad("demand_peak_fraction must be > 0");
        }
        if l.n_actions == 0 {
            return bad("n_actions must be >= 1");
        }
        if !(l.gamma > 0.0 && l.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(l.alpha0 > 0.0 && l.tau > 0.0 && l.theta_bound > 0.0) {
            return bad("alpha0, tau and theta_bound must be > 0");
        }
        if l.n_episodes == 0 || l.n_candidates == 0 || l.max_iterations == 0 {
            return bad("n_episodes, n_candidates and max_iterations must be >= 1");
        }
        if !(l.elite_fraction > 0.0 && l.elite_fraction <= 1.0) {
            return bad("elite_fraction must lie in (0, 1]");
        }
        if !(l.init_std >= 0.0 && l.var_floor > 0.0 && l.epsilon > 0.0) {
            return bad("init_std must be >= 0; var_floor and epsilon must be > 0");
        }
        if !(l.component_scale > 0.0 && l.component_scale.is_finite()) {
            return bad("component_scale must be > 0");
        }
        if !(l.catalog_low > 0.0 && l.catalog_high >= l.catalog_low) {
            return bad("catalog bounds must satisfy 0 < catalog_low <= catalog_high");
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let l = &self.learning;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut t = String::from("SCENARIO\n");
        let _ = writeln!(t, "sigma_demand0 {}", s.sigma_demand0);
        let _ = writeln!(t, "sigma_wind0 {}", s.sigma_wind0);
        let _ = writeln!(t, "sigma_eps {}", s.sigma_eps);
        let _ = writeln!(t, "fail_prob {}", opt(s.fail_prob.map(|v| v.to_string())));
        let _ = writeln!(t, "repair_steps {}", opt(s.repair_steps.map(|v| v.to_string())));
        let _ = writeln!(t, "horizon_days {}", s.horizon_days);
        let _ = writeln!(t, "demand_peak_fraction {}", s.demand_peak_fraction);
        let _ = writeln!(t, "profile_levels {}", join(&s.profile_levels));
        let _ = writeln!(t, "wind_levels {}", join(&s.wind_levels));
        let _ = writeln!(t, "da_noise {}", s.da_noise);
        let _ = writeln!(t, "da_bias {}", s.da_bias);
        let _ = writeln!(t, "seed {}", s.seed);
        t.push_str("LEARNING\n");
        let _ = writeln!(t, "n_actions {}", l.n_actions);
        let _ = writeln!(t, "catalog_low {}", l.catalog_low);
        let _ = writeln!(t, "catalog_high {}", l.catalog_high);
        let basis = match l.demand_basis {
            DemandBasis::Effective => "effective",
            DemandBasis::Raw => "raw",
        };
        let _ = writeln!(t, "demand_basis {basis}");
        let _ = writeln!(t, "gamma {}", l.gamma);
        let _ = writeln!(t, "alpha0 {}", l.alpha0);
        let _ = writeln!(t, "tau {}", l.tau);
        let _ = writeln!(t, "theta_bound {}", l.theta_bound);
        let _ = writeln!(t, "n_episodes {}", l.n_episodes);
        let _ = writeln!(t, "n_candidates {}", l.n_candidates);
        let _ = writeln!(t, "elite_fraction {}", l.elite_fraction);
        let _ = writeln!(t, "init_std {}", l.init_std);
        let _ = writeln!(t, "var_floor {}", l.var_floor);
        let _ = writeln!(t, "component_scale {}", l.component_scale);
        let _ = writeln!(t, "max_iterations {}", l.max_iterations);
        let _ = writeln!(t, "epsilon {}", l.epsilon);
        let mode = match l.pool_mode {
            PoolMode::PerIteration => "per-iteration",
            PoolMode::Cumulative => "cumulative",
            PoolMode::First => "first",
        };
        let _ = writeln!(t, "pool_mode {mode}");
        let _ = writeln!(t, "common_scenarios {}", l.common_scenarios);
        t
    }
}
