//! The interleaved day-ahead / real-time decision processes.
//!
//! A day starts from a [`DaState`] (24-hour forecasts). The day-ahead policy
//! commits a generator subset; the real-time layer then realises demand and
//! wind as forecast plus a random-walk bias, redispatches the committed
//! units to the effective demand, draws line failures and scores every
//! post-decision state by its N-1 pass rate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::grid::{GridCase, LineId};
use crate::powerflow::{ContingencyScreener, InjectionProfile};
use crate::rng::{EpisodeStreams, SimRng};

pub const HOURS_PER_DAY: usize = 24;

/// Day-ahead forecasts for the coming day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaState {
    /// `[hour][bus]`, MW.
    pub demand_forecast: Vec<Vec<f64>>,
    /// `[hour][wind unit]`, MW.
    pub wind_forecast: Vec<Vec<f64>>,
    pub day_index: usize,
    /// Library profile the episode was started from.
    pub profile: usize,
}

impl DaState {
    pub fn total_demand(&self, hour: usize) -> f64 {
        self.demand_forecast[hour].iter().sum()
    }

    pub fn total_wind(&self, hour: usize) -> f64 {
        self.wind_forecast[hour].iter().sum()
    }

    pub fn effective_demand(&self, hour: usize) -> f64 {
        self.total_demand(hour) - self.total_wind(hour)
    }

    /// Hourly system effective demand over the day.
    pub fn effective_profile(&self) -> Vec<f64> {
        (0..HOURS_PER_DAY).map(|h| self.effective_demand(h)).collect()
    }
}

/// A committed generator subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaAction {
    pub subset_index: usize,
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtState {
    pub demand: Vec<f64>,
    pub wind: Vec<f64>,
    pub generation: Vec<f64>,
    /// Units committed for the current day.
    pub active: Vec<bool>,
    pub line_countdown: Vec<u32>,
    pub hour: usize,
    pub day: usize,
    pub demand_bias: Vec<f64>,
    pub wind_bias: Vec<f64>,
    /// Bias at the start of the day; sets the scale of the hourly increments.
    pub demand_bias0: Vec<f64>,
    pub wind_bias0: Vec<f64>,
}

impl RtState {
    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }

    pub fn total_wind(&self) -> f64 {
        self.wind.iter().sum()
    }

    pub fn total_generation(&self) -> f64 {
        self.generation.iter().sum()
    }

    pub fn injections(&self, case: &GridCase) -> InjectionProfile {
        InjectionProfile::from_dispatch(case, &self.demand, &self.wind, &self.generation, &self.active)
    }
}

/// State right after redispatch: `state.generation` already includes
/// `redispatch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtPostState {
    pub state: RtState,
    pub redispatch: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExogenousEvent {
    pub failed_line: Option<LineId>,
}

/// Anything that maps a day-ahead state to a committed subset.
pub trait DaPolicy {
    fn act(&self, state: &DaState, rng: &mut SimRng) -> DaAction;
}

impl<F> DaPolicy for F
where
    F: Fn(&DaState, &mut SimRng) -> DaAction,
{
    fn act(&self, state: &DaState, rng: &mut SimRng) -> DaAction {
        self(state, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DailyShape {
    Flat,
    SinglePeak,
    DoublePeak,
}

impl DailyShape {
    pub const ALL: [DailyShape; 3] = [DailyShape::Flat, DailyShape::SinglePeak, DailyShape::DoublePeak];

    /// Demand relative to the daily peak of a level-1.0 profile.
    pub fn value(self, hour: usize) -> f64 {
        let h = hour as f64;
        let bump = |centre: f64, width: f64| (-((h - centre) / width).powi(2)).exp();
        match self {
            DailyShape::Flat => 0.8,
            DailyShape::SinglePeak => 0.55 + 0.45 * bump(18.0, 3.5),
            DailyShape::DoublePeak => 0.55 + 0.3 * bump(9.0, 2.5) + 0.45 * bump(19.0, 2.5),
        }
    }
}

/// Wind availability relative to the profile's wind level; higher at night.
pub fn wind_shape(hour: usize) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (hour as f64 - 3.0) / HOURS_PER_DAY as f64;
    0.7 + 0.3 * phase.cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub shape: DailyShape,
    pub level: f64,
    pub wind_level: f64,
}

/// Synthetic daily demand and wind profiles episodes start from.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileLibrary {
    pub specs: Vec<ProfileSpec>,
    pub profiles: Vec<DaState>,
}

impl ProfileLibrary {
    pub fn new(case: &GridCase, config: &ScenarioConfig) -> Self {
        let mut specs = Vec::new();
        for &shape in &DailyShape::ALL {
            for &level in &config.profile_levels {
                for &wind_level in &config.wind_levels {
                    specs.push(ProfileSpec {
                        shape,
                        level,
                        wind_level,
                    });
                }
            }
        }
        let profiles = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| Self::render(case, config, spec, i))
            .collect();
        Self { specs, profiles }
    }

    pub fn render(case: &GridCase, config: &ScenarioConfig, spec: &ProfileSpec, index: usize) -> DaState {
        let peak = config.demand_peak_fraction * case.total_g_max();
        let share_total: f64 = case.buses.iter().map(|b| b.load_share).sum();
        let demand_forecast = (0..HOURS_PER_DAY)
            .map(|h| {
                let system = peak * spec.level * spec.shape.value(h);
                case.buses
                    .iter()
                    .map(|b| {
                        if share_total > 0.0 {
                            system * b.load_share / share_total
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let wind_forecast = (0..HOURS_PER_DAY)
            .map(|h| {
                case.wind
                    .iter()
                    .map(|w| (w.capacity * spec.wind_level * wind_shape(h)).min(w.capacity))
                    .collect()
            })
            .collect();
        DaState {
            demand_forecast,
            wind_forecast,
            day_index: 0,
            profile: index,
        }
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Largest hourly effective demand over all profiles.
    pub fn max_effective_demand(&self) -> f64 {
        self.profiles
            .iter()
            .flat_map(|p| p.effective_profile())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest hourly effective demand over all profiles.
    pub fn min_effective_demand(&self) -> f64 {
        self.profiles
            .iter()
            .flat_map(|p| p.effective_profile())
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest daily peak of effective demand over all profiles.
    pub fn min_peak_effective_demand(&self) -> f64 {
        self.profiles
            .iter()
            .map(|p| p.effective_profile().into_iter().fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min)
    }
}

fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Redispatches the committed units to cover the effective demand.
///
/// The target is split in proportion to unit capacity; units pushed below
/// their minimum are pinned there and the remainder is re-split among the
/// others until no unit violates its limits. Targets outside the committed
/// range saturate at the nearest bound.
pub fn dispatch_heuristic(state: &RtState, action: &DaAction, case: &GridCase) -> RtPostState {
    let target = state.total_demand() - state.total_wind();
    let gens = &case.generators;
    let mut generation = vec![0.0; gens.len()];
    let committed: Vec<usize> = (0..gens.len()).filter(|&i| action.active[i]).collect();

    let min_total: f64 = committed.iter().map(|&i| gens[i].g_min).sum();
    let max_total: f64 = committed.iter().map(|&i| gens[i].g_max).sum();
    if target <= min_total {
        for &i in &committed {
            generation[i] = gens[i].g_min;
        }
    } else if target >= max_total {
        for &i in &committed {
            generation[i] = gens[i].g_max;
        }
    } else {
        let mut free = committed.clone();
        let mut remaining = target;
        loop {
            let cap: f64 = free.iter().map(|&i| gens[i].g_max).sum();
            let ratio = remaining / cap;
            let (pinned, still_free): (Vec<usize>, Vec<usize>) =
                free.iter().partition(|&&i| ratio * gens[i].g_max < gens[i].g_min);
            if pinned.is_empty() {
                for &i in &free {
                    generation[i] = (ratio * gens[i].g_max).min(gens[i].g_max);
                }
                break;
            }
            for &i in &pinned {
                generation[i] = gens[i].g_min;
                remaining -= gens[i].g_min;
            }
            free = still_free;
            if free.is_empty() {
                break;
            }
        }
    }

    let redispatch = generation
        .iter()
        .zip(&state.generation)
        .zip(&action.active)
        .map(|((new, old), &on)| if on { new - old } else { 0.0 })
        .collect();
    let mut next = state.clone();
    next.generation = generation;
    next.active = action.active.clone();
    RtPostState {
        state: next,
        redispatch,
    }
}

/// One real-time step of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: RtState,
    pub post: RtPostState,
    pub event: ExogenousEvent,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub da_states: Vec<DaState>,
    pub da_actions: Vec<DaAction>,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize)]
struct StepLine {
    day: usize,
    hour: usize,
    reward: f64,
    failed_line: Option<LineId>,
    total_demand: f64,
    total_generation: f64,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.reward).sum::<f64>() / self.steps.len() as f64
    }

    /// One JSON object per real-time step.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let line = StepLine {
                day: s.state.day,
                hour: s.state.hour,
                reward: s.reward,
                failed_line: s.event.failed_line,
                total_demand: s.post.state.total_demand(),
                total_generation: s.post.state.total_generation(),
            };
            out.push_str(&serde_json::to_string(&line).expect("step record serialises"));
            out.push('\n');
        }
        out
    }
}

/// Simulator for one case and scenario. Holds the N-1 screener cache, so
/// each worker owns its own instance.
#[derive(Debug)]
pub struct Environment<'a> {
    pub case: &'a GridCase,
    pub config: &'a ScenarioConfig,
    pub library: ProfileLibrary,
    fail_prob: Vec<f64>,
    repair_steps: Vec<u32>,
    screener: ContingencyScreener,
}

impl<'a> Environment<'a> {
    pub fn new(case: &'a GridCase, config: &'a ScenarioConfig) -> Self {
        let fail_prob = case
            .lines
            .iter()
            .map(|l| config.fail_prob.unwrap_or(l.fail_prob))
            .collect();
        let repair_steps = case
            .lines
            .iter()
            .map(|l| config.repair_steps.unwrap_or(l.repair_steps))
            .collect();
        Self {
            case,
            config,
            library: ProfileLibrary::new(case, config),
            fail_prob,
            repair_steps,
            screener: ContingencyScreener::new(),
        }
    }

    pub fn fail_prob(&self) -> &[f64] {
        &self.fail_prob
    }

    pub fn repair_steps(&self) -> &[u32] {
        &self.repair_steps
    }

    /// A library profile chosen uniformly, with relative Gaussian noise on
    /// every entry.
    pub fn sample_initial_da_state(&self, rng: &mut SimRng) -> DaState {
        let pick = rng.random_range(0..self.library.len());
        let mut state = self.library.profiles[pick].clone();
        let sigma = self.config.da_noise;
        for row in &mut state.demand_forecast {
            for d in row.iter_mut() {
                *d = (*d + sigma * *d * normal(rng)).max(0.0);
            }
        }
        for row in &mut state.wind_forecast {
            for (w, unit) in row.iter_mut().zip(&self.case.wind) {
                *w = (*w + sigma * *w * normal(rng)).clamp(0.0, unit.capacity);
            }
        }
        state
    }

    /// Next day's forecast: every bus and wind unit receives one relative
    /// Gaussian bias held for the whole day. Independent of any action.
    pub fn da_transition(&self, state: &DaState, rng: &mut SimRng) -> DaState {
        let sigma = self.config.da_bias;
        let bus_bias: Vec<f64> = (0..self.case.n_buses()).map(|_| sigma * normal(rng)).collect();
        let wind_bias: Vec<f64> = (0..self.case.wind.len()).map(|_| sigma * normal(rng)).collect();
        let mut next = state.clone();
        for row in &mut next.demand_forecast {
            for (d, b) in row.iter_mut().zip(&bus_bias) {
                *d = (*d * (1.0 + b)).max(0.0);
            }
        }
        for row in &mut next.wind_forecast {
            for ((w, b), unit) in row.iter_mut().zip(&wind_bias).zip(&self.case.wind) {
                *w = (*w * (1.0 + b)).clamp(0.0, unit.capacity);
            }
        }
        next.day_index += 1;
        next
    }

    fn realise(&self, da: &DaState, hour: usize, demand_bias: &[f64], wind_bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let demand = da.demand_forecast[hour]
            .iter()
            .zip(demand_bias)
            .map(|(f, b)| (f + b).max(0.0))
            .collect();
        let wind = da.wind_forecast[hour]
            .iter()
            .zip(wind_bias)
            .zip(&self.case.wind)
            .map(|((f, b), unit)| (f + b).clamp(0.0, unit.capacity))
            .collect();
        (demand, wind)
    }

    /// First real-time state of a day: fresh forecast errors, commitment
    /// from `action`, outages carried over from `prev`.
    pub fn init_rt_day(&self, da: &DaState, action: &DaAction, prev: Option<&RtState>, rng: &mut SimRng) -> RtState {
        let demand_bias0: Vec<f64> = da.demand_forecast[0]
            .iter()
            .map(|d| self.config.sigma_demand0 * d * normal(rng))
            .collect();
        let wind_bias0: Vec<f64> = da.wind_forecast[0]
            .iter()
            .map(|w| self.config.sigma_wind0 * w * normal(rng))
            .collect();
        let (demand, wind) = self.realise(da, 0, &demand_bias0, &wind_bias0);
        let line_countdown = match prev {
            Some(p) => p.line_countdown.clone(),
            None => vec![0; self.case.n_lines()],
        };
        let state = RtState {
            demand,
            wind,
            generation: vec![0.0; self.case.generators.len()],
            active: action.active.clone(),
            line_countdown,
            hour: 0,
            day: da.day_index,
            demand_bias: demand_bias0.clone(),
            wind_bias: wind_bias0.clone(),
            demand_bias0,
            wind_bias0,
        };
        let generation = dispatch_heuristic(&state, action, self.case).state.generation;
        RtState { generation, ..state }
    }

    /// Draws one Bernoulli per line (operational lines only can fire) and
    /// keeps at most one failure, chosen uniformly among those that fired.
    /// The number of draws is fixed, so the stream stays aligned across
    /// policies.
    pub fn sample_contingency(&self, post: &RtPostState, rng: &mut SimRng) -> ExogenousEvent {
        let mut fired = Vec::new();
        for (l, (&p, &cd)) in self.fail_prob.iter().zip(&post.state.line_countdown).enumerate() {
            let u: f64 = rng.random();
            if cd == 0 && u < p {
                fired.push(l);
            }
        }
        let pick: f64 = rng.random();
        let failed_line = if fired.is_empty() {
            None
        } else {
            let k = ((pick * fired.len() as f64) as usize).min(fired.len() - 1);
            Some(fired[k])
        };
        ExogenousEvent { failed_line }
    }

    pub fn n1_reward(&mut self, post: &RtPostState, realized: Option<LineId>) -> f64 {
        let inj = post.state.injections(self.case);
        self.screener
            .n1_reward(self.case, &post.state.line_countdown, &inj, realized)
    }

    /// Scores `post` under `event` and moves to the next hour. At the last
    /// hour of a day the returned state keeps the day's realisation and
    /// `hour == HOURS_PER_DAY`; the caller starts the next day with
    /// [`Environment::init_rt_day`].
    pub fn rt_step(
        &mut self,
        post: &RtPostState,
        event: &ExogenousEvent,
        da: &DaState,
        rng: &mut SimRng,
    ) -> (f64, RtState) {
        let reward = self.n1_reward(post, event.failed_line);
        let s = &post.state;

        let mut countdown: Vec<u32> = s.line_countdown.iter().map(|c| c.saturating_sub(1)).collect();
        if let Some(l) = event.failed_line {
            countdown[l] = self.repair_steps[l];
        }

        let eps = self.config.sigma_eps;
        let demand_bias: Vec<f64> = s
            .demand_bias
            .iter()
            .zip(&s.demand_bias0)
            .map(|(b, b0)| b + eps * b0.abs() * normal(rng))
            .collect();
        let wind_bias: Vec<f64> = s
            .wind_bias
            .iter()
            .zip(&s.wind_bias0)
            .map(|(b, b0)| b + eps * b0.abs() * normal(rng))
            .collect();

        let hour = s.hour + 1;
        let (demand, wind) = if hour < HOURS_PER_DAY {
            self.realise(da, hour, &demand_bias, &wind_bias)
        } else {
            (s.demand.clone(), s.wind.clone())
        };
        let next = RtState {
            demand,
            wind,
            generation: s.generation.clone(),
            active: s.active.clone(),
            line_countdown: countdown,
            hour,
            day: s.day,
            demand_bias,
            wind_bias,
            demand_bias0: s.demand_bias0.clone(),
            wind_bias0: s.wind_bias0.clone(),
        };
        (reward, next)
    }

    /// Runs `horizon_days` days from `initial`. Day-ahead forecasts use
    /// `streams.da`, real-time noise and failures `streams.rt`, and the
    /// policy `streams.policy`, so forecasts and failures do not depend on
    /// which policy is run.
    pub fn run_episode(
        &mut self,
        initial: DaState,
        policy: &dyn DaPolicy,
        streams: &mut EpisodeStreams,
    ) -> EpisodeTrace {
        let days = self.config.horizon_days;
        let mut trace = EpisodeTrace {
            da_states: Vec::with_capacity(days),
            da_actions: Vec::with_capacity(days),
            steps: Vec::with_capacity(days * HOURS_PER_DAY),
        };
        let mut da = initial;
        let mut carry: Option<RtState> = None;
        for day in 0..days {
            let action = policy.act(&da, &mut streams.policy);
            let mut state = self.init_rt_day(&da, &action, carry.as_ref(), &mut streams.rt);
            for _ in 0..HOURS_PER_DAY {
                let post = dispatch_heuristic(&state, &action, self.case);
                let event = self.sample_contingency(&post, &mut streams.rt);
                let (reward, next) = self.rt_step(&post, &event, &da, &mut streams.rt);
                trace.steps.push(StepRecord {
                    state,
                    post,
                    event,
                    reward,
                });
                state = next;
            }
            carry = Some(state);
            let next_da = (day + 1 < days).then(|| self.da_transition(&da, &mut streams.da));
            trace.da_states.push(da.clone());
            trace.da_actions.push(action);
            if let Some(n) = next_da {
                da = n;
            }
        }
        trace
    }

    /// Starts an episode from a fresh initial state drawn on `streams.da`.
    pub fn rollout(&mut self, policy: &dyn DaPolicy, streams: &mut EpisodeStreams) -> EpisodeTrace {
        let initial = self.sample_initial_da_state(&mut streams.da);
        self.run_episode(initial, policy, streams)
    }

    /// Hour 0 of the nominal flat profile at level 1.0 (lowest configured
    /// wind level) with every unit committed and no outages.
    pub fn base_post_state(&self) -> RtPostState {
        self.flat_post_state(1.0)
    }

    /// Hour 0 of the flat profile scaled by `level`, lowest configured wind
    /// level, every unit committed and dispatched, no outages.
    pub fn flat_post_state(&self, level: f64) -> RtPostState {
        let spec = ProfileSpec {
            shape: DailyShape::Flat,
            level,
            wind_level: self
                .config
                .wind_levels
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
                .min(1.0),
        };
        let da = ProfileLibrary::render(self.case, self.config, &spec, 0);
        let n_g = self.case.generators.len();
        let action = DaAction {
            subset_index: 0,
            active: vec![true; n_g],
        };
        let state = RtState {
            demand: da.demand_forecast[0].clone(),
            wind: da.wind_forecast[0].clone(),
            generation: vec![0.0; n_g],
            active: action.active.clone(),
            line_countdown: vec![0; self.case.n_lines()],
            hour: 0,
            day: 0,
            demand_bias: vec![0.0; self.case.n_buses()],
            wind_bias: vec![0.0; self.case.wind.len()],
            demand_bias0: vec![0.0; self.case.n_buses()],
            wind_bias0: vec![0.0; self.case.wind.len()],
        };
        dispatch_heuristic(&state, &action, self.case)
    }
}
