//! Policy rollouts that record traces, and KPI evaluation over them.

use rand::Rng;

use crate::env::{Env, Observation};
use crate::error::Result;
use crate::kpi::{sample_checkpoints, EpisodeKpi, EpisodeTrace, KpiReport, KpiSet, TraceStep};
use crate::net::{argmax, sample_action, DenseNet};
use crate::scenario::Scenario;
use crate::vehicle::Control;

/// How actions are drawn from the policy distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// Most probable action.
    Greedy,
    Sample,
}

pub fn select_action(
    policy: &DenseNet,
    obs: &Observation,
    mode: ActionMode,
    rng: &mut impl Rng,
) -> Result<usize> {
    let probs = policy.forward(&obs.to_array())?;
    match mode {
        ActionMode::Greedy => Ok(argmax(&probs)),
        ActionMode::Sample => sample_action(&probs, rng),
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub trace: EpisodeTrace,
    pub total_reward: f64,
}

/// Runs one episode from reset to termination and records every step.
pub fn run_episode(
    env: &mut Env,
    policy: &DenseNet,
    mode: ActionMode,
    seed: u64,
    rng: &mut impl Rng,
) -> Result<EpisodeOutcome> {
    let dt = env.scenario().vehicle.dt;
    let mut obs = env.reset(seed)?;
    let mut steps = vec![TraceStep::new(0.0, env.state(), Control::default(), &obs)];
    let mut total_reward = 0.0;
    loop {
        let action = select_action(policy, &obs, mode, rng)?;
        let r = env.step(action)?;
        total_reward += r.reward;
        obs = r.observation;
        steps.push(TraceStep::new(
            r.info.step as f64 * dt,
            &r.info.state,
            r.info.control,
            &obs,
        ));
        if r.termination.is_some() {
            return Ok(EpisodeOutcome {
                trace: EpisodeTrace {
                    steps,
                    termination: r.termination,
                },
                total_reward,
            });
        }
    }
}

/// Settings shared by every evaluation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub episodes: usize,
    pub mode: ActionMode,
    pub seed: u64,
    pub checkpoints: usize,
    pub tolerance: f64,
}

/// Rolls out `settings.episodes` episodes, the scenario of episode `i`
/// coming from `scenario_for(i, episode_seed)`, and aggregates KPIs.
///
/// Episode seeds are `seed + i`. Checkpoints are drawn once from `seed`
/// on the first scenario's path.
pub fn evaluate(
    policy: &DenseNet,
    settings: &EvalSettings,
    mut scenario_for: impl FnMut(usize, u64) -> Result<Scenario>,
    rng: &mut impl Rng,
) -> Result<(KpiReport, Vec<EpisodeTrace>)> {
    let mut traces = Vec::with_capacity(settings.episodes);
    let mut episodes = Vec::with_capacity(settings.episodes);
    let mut checkpoints = Vec::new();
    for i in 0..settings.episodes {
        let seed = settings.seed.wrapping_add(i as u64);
        let scenario = scenario_for(i, seed)?;
        if i == 0 {
            checkpoints = sample_checkpoints(&scenario.path, settings.checkpoints, settings.seed);
        }
        let sensor = scenario.sensor;
        let mut env = Env::new(scenario)?;
        let outcome = run_episode(&mut env, policy, settings.mode, seed, rng)?;
        let kpis = KpiSet::evaluate(
            &outcome.trace,
            &checkpoints,
            settings.tolerance,
            sensor.inner_radius,
            sensor.outer_radius,
        )?;
        episodes.push(EpisodeKpi {
            episode: i,
            seed,
            steps: outcome.trace.step_count(),
            termination: outcome.trace.termination,
            kpis,
        });
        traces.push(outcome.trace);
    }
    let report = KpiReport::new(episodes, &checkpoints, settings.tolerance, settings.seed)?;
    Ok((report, traces))
}
