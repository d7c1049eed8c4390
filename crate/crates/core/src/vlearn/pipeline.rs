use super::network::{Model, NetConfig};
use super::train::{imitation_learn, rl_train_from, EpisodeLog, TrainConfig, TrainingLog};
use crate::crowdsim::{
    run_episode, spawn_scenario, CrowdModel, EpisodeOutcome, OrcaRobot, ScenarioConfig, ScenarioKind, SimParams,
};
use crate::rng::substream;
use crate::Error;

/// Scenario seeds at or above this value are reserved for training; test
/// cases use small seeds, so the two never overlap.
pub const TRAINING_SEED_BASE: u64 = 1 << 40;

/// Where training episodes come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingSetup {
    pub scenario: ScenarioKind,
    pub crowd_model: CrowdModel,
    pub sim: SimParams,
    pub seed: u64,
}

impl TrainingSetup {
    fn scenario_seed(&self, phase: u64, index: usize) -> u64 {
        TRAINING_SEED_BASE + (self.seed << 24) + (phase << 20) + index as u64
    }

    pub fn demo_world(&self, index: usize) -> Result<crate::crowdsim::World, Error> {
        let cfg = ScenarioConfig::new(self.scenario, self.crowd_model, self.scenario_seed(1, index));
        Ok(spawn_scenario(&cfg, &self.sim)?)
    }

    pub fn rl_world(&self, index: usize) -> Result<crate::crowdsim::World, Error> {
        let cfg = ScenarioConfig::new(self.scenario, self.crowd_model, self.scenario_seed(2, index));
        Ok(spawn_scenario(&cfg, &self.sim)?)
    }
}

/// Rolls out the ORCA robot to produce demonstrations.
pub fn orca_demonstrations(
    setup: &TrainingSetup,
    count: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpisodeOutcome>, Error> {
    (0..count)
        .map(|i| run_episode(setup.demo_world(i)?, &mut OrcaRobot::new(setup.sim.time_step), &cfg.reward))
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainedPolicy {
    pub model: Model,
    pub il_losses: Vec<f64>,
    pub log: TrainingLog,
}

/// Fresh network weights drawn from the run's `init` sub-stream.
pub fn init_model(net: NetConfig, setup: &TrainingSetup) -> Model {
    Model::new(net, &mut substream(setup.seed, &format!("init/{}", net.kind)))
}

/// Fits `model` to ORCA demonstrations; empty when imitation is disabled.
pub fn imitation_phase(model: &mut Model, cfg: &TrainConfig, setup: &TrainingSetup) -> Result<Vec<f64>, Error> {
    if cfg.il_episodes == 0 || cfg.il_epochs == 0 {
        return Ok(vec![]);
    }
    let demos = orca_demonstrations(setup, cfg.il_episodes, cfg)?;
    imitation_learn(model, &demos, cfg, &mut substream(setup.seed, "imitation"))
}

/// RL episodes `start..cfg.rl_episodes`; each start point has its own
/// exploration stream so a resumed run never replays earlier draws.
pub fn rl_phase(
    model: &mut Model,
    cfg: &TrainConfig,
    setup: &TrainingSetup,
    start: usize,
    imitation_initialized: bool,
    on_episode: &mut dyn FnMut(&EpisodeLog),
) -> Result<TrainingLog, Error> {
    let name = if start == 0 { "reinforcement".to_string() } else { format!("reinforcement/{start}") };
    let mut rng = substream(setup.seed, &name);
    let mut env = |i: usize| setup.rl_world(i);
    rl_train_from(model, &mut env, cfg, start, imitation_initialized, &mut rng, on_episode)
}

/// Imitation learning on ORCA demonstrations followed by RL, all seeded from
/// `setup.seed`.
pub fn train_policy(
    net: NetConfig,
    cfg: &TrainConfig,
    setup: &TrainingSetup,
    on_episode: &mut dyn FnMut(&EpisodeLog),
) -> Result<TrainedPolicy, Error> {
    cfg.validate()?;
    let mut model = init_model(net, setup);
    let il_losses = imitation_phase(&mut model, cfg, setup)?;
    let log = rl_phase(&mut model, cfg, setup, 0, !il_losses.is_empty(), on_episode)?;
    Ok(TrainedPolicy { model, il_losses, log })
}
