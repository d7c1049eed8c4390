use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{transform_state, StateFeatures};
use super::network::Model;
use super::policy::{step_discount, DiscountConvention, LearnedPolicy, LookaheadConfig};
use crate::crowdsim::{run_episode, EpisodeOutcome, EpisodeResult, World};
use crate::numerics::{Adam, AdamConfig, Tape, Tensor};
use crate::reward::RewardConfig;
use crate::rng::substream;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub discount: DiscountConvention,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of RL episodes over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Optimiser steps after each RL episode.
    pub batches_per_episode: usize,
    /// Copy behaviour weights into the target network every K episodes.
    pub target_sync_interval: usize,
    pub il_episodes: usize,
    pub il_epochs: usize,
    pub il_lr: f64,
    pub rl_episodes: usize,
    pub rl_lr: f64,
    pub time_step: f64,
    pub v_pref: f64,
    pub reward: RewardConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            discount: DiscountConvention::TimeScaled,
            epsilon_start: 0.5,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.4,
            buffer_capacity: 20_000,
            batch_size: 32,
            batches_per_episode: 8,
            target_sync_interval: 50,
            il_episodes: 300,
            il_epochs: 10,
            il_lr: 1e-3,
            rl_episodes: 1000,
            rl_lr: 2e-4,
            time_step: 0.25,
            v_pref: 1.0,
            reward: RewardConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.target_sync_interval == 0 {
            return bad("target sync interval must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer capacity must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("exploration rates must lie in [0, 1]");
        }
        if !(self.time_step > 0.0 && self.v_pref > 0.0 && self.il_lr > 0.0 && self.rl_lr > 0.0) {
            return bad("time step, v_pref and learning rates must be positive");
        }
        Ok(())
    }

    pub fn step_discount(&self) -> f64 {
        step_discount(self.gamma, self.discount, self.time_step, self.v_pref)
    }

    pub fn lookahead(&self) -> LookaheadConfig {
        LookaheadConfig { gamma: self.gamma, discount: self.discount, time_step: self.time_step, reward: self.reward }
    }

    /// Linear decay over the first `epsilon_decay_fraction` of episodes, then flat.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let decay = (self.epsilon_decay_fraction * self.rl_episodes as f64).max(1.0);
        let frac = (episode as f64 / decay).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Discounted return-to-go for every step, by backward accumulation.
pub fn assemble_target_values(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + discount * acc;
        out[t] = acc;
    }
    out
}

/// Per-position targets for the window ending at step `t`; positions before
/// the episode start repeat step 0, matching the padded states.
pub fn window_targets(step_targets: &[f64], t: usize, window: usize) -> Vec<f64> {
    (0..=window).map(|k| step_targets[(t + k).saturating_sub(window)]).collect()
}

fn window_indices(t: usize, window: usize) -> impl Iterator<Item = usize> {
    (0..=window).map(move |k| (t + k).saturating_sub(window))
}

/// Features of `s_0 … s_T` for one episode, shared by all its windows.
pub type EpisodeFeatures = Arc<Vec<StateFeatures>>;

pub fn episode_features(outcome: &EpisodeOutcome) -> EpisodeFeatures {
    Arc::new(outcome.states().into_iter().map(transform_state).collect())
}

#[derive(Clone, Debug)]
pub struct ReplayEntry {
    pub episode: EpisodeFeatures,
    /// Index of the window's last state.
    pub step: usize,
    pub target: Vec<f64>,
}

impl ReplayEntry {
    pub fn window(&self, window: usize) -> impl Iterator<Item = &StateFeatures> {
        window_indices(self.step, window).map(|i| &self.episode[i])
    }
}

/// Bounded FIFO of training windows.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<ReplayEntry>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, entry: ReplayEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayEntry> {
        self.entries.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<&ReplayEntry> {
        (0..n).map(|_| &self.entries[rng.gen_range(0..self.entries.len())]).collect()
    }
}

/// One Adam step on the mean squared error over whole value vectors.
pub fn fit_batch(model: &mut Model, opt: &mut Adam, batch: &[&ReplayEntry]) -> Result<f64, Error> {
    let window = model.net.config.window;
    let states: Vec<&StateFeatures> = batch.iter().flat_map(|e| e.window(window)).collect();
    let targets: Vec<f64> = batch.iter().flat_map(|e| e.target.iter().copied()).collect();
    if targets.len() != states.len() {
        return Err(Error::Invalid("target length does not match the window".into()));
    }
    let mut tape = Tape::new();
    let binding = model.params.bind(&mut tape);
    let pred = model.net.forward(&mut tape, &binding, &states)?;
    let target = tape.constant(Tensor::new(vec![targets.len(), 1], targets)?);
    let loss = tape.mse_loss(pred, target)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    opt.step(&mut model.params, &binding.collect(&grads))?;
    Ok(value)
}

/// Supervised regression of the value network onto the discounted returns of
/// demonstration episodes. Returns the mean loss of each epoch.
pub fn imitation_learn<R: Rng + ?Sized>(
    model: &mut Model,
    demos: &[EpisodeOutcome],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, Error> {
    cfg.validate()?;
    if demos.is_empty() {
        return Err(Error::Invalid("imitation learning needs at least one demonstration".into()));
    }
    let window = model.net.config.window;
    let discount = cfg.step_discount();
    let mut entries = Vec::new();
    for demo in demos {
        let features = episode_features(demo);
        let targets = assemble_target_values(&demo.rewards(), discount);
        for t in 0..targets.len() {
            entries.push(ReplayEntry {
                episode: features.clone(),
                step: t,
                target: window_targets(&targets, t, window),
            });
        }
    }
    let mut opt = Adam::new(AdamConfig { lr: cfg.il_lr, ..Default::default() });
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let mut losses = Vec::with_capacity(cfg.il_epochs);
    for _ in 0..cfg.il_epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&ReplayEntry> = chunk.iter().map(|&i| &entries[i]).collect();
            total += fit_batch(model, &mut opt, &batch)?;
            batches += 1;
        }
        losses.push(total / batches as f64);
    }
    Ok(losses)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub result: EpisodeResult,
    pub steps: usize,
    /// Discounted return from the initial state.
    #[serde(rename = "return")]
    pub discounted_return: f64,
    pub epsilon: f64,
    /// Mean optimiser loss after this episode; `None` when the buffer was
    /// still smaller than one batch.
    pub loss: Option<f64>,
    pub target_synced: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    /// True when RL started from weights that had not been imitation-trained.
    pub cold_start: bool,
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn success_rate(&self, last: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(last)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|e| e.result == EpisodeResult::Success).count() as f64 / tail.len() as f64
    }
}

/// Runs one episode with the behaviour network and stores its windows with
/// one-step bootstrapped targets from `target`.
pub fn collect_episode(
    behaviour: &Arc<Model>,
    target: &Model,
    world: World,
    epsilon: f64,
    cfg: &TrainConfig,
    rng_seed: u64,
    buffer: &mut ReplayBuffer,
) -> Result<EpisodeOutcome, Error> {
    let mut policy =
        LearnedPolicy::new(behaviour.clone(), cfg.lookahead(), epsilon, cfg.v_pref, substream(rng_seed, "exploration"));
    let outcome = run_episode(world, &mut policy, &cfg.reward)?;
    let features = episode_features(&outcome);
    let rewards = outcome.rewards();
    let window = target.net.config.window;
    let discount = cfg.step_discount();
    // V_target of the window ending at s_{t+1}, for every non-terminal t
    let next_windows: Vec<Vec<&StateFeatures>> =
        (1..rewards.len()).map(|t| window_indices(t, window).map(|i| &features[i]).collect()).collect();
    let next_values: Vec<f64> = if next_windows.is_empty() {
        vec![]
    } else {
        target.net.values(&target.params, &next_windows)?.into_iter().map(|v| v[window]).collect()
    };
    let step_targets: Vec<f64> = rewards
        .iter()
        .enumerate()
        .map(|(t, &r)| if t + 1 < rewards.len() { r + discount * next_values[t] } else { r })
        .collect();
    for t in 0..rewards.len() {
        buffer.push(ReplayEntry {
            episode: features.clone(),
            step: t,
            target: window_targets(&step_targets, t, window),
        });
    }
    Ok(outcome)
}

/// Replay-buffer deep V-learning with a periodically synchronised target
/// network. `env(i)` builds the world for episode `i`; `on_episode` sees
/// every log record as it is produced.
pub fn rl_train<R: Rng + ?Sized>(
    model: &mut Model,
    env: &mut dyn FnMut(usize) -> Result<World, Error>,
    cfg: &TrainConfig,
    imitation_initialized: bool,
    rng: &mut R,
    on_episode: &mut dyn FnMut(&EpisodeLog),
) -> Result<TrainingLog, Error> {
    rl_train_from(model, env, cfg, 0, imitation_initialized, rng, on_episode)
}

/// [`rl_train`] resumed at episode `start`: the ε schedule and sync cadence
/// continue from there and episodes `start..rl_episodes` are run. The replay
/// buffer starts empty and the target network starts as a copy of `model`.
pub fn rl_train_from<R: Rng + ?Sized>(
    model: &mut Model,
    env: &mut dyn FnMut(usize) -> Result<World, Error>,
    cfg: &TrainConfig,
    start: usize,
    imitation_initialized: bool,
    rng: &mut R,
    on_episode: &mut dyn FnMut(&EpisodeLog),
) -> Result<TrainingLog, Error> {
    cfg.validate()?;
    let mut log = TrainingLog {
        cold_start: !imitation_initialized,
        episodes: Vec::with_capacity(cfg.rl_episodes.saturating_sub(start)),
    };
    let mut target = model.clone();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut opt = Adam::new(AdamConfig { lr: cfg.rl_lr, ..Default::default() });
    let discount = cfg.step_discount();
    for episode in start..cfg.rl_episodes {
        let epsilon = cfg.epsilon(episode);
        let behaviour = Arc::new(model.clone());
        let seed: u64 = rng.gen();
        let outcome = collect_episode(&behaviour, &target, env(episode)?, epsilon, cfg, seed, &mut buffer)?;
        let mut loss = None;
        if buffer.len() >= cfg.batch_size && cfg.batches_per_episode > 0 {
            let mut total = 0.0;
            for _ in 0..cfg.batches_per_episode {
                let batch = buffer.sample(rng, cfg.batch_size);
                total += fit_batch(model, &mut opt, &batch)?;
            }
            loss = Some(total / cfg.batches_per_episode as f64);
        }
        let target_synced = (episode + 1) % cfg.target_sync_interval == 0;
        if target_synced {
            target.params = model.params.clone();
        }
        let returns = assemble_target_values(&outcome.rewards(), discount);
        let record = EpisodeLog {
            episode,
            result: outcome.result,
            steps: outcome.steps.len(),
            discounted_return: returns.first().copied().unwrap_or(0.0),
            epsilon,
            loss,
            target_synced,
        };
        on_episode(&record);
        log.episodes.push(record);
    }
    Ok(log)
}

/// Target parameters after a sync are a copy of the behaviour parameters.
pub fn sync_target(target: &mut Model, behaviour: &Model) {
    target.params = behaviour.params.clone();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_examples() {
        assert_eq!(assemble_target_values(&[1.0], 0.9), vec![1.0]);
        let y = assemble_target_values(&[0.0, 0.0, 1.0], 0.9);
        assert!((y[0] - 0.81).abs() < 1e-15 && (y[1] - 0.9).abs() < 1e-15 && y[2] == 1.0);
        assert_eq!(assemble_target_values(&[0.0; 4], 0.9), vec![0.0; 4]);
    }

    #[test]
    fn window_targets_pad_with_first_step() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(window_targets(&y, 0, 2), vec![1.0, 1.0, 1.0]);
        assert_eq!(window_targets(&y, 1, 2), vec![1.0, 1.0, 2.0]);
        assert_eq!(window_targets(&y, 3, 2), vec![2.0, 3.0, 4.0]);
        assert_eq!(window_targets(&y, 2, 0), vec![3.0]);
    }

    #[test]
    fn replay_is_fifo() {
        let ep: EpisodeFeatures = Arc::new(vec![]);
        let mut b = ReplayBuffer::new(3);
        for step in 0..5 {
            b.push(ReplayEntry { episode: ep.clone(), step, target: vec![] });
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.iter().map(|e| e.step).collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = TrainConfig { rl_episodes: 100, ..Default::default() };
        assert_eq!(cfg.epsilon(0), 0.5);
        assert!((cfg.epsilon(20) - 0.3).abs() < 1e-12);
        assert!((cfg.epsilon(40) - 0.1).abs() < 1e-12);
        assert!((cfg.epsilon(99) - 0.1).abs() < 1e-12);
    }
}
