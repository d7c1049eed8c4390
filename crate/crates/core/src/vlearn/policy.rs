use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::action::{build_action_space, propagate};
use super::features::{goal_heading, transform_state, StateFeatures};
use super::network::Model;
use crate::crowdsim::{separation_distance, JointState, RobotPolicy, Vec2};
use crate::reward::{compute_reward, RewardConfig};
use crate::Error;

/// How the discount is applied per simulation step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscountConvention {
    /// `γ^(Δt·v_pref)`: the discount is per metre travelled at preferred speed.
    TimeScaled,
    /// `γ` per step.
    PerStep,
}

pub fn step_discount(gamma: f64, convention: DiscountConvention, dt: f64, v_pref: f64) -> f64 {
    match convention {
        DiscountConvention::TimeScaled => gamma.powf(dt * v_pref),
        DiscountConvention::PerStep => gamma,
    }
}

/// Anything that can score candidate next states given recent history.
pub trait ValueFunction {
    /// Number of past states (T) the value of a state depends on.
    fn window(&self) -> usize;

    /// Value of each `prefix ++ [candidate]` window at its last position.
    fn score_next(&self, prefix: &[&StateFeatures], candidates: &[&StateFeatures]) -> Result<Vec<f64>, Error>;
}

impl ValueFunction for Model {
    fn window(&self) -> usize {
        self.net.config.window
    }

    fn score_next(&self, prefix: &[&StateFeatures], candidates: &[&StateFeatures]) -> Result<Vec<f64>, Error> {
        self.net.score_next(&self.params, prefix, candidates)
    }
}

/// The last T + 1 joint states with their features. Before T + 1 states
/// have been seen, the first state fills the missing slots.
#[derive(Clone, Debug)]
pub struct TemporalCrowdState {
    len: usize,
    joints: VecDeque<JointState>,
    features: VecDeque<StateFeatures>,
}

impl TemporalCrowdState {
    /// Window of `window + 1` copies of `first`.
    pub fn new(window: usize, first: JointState) -> Self {
        let f = transform_state(&first);
        let len = window + 1;
        Self { len, joints: vec![first; len].into(), features: vec![f; len].into() }
    }

    pub fn push(&mut self, state: JointState) {
        self.features.pop_front();
        self.joints.pop_front();
        self.features.push_back(transform_state(&state));
        self.joints.push_back(state);
    }

    pub fn current(&self) -> &JointState {
        self.joints.back().expect("window is never empty")
    }

    pub fn joints(&self) -> impl Iterator<Item = &JointState> {
        self.joints.iter()
    }

    pub fn features(&self) -> Vec<&StateFeatures> {
        self.features.iter().collect()
    }

    /// The T states that precede a candidate next state.
    pub fn prefix(&self) -> Vec<&StateFeatures> {
        self.features.iter().skip(1).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LookaheadConfig {
    pub gamma: f64,
    pub discount: DiscountConvention,
    pub time_step: f64,
    pub reward: RewardConfig,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self { gamma: 0.9, discount: DiscountConvention::TimeScaled, time_step: 0.25, reward: RewardConfig::default() }
    }
}

/// ε-greedy one-step lookahead. `actions` are in the robot-centric frame;
/// returns the chosen index and the world-frame velocity. Ties go to the
/// lowest index.
pub fn select_action<V: ValueFunction + ?Sized, R: Rng + ?Sized>(
    value: &V,
    window: &TemporalCrowdState,
    time: f64,
    epsilon: f64,
    actions: &[Vec2],
    cfg: &LookaheadConfig,
    rng: &mut R,
) -> Result<(usize, Vec2), Error> {
    if actions.is_empty() {
        return Err(Error::Invalid("empty action space".into()));
    }
    if window.len() != value.window() + 1 {
        return Err(Error::Invalid(format!(
            "window of {} states, value function needs {}",
            window.len(),
            value.window() + 1
        )));
    }
    let current = window.current();
    let heading = goal_heading(current);
    let to_world = |a: Vec2| a.rotated(heading);
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let i = rng.gen_range(0..actions.len());
        return Ok((i, to_world(actions[i])));
    }
    let dt = cfg.time_step;
    let discount = step_discount(cfg.gamma, cfg.discount, dt, current.robot.v_pref());
    let mut rewards = Vec::with_capacity(actions.len());
    let mut next_features = Vec::with_capacity(actions.len());
    for &a in actions {
        let next = propagate(current, to_world(a), dt);
        let sep = separation_distance(&next.robot.observable, &next.humans);
        let at_goal = next.robot.goal_distance() < next.robot.radius();
        rewards.push(compute_reward(sep, at_goal, time + dt, &cfg.reward));
        next_features.push(transform_state(&next));
    }
    let candidates: Vec<&StateFeatures> = next_features.iter().collect();
    let values = value.score_next(&window.prefix(), &candidates)?;
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (r, v)) in rewards.iter().zip(&values).enumerate() {
        let score = r + discount * v;
        if !score.is_finite() {
            return Err(Error::Invalid(format!("non-finite score for action {i}")));
        }
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok((best, to_world(actions[best])))
}

/// Drives the robot with a learned value network.
pub struct LearnedPolicy {
    pub model: Arc<Model>,
    pub epsilon: f64,
    pub lookahead: LookaheadConfig,
    actions: Vec<Vec2>,
    window: Option<TemporalCrowdState>,
    steps: usize,
    rng: ChaCha8Rng,
}

impl LearnedPolicy {
    pub fn new(model: Arc<Model>, lookahead: LookaheadConfig, epsilon: f64, v_pref: f64, rng: ChaCha8Rng) -> Self {
        Self { model, epsilon, lookahead, actions: build_action_space(v_pref), window: None, steps: 0, rng }
    }

    /// Greedy policy for evaluation.
    pub fn greedy(model: Arc<Model>, lookahead: LookaheadConfig, v_pref: f64) -> Self {
        Self::new(model, lookahead, 0.0, v_pref, crate::rng::substream(0, "greedy"))
    }
}

impl RobotPolicy for LearnedPolicy {
    fn name(&self) -> &str {
        self.model.net.kind().name()
    }

    fn reset(&mut self) {
        self.window = None;
        self.steps = 0;
    }

    fn act(&mut self, state: &JointState) -> Result<Vec2, Error> {
        match &mut self.window {
            Some(w) => w.push(state.clone()),
            None => self.window = Some(TemporalCrowdState::new(self.model.window(), state.clone())),
        }
        let window = self.window.as_ref().expect("set above");
        let time = self.steps as f64 * self.lookahead.time_step;
        let (_, v) = select_action(
            self.model.as_ref(),
            window,
            time,
            self.epsilon,
            &self.actions,
            &self.lookahead,
            &mut self.rng,
        )?;
        self.steps += 1;
        Ok(v)
    }
}
