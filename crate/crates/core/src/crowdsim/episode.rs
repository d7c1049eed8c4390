use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{orca_policy, FullAgentState, JointState, ObservableState, OrcaParams, SimError, Status, Vec2, World};
use crate::reward::{compute_reward, RewardConfig};
use crate::Error;

/// Anything that can drive the robot for one episode.
pub trait RobotPolicy {
    fn name(&self) -> &str;

    /// Called once before the first action of every episode.
    fn reset(&mut self) {}

    fn act(&mut self, state: &JointState) -> Result<Vec2, Error>;
}

/// The robot itself runs ORCA against the (unaware) humans.
#[derive(Clone, Debug)]
pub struct OrcaRobot {
    pub params: OrcaParams,
    pub time_step: f64,
}

impl OrcaRobot {
    pub fn new(time_step: f64) -> Self {
        Self { params: OrcaParams::default(), time_step }
    }
}

impl RobotPolicy for OrcaRobot {
    fn name(&self) -> &str {
        "ORCA"
    }

    fn act(&mut self, state: &JointState) -> Result<Vec2, Error> {
        Ok(orca_policy(&state.robot, &state.humans, self.time_step, &self.params))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpisodeResult {
    Success,
    Collision,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscomfortEvent {
    pub time: f64,
    pub separation: f64,
}

/// One transition: the action taken, and the world right after it.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub action: Vec2,
    pub state: JointState,
    pub reward: f64,
    pub separation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub result: EpisodeResult,
    pub elapsed: f64,
    pub initial: JointState,
    pub steps: Vec<StepRecord>,
    pub discomfort: Vec<DiscomfortEvent>,
}

impl EpisodeOutcome {
    /// Joint states `s_0 … s_T`, one more than the number of actions.
    pub fn states(&self) -> Vec<&JointState> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.state)).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Rolls `world` forward under `policy` until it terminates.
pub fn run_episode(
    mut world: World,
    policy: &mut dyn RobotPolicy,
    reward: &RewardConfig,
) -> Result<EpisodeOutcome, Error> {
    world.params.validate()?;
    policy.reset();
    let initial = world.joint_state();
    let mut steps = Vec::new();
    let mut discomfort = Vec::new();
    let mut state = initial.clone();
    let result = loop {
        let action = policy.act(&state)?;
        world.step(action)?;
        let separation = world.separation();
        let time = world.time();
        let status = world.status();
        let at_goal = world.robot.goal_distance() < world.params.goal_tolerance();
        let r = compute_reward(separation, at_goal, time, reward);
        if reward.is_discomfort(separation) {
            discomfort.push(DiscomfortEvent { time, separation });
        }
        state = world.joint_state();
        steps.push(StepRecord { time, action, state: state.clone(), reward: r, separation });
        match status {
            Status::Running => {}
            Status::Success => break EpisodeResult::Success,
            Status::Collision => break EpisodeResult::Collision,
            Status::Timeout => break EpisodeResult::Timeout,
        }
    };
    Ok(EpisodeOutcome { result, elapsed: world.time(), initial, steps, discomfort })
}

/// One line of a trajectory log. The first line of an episode carries the
/// initial state and no action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub time: f64,
    pub robot: FullAgentState,
    pub humans: Vec<ObservableState>,
    pub action: Option<Vec2>,
    pub reward: Option<f64>,
    /// `None` when there is no human to measure against.
    pub separation: Option<f64>,
}

pub fn write_trajectory_log<W: Write>(out: &mut W, outcome: &EpisodeOutcome) -> Result<(), SimError> {
    let mut line = |rec: &TrajectoryRecord| -> Result<(), SimError> {
        let text = serde_json::to_string(rec).map_err(|e| SimError::Log(e.to_string()))?;
        writeln!(out, "{text}")?;
        Ok(())
    };
    let init = &outcome.initial;
    let separation = super::separation_distance(&init.robot.observable, &init.humans);
    line(&TrajectoryRecord {
        time: 0.0,
        robot: init.robot,
        humans: init.humans.clone(),
        action: None,
        reward: None,
        separation: separation.is_finite().then_some(separation),
    })?;
    for s in &outcome.steps {
        line(&TrajectoryRecord {
            time: s.time,
            robot: s.state.robot,
            humans: s.state.humans.clone(),
            action: Some(s.action),
            reward: Some(s.reward),
            separation: s.separation.is_finite().then_some(s.separation),
        })?;
    }
    Ok(())
}

/// Prefix of an optional header line (`{"meta": {...}}`) that readers skip.
pub const LOG_META_PREFIX: &str = "{\"meta\":";

pub fn read_trajectory_log<R: BufRead>(input: R) -> Result<Vec<TrajectoryRecord>, SimError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with(LOG_META_PREFIX) {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| SimError::Log(format!("line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    Ok(records)
}
