use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{orca_policy, sfm_policy, CrowdModel, FullAgentState, JointState, ObservableState, OrcaParams, SfmParams};
use super::{SimError, Vec2};
use crate::rng::substream;

/// Physical constants shared by every scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    pub time_step: f64,
    pub time_limit: f64,
    pub robot_radius: f64,
    pub robot_v_pref: f64,
    pub human_radius: f64,
    pub human_v_pref: f64,
    /// Extra gap required between spawned starts (and goals).
    pub spawn_clearance: f64,
    pub orca: OrcaParams,
    pub sfm: SfmParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            time_step: 0.25,
            time_limit: 25.0,
            robot_radius: 0.3,
            robot_v_pref: 1.0,
            human_radius: 0.3,
            human_v_pref: 1.0,
            spawn_clearance: 0.2,
            orca: OrcaParams::default(),
            sfm: SfmParams::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("time_step", self.time_step),
            ("time_limit", self.time_limit),
            ("robot_radius", self.robot_radius),
            ("robot_v_pref", self.robot_v_pref),
            ("human_radius", self.human_radius),
            ("human_v_pref", self.human_v_pref),
            ("orca.time_horizon", self.orca.time_horizon),
            ("sfm.relaxation_time", self.sfm.relaxation_time),
            ("sfm.repulsion_range", self.sfm.repulsion_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// The robot counts as arrived within one robot radius of its goal.
    pub fn goal_tolerance(&self) -> f64 {
        self.robot_radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Running,
    Success,
    Collision,
    Timeout,
}

/// Minimum surface-to-surface gap between the robot and any human.
pub fn separation_distance(robot: &ObservableState, humans: &[ObservableState]) -> f64 {
    humans.iter().map(|h| (robot.position - h.position).norm() - robot.radius - h.radius).fold(f64::INFINITY, f64::min)
}

/// Collision outranks success, which outranks timeout.
pub fn check_termination(
    separation: f64,
    goal_distance: f64,
    time: f64,
    goal_tolerance: f64,
    time_limit: f64,
) -> Status {
    if separation <= 0.0 {
        Status::Collision
    } else if goal_distance < goal_tolerance {
        Status::Success
    } else if time >= time_limit {
        Status::Timeout
    } else {
        Status::Running
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub robot: FullAgentState,
    pub humans: Vec<FullAgentState>,
    pub crowd_model: CrowdModel,
    pub params: SimParams,
    steps: usize,
    arrived: Vec<bool>,
    // only consulted by the social force model when two centres coincide
    fallback: ChaCha8Rng,
}

impl World {
    pub fn new(
        robot: FullAgentState,
        humans: Vec<FullAgentState>,
        crowd_model: CrowdModel,
        params: SimParams,
        seed: u64,
    ) -> Self {
        let arrived = vec![false; humans.len()];
        Self { robot, humans, crowd_model, params, steps: 0, arrived, fallback: substream(seed, "crowd/fallback") }
    }

    /// Elapsed time, computed from the step count so it never drifts.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.params.time_step
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn human_observables(&self) -> Vec<ObservableState> {
        self.humans.iter().map(|h| h.observable).collect()
    }

    pub fn joint_state(&self) -> JointState {
        JointState { robot: self.robot, humans: self.human_observables() }
    }

    pub fn separation(&self) -> f64 {
        separation_distance(&self.robot.observable, &self.human_observables())
    }

    pub fn status(&self) -> Status {
        check_termination(
            self.separation(),
            self.robot.goal_distance(),
            self.time(),
            self.params.goal_tolerance(),
            self.params.time_limit,
        )
    }

    /// Advances one step. Humans never see the robot; every velocity is
    /// decided on the pre-step configuration before anyone moves.
    pub fn step(&mut self, action: Vec2) -> Result<(), SimError> {
        if !action.is_finite() {
            return Err(SimError::NonFiniteAction { x: action.x, y: action.y });
        }
        let dt = self.params.time_step;
        let observed = self.human_observables();
        let mut velocities = Vec::with_capacity(self.humans.len());
        let mut neighbors = Vec::with_capacity(observed.len().saturating_sub(1));
        for (i, human) in self.humans.iter().enumerate() {
            if self.arrived[i] {
                velocities.push(Vec2::ZERO);
                continue;
            }
            neighbors.clear();
            neighbors.extend(observed.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, o)| *o));
            let v = match self.crowd_model {
                CrowdModel::Orca => orca_policy(human, &neighbors, dt, &self.params.orca),
                CrowdModel::Sfm => sfm_policy(human, &neighbors, dt, &self.params.sfm, &mut self.fallback),
            };
            velocities.push(v);
        }
        for (i, (human, v)) in self.humans.iter_mut().zip(velocities).enumerate() {
            human.observable.velocity = v;
            human.observable.position += v * dt;
            if !self.arrived[i] && human.goal_distance() < human.radius() {
                self.arrived[i] = true;
                human.observable.velocity = Vec2::ZERO;
            }
        }
        self.robot.observable.velocity = action;
        self.robot.observable.position += action * dt;
        self.steps += 1;
        Ok(())
    }
}
