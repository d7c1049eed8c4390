use serde::{Deserialize, Serialize};

use super::Vec2;

/// What any agent can sense about another.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// An agent's intention: goal and preferred speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub goal: Vec2,
    pub v_pref: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullAgentState {
    pub observable: ObservableState,
    pub hidden: HiddenState,
}

impl FullAgentState {
    pub fn new(position: Vec2, goal: Vec2, radius: f64, v_pref: f64) -> Self {
        Self {
            observable: ObservableState { position, velocity: Vec2::ZERO, radius },
            hidden: HiddenState { goal, v_pref },
        }
    }

    pub fn position(&self) -> Vec2 {
        self.observable.position
    }

    pub fn velocity(&self) -> Vec2 {
        self.observable.velocity
    }

    pub fn radius(&self) -> f64 {
        self.observable.radius
    }

    pub fn goal(&self) -> Vec2 {
        self.hidden.goal
    }

    pub fn v_pref(&self) -> f64 {
        self.hidden.v_pref
    }

    pub fn goal_distance(&self) -> f64 {
        (self.hidden.goal - self.observable.position).norm()
    }

    /// `v_pref` toward the goal (zero at the goal).
    pub fn preferred_velocity(&self) -> Vec2 {
        (self.hidden.goal - self.observable.position).normalized() * self.hidden.v_pref
    }
}

/// Robot full state plus every human's observable state at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub robot: FullAgentState,
    pub humans: Vec<ObservableState>,
}
