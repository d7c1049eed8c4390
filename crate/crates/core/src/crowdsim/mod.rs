//! Holonomic 2-D crowd world: agent states, ORCA and social-force humans,
//! the six crossing scenarios, stepping, termination and episode rollout.

mod episode;
mod geometry;
mod orca;
mod scenario;
mod sfm;
mod state;
mod world;

pub use episode::{
    read_trajectory_log, run_episode, write_trajectory_log, DiscomfortEvent, EpisodeOutcome, EpisodeResult, OrcaRobot,
    RobotPolicy, StepRecord, TrajectoryRecord, LOG_META_PREFIX,
};
pub use geometry::Vec2;
pub use orca::{orca_half_plane, orca_policy, solve_velocity, HalfPlane, OrcaParams};
pub use scenario::{spawn_scenario, CrowdModel, Density, ScenarioConfig, ScenarioKind, Shape};
pub use sfm::{goal_force, repulsive_force, sfm_acceleration, sfm_policy, SfmParams};
pub use state::{FullAgentState, HiddenState, JointState, ObservableState};
pub use world::{check_termination, separation_distance, SimParams, Status, World};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("could not place agent {placed} of {requested} without overlap; the scenario is overcrowded")]
    Overcrowded { placed: usize, requested: usize },
    #[error("invalid simulation setting: {0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("non-finite robot action ({x}, {y})")]
    NonFiniteAction { x: f64, y: f64 },
    #[error("trajectory log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
