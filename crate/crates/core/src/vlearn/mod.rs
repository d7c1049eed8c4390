//! Deep V-learning: robot-centric state features, the value networks
//! (CAMRL and two baselines), one-step lookahead control, imitation
//! learning and replay-buffer RL.

mod action;
mod cells;
mod features;
mod network;
mod pipeline;
mod policy;
mod train;

pub use action::{build_action_space, propagate, HEADINGS, SPEED_LEVELS};
pub use cells::{GruCell, LstmCell};
pub use features::{goal_heading, transform_state, StateFeatures, HUMAN_FEATURES, ROBOT_FEATURES};
pub use network::{Model, NetConfig, PolicyKind, ValueNet, PAIR_FEATURES};
pub use pipeline::{
    imitation_phase, init_model, orca_demonstrations, rl_phase, train_policy, TrainedPolicy, TrainingSetup,
    TRAINING_SEED_BASE,
};
pub use policy::{
    select_action, step_discount, DiscountConvention, LearnedPolicy, LookaheadConfig, TemporalCrowdState, ValueFunction,
};
pub use train::{
    assemble_target_values, collect_episode, episode_features, fit_batch, imitation_learn, rl_train, rl_train_from,
    sync_target, window_targets, EpisodeFeatures, EpisodeLog, ReplayBuffer, ReplayEntry, TrainConfig, TrainingLog,
};
