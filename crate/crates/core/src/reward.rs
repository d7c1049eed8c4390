//! Piecewise navigation reward and discomfort bookkeeping.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Discomfort radius (m).
    pub discomfort_radius: f64,
    pub collision_penalty: f64,
    pub goal_reward: f64,
    pub timeout_penalty: f64,
    /// Simulation step (s).
    pub time_step: f64,
    /// Episode limit (s).
    pub time_limit: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            discomfort_radius: 0.2,
            collision_penalty: -0.25,
            goal_reward: 1.0,
            timeout_penalty: -0.5,
            time_step: 0.25,
            time_limit: 25.0,
        }
    }
}

impl RewardConfig {
    /// True when `separation` lies strictly inside the discomfort band.
    pub fn is_discomfort(&self, separation: f64) -> bool {
        separation > 0.0 && separation < self.discomfort_radius
    }
}

/// Reward for one transition, evaluated in the fixed case order: collision,
/// discomfort, goal, timeout, otherwise zero. `separation` is the minimum
/// robot–human clearance after the step (`+∞` with no humans).
pub fn compute_reward(separation: f64, at_goal: bool, time: f64, cfg: &RewardConfig) -> f64 {
    if separation <= 0.0 {
        cfg.collision_penalty
    } else if separation < cfg.discomfort_radius {
        (separation - cfg.discomfort_radius) * cfg.time_step / 2.0
    } else if at_goal {
        cfg.goal_reward
    } else if time >= cfg.time_limit {
        cfg.timeout_penalty
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn branch_examples() {
        assert_eq!(compute_reward(-0.05, false, 3.0, &cfg()), -0.25);
        assert_eq!(compute_reward(0.1, false, 3.0, &cfg()), (0.1 - 0.2) * 0.25 / 2.0);
        assert!((compute_reward(0.1, false, 3.0, &cfg()) + 0.0125).abs() < 1e-15);
        assert_eq!(compute_reward(1.0, true, 3.0, &cfg()), 1.0);
        assert_eq!(compute_reward(1.0, false, 25.0, &cfg()), -0.5);
        assert_eq!(compute_reward(1.0, false, 10.0, &cfg()), 0.0);
    }

    #[test]
    fn boundaries() {
        assert_eq!(compute_reward(0.0, true, 25.0, &cfg()), -0.25);
        // continuity at the band edge
        assert_eq!(compute_reward(0.2, false, 1.0, &cfg()), 0.0);
        // discomfort outranks reaching the goal
        assert!(compute_reward(0.05, true, 1.0, &cfg()) < 0.0);
        assert_eq!(compute_reward(f64::INFINITY, false, 1.0, &cfg()), 0.0);
    }

    #[test]
    fn strictly_increasing_inside_band() {
        let mut prev = compute_reward(1e-6, false, 0.0, &cfg());
        for i in 1..200 {
            let d = 1e-6 + i as f64 * (0.2 - 2e-6) / 200.0;
            let r = compute_reward(d, false, 0.0, &cfg());
            assert!(r > prev);
            prev = r;
        }
    }
}
