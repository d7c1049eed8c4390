use std::f64::consts::{E, TAU};

use crate::crowdsim::{JointState, Vec2};

pub const SPEED_LEVELS: usize = 5;
pub const HEADINGS: usize = 16;

/// Stop, then `SPEED_LEVELS` exponentially spaced speeds in `(0, v_pref]`
/// for each of `HEADINGS` evenly spaced headings. Headings are measured from
/// the robot-to-goal direction; index `1 + (SPEED_LEVELS − 1)·HEADINGS` is
/// full speed straight at the goal.
pub fn build_action_space(v_pref: f64) -> Vec<Vec2> {
    let mut actions = Vec::with_capacity(1 + SPEED_LEVELS * HEADINGS);
    actions.push(Vec2::ZERO);
    for i in 0..SPEED_LEVELS {
        let speed = ((((i + 1) as f64) / SPEED_LEVELS as f64).exp() - 1.0) / (E - 1.0) * v_pref;
        for j in 0..HEADINGS {
            actions.push(Vec2::from_polar(speed, TAU * j as f64 / HEADINGS as f64));
        }
    }
    actions
}

/// One-step lookahead model: the robot executes `action`, every human keeps
/// its current velocity.
pub fn propagate(joint: &JointState, action: Vec2, dt: f64) -> JointState {
    let mut next = joint.clone();
    next.robot.observable.velocity = action;
    next.robot.observable.position += action * dt;
    for h in &mut next.humans {
        h.position += h.velocity * dt;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowdsim::{FullAgentState, ObservableState};

    #[test]
    fn action_space_shape() {
        let a = build_action_space(1.0);
        assert_eq!(a.len(), 81);
        assert_eq!(a[0], Vec2::ZERO);
        let max = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-15);
        assert!(a[1..].iter().all(|v| v.norm() > 0.0));
        let full_ahead = a[1 + (SPEED_LEVELS - 1) * HEADINGS];
        assert!((full_ahead - Vec2::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn action_space_is_reflection_symmetric() {
        let a = build_action_space(1.3);
        for v in &a {
            let mirrored = Vec2::new(v.x, -v.y);
            assert!(a.iter().any(|w| (*w - mirrored).norm() < 1e-12), "{v:?}");
        }
    }

    #[test]
    fn propagate_examples() {
        let joint = JointState {
            robot: FullAgentState::new(Vec2::ZERO, Vec2::new(0.0, 4.0), 0.3, 1.0),
            humans: vec![ObservableState { position: Vec2::new(1.0, 0.0), velocity: Vec2::new(0.0, 1.0), radius: 0.3 }],
        };
        let next = propagate(&joint, Vec2::ZERO, 0.25);
        assert_eq!(next.robot.position(), Vec2::ZERO);
        assert_eq!(next.humans[0].position, Vec2::new(1.0, 0.25));
        let next = propagate(&joint, Vec2::new(0.0, 1.0), 0.25);
        assert_eq!(next.robot.position(), Vec2::new(0.0, 0.25));
        assert_eq!(next.robot.velocity(), Vec2::new(0.0, 1.0));
    }
}
