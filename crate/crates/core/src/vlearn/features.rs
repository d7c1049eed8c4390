use crate::crowdsim::{JointState, Vec2};

/// `[d_g, v_pref, v_x, v_y, r]` in the robot-centric frame.
pub const ROBOT_FEATURES: usize = 5;
/// `[p_x, p_y, v_x, v_y, r, distance, r + r_robot]`, relative to the robot.
pub const HUMAN_FEATURES: usize = 7;

/// Rotation-invariant features of one joint state: the robot sits at the
/// origin with its goal on the +x axis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateFeatures {
    pub robot: [f64; ROBOT_FEATURES],
    /// Ordered by decreasing distance to the robot, so the nearest human
    /// comes last.
    pub humans: Vec<[f64; HUMAN_FEATURES]>,
}

/// Heading of the robot-to-goal vector; the canonical frame's +x axis.
pub fn goal_heading(joint: &JointState) -> f64 {
    let to_goal = joint.robot.goal() - joint.robot.position();
    to_goal.y.atan2(to_goal.x)
}

pub fn transform_state(joint: &JointState) -> StateFeatures {
    let robot = &joint.robot;
    let theta = goal_heading(joint);
    let into_frame = |v: Vec2| v.rotated(-theta);
    let v = into_frame(robot.velocity());
    let robot_row = [robot.goal_distance(), robot.v_pref(), v.x, v.y, robot.radius()];
    let mut humans: Vec<[f64; HUMAN_FEATURES]> = joint
        .humans
        .iter()
        .map(|h| {
            let rel = h.position - robot.position();
            let p = into_frame(rel);
            let hv = into_frame(h.velocity);
            [p.x, p.y, hv.x, hv.y, h.radius, rel.norm(), h.radius + robot.radius()]
        })
        .collect();
    // farthest first; exact ties fall back to the remaining features so the
    // order never depends on the input order
    humans.sort_by(|a, b| {
        b[5].total_cmp(&a[5]).then_with(|| {
            a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    StateFeatures { robot: robot_row, humans }
}
