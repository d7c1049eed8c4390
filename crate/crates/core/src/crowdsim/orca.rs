//! Optimal reciprocal collision avoidance for a single agent, without static
//! obstacles: one half-plane per neighbour, then a 2-D linear program over
//! the speed disc, with the 3-D fallback when the half-planes are infeasible.

use super::{FullAgentState, ObservableState, Vec2};

const EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrcaParams {
    /// Time horizon τ (s).
    pub time_horizon: f64,
    /// Neighbours farther than this (centre to centre, m) are ignored.
    pub neighbor_dist: f64,
    /// Speed cap; `None` uses the agent's preferred speed.
    pub max_speed: Option<f64>,
}

impl Default for OrcaParams {
    fn default() -> Self {
        Self { time_horizon: 5.0, neighbor_dist: 10.0, max_speed: None }
    }
}

/// Directed line; the permitted half-plane lies to its left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub point: Vec2,
    pub direction: Vec2,
}

/// The reciprocal half-plane `me` must respect with respect to `other`.
pub fn orca_half_plane(me: &ObservableState, other: &ObservableState, dt: f64, horizon: f64) -> HalfPlane {
    let inv_horizon = 1.0 / horizon;
    let rel_pos = other.position - me.position;
    let rel_vel = me.velocity - other.velocity;
    let dist_sq = rel_pos.norm_sq();
    let combined_radius = me.radius + other.radius;
    let combined_radius_sq = combined_radius * combined_radius;

    let (direction, u);
    if dist_sq > combined_radius_sq {
        // no collision yet
        let w = rel_vel - inv_horizon * rel_pos;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > combined_radius_sq * w_len_sq {
            // project on the cut-off circle
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            direction = Vec2::new(unit_w.y, -unit_w.x);
            u = (combined_radius * inv_horizon - w_len) * unit_w;
        } else {
            // project on a leg
            let leg = (dist_sq - combined_radius_sq).sqrt();
            direction = if rel_pos.det(w) > 0.0 {
                Vec2::new(rel_pos.x * leg - rel_pos.y * combined_radius, rel_pos.x * combined_radius + rel_pos.y * leg)
                    / dist_sq
            } else {
                -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * combined_radius,
                    -rel_pos.x * combined_radius + rel_pos.y * leg,
                ) / dist_sq
            };
            u = rel_vel.dot(direction) * direction - rel_vel;
        }
    } else {
        // already overlapping: resolve within one step
        let inv_dt = 1.0 / dt;
        let w = rel_vel - inv_dt * rel_pos;
        let w_len = w.norm();
        let unit_w = if w_len > 0.0 { w / w_len } else { Vec2::new(1.0, 0.0) };
        direction = Vec2::new(unit_w.y, -unit_w.x);
        u = (combined_radius * inv_dt - w_len) * unit_w;
    }
    HalfPlane { point: me.velocity + 0.5 * u, direction }
}

fn lp1(lines: &[HalfPlane], line_no: usize, radius: f64, opt: Vec2, direction_opt: bool, result: &mut Vec2) -> bool {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let disc = dot * dot + radius * radius - line.point.norm_sq();
    if disc < 0.0 {
        return false;
    }
    let sqrt_disc = disc.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;
    for other in &lines[..line_no] {
        let denominator = line.direction.det(other.direction);
        let numerator = other.direction.det(line.point - other.point);
        if denominator.abs() <= EPSILON {
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }
    *result = if direction_opt {
        if opt.dot(line.direction) > 0.0 {
            line.point + t_right * line.direction
        } else {
            line.point + t_left * line.direction
        }
    } else {
        let t = line.direction.dot(opt - line.point);
        line.point + t.clamp(t_left, t_right) * line.direction
    };
    true
}

/// Returns the index of the first line that could not be satisfied, or
/// `lines.len()` on success.
fn lp2(lines: &[HalfPlane], radius: f64, opt: Vec2, direction_opt: bool, result: &mut Vec2) -> usize {
    *result = if direction_opt {
        opt * radius
    } else if opt.norm_sq() > radius * radius {
        opt.normalized() * radius
    } else {
        opt
    };
    for i in 0..lines.len() {
        if lines[i].direction.det(lines[i].point - *result) > 0.0 {
            let temp = *result;
            if !lp1(lines, i, radius, opt, direction_opt, result) {
                *result = temp;
                return i;
            }
        }
    }
    lines.len()
}

fn lp3(lines: &[HalfPlane], begin: usize, radius: f64, result: &mut Vec2) {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        if lines[i].direction.det(lines[i].point - *result) <= distance {
            continue;
        }
        let mut projected = Vec::with_capacity(i);
        for j in 0..i {
            let determinant = lines[i].direction.det(lines[j].direction);
            let point = if determinant.abs() <= EPSILON {
                if lines[i].direction.dot(lines[j].direction) > 0.0 {
                    continue;
                }
                0.5 * (lines[i].point + lines[j].point)
            } else {
                lines[i].point
                    + (lines[j].direction.det(lines[i].point - lines[j].point) / determinant) * lines[i].direction
            };
            projected.push(HalfPlane { point, direction: (lines[j].direction - lines[i].direction).normalized() });
        }
        let temp = *result;
        let opt = Vec2::new(-lines[i].direction.y, lines[i].direction.x);
        if lp2(&projected, radius, opt, true, result) < projected.len() {
            *result = temp;
        }
        distance = lines[i].direction.det(lines[i].point - *result);
    }
}

/// Solves for the velocity closest to `preferred` inside every half-plane
/// and the disc of radius `max_speed`.
pub fn solve_velocity(lines: &[HalfPlane], preferred: Vec2, max_speed: f64) -> Vec2 {
    let mut result = Vec2::ZERO;
    let fail = lp2(lines, max_speed, preferred, false, &mut result);
    if fail < lines.len() {
        lp3(lines, fail, max_speed, &mut result);
    }
    result
}

/// ORCA velocity for `me` given the observable states of its neighbours.
pub fn orca_policy(me: &FullAgentState, neighbors: &[ObservableState], dt: f64, params: &OrcaParams) -> Vec2 {
    let max_speed = params.max_speed.unwrap_or(me.v_pref());
    let range_sq = params.neighbor_dist * params.neighbor_dist;
    let lines: Vec<HalfPlane> = neighbors
        .iter()
        .filter(|n| (n.position - me.position()).norm_sq() < range_sq)
        .map(|n| orca_half_plane(&me.observable, n, dt, params.time_horizon))
        .collect();
    solve_velocity(&lines, me.preferred_velocity(), max_speed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(p: Vec2, g: Vec2) -> FullAgentState {
        FullAgentState::new(p, g, 0.3, 1.0)
    }

    #[test]
    fn no_neighbors_gives_preferred_velocity() {
        let me = agent(Vec2::new(1.0, 2.0), Vec2::new(4.0, 6.0));
        let v = orca_policy(&me, &[], 0.25, &OrcaParams::default());
        assert_eq!(v, me.preferred_velocity());
        assert!((v - Vec2::new(0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn far_neighbor_is_inactive() {
        let me = agent(Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.0));
        let far = ObservableState { position: Vec2::new(-20.0, 3.0), velocity: Vec2::new(-1.0, 0.0), radius: 0.3 };
        let v = orca_policy(&me, &[far], 0.25, &OrcaParams::default());
        assert_eq!(v, me.preferred_velocity());
        // inside the neighbour range but moving away with a wide gap: the
        // constraint exists yet the preferred velocity already satisfies it
        let behind = ObservableState { position: Vec2::new(-6.0, 0.0), velocity: Vec2::new(-1.0, 0.0), radius: 0.3 };
        let line = orca_half_plane(&me.observable, &behind, 0.25, 5.0);
        let pref = me.preferred_velocity();
        assert!(line.direction.det(line.point - pref) <= 0.0);
        assert_eq!(orca_policy(&me, &[behind], 0.25, &OrcaParams::default()), pref);
    }

    #[test]
    fn head_on_velocities_mirror() {
        let mut a = agent(Vec2::new(-2.0, 0.0), Vec2::new(2.0, 0.0));
        let mut b = agent(Vec2::new(2.0, 0.0), Vec2::new(-2.0, 0.0));
        a.observable.velocity = Vec2::new(1.0, 0.0);
        b.observable.velocity = Vec2::new(-1.0, 0.0);
        let params = OrcaParams::default();
        let va = orca_policy(&a, &[b.observable], 0.25, &params);
        let vb = orca_policy(&b, &[a.observable], 0.25, &params);
        assert!((va + vb).norm() < 1e-9, "{va:?} {vb:?}");
        assert!(va.y.abs() > 1e-3, "agents must deviate sideways");
        assert!(va.norm() <= 1.0 + 1e-12);
    }
}
