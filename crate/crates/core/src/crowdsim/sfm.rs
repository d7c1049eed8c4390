//! Social force pedestrian model: relaxation toward the preferred velocity
//! plus exponential interpersonal repulsion, integrated with explicit Euler.

use rand::Rng;

use super::{FullAgentState, ObservableState, Vec2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SfmParams {
    /// Relaxation time τ (s).
    pub relaxation_time: f64,
    /// Repulsion strength A (m/s²).
    pub repulsion_strength: f64,
    /// Repulsion range B (m).
    pub repulsion_range: f64,
    /// Speed cap; `None` uses the agent's preferred speed.
    pub max_speed: Option<f64>,
}

impl Default for SfmParams {
    fn default() -> Self {
        Self { relaxation_time: 0.5, repulsion_strength: 2.0, repulsion_range: 0.3, max_speed: None }
    }
}

/// Goal-attraction term `(v_pref·ê − v) / τ`.
pub fn goal_force(me: &FullAgentState, params: &SfmParams) -> Vec2 {
    (me.preferred_velocity() - me.velocity()) / params.relaxation_time
}

/// Repulsion exerted on `me` by `other`; `fallback` supplies the direction
/// when the two centres coincide.
pub fn repulsive_force<R: Rng + ?Sized>(
    me: &ObservableState,
    other: &ObservableState,
    params: &SfmParams,
    fallback: &mut R,
) -> Vec2 {
    let diff = me.position - other.position;
    let dist = diff.norm();
    let normal =
        if dist > 0.0 { diff / dist } else { Vec2::from_polar(1.0, fallback.gen_range(0.0..std::f64::consts::TAU)) };
    let magnitude = params.repulsion_strength * ((me.radius + other.radius - dist) / params.repulsion_range).exp();
    normal * magnitude
}

pub fn sfm_acceleration<R: Rng + ?Sized>(
    me: &FullAgentState,
    neighbors: &[ObservableState],
    params: &SfmParams,
    fallback: &mut R,
) -> Vec2 {
    let mut acc = goal_force(me, params);
    for n in neighbors {
        acc += repulsive_force(&me.observable, n, params, fallback);
    }
    acc
}

/// Next velocity: `v + a·Δt`, clipped to the speed cap.
pub fn sfm_policy<R: Rng + ?Sized>(
    me: &FullAgentState,
    neighbors: &[ObservableState],
    dt: f64,
    params: &SfmParams,
    fallback: &mut R,
) -> Vec2 {
    let max_speed = params.max_speed.unwrap_or(me.v_pref());
    let v = me.velocity() + sfm_acceleration(me, neighbors, params, fallback) * dt;
    let speed = v.norm();
    if speed > max_speed {
        v * (max_speed / speed)
    } else {
        v
    }
}
