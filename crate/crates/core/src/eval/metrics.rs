use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::crowdsim::{check_termination, EpisodeOutcome, EpisodeResult, SimParams, Status, TrajectoryRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    /// `None` for an empty sample.
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episodes: usize,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    /// Stored as the complement of the other two so the three rates add to
    /// exactly 1.0 in floating point; it differs from `timeouts / episodes` by
    /// at most one ulp.
    pub timeout_rate: f64,
    /// Over successful episodes only.
    pub navigation_time: Option<MeanStd>,
    pub total_steps: usize,
    pub discomfort_steps: usize,
    pub discomfort_frequency: f64,
    /// Separation during discomfort steps; absent when there were none.
    pub discomfort_distance: Option<MeanStd>,
}

impl MetricsRecord {
    pub fn rate_sum(&self) -> f64 {
        self.success_rate + self.collision_rate + self.timeout_rate
    }
}

/// Aggregates outcomes. A step counts as discomfort when its separation lies
/// strictly between 0 and `discomfort_radius`.
pub fn compute_metrics<'a, I>(outcomes: I, discomfort_radius: f64) -> Result<MetricsRecord, EvalError>
where
    I: IntoIterator<Item = &'a EpisodeOutcome>,
{
    let summaries: Vec<EpisodeSummary> =
        outcomes.into_iter().map(|o| EpisodeSummary::new(0, o, discomfort_radius)).collect();
    metrics_from_summaries(&summaries)
}

/// [`compute_metrics`] over already-summarised episodes.
pub fn metrics_from_summaries(summaries: &[EpisodeSummary]) -> Result<MetricsRecord, EvalError> {
    if summaries.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let n = summaries.len();
    let count = |r| summaries.iter().filter(|s| s.result == r).count();
    let (successes, collisions, timeouts) =
        (count(EpisodeResult::Success), count(EpisodeResult::Collision), count(EpisodeResult::Timeout));
    debug_assert_eq!(successes + collisions + timeouts, n);
    let success_rate = successes as f64 / n as f64;
    let collision_rate = collisions as f64 / n as f64;
    let timeout_rate = 1.0 - (success_rate + collision_rate);

    let times: Vec<f64> = summaries.iter().filter(|s| s.result == EpisodeResult::Success).map(|s| s.elapsed).collect();
    let total_steps: usize = summaries.iter().map(|s| s.steps).sum();
    let discomfort: Vec<f64> = summaries.iter().flat_map(|s| s.discomfort_separations.iter().copied()).collect();
    let discomfort_frequency = if total_steps == 0 { 0.0 } else { discomfort.len() as f64 / total_steps as f64 };
    Ok(MetricsRecord {
        episodes: n,
        successes,
        collisions,
        timeouts,
        success_rate,
        collision_rate,
        timeout_rate,
        navigation_time: MeanStd::of(&times),
        total_steps,
        discomfort_steps: discomfort.len(),
        discomfort_frequency,
        discomfort_distance: MeanStd::of(&discomfort),
    })
}

/// Compact per-episode record kept in results files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub result: EpisodeResult,
    pub elapsed: f64,
    pub steps: usize,
    pub min_separation: Option<f64>,
    pub discomfort_separations: Vec<f64>,
}

impl EpisodeSummary {
    pub fn new(seed: u64, outcome: &EpisodeOutcome, discomfort_radius: f64) -> Self {
        let seps = outcome.steps.iter().map(|s| s.separation).filter(|d| d.is_finite());
        Self {
            seed,
            result: outcome.result,
            elapsed: outcome.elapsed,
            steps: outcome.steps.len(),
            min_separation: seps.clone().reduce(f64::min),
            discomfort_separations: seps.filter(|&d| d > 0.0 && d < discomfort_radius).collect(),
        }
    }
}

/// Re-derives the outcome of a logged episode from its final record.
pub fn classify_trajectory(records: &[TrajectoryRecord], params: &SimParams) -> Option<EpisodeResult> {
    let last = records.last()?;
    let separation = last.separation.unwrap_or(f64::INFINITY);
    match check_termination(
        separation,
        last.robot.goal_distance(),
        last.time,
        params.goal_tolerance(),
        params.time_limit,
    ) {
        Status::Collision => Some(EpisodeResult::Collision),
        Status::Success => Some(EpisodeResult::Success),
        Status::Timeout => Some(EpisodeResult::Timeout),
        Status::Running => None,
    }
}
