use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_from_summaries, EpisodeSummary, MetricsRecord};
use super::EvalError;
use crate::crowdsim::{
    run_episode, spawn_scenario, CrowdModel, EpisodeOutcome, RobotPolicy, ScenarioConfig, ScenarioKind, SimParams,
};
use crate::reward::RewardConfig;
use crate::Error;

/// Environment variable holding the number of evaluation workers.
pub const WORKERS_ENV: &str = "CAMRL_WORKERS";

/// Workers requested through [`WORKERS_ENV`]; defaults to the available
/// parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Builds a fresh policy for each episode, so episodes are independent of the
/// order in which workers pick them up.
pub type PolicyFactory<'a> = dyn Fn() -> Result<Box<dyn RobotPolicy>, Error> + Sync + 'a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub environment: ScenarioKind,
    pub crowd_model: CrowdModel,
    /// `(seed, outcome)` in seed order.
    pub outcomes: Vec<(u64, EpisodeOutcome)>,
    pub failures: Vec<GenerationFailure>,
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub cells: Vec<CellResult>,
}

impl SuiteResult {
    pub fn episodes(&self) -> usize {
        self.cells.iter().map(|c| c.outcomes.len()).sum()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &EpisodeOutcome> {
        self.cells.iter().flat_map(|c| c.outcomes.iter().map(|(_, o)| o))
    }
}

enum Job {
    Done(EpisodeOutcome),
    Failed(String),
}

/// Runs the policy on seeds `0..n_cases` of every (environment, crowd model)
/// pair. Scenarios that cannot be generated are recorded as failures; any
/// other error aborts the suite.
pub fn run_suite(
    policy: &PolicyFactory<'_>,
    environments: &[ScenarioKind],
    crowd_models: &[CrowdModel],
    n_cases: usize,
    sim: &SimParams,
    reward: &RewardConfig,
    workers: usize,
) -> Result<SuiteResult, Error> {
    if n_cases == 0 || environments.is_empty() || crowd_models.is_empty() {
        return Err(Error::Eval(EvalError::EmptySuite));
    }
    let jobs: Vec<(ScenarioKind, CrowdModel, u64)> = environments
        .iter()
        .flat_map(|&e| crowd_models.iter().flat_map(move |&m| (0..n_cases as u64).map(move |s| (e, m, s))))
        .collect();
    let run = |&(env, model, seed): &(ScenarioKind, CrowdModel, u64)| -> Result<Job, Error> {
        let world = match spawn_scenario(&ScenarioConfig::new(env, model, seed), sim) {
            Ok(w) => w,
            Err(e) => return Ok(Job::Failed(e.to_string())),
        };
        let mut p = policy()?;
        Ok(Job::Done(run_episode(world, p.as_mut(), reward)?))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let results: Vec<Result<Job, Error>> = pool.install(|| jobs.par_iter().map(run).collect());

    let mut cells: Vec<CellResult> = Vec::new();
    for (&(env, model, seed), job) in jobs.iter().zip(results) {
        if cells.last().is_none_or(|c| c.environment != env || c.crowd_model != model) {
            cells.push(CellResult { environment: env, crowd_model: model, outcomes: vec![], failures: vec![] });
        }
        let cell = cells.last_mut().expect("pushed above");
        match job? {
            Job::Done(o) => cell.outcomes.push((seed, o)),
            Job::Failed(error) => cell.failures.push(GenerationFailure { seed, error }),
        }
    }
    Ok(SuiteResult { cells })
}

/// One record per (policy, environment, crowd model).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsCell {
    pub environment: String,
    pub crowd_model: String,
    pub metrics: Option<MetricsRecord>,
    pub failures: Vec<GenerationFailure>,
    pub episodes: Vec<EpisodeSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub policy: String,
    pub config_hash: String,
    pub seed: u64,
    pub cases: usize,
    pub cells: Vec<ResultsCell>,
    pub pooled: MetricsRecord,
}

impl ResultsFile {
    pub fn new(
        policy: &str,
        config_hash: &str,
        seed: u64,
        cases: usize,
        suite: &SuiteResult,
        discomfort_radius: f64,
    ) -> Result<Self, EvalError> {
        let cells: Vec<ResultsCell> = suite
            .cells
            .iter()
            .map(|c| {
                let episodes: Vec<EpisodeSummary> =
                    c.outcomes.iter().map(|(s, o)| EpisodeSummary::new(*s, o, discomfort_radius)).collect();
                ResultsCell {
                    environment: c.environment.to_string(),
                    crowd_model: c.crowd_model.to_string(),
                    metrics: metrics_from_summaries(&episodes).ok(),
                    failures: c.failures.clone(),
                    episodes,
                }
            })
            .collect();
        let pooled = pooled_metrics(&cells)?;
        Ok(Self { policy: policy.to_string(), config_hash: config_hash.to_string(), seed, cases, cells, pooled })
    }
}

/// Metrics over every episode of every cell.
pub fn pooled_metrics(cells: &[ResultsCell]) -> Result<MetricsRecord, EvalError> {
    let all: Vec<EpisodeSummary> = cells.iter().flat_map(|c| c.episodes.iter().cloned()).collect();
    metrics_from_summaries(&all)
}
