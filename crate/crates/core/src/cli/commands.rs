use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use super::config::{load_config, RunSettings};
use super::verify::{run_all, run_named, SuiteReport, VerifyOps, METRICS_SUITE, SUITES};
use super::{CliError, CommonArgs, EvaluateArgs, PolicySelector, RolloutArgs, TrainArgs, VerifyArgs};
use crate::crowdsim::{
    run_episode, spawn_scenario, write_trajectory_log, CrowdModel, EpisodeOutcome, OrcaRobot, RobotPolicy,
    ScenarioConfig, ScenarioKind,
};
use crate::eval::{run_suite, worker_count, ComparisonTable, ResultsFile, TableRow};
use crate::numerics::{load_checkpoint, save_checkpoint};
use crate::vlearn::{imitation_phase, init_model, rl_phase, LearnedPolicy, Model, TrainingSetup};
use crate::Error;

/// Meta keys every artifact carries.
const META_HASH: &str = "run.config_hash";
const META_SEED: &str = "run.seed";
const META_EPISODES: &str = "train.episodes";

fn settings(common: &CommonArgs) -> Result<RunSettings, CliError> {
    let mut s = match &common.config {
        Some(p) => load_config(p)?,
        None => RunSettings::default(),
    };
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn io(e: std::io::Error) -> CliError {
    CliError::Runtime(Error::Io(e))
}

fn json_line<W: Write>(w: &mut W, value: &serde_json::Value) -> Result<(), CliError> {
    writeln!(w, "{value}").map_err(io)
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("checkpoint {} does not exist", path.display())));
    }
    let ckpt = load_checkpoint(path).map_err(|e| CliError::Runtime(e.into()))?;
    Ok(Model::from_checkpoint(ckpt)?)
}

fn save_model(model: &Model, path: &Path, s: &RunSettings, episodes: usize) -> Result<(), CliError> {
    let mut ckpt = model.to_checkpoint();
    ckpt.meta.insert(META_HASH.into(), s.hash());
    ckpt.meta.insert(META_SEED.into(), s.seed.to_string());
    ckpt.meta.insert(META_EPISODES.into(), episodes.to_string());
    save_checkpoint(path, &ckpt).map_err(|e| CliError::Runtime(e.into()))
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub config_hash: String,
    pub imitation_losses: Vec<f64>,
    pub first_episode: usize,
    pub episodes_run: usize,
    /// Success rate over the last 100 training episodes (with exploration).
    pub recent_success: f64,
}

impl TrainSummary {
    pub fn describe(&self) -> String {
        format!(
            "trained episodes {}..{} (recent success {:.2}); checkpoint {}; log {}; config {}",
            self.first_episode,
            self.first_episode + self.episodes_run,
            self.recent_success,
            self.checkpoint.display(),
            self.log.display(),
            &self.config_hash[..12]
        )
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary, CliError> {
    let mut s = settings(&args.common)?;
    match args.policy {
        Some(PolicySelector::Orca) => return Err(CliError::Config("ORCA is not trainable".into())),
        Some(PolicySelector::Learned(kind)) if kind != s.net.kind => {
            s.set("net.kind", kind.name()).map_err(|_| CliError::Config("bad policy".into()))?;
        }
        _ => {}
    }
    s.validate()?;
    let setup = TrainingSetup { scenario: s.scenario, crowd_model: s.crowd_model, sim: s.sim(), seed: s.seed };
    fs::create_dir_all(&args.out).map_err(io)?;
    let log_path = args.out.join("train_log.jsonl");
    let ckpt_path = args.out.join("checkpoint.ckpt");

    let (mut model, start) = match &args.checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path).map_err(|e| CliError::Runtime(e.into()))?;
            let start: usize = ckpt.meta.get(META_EPISODES).and_then(|v| v.parse().ok()).unwrap_or(0);
            let model = Model::from_checkpoint(ckpt)?;
            if model.net.config.kind != s.net.kind {
                return Err(CliError::Config(format!(
                    "checkpoint holds a {} network but the run asks for {}",
                    model.net.config.kind, s.net.kind
                )));
            }
            (model, start)
        }
        None => (init_model(s.net, &setup), 0),
    };
    // a resumed network keeps its own shape whatever the config says
    s.net = model.net.config;
    let hash = s.hash();

    let file = if start > 0 {
        fs::OpenOptions::new().create(true).append(true).open(&log_path)
    } else {
        File::create(&log_path)
    };
    let mut log = BufWriter::new(file.map_err(io)?);
    json_line(
        &mut log,
        &json!({"meta": {"config_hash": hash, "seed": s.seed, "policy": s.net.kind.name(), "start_episode": start,
                          "resumed_from": args.checkpoint.as_ref().map(|p| p.display().to_string())}}),
    )?;

    let imitation_losses = if start == 0 { imitation_phase(&mut model, &s.train, &setup)? } else { vec![] };
    for (epoch, loss) in imitation_losses.iter().enumerate() {
        json_line(&mut log, &json!({"phase": "imitation", "epoch": epoch, "loss": loss}))?;
    }
    log.flush().map_err(io)?;

    let mut write_err = None;
    let training =
        rl_phase(&mut model, &s.train, &setup, start, start > 0 || !imitation_losses.is_empty(), &mut |e| {
            let mut line = serde_json::to_value(e).unwrap_or_default();
            line["phase"] = json!("rl");
            if let Err(err) = writeln!(log, "{line}") {
                write_err.get_or_insert(err);
            }
        })?;
    if let Some(e) = write_err {
        return Err(io(e));
    }
    log.flush().map_err(io)?;
    let done = start.max(s.train.rl_episodes);
    save_model(&model, &ckpt_path, &s, done)?;
    fs::write(
        args.out.join("config.resolved"),
        s.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect::<String>(),
    )
    .map_err(io)?;
    Ok(TrainSummary {
        checkpoint: ckpt_path,
        log: log_path,
        config_hash: hash,
        imitation_losses,
        first_episode: start,
        episodes_run: training.episodes.len(),
        recent_success: training.success_rate(100),
    })
}

fn parse_envs(list: &[String]) -> Result<Vec<ScenarioKind>, CliError> {
    if list.is_empty() {
        return Ok(ScenarioKind::ALL.to_vec());
    }
    list.iter().map(|e| e.parse().map_err(|err: crate::crowdsim::SimError| CliError::Config(err.to_string()))).collect()
}

fn parse_crowds(s: &str) -> Result<Vec<CrowdModel>, CliError> {
    if s.eq_ignore_ascii_case("both") {
        return Ok(CrowdModel::ALL.to_vec());
    }
    s.split(',')
        .map(|m| m.trim().parse().map_err(|err: crate::crowdsim::SimError| CliError::Config(err.to_string())))
        .collect()
}

/// A policy ready to be instantiated once per episode.
enum Prepared {
    Orca,
    Learned(Arc<Model>),
}

impl Prepared {
    fn build(&self, s: &RunSettings) -> Box<dyn RobotPolicy> {
        match self {
            Prepared::Orca => Box::new(OrcaRobot::new(s.train.time_step)),
            Prepared::Learned(m) => Box::new(LearnedPolicy::greedy(m.clone(), s.train.lookahead(), s.train.v_pref)),
        }
    }
}

/// Pairs requested policies with checkpoints. Each checkpoint contributes the
/// policy stored in it; `ORCA` needs none; ORCA alone is the default.
fn prepare_policies(args: &EvaluateArgs) -> Result<Vec<(String, Prepared)>, CliError> {
    let mut out: Vec<(String, Prepared)> = Vec::new();
    if args.policy.contains(&PolicySelector::Orca) || (args.policy.is_empty() && args.checkpoint.is_empty()) {
        out.push(("ORCA".into(), Prepared::Orca));
    }
    for path in &args.checkpoint {
        let model = load_model(path)?;
        let mut name = model.net.config.kind.name().to_string();
        if out.iter().any(|(n, _)| *n == name) {
            name = format!("{name} ({})", path.file_stem().and_then(|s| s.to_str()).unwrap_or("?"));
        }
        out.push((name, Prepared::Learned(Arc::new(model))));
    }
    for p in &args.policy {
        if let PolicySelector::Learned(kind) = p {
            let have = out.iter().any(|(_, m)| matches!(m, Prepared::Learned(m) if m.net.config.kind == *kind));
            if !have {
                return Err(CliError::Config(format!("policy {kind} requested but no {kind} checkpoint given")));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct EvaluateSummary {
    pub results: Vec<ResultsFile>,
    /// Pooled over every environment and crowd model, one row per policy.
    pub table: ComparisonTable,
    /// One row per (policy, environment, crowd model).
    pub cells: ComparisonTable,
    pub out: PathBuf,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateSummary, CliError> {
    let s = settings(&args.common)?;
    s.validate()?;
    if args.cases == 0 {
        return Err(CliError::Config("--cases must be at least 1".into()));
    }
    let envs = parse_envs(&args.envs)?;
    let crowds = parse_crowds(&args.crowd_model)?;
    let policies = prepare_policies(args)?;
    fs::create_dir_all(&args.out).map_err(io)?;
    let (sim, reward, workers) = (s.sim(), s.train.reward, worker_count());
    let hash = s.hash();

    let mut results = Vec::new();
    let (mut table, mut cells) = (ComparisonTable::default(), ComparisonTable::default());
    for (name, prepared) in &policies {
        let factory = || -> Result<Box<dyn RobotPolicy>, Error> { Ok(prepared.build(&s)) };
        let suite = run_suite(&factory, &envs, &crowds, args.cases, &sim, &reward, workers)?;
        let file =
            ResultsFile::new(name, &hash, s.seed, args.cases, &suite, reward.discomfort_radius).map_err(Error::from)?;
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Invalid(e.to_string()))?;
        let stem: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        fs::write(args.out.join(format!("results_{stem}.json")), text).map_err(io)?;
        table.rows.push(TableRow::new(name, &file.pooled));
        for c in &file.cells {
            if let Some(m) = &c.metrics {
                cells.rows.push(TableRow::new(&format!("{name} {}/{}", c.environment, c.crowd_model), m));
            }
        }
        results.push(file);
    }
    fs::write(args.out.join("comparison.csv"), table.to_csv()).map_err(io)?;
    fs::write(args.out.join("comparison.txt"), table.render()).map_err(io)?;
    fs::write(args.out.join("comparison_cells.csv"), cells.to_csv()).map_err(io)?;
    fs::write(args.out.join("comparison_cells.txt"), cells.render()).map_err(io)?;
    Ok(EvaluateSummary { results, table, cells, out: args.out.clone() })
}

#[derive(Clone, Debug)]
pub struct RolloutSummary {
    pub outcome: EpisodeOutcome,
    pub log: PathBuf,
}

impl RolloutSummary {
    pub fn describe(&self) -> String {
        format!(
            "{:?} after {:.2} s ({} steps); log {}",
            self.outcome.result,
            self.outcome.elapsed,
            self.outcome.steps.len(),
            self.log.display()
        )
    }
}

pub fn cmd_rollout(args: &RolloutArgs) -> Result<RolloutSummary, CliError> {
    let s = settings(&args.common)?;
    s.validate()?;
    let env: ScenarioKind =
        args.envs.parse().map_err(|e: crate::crowdsim::SimError| CliError::Config(e.to_string()))?;
    let crowd: CrowdModel =
        args.crowd_model.parse().map_err(|e: crate::crowdsim::SimError| CliError::Config(e.to_string()))?;
    let prepared = match (args.policy, &args.checkpoint) {
        (PolicySelector::Orca, _) => Prepared::Orca,
        (PolicySelector::Learned(kind), Some(path)) => {
            let model = load_model(path)?;
            if model.net.config.kind != kind {
                return Err(CliError::Config(format!("checkpoint holds {}, not {kind}", model.net.config.kind)));
            }
            Prepared::Learned(Arc::new(model))
        }
        (PolicySelector::Learned(kind), None) => return Err(CliError::Config(format!("{kind} needs --checkpoint"))),
    };
    let world = spawn_scenario(&ScenarioConfig::new(env, crowd, s.seed), &s.sim()).map_err(Error::from)?;
    let outcome = run_episode(world, prepared.build(&s).as_mut(), &s.train.reward)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(&args.out).map_err(io)?);
    json_line(
        &mut w,
        &json!({"meta": {"config_hash": s.hash(), "seed": s.seed, "policy": args.policy.name(),
                          "environment": env.to_string(), "crowd_model": crowd.to_string(), "result": outcome.result}}),
    )?;
    write_trajectory_log(&mut w, &outcome).map_err(Error::from)?;
    w.flush().map_err(io)?;
    Ok(RolloutSummary { outcome, log: args.out.clone() })
}

/// Runs every suite with `ops`, printing one line each.
pub fn cmd_verify(args: &VerifyArgs, ops: &VerifyOps) -> Result<Vec<SuiteReport>, CliError> {
    let seed = args.seed.unwrap_or(0);
    if let Some(bad) = args.suites.iter().find(|s| !SUITES.contains(&s.as_str()) && s.as_str() != METRICS_SUITE) {
        return Err(CliError::Config(format!("unknown suite `{bad}`")));
    }
    let reports = if args.suites.is_empty() {
        run_all(ops, seed)?
    } else {
        args.suites.iter().map(|s| run_named(s, ops, seed)).collect::<Result<Vec<_>, _>>()?
    };
    for r in &reports {
        println!("{}", r.line());
    }
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&reports).map_err(|e| Error::Invalid(e.to_string()))?;
        fs::write(path, text).map_err(io)?;
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("{} ({})", r.suite, r.op)).collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Verify(failed.join(", ")))
    }
}
