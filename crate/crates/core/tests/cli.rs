use std::fs;
use std::path::Path;

use camrl::cli::verify::{run_named, VerifyOps};
use camrl::cli::{
    cmd_evaluate, cmd_rollout, cmd_train, cmd_verify, load_config, run, CliError, CommonArgs, EvaluateArgs,
    PolicySelector, RolloutArgs, RunSettings, TrainArgs, VerifyArgs, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY,
};
use camrl::crowdsim::{read_trajectory_log, SimParams};
use camrl::eval::classify_trajectory;
use camrl::ssm::SsmError;
use camrl::vlearn::PolicyKind;

const SMOKE: &str = "\
# tiny network so the pipeline runs in seconds
net.embed = 8
net.hidden = 8
net.mlp = 8
mamba.d_model = 8
mamba.d_state = 4
train.il_episodes = 10
train.il_epochs = 2
train.rl_episodes = 20
train.batch_size = 8
train.batches_per_episode = 2
train.target_sync_interval = 5
";

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn common(config: &Path, seed: u64) -> CommonArgs {
    CommonArgs { config: Some(config.to_path_buf()), seed: Some(seed) }
}

#[test]
fn config_includes_override_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "base.cfg", "train.gamma = 0.8\ntrain.rl_episodes = 7\n");
    let child = write(dir.path(), "run.cfg", "include = base.cfg\ntrain.rl_episodes = 9 # comment\n");
    let s = load_config(&child).unwrap();
    assert_eq!((s.train.gamma, s.train.rl_episodes), (0.8, 9));

    // the hash depends on effective values only
    let explicit = write(dir.path(), "defaults.cfg", "train.gamma = 0.9\nnet.kind = CAMRL\n");
    assert_eq!(load_config(&explicit).unwrap().hash(), RunSettings::default().hash());
    assert_ne!(s.hash(), RunSettings::default().hash());
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.cfg", "train.gamma = 0.9\ntrain.gama = 0.9\n");
    let msg = load_config(&bad).unwrap_err().to_string();
    assert!(msg.contains("train.gama") && msg.contains(":2:"), "{msg}");
    let bad = write(dir.path(), "bad2.cfg", "train.batch_size = many\n");
    assert!(load_config(&bad).unwrap_err().to_string().contains("train.batch_size"));
    let looped = write(dir.path(), "loop.cfg", "include = loop.cfg\n");
    assert!(load_config(&looped).is_err());
    let invalid = write(dir.path(), "inv.cfg", "train.gamma = 1.5\n");
    assert!(load_config(&invalid).is_err());
    assert_eq!(run(["camrl", "train", "--config", bad.to_str().unwrap()]), EXIT_CONFIG);
    assert_eq!(run(["camrl", "evaluate", "--envs", "moon-base"]), EXIT_CONFIG);
}

fn train_args(cfg: &Path, out: &Path, seed: u64) -> TrainArgs {
    TrainArgs { common: common(cfg, seed), policy: None, checkpoint: None, out: out.to_path_buf() }
}

#[test]
fn smoke_training_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "smoke.cfg", SMOKE);
    let a = cmd_train(&train_args(&cfg, &dir.path().join("a"), 3)).unwrap();
    let b = cmd_train(&train_args(&cfg, &dir.path().join("b"), 3)).unwrap();
    let log_a = fs::read_to_string(&a.log).unwrap();
    assert_eq!(log_a, fs::read_to_string(&b.log).unwrap());
    assert_eq!(fs::read(&a.checkpoint).unwrap(), fs::read(&b.checkpoint).unwrap());
    assert_eq!(a.imitation_losses.len(), 2);
    assert_eq!(log_a.lines().filter(|l| l.contains("\"phase\":\"rl\"")).count(), 20);
    assert!(log_a.lines().next().unwrap().contains(&a.config_hash));
    let ckpt = camrl::numerics::load_checkpoint(&a.checkpoint).unwrap();
    assert_eq!(ckpt.meta["run.config_hash"], a.config_hash);
    assert_eq!(ckpt.meta["run.seed"], "3");
    camrl::vlearn::Model::from_checkpoint(ckpt).unwrap();

    // resume: the counter continues and no imitation is rerun
    let longer = write(dir.path(), "longer.cfg", &format!("{SMOKE}train.rl_episodes = 25\n"));
    let mut args = train_args(&longer, &dir.path().join("a"), 3);
    args.checkpoint = Some(a.checkpoint.clone());
    let r = cmd_train(&args).unwrap();
    assert_eq!((r.first_episode, r.episodes_run), (20, 5));
    assert!(r.imitation_losses.is_empty());
    let log = fs::read_to_string(&r.log).unwrap();
    let episodes: Vec<u64> = log
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v["phase"] == "rl")
        .filter_map(|v| v["episode"].as_u64())
        .collect();
    assert_eq!(episodes, (0..25).collect::<Vec<_>>());

    // a checkpoint of the wrong kind is refused
    let mut wrong = train_args(&cfg, &dir.path().join("c"), 3);
    wrong.policy = Some(PolicySelector::Learned(PolicyKind::LstmRl));
    wrong.checkpoint = Some(a.checkpoint.clone());
    assert!(matches!(cmd_train(&wrong), Err(CliError::Config(_))));
}

fn eval_args(out: &Path) -> EvaluateArgs {
    EvaluateArgs {
        common: CommonArgs { config: None, seed: None },
        policy: vec![PolicySelector::Orca],
        checkpoint: vec![],
        envs: vec!["baseline-circle".into()],
        crowd_model: "both".into(),
        cases: 5,
        out: out.to_path_buf(),
    }
}

#[test]
fn evaluate_small_protocol_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = cmd_evaluate(&eval_args(&dir.path().join("a"))).unwrap();
    let b = cmd_evaluate(&eval_args(&dir.path().join("b"))).unwrap();
    assert_eq!(a.results[0].pooled.episodes, 10);
    assert_eq!(a.results[0].cells.len(), 2);
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("results_ORCA.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    let csv = fs::read_to_string(dir.path().join("a/comparison.csv")).unwrap();
    assert_eq!(camrl::eval::ComparisonTable::from_csv(&csv).unwrap(), a.table);
    assert_eq!(a.table, b.table);

    let mut missing = eval_args(&dir.path().join("c"));
    missing.checkpoint = vec![dir.path().join("nope.ckpt")];
    assert!(matches!(cmd_evaluate(&missing), Err(CliError::Config(_))));
    let mut unmatched = eval_args(&dir.path().join("c"));
    unmatched.policy = vec![PolicySelector::Learned(PolicyKind::Camrl)];
    assert!(matches!(cmd_evaluate(&unmatched), Err(CliError::Config(_))));
}

#[test]
fn rollouts_replay_and_humans_ignore_the_robot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "smoke.cfg", &format!("{SMOKE}train.rl_episodes = 2\n"));
    let trained = cmd_train(&train_args(&cfg, &dir.path().join("t"), 1)).unwrap();
    let rollout = |policy: PolicySelector, ckpt: Option<&Path>, name: &str| {
        cmd_rollout(&RolloutArgs {
            common: common(&cfg, 4),
            policy,
            checkpoint: ckpt.map(Path::to_path_buf),
            envs: "dense-square".into(),
            crowd_model: "sfm".into(),
            out: dir.path().join(name),
        })
        .unwrap()
    };
    let orca = rollout(PolicySelector::Orca, None, "orca.jsonl");
    let learned = rollout(PolicySelector::Learned(PolicyKind::Camrl), Some(&trained.checkpoint), "camrl.jsonl");
    let read = |p: &Path| read_trajectory_log(std::io::BufReader::new(fs::File::open(p).unwrap())).unwrap();
    let (a, b) = (read(&orca.log), read(&learned.log));
    let sim = SimParams::default();
    assert_eq!(classify_trajectory(&a, &sim), Some(orca.outcome.result));
    assert_eq!(classify_trajectory(&b, &sim), Some(learned.outcome.result));
    assert_eq!(a.len(), orca.outcome.steps.len() + 1);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.humans, y.humans);
    }
    let header = fs::read_to_string(&orca.log).unwrap();
    assert!(
        header.starts_with(camrl::crowdsim::LOG_META_PREFIX) && header.lines().next().unwrap().contains("config_hash")
    );
}

fn flipped_zoh(a: &[f64], b: &[f64], step: f64) -> Result<(Vec<f64>, Vec<f64>), SsmError> {
    let (x, y) = camrl::ssm::discretize_zoh(a, b, step)?;
    Ok((x.iter().map(|v| 1.0 / v).collect(), y))
}

fn flipped_reward(d: f64, g: bool, t: f64, c: &camrl::reward::RewardConfig) -> f64 {
    let r = camrl::reward::compute_reward(d, g, t, c);
    if d > 0.0 && d < c.discomfort_radius {
        -r
    } else {
        r
    }
}

#[test]
fn verify_catches_injected_mutations() {
    let ops = VerifyOps { discretize_zoh: flipped_zoh, ..VerifyOps::default() };
    let report = run_named("zoh_closed_form", &ops, 0).unwrap();
    assert!(!report.passed && report.op == "discretize_zoh");
    assert!(report.failure.as_deref().unwrap().contains("\"a\""));
    let args =
        VerifyArgs { seed: None, suites: vec!["zoh_closed_form".into(), "reward_transcription".into()], out: None };
    match cmd_verify(&args, &ops) {
        Err(e @ CliError::Verify(_)) => {
            assert_eq!(e.exit_code(), EXIT_VERIFY);
            assert!(e.to_string().contains("discretize_zoh"));
        }
        other => panic!("expected a verification failure, got {other:?}"),
    }
    let ops = VerifyOps { compute_reward: flipped_reward, ..VerifyOps::default() };
    assert!(!run_named("reward_transcription", &ops, 0).unwrap().passed);
    assert_eq!(run(["camrl", "verify", "--suite", "zoh_closed_form", "--suite", "metric_identities"]), EXIT_OK);
    assert_eq!(run(["camrl", "verify", "--suite", "bogus"]), EXIT_CONFIG);
}
