//! Trains one learned policy (imitation then RL) on baseline-circle and scores
//! it greedily on held-out cases.
//!
//! Knobs via env vars: POLICY (CAMRL|LSTMRL|CADRL-MLP), RL_EPISODES,
//! IL_EPISODES, IL_EPOCHS, BATCHES, RL_LR, IL_LR, D_MODEL, CASES, SEED,
//! CROWD (orca|sfm), OUT (checkpoint path).
use std::env;
use std::sync::Arc;
use std::time::Instant;

use camrl::crowdsim::{
    run_episode, spawn_scenario, CrowdModel, EpisodeResult, ScenarioConfig, ScenarioKind, SimParams,
};
use camrl::vlearn::{train_policy, LearnedPolicy, NetConfig, PolicyKind, TrainConfig, TrainingSetup};

fn var<T: std::str::FromStr>(name: &str, default: T) -> T {
    env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), camrl::Error> {
    let kind: PolicyKind = var("POLICY", PolicyKind::Camrl);
    let crowd: CrowdModel = var("CROWD", CrowdModel::Orca);
    let mut net = NetConfig::new(kind);
    net.mamba.d_model = var("D_MODEL", net.mamba.d_model);
    let mut cfg = TrainConfig::default();
    cfg.rl_episodes = var("RL_EPISODES", cfg.rl_episodes);
    cfg.il_episodes = var("IL_EPISODES", cfg.il_episodes);
    cfg.il_epochs = var("IL_EPOCHS", cfg.il_epochs);
    cfg.batches_per_episode = var("BATCHES", cfg.batches_per_episode);
    cfg.rl_lr = var("RL_LR", cfg.rl_lr);
    cfg.il_lr = var("IL_LR", cfg.il_lr);
    let cases: u64 = var("CASES", 50);
    let setup = TrainingSetup {
        scenario: ScenarioKind::BASELINE_CIRCLE,
        crowd_model: crowd,
        sim: SimParams::default(),
        seed: var("SEED", 0),
    };

    let start = Instant::now();
    let mut window = Vec::new();
    let trained = train_policy(net, &cfg, &setup, &mut |log| {
        window.push(log.result == EpisodeResult::Success);
        if (log.episode + 1) % 50 == 0 {
            let recent = &window[window.len().saturating_sub(50)..];
            let rate = recent.iter().filter(|s| **s).count() as f64 / recent.len() as f64;
            println!(
                "episode {:>5}  eps {:.3}  success(last 50) {:.2}  loss {:.4}  {:.0}s",
                log.episode + 1,
                log.epsilon,
                rate,
                log.loss.unwrap_or(f64::NAN),
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    println!("imitation losses: {:?}", trained.il_losses);

    if let Ok(path) = env::var("OUT") {
        camrl::numerics::save_checkpoint(std::path::Path::new(&path), &trained.model.to_checkpoint())?;
        println!("checkpoint written to {path}");
    }

    let model = Arc::new(trained.model);
    let (mut success, mut collision, mut timeout) = (0, 0, 0);
    for seed in 0..cases {
        let world = spawn_scenario(&ScenarioConfig::new(ScenarioKind::BASELINE_CIRCLE, crowd, seed), &setup.sim)?;
        let mut policy = LearnedPolicy::greedy(model.clone(), cfg.lookahead(), cfg.v_pref);
        match run_episode(world, &mut policy, &cfg.reward)?.result {
            EpisodeResult::Success => success += 1,
            EpisodeResult::Collision => collision += 1,
            EpisodeResult::Timeout => timeout += 1,
        }
    }
    println!(
        "{kind} held-out: success {success}/{cases}  collision {collision}  timeout {timeout}  ({:.0}s total)",
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
