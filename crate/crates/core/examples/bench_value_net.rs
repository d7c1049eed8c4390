//! Times one optimiser step and one greedy decision for each network size.
//!
//! `cargo run --release --example bench_value_net`

use std::sync::Arc;
use std::time::Instant;

use camrl::crowdsim::{
    run_episode, spawn_scenario, CrowdModel, OrcaRobot, RobotPolicy, ScenarioConfig, ScenarioKind, SimParams,
};
use camrl::numerics::{Adam, AdamConfig};
use camrl::reward::RewardConfig;
use camrl::rng::substream;
use camrl::vlearn::*;

fn main() -> Result<(), camrl::Error> {
    let params = SimParams::default();
    let world = spawn_scenario(&ScenarioConfig::new(ScenarioKind::BASELINE_CIRCLE, CrowdModel::Orca, 1), &params)?;
    let demo = run_episode(world.clone(), &mut OrcaRobot::new(0.25), &RewardConfig::default())?;
    let features = episode_features(&demo);
    for (kind, d_model) in
        [(PolicyKind::Camrl, 64), (PolicyKind::Camrl, 32), (PolicyKind::LstmRl, 0), (PolicyKind::CadrlMlp, 0)]
    {
        let mut cfg = NetConfig::new(kind);
        if d_model > 0 {
            cfg.mamba.d_model = d_model;
        }
        let mut model = Model::new(cfg, &mut substream(0, "init"));
        let targets = vec![0.1; cfg.window + 1];
        let entries: Vec<ReplayEntry> = (0..32)
            .map(|i| ReplayEntry {
                episode: features.clone(),
                step: i % features.len().saturating_sub(1).max(1),
                target: targets.clone(),
            })
            .collect();
        let batch: Vec<&ReplayEntry> = entries.iter().collect();
        let mut opt = Adam::new(AdamConfig::default());
        let t0 = Instant::now();
        for _ in 0..std::env::var("BENCH_REPS").ok().and_then(|v| v.parse().ok()).unwrap_or(5) {
            fit_batch(&mut model, &mut opt, &batch)?;
        }
        let fit = t0.elapsed().as_secs_f64() / 5.0;
        let mut policy = LearnedPolicy::greedy(Arc::new(model), LookaheadConfig::default(), 1.0);
        policy.reset();
        let state = world.joint_state();
        let t0 = Instant::now();
        for _ in 0..20 {
            policy.act(&state)?;
        }
        let act = t0.elapsed().as_secs_f64() / 20.0;
        println!("{kind:>10} d_model {d_model:>3}: fit_batch(32) {:.1} ms, decision {:.2} ms", fit * 1e3, act * 1e3);
    }
    Ok(())
}
