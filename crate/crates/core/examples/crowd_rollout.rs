//! Rolls the ORCA robot through every crossing scenario and prints outcomes.
//!
//! `cargo run --release --example crowd_rollout -- [seeds]`

use camrl::crowdsim::{
    run_episode, spawn_scenario, CrowdModel, EpisodeResult, OrcaRobot, ScenarioConfig, ScenarioKind, SimParams,
};
use camrl::reward::RewardConfig;

fn main() -> Result<(), camrl::Error> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let params = SimParams::default();
    for kind in ScenarioKind::ALL {
        for model in CrowdModel::ALL {
            let mut counts = [0usize; 3];
            for seed in 0..seeds {
                let world = spawn_scenario(&ScenarioConfig::new(kind, model, seed), &params)?;
                let mut robot = OrcaRobot::new(params.time_step);
                let out = run_episode(world, &mut robot, &RewardConfig::default())?;
                counts[match out.result {
                    EpisodeResult::Success => 0,
                    EpisodeResult::Collision => 1,
                    EpisodeResult::Timeout => 2,
                }] += 1;
            }
            println!(
                "{kind:>15} {model:>4}  success {:>3}  collision {:>3}  timeout {:>3}",
                counts[0], counts[1], counts[2]
            );
        }
    }
    Ok(())
}
