//! Writes the JSONL trajectory of one ORCA-robot episode, reads it back and
//! re-derives the outcome from the last record.
use std::io::BufReader;

use camrl::crowdsim::{
    read_trajectory_log, run_episode, spawn_scenario, write_trajectory_log, CrowdModel, OrcaRobot, ScenarioConfig,
    ScenarioKind, SimParams,
};
use camrl::eval::classify_trajectory;
use camrl::reward::RewardConfig;

fn main() -> Result<(), camrl::Error> {
    let sim = SimParams::default();
    let cfg = ScenarioConfig::new(ScenarioKind::BASELINE_CIRCLE, CrowdModel::Sfm, 3);
    let outcome =
        run_episode(spawn_scenario(&cfg, &sim)?, &mut OrcaRobot::new(sim.time_step), &RewardConfig::default())?;

    let path = std::env::temp_dir().join("camrl_trajectory.jsonl");
    write_trajectory_log(&mut std::fs::File::create(&path)?, &outcome)?;
    let records = read_trajectory_log(BufReader::new(std::fs::File::open(&path)?))?;
    println!("{} records in {}", records.len(), path.display());
    println!("first: {}", serde_json::to_string(&records[0]).unwrap_or_default());
    println!("episode: {:?}, replayed: {:?}", outcome.result, classify_trajectory(&records, &sim));
    Ok(())
}
