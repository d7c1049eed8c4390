//! Runs the ORCA robot through a reduced test protocol and prints pooled and
//! per-environment comparison tables. CASES sets episodes per cell.
use camrl::crowdsim::{CrowdModel, OrcaRobot, RobotPolicy, ScenarioKind, SimParams};
use camrl::eval::{run_suite, worker_count, ComparisonTable, ResultsFile, TableRow};
use camrl::reward::RewardConfig;

fn main() -> Result<(), camrl::Error> {
    let cases = std::env::var("CASES").ok().and_then(|v| v.parse().ok()).unwrap_or(10);
    let (sim, reward) = (SimParams::default(), RewardConfig::default());
    let factory = || Ok(Box::new(OrcaRobot::new(sim.time_step)) as Box<dyn RobotPolicy>);
    let suite = run_suite(&factory, &ScenarioKind::ALL, &CrowdModel::ALL, cases, &sim, &reward, worker_count())?;
    let results = ResultsFile::new("ORCA", "-", 0, cases, &suite, reward.discomfort_radius)?;

    let pooled = ComparisonTable { rows: vec![TableRow::new("ORCA", &results.pooled)] };
    println!("{}", pooled.render());
    let cells = ComparisonTable {
        rows: results
            .cells
            .iter()
            .filter_map(|c| {
                c.metrics.as_ref().map(|m| TableRow::new(&format!("{}/{}", c.environment, c.crowd_model), m))
            })
            .collect(),
    };
    println!("{}", cells.render());
    print!("{}", pooled.to_csv());
    Ok(())
}
