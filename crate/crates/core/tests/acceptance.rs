//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 1-7 are quick. Criteria 8-10 train CAMRL, LSTMRL and CADRL-MLP
//! with the default configuration and evaluate them on the full protocol,
//! which takes hours on one core. Trained checkpoints are cached under
//! `CAMRL_ACCEPTANCE_DIR` (default: cargo's per-target tmp dir) and reused
//! only when their stored config hash and episode count match a fresh run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use camrl::cli::verify::{run_named, VerifyOps, METRICS_SUITE};
use camrl::cli::{cmd_evaluate, cmd_train, CommonArgs, EvaluateArgs, PolicySelector, RunSettings, TrainArgs};
use camrl::eval::{ComparisonTable, MetricsRecord, ResultsFile, TABLE_COLUMNS};
use camrl::numerics::load_checkpoint;
use camrl::ssm::discretize_zoh;
use camrl::vlearn::PolicyKind;

const VERIFY_SEED: u64 = 0;
const ZOH_TOLERANCE: f64 = 1e-12;
const SUCCESS_FLOOR: f64 = 0.6;
const HELD_OUT_CASES: usize = 50;
const MIN_RL_EPISODES: usize = 1000;
const TRAIN_BUDGET_SECS: f64 = 4.0 * 3600.0;
const PROTOCOL_EPISODES: usize = 600;
const IL_LOSS_DROP: f64 = 0.5;

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn line(&mut self, label: &str, pass: bool, detail: String) {
        println!("{label}: {}  {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(label.to_string());
        }
    }
}

fn suites(report: &mut Report, label: &str, names: &[&str]) {
    let ops = VerifyOps::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for name in names {
        match run_named(name, &ops, VERIFY_SEED) {
            Ok(r) => {
                pass &= r.passed;
                detail
                    .push(format!("{} max_err {:.3e} tol {:.0e} over {}", r.suite, r.max_error, r.tolerance, r.cases));
                if let Some(f) = r.failure {
                    detail.push(format!("first failure {f}"));
                }
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{name} errored: {e}"));
            }
        }
    }
    report.line(label, pass, detail.join("; "));
}

fn cache_dir() -> PathBuf {
    std::env::var_os("CAMRL_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance"))
}

fn expected_hash(kind: PolicyKind) -> String {
    let mut s = RunSettings::default();
    s.set("net.kind", kind.name()).expect("net.kind accepts every learned policy");
    s.hash()
}

/// Seconds spent training, or `None` when the cached checkpoint was reused
/// and no timing was recorded.
struct Trained {
    checkpoint: PathBuf,
    seconds: Option<f64>,
    il_losses: Vec<f64>,
}

fn imitation_losses(log: &Path) -> Vec<f64> {
    let text = fs::read_to_string(log).unwrap_or_default();
    text.lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v["phase"] == "imitation")
        .filter_map(|v| v["loss"].as_f64())
        .collect()
}

fn train(kind: PolicyKind) -> Result<Trained, String> {
    let out = cache_dir().join(kind.name());
    let checkpoint = out.join("checkpoint.ckpt");
    let timing = out.join("train_seconds");
    let hash = expected_hash(kind);
    if let Ok(ckpt) = load_checkpoint(&checkpoint) {
        let episodes: usize = ckpt.meta.get("train.episodes").and_then(|v| v.parse().ok()).unwrap_or(0);
        if ckpt.meta.get("run.config_hash") == Some(&hash) && episodes >= MIN_RL_EPISODES {
            let seconds = fs::read_to_string(&timing).ok().and_then(|s| s.trim().parse().ok());
            return Ok(Trained { checkpoint, seconds, il_losses: imitation_losses(&out.join("train_log.jsonl")) });
        }
    }
    let started = Instant::now();
    let summary = cmd_train(&TrainArgs {
        common: CommonArgs { config: None, seed: None },
        policy: Some(PolicySelector::Learned(kind)),
        checkpoint: None,
        out: out.clone(),
    })
    .map_err(|e| format!("{kind} training failed: {e}"))?;
    let seconds = started.elapsed().as_secs_f64();
    let _ = fs::write(&timing, format!("{seconds}\n"));
    if summary.config_hash != hash {
        return Err(format!("{kind} trained with hash {} but {hash} was expected", summary.config_hash));
    }
    Ok(Trained { checkpoint: summary.checkpoint, seconds: Some(seconds), il_losses: summary.imitation_losses })
}

fn cell<'a>(r: &'a ResultsFile, env: &str, crowd: &str) -> Option<&'a MetricsRecord> {
    r.cells.iter().find(|c| c.environment == env && c.crowd_model == crowd).and_then(|c| c.metrics.as_ref())
}

fn main() {
    let mut report = Report { failed: vec![] };

    suites(&mut report, "criterion 1 (ssm form equivalence)", &["ssm_forms"]);

    let (a_bar, b_bar) = discretize_zoh(&[-1.0], &[1.0], 1.0).expect("scalar system discretizes");
    let want = ((-1f64).exp(), 1.0 - (-1f64).exp());
    let err = (a_bar[0] - want.0).abs().max((b_bar[0] - want.1).abs());
    println!("  zoh a=-1 step=1: Ā {:.17} B̄ {:.17} err {err:.3e}", a_bar[0], b_bar[0]);
    let mut zoh = Report { failed: vec![] };
    suites(&mut zoh, "  zoh closed-form suite", &["zoh_closed_form"]);
    report.line(
        "criterion 2 (zoh closed forms)",
        err <= ZOH_TOLERANCE && zoh.failed.is_empty(),
        format!("scalar example err {err:.3e} tol {ZOH_TOLERANCE:.0e}"),
    );

    suites(&mut report, "criterion 3 (selective scan degeneration)", &["selective_degeneration", "associative_scan"]);
    suites(
        &mut report,
        "criterion 4 (gradient checks)",
        &["grad_linear", "grad_gru", "grad_mamba", "grad_value_forward"],
    );
    suites(&mut report, "criterion 5 (reward transcription)", &["reward_transcription"]);
    suites(&mut report, "criterion 6 (invisible robot)", &["invisible_robot"]);
    suites(&mut report, "criterion 7 (metric identities, count grid)", &[METRICS_SUITE]);

    // training-dependent criteria
    let mut trained = Vec::new();
    let mut train_errors = Vec::new();
    for kind in [PolicyKind::Camrl, PolicyKind::LstmRl, PolicyKind::CadrlMlp] {
        match train(kind) {
            Ok(t) => {
                let secs = t.seconds.map_or("cached, untimed".to_string(), |s| format!("{s:.0} s"));
                println!("  trained {kind}: {} ({secs})", t.checkpoint.display());
                trained.push((kind, t));
            }
            Err(e) => train_errors.push(e),
        }
    }
    if let Some((_, camrl)) = trained.iter().find(|(k, _)| *k == PolicyKind::Camrl) {
        let l = &camrl.il_losses;
        if let (Some(first), Some(last)) = (l.first(), l.last()) {
            let drop = 1.0 - last / first;
            println!(
                "  imitation loss {first:.4} -> {last:.4} over {} epochs, drop {:.0}% (gate {:.0}%): {}",
                l.len(),
                100.0 * drop,
                100.0 * IL_LOSS_DROP,
                if drop >= IL_LOSS_DROP { "met" } else { "not met" }
            );
        }
    }

    let eval = if train_errors.is_empty() {
        cmd_evaluate(&EvaluateArgs {
            common: CommonArgs { config: None, seed: None },
            policy: vec![PolicySelector::Orca],
            checkpoint: [PolicyKind::CadrlMlp, PolicyKind::LstmRl, PolicyKind::Camrl]
                .iter()
                .filter_map(|k| trained.iter().find(|(t, _)| t == k).map(|(_, t)| t.checkpoint.clone()))
                .collect(),
            envs: vec![],
            crowd_model: "both".into(),
            cases: HELD_OUT_CASES,
            out: cache_dir().join("eval"),
        })
        .map_err(|e| e.to_string())
    } else {
        Err(train_errors.join("; "))
    };

    let summary = match eval {
        Ok(s) => s,
        Err(e) => {
            for c in
                ["criterion 7 (metric identities, generated records)", "criterion 8", "criterion 9", "criterion 10"]
            {
                report.line(c, false, e.clone());
            }
            finish(report);
        }
    };
    let by_name = |n: &str| summary.results.iter().find(|r| r.policy == n);

    let records: Vec<&MetricsRecord> = summary
        .results
        .iter()
        .flat_map(|r| r.cells.iter().filter_map(|c| c.metrics.as_ref()).chain(std::iter::once(&r.pooled)))
        .collect();
    let bad = records.iter().filter(|m| m.rate_sum() != 1.0).count();
    report.line(
        "criterion 7 (metric identities, generated records)",
        bad == 0 && !records.is_empty(),
        format!("{} records, {bad} with success+collision+timeout != 1 exactly", records.len()),
    );

    match (by_name("CAMRL"), by_name("ORCA")) {
        (Some(camrl), Some(orca)) => {
            let c = cell(camrl, "baseline-circle", "orca");
            let o = cell(orca, "baseline-circle", "orca");
            let secs = trained.iter().find(|(k, _)| *k == PolicyKind::Camrl).and_then(|(_, t)| t.seconds);
            match (c, o) {
                (Some(c), Some(o)) => report.line(
                    "criterion 8 (training efficacy)",
                    c.episodes == HELD_OUT_CASES
                        && c.success_rate >= SUCCESS_FLOOR
                        && c.success_rate > o.success_rate
                        && secs.is_none_or(|s| s <= TRAIN_BUDGET_SECS),
                    format!(
                        "CAMRL success {:.2} ({}/{}) vs ORCA {:.2}; floor {SUCCESS_FLOOR}; train time {}",
                        c.success_rate,
                        c.successes,
                        c.episodes,
                        o.success_rate,
                        secs.map_or("cached".into(), |s| format!("{s:.0} s of {TRAIN_BUDGET_SECS:.0} s"))
                    ),
                ),
                _ => report.line("criterion 8 (training efficacy)", false, "baseline-circle/orca cell missing".into()),
            }
        }
        _ => report.line("criterion 8 (training efficacy)", false, "CAMRL or ORCA results missing".into()),
    }

    let wanted = ["ORCA", "CADRL-MLP", "LSTMRL", "CAMRL"];
    let names: Vec<&str> = summary.results.iter().map(|r| r.policy.as_str()).collect();
    let full = summary.results.iter().all(|r| {
        r.cells.len() == 12
            && r.cells.iter().all(|c| c.failures.is_empty() && c.episodes.len() == HELD_OUT_CASES)
            && r.pooled.episodes == PROTOCOL_EPISODES
    });
    let csv = fs::read_to_string(summary.out.join("comparison.csv")).map_err(|e| e.to_string());
    let reread =
        csv.as_deref().map_err(|e| e.clone()).and_then(|t| ComparisonTable::from_csv(t).map_err(|e| e.to_string()));
    let header_ok = csv.as_deref().is_ok_and(|t| t.lines().next() == Some(TABLE_COLUMNS.join(",").as_str()));
    let table_ok = (reread.as_ref() == Ok(&summary.table)) && header_ok;
    report.line(
        "criterion 9 (protocol shape)",
        names == wanted && full && table_ok && summary.table.rows.len() == wanted.len(),
        format!("policies {names:?}; 12 cells x {HELD_OUT_CASES} = {PROTOCOL_EPISODES} episodes each: {full}; csv round-trip: {table_ok}"),
    );
    println!("{}", summary.table.render());

    match (by_name("CAMRL"), by_name("ORCA")) {
        (Some(c), Some(o)) => report.line(
            "criterion 10 (collision ordering)",
            c.pooled.collision_rate <= o.pooled.collision_rate,
            format!("pooled collision CAMRL {:.3} vs ORCA {:.3}", c.pooled.collision_rate, o.pooled.collision_rate),
        ),
        _ => report.line("criterion 10 (collision ordering)", false, "CAMRL or ORCA results missing".into()),
    }

    finish(report);
}

fn finish(report: Report) -> ! {
    if report.failed.is_empty() {
        println!("acceptance: all criteria PASS");
        std::process::exit(0);
    }
    println!("acceptance: FAIL {}", report.failed.join(", "));
    std::process::exit(1);
}
