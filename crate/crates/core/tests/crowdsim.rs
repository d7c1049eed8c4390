use camrl::crowdsim::*;
use camrl::reward::RewardConfig;
use camrl::Error;
use proptest::prelude::*;

/// Walks straight at the goal, ignoring everyone.
struct Straight;

impl RobotPolicy for Straight {
    fn name(&self) -> &str {
        "straight"
    }
    fn act(&mut self, s: &JointState) -> Result<Vec2, Error> {
        Ok(s.robot.preferred_velocity())
    }
}

struct Still;

impl RobotPolicy for Still {
    fn name(&self) -> &str {
        "still"
    }
    fn act(&mut self, _: &JointState) -> Result<Vec2, Error> {
        Ok(Vec2::ZERO)
    }
}

fn world(kind: ScenarioKind, model: CrowdModel, seed: u64) -> World {
    spawn_scenario(&ScenarioConfig::new(kind, model, seed), &SimParams::default()).unwrap()
}

#[test]
fn baseline_circle_layout() {
    let w = world(ScenarioKind::BASELINE_CIRCLE, CrowdModel::Orca, 0);
    assert_eq!(w.humans.len(), 5);
    assert_eq!(w.robot.position(), Vec2::new(0.0, -4.0));
    assert_eq!(w.robot.goal(), Vec2::new(0.0, 4.0));
    for h in &w.humans {
        assert!((h.position().norm() - 4.0).abs() < 0.75);
        assert_eq!(h.goal(), -h.position());
    }
}

#[test]
fn large_square_stays_in_region() {
    let kind: ScenarioKind = "large-square".parse().unwrap();
    for seed in 0..5 {
        let w = world(kind, CrowdModel::Sfm, seed);
        assert_eq!(w.humans.len(), 20);
        for h in &w.humans {
            for p in [h.position(), h.goal()] {
                assert!(p.x.abs() <= 7.0 && p.y.abs() <= 7.0, "{p:?}");
            }
        }
    }
}

#[test]
fn spawn_respects_clearance_and_is_deterministic() {
    for kind in ScenarioKind::ALL {
        let a = world(kind, CrowdModel::Orca, 7);
        let b = world(kind, CrowdModel::Sfm, 7);
        assert_eq!(a.joint_state(), b.joint_state(), "layout must not depend on the crowd model");
        let mut agents = vec![a.robot];
        agents.extend(a.humans.iter().copied());
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                let gap = |p: Vec2, q: Vec2| (p - q).norm() - 0.6;
                assert!(gap(agents[i].position(), agents[j].position()) >= 0.2 - 1e-12);
                assert!(gap(agents[i].goal(), agents[j].goal()) >= 0.2 - 1e-12);
            }
        }
    }
}

#[test]
fn overcrowded_config_is_an_error() {
    let mut cfg = ScenarioConfig::new(ScenarioKind::BASELINE_CIRCLE, CrowdModel::Orca, 0);
    cfg.size = 1.0;
    cfg.humans = 30;
    assert!(matches!(spawn_scenario(&cfg, &SimParams::default()), Err(SimError::Overcrowded { .. })));
}

#[test]
fn episodes_are_bit_reproducible() {
    for model in CrowdModel::ALL {
        let kind: ScenarioKind = "dense-circle".parse().unwrap();
        let run = || {
            let mut p = OrcaRobot::new(0.25);
            run_episode(world(kind, model, 3), &mut p, &RewardConfig::default()).unwrap()
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn humans_ignore_the_robot() {
    for kind in ScenarioKind::ALL {
        for model in CrowdModel::ALL {
            let mut with_robot = world(kind, model, 11);
            let mut removed = with_robot.clone();
            removed.robot.observable.position = Vec2::new(1e6, 1e6);
            for _ in 0..40 {
                with_robot.step(with_robot.robot.preferred_velocity()).unwrap();
                removed.step(Vec2::ZERO).unwrap();
                assert_eq!(with_robot.human_observables(), removed.human_observables());
            }
        }
    }
}

#[test]
fn arrived_humans_hold_position() {
    let robot = FullAgentState::new(Vec2::new(50.0, 0.0), Vec2::new(50.0, 5.0), 0.3, 1.0);
    let human = FullAgentState::new(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.3, 1.0);
    for model in CrowdModel::ALL {
        let mut w = World::new(robot, vec![human], model, SimParams::default(), 0);
        let mut arrived_at = None;
        for _ in 0..40 {
            w.step(Vec2::ZERO).unwrap();
            let p = w.humans[0].position();
            match arrived_at {
                Some(q) => assert_eq!(p, q),
                None if w.humans[0].goal_distance() < 0.3 => arrived_at = Some(p),
                None => {}
            }
        }
        assert!(arrived_at.is_some(), "{model} human never arrived");
        assert_eq!(w.humans[0].velocity(), Vec2::ZERO);
    }
}

#[test]
fn orca_pair_never_overlaps() {
    for offset in [0.0, 0.05, 0.3] {
        let a = FullAgentState::new(Vec2::new(-3.0, offset), Vec2::new(3.0, offset), 0.3, 1.0);
        let b = FullAgentState::new(Vec2::new(3.0, -offset), Vec2::new(-3.0, -offset), 0.3, 1.0);
        let robot = FullAgentState::new(Vec2::new(100.0, 0.0), Vec2::new(100.0, 1.0), 0.3, 1.0);
        let mut w = World::new(robot, vec![a, b], CrowdModel::Orca, SimParams::default(), 0);
        for _ in 0..60 {
            w.step(Vec2::ZERO).unwrap();
            let gap = (w.humans[0].position() - w.humans[1].position()).norm() - 0.6;
            assert!(gap >= 0.0, "offset {offset}: gap {gap}");
        }
    }
}

#[test]
fn trajectory_log_round_trips() {
    let outcome =
        run_episode(world(ScenarioKind::BASELINE_CIRCLE, CrowdModel::Orca, 1), &mut Still, &RewardConfig::default())
            .unwrap();
    let mut buf = Vec::new();
    write_trajectory_log(&mut buf, &outcome).unwrap();
    let records = read_trajectory_log(&buf[..]).unwrap();
    assert_eq!(records.len(), outcome.steps.len() + 1);
    assert!(records[0].action.is_none());
    for (rec, step) in records[1..].iter().zip(&outcome.steps) {
        assert_eq!(rec.time, step.time);
        assert_eq!(rec.robot, step.state.robot);
        assert_eq!(rec.humans, step.state.humans);
        assert_eq!(rec.reward, Some(step.reward));
    }
    let robot = FullAgentState::new(Vec2::ZERO, Vec2::new(0.0, 1.0), 0.3, 1.0);
    let alone = World::new(robot, vec![], CrowdModel::Orca, SimParams::default(), 0);
    let outcome = run_episode(alone, &mut Straight, &RewardConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_trajectory_log(&mut buf, &outcome).unwrap();
    assert!(String::from_utf8(buf).unwrap().contains("\"separation\":null"));
}

#[test]
fn episode_outcomes_are_well_formed() {
    let cfg = RewardConfig::default();
    for seed in 0..10 {
        for policy in [&mut Straight as &mut dyn RobotPolicy, &mut Still, &mut OrcaRobot::new(0.25)] {
            let out = run_episode(world(ScenarioKind::BASELINE_CIRCLE, CrowdModel::Orca, seed), policy, &cfg).unwrap();
            assert!(out.elapsed <= 25.0);
            let last = out.steps.last().unwrap();
            match out.result {
                EpisodeResult::Success => assert!(last.state.robot.goal_distance() < 0.3),
                EpisodeResult::Collision => assert!(last.separation <= 0.0),
                EpisodeResult::Timeout => assert_eq!(out.elapsed, 25.0),
            }
            assert!(out.discomfort.iter().all(|e| e.separation > 0.0 && e.separation < 0.2));
        }
    }
    let out = run_episode(world(ScenarioKind::BASELINE_CIRCLE, CrowdModel::Orca, 0), &mut Still, &cfg).unwrap();
    assert_ne!(out.result, EpisodeResult::Success);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sfm_speed_never_exceeds_cap(seed in 0u64..1000, dense in any::<bool>()) {
        let kind = if dense { "dense-square" } else { "baseline-circle" };
        let mut w = world(kind.parse().unwrap(), CrowdModel::Sfm, seed);
        for _ in 0..30 {
            w.step(Vec2::ZERO).unwrap();
            for h in &w.humans {
                prop_assert!(h.velocity().norm() <= h.v_pref() + 1e-12);
            }
        }
    }

    #[test]
    fn separation_is_min_gap(xs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.1f64..0.5), 0..6)) {
        let robot = ObservableState { position: Vec2::ZERO, velocity: Vec2::ZERO, radius: 0.3 };
        let humans: Vec<_> = xs.iter().map(|&(x, y, r)| ObservableState { position: Vec2::new(x, y), velocity: Vec2::ZERO, radius: r }).collect();
        let d = separation_distance(&robot, &humans);
        for h in &humans {
            prop_assert!(d <= h.position.norm() - 0.3 - h.radius);
        }
        prop_assert_eq!(d.is_infinite(), humans.is_empty());
    }
}
