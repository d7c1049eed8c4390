use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FullAgentState, SimError, SimParams, Vec2, World};
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Circle,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Density {
    Baseline,
    Dense,
    Large,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrowdModel {
    Orca,
    Sfm,
}

impl CrowdModel {
    pub const ALL: [CrowdModel; 2] = [CrowdModel::Orca, CrowdModel::Sfm];
}

impl fmt::Display for CrowdModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrowdModel::Orca => "orca",
            CrowdModel::Sfm => "sfm",
        })
    }
}

impl FromStr for CrowdModel {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.to_ascii_lowercase().as_str() {
            "orca" => Ok(CrowdModel::Orca),
            "sfm" => Ok(CrowdModel::Sfm),
            _ => Err(SimError::Parse(format!("unknown crowd model `{s}`"))),
        }
    }
}

/// One of the six crossing environments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioKind {
    pub shape: Shape,
    pub density: Density,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind { shape: Shape::Circle, density: Density::Baseline },
        ScenarioKind { shape: Shape::Square, density: Density::Baseline },
        ScenarioKind { shape: Shape::Circle, density: Density::Dense },
        ScenarioKind { shape: Shape::Square, density: Density::Dense },
        ScenarioKind { shape: Shape::Circle, density: Density::Large },
        ScenarioKind { shape: Shape::Square, density: Density::Large },
    ];

    pub const BASELINE_CIRCLE: ScenarioKind = ScenarioKind { shape: Shape::Circle, density: Density::Baseline };

    /// Circle radius or square width (m), and human count.
    pub fn geometry(self) -> (f64, usize) {
        match (self.shape, self.density) {
            (Shape::Circle, Density::Baseline) => (4.0, 5),
            (Shape::Square, Density::Baseline) => (10.0, 10),
            (Shape::Circle, Density::Dense) => (4.0, 10),
            (Shape::Square, Density::Dense) => (10.0, 20),
            (Shape::Circle, Density::Large) => (6.0, 12),
            (Shape::Square, Density::Large) => (14.0, 20),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.density {
            Density::Baseline => "baseline",
            Density::Dense => "dense",
            Density::Large => "large",
        };
        let s = match self.shape {
            Shape::Circle => "circle",
            Shape::Square => "square",
        };
        write!(f, "{d}-{s}")
    }
}

impl FromStr for ScenarioKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| SimError::Parse(format!("unknown environment `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Circle radius or square width (m).
    pub size: f64,
    pub humans: usize,
    pub crowd_model: CrowdModel,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, crowd_model: CrowdModel, seed: u64) -> Self {
        let (size, humans) = kind.geometry();
        Self { kind, size, humans, crowd_model, seed }
    }

    /// Robot start and goal: bottom to top of the shape.
    pub fn robot_route(&self) -> (Vec2, Vec2) {
        let half = match self.kind.shape {
            Shape::Circle => self.size,
            Shape::Square => self.size / 2.0,
        };
        (Vec2::new(0.0, -half), Vec2::new(0.0, half))
    }
}

const MAX_PLACEMENT_TRIES: usize = 2000;

/// Builds the initial world. Layout depends only on `(kind, seed)` and the
/// agent sizes, not on the crowd model.
pub fn spawn_scenario(cfg: &ScenarioConfig, params: &SimParams) -> Result<World, SimError> {
    if !(cfg.size > 0.0) {
        return Err(SimError::Config(format!("scenario size must be positive, got {}", cfg.size)));
    }
    let mut rng = substream(cfg.seed, &format!("scenario/{}", cfg.kind));
    let (start, goal) = cfg.robot_route();
    let robot = FullAgentState::new(start, goal, params.robot_radius, params.robot_v_pref);
    let clearance = params.spawn_clearance;
    let mut placed: Vec<(Vec2, Vec2, f64)> = vec![(start, goal, params.robot_radius)];
    let mut humans = Vec::with_capacity(cfg.humans);
    let r = params.human_radius;
    for index in 0..cfg.humans {
        let mut found = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let (p, g) = match cfg.kind.shape {
                Shape::Circle => {
                    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                    let noise = Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)) * params.human_v_pref;
                    let p = Vec2::from_polar(cfg.size, angle) + noise;
                    (p, -p)
                }
                Shape::Square => {
                    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let half = cfg.size / 2.0;
                    let p =
                        Vec2::new(rng.gen_range(0.0..1.0) * half * side, (rng.gen_range(0.0..1.0) - 0.5) * cfg.size);
                    let g =
                        Vec2::new(rng.gen_range(0.0..1.0) * half * -side, (rng.gen_range(0.0..1.0) - 0.5) * cfg.size);
                    (p, g)
                }
            };
            let ok = placed.iter().all(|&(op, og, orad)| {
                let min = r + orad + clearance;
                (p - op).norm() >= min && (g - og).norm() >= min
            });
            if ok {
                found = Some((p, g));
                break;
            }
        }
        let (p, g) = found.ok_or(SimError::Overcrowded { placed: index, requested: cfg.humans })?;
        placed.push((p, g, r));
        humans.push(FullAgentState::new(p, g, r, params.human_v_pref));
    }
    Ok(World::new(robot, humans, cfg.crowd_model, *params, cfg.seed))
}
