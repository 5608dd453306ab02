use serde::{Deserialize, Serialize};

use crate::model::{Obstacle, Vec2};
use crate::radio::FadingMode;

/// Expected initial short-channel degree the spawn square is sized for.
pub const SPAWN_MEAN_DEGREE: f64 = 10.0;

/// Reference obstacle course: obstacle center and radius, and the
/// destination behind it.
pub const OBSTACLE_CENTER: Vec2 = Vec2 { x: 14_000.0, y: 0.0 };
pub const OBSTACLE_RADIUS: f64 = 5_400.0;
pub const OBSTACLE_DESTINATION: Vec2 = Vec2 { x: 40_000.0, y: 0.0 };
pub const SAILING_DESTINATION: Vec2 = Vec2 { x: 1.0e6, y: 0.0 };

/// Evasion starts when a formation's edge is this many obstacle radii from
/// the obstacle center.
pub const DEFAULT_AVOIDANCE_FACTOR: f64 = 5.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    StraightSailing,
    ObstacleAvoidance,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::StraightSailing => "straight",
            ScenarioKind::ObstacleAvoidance => "obstacle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Controller {
    Binc,
    Boids,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouterKind {
    Binc,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Side of the square spawn area centred on the origin, m.
    pub spawn_side: f64,
    pub destination: Vec2,
    pub obstacle: Option<Obstacle>,
    /// Evasion radius as a multiple of the obstacle radius.
    pub avoidance_factor: f64,
    /// Nodes never move; protocols still run.
    pub frozen: bool,
    /// Initial speed with uniformly random headings; 0 means at rest.
    pub initial_speed: f64,
    pub controller: Controller,
    pub router: RouterKind,
    pub fading: FadingMode,
    /// Explicit positions (overrides random spawn); length must equal N.
    pub placement: Option<Vec<Vec2>>,
    pub initial_velocities: Option<Vec<Vec2>>,
    /// Group and obstacle log laws exactly as printed, signs included.
    pub verbatim_logs: bool,
    /// Compare the raw velocity-change indicator against the threshold.
    pub raw_indicator: bool,
}

/// Square side giving `SPAWN_MEAN_DEGREE` expected neighbours at range
/// `d_tr`; grows with √N so density is the same at every size.
pub fn spawn_side(n: usize, d_tr: f64) -> f64 {
    d_tr * (std::f64::consts::PI * n as f64 / SPAWN_MEAN_DEGREE).sqrt()
}

impl Scenario {
    pub fn straight_sailing(n: usize, d_tr: f64) -> Self {
        Self {
            kind: ScenarioKind::StraightSailing,
            spawn_side: spawn_side(n, d_tr),
            destination: SAILING_DESTINATION,
            obstacle: None,
            avoidance_factor: DEFAULT_AVOIDANCE_FACTOR,
            frozen: false,
            initial_speed: 0.0,
            controller: Controller::Binc,
            router: RouterKind::Binc,
            fading: FadingMode::Deterministic,
            placement: None,
            initial_velocities: None,
            verbatim_logs: false,
            raw_indicator: false,
        }
    }

    /// The reference course: obstacle at (14000, 0), radius 5400.
    pub fn obstacle_avoidance(n: usize, d_tr: f64) -> Self {
        Self::scaled_obstacle(n, d_tr, OBSTACLE_RADIUS)
    }

    /// The reference course shrunk so the obstacle radius is `radius`.
    pub fn scaled_obstacle(n: usize, d_tr: f64, radius: f64) -> Self {
        let k = radius / OBSTACLE_RADIUS;
        Self {
            kind: ScenarioKind::ObstacleAvoidance,
            destination: OBSTACLE_DESTINATION * k,
            obstacle: Some(Obstacle { center: OBSTACLE_CENTER * k, radius }),
            ..Self::straight_sailing(n, d_tr)
        }
    }

    /// Motionless random placement for protocol-only runs.
    pub fn static_placement(n: usize, d_tr: f64) -> Self {
        Self { frozen: true, ..Self::straight_sailing(n, d_tr) }
    }

    pub fn with_controller(mut self, c: Controller) -> Self {
        self.controller = c;
        self
    }

    pub fn with_router(mut self, r: RouterKind) -> Self {
        self.router = r;
        self
    }

    /// Radius at which formations start evading.
    pub fn avoidance_obstacle(&self) -> Option<Obstacle> {
        self.obstacle.map(|o| Obstacle { center: o.center, radius: o.radius * self.avoidance_factor })
    }
}
