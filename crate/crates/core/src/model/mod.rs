//! Shared domain types: vectors, node identities, simulation parameters and
//! formation geometry.

mod config;
mod geometry;
mod params;
mod vec2;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{parse_config, render_config, ConfigParseError};
pub use geometry::{formation_center, formation_radius, FormationGeometry, GeometryError};
pub use params::{validate_config, ConfigErrors, Obstacle, SimParams, ValidatedParams, Violation};
pub use vec2::Vec2;

/// Global node index, `1..=N`. The total order on ids is the tie-breaker used
/// everywhere in the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

/// Groups are addressed by their head's id.
pub type GroupId = NodeId;

/// Simulation time in ticks of `dt` seconds.
pub type Tick = u64;

impl NodeId {
    pub fn get(self) -> u16 {
        self.0
    }

    /// Zero-based index into per-node arrays.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        NodeId((i + 1) as u16)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
