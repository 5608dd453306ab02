//! Intra-formation control: pairwise interaction forces, social levels,
//! leader selection and superior-following forces.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::model::{NodeId, SimParams, Vec2};
use crate::route::bfs_distances;

/// Below this speed a node has no defined heading.
pub const HEADING_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PigeonError {
    #[error("coincident positions")]
    CoincidentPositions,
    #[error("empty formation")]
    EmptyFormation,
    #[error("goal direction is zero")]
    ZeroGoalDirection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PigeonParams {
    pub r_rep: f64,
    pub r_al: f64,
    pub r_att: f64,
    pub a: f64,
    pub s_max: u8,
    pub f_clamp: f64,
    /// Half-angle of the rear blind cone, degrees.
    pub blind_half_angle: f64,
}

impl PigeonParams {
    pub fn from_sim(p: &SimParams) -> Self {
        Self {
            r_rep: p.r_rep,
            r_al: p.r_al,
            r_att: p.r_att,
            a: p.a_coeff,
            s_max: p.s_max,
            f_clamp: p.f_clamp,
            blind_half_angle: p.blind_rear_half_angle_node,
        }
    }

    pub fn max_pair_magnitude(&self) -> f64 {
        1.0 + self.a
    }
}

impl Default for PigeonParams {
    fn default() -> Self {
        Self::from_sim(&SimParams::default())
    }
}

/// Piecewise cosine interaction with neighbour at `rel = p_j − p_i`.
pub fn pair_force(rel: Vec2, p: &PigeonParams) -> Result<Vec2, PigeonError> {
    let d = rel.norm();
    let Some(u) = rel.try_unit() else { return Err(PigeonError::CoincidentPositions) };
    let f = if d <= p.r_rep {
        -u * ((FRAC_PI_2 * d / p.r_rep).cos() + p.a)
    } else if d <= p.r_al {
        Vec2::ZERO
    } else if d <= p.r_att {
        u * ((FRAC_PI_2 * (p.r_att - d) / (p.r_att - p.r_al)).cos() + p.a)
    } else {
        Vec2::ZERO
    };
    Ok(f)
}

/// Direction derived from the unordered id pair, used when two nodes sit on
/// the same point. Node `i` is pushed along it, `j` the opposite way.
pub fn coincident_direction(i: NodeId, j: NodeId) -> Vec2 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let mut z = ((lo.0 as u64) << 16 | hi.0 as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    let angle = (z >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    let dir = Vec2::from_angle(angle);
    if i < j {
        dir
    } else {
        -dir
    }
}

/// `pair_force` for node `i` against `j`, with coincident positions resolved
/// to a maximal push along a pair-seeded direction.
pub fn pair_force_between(i: NodeId, j: NodeId, rel: Vec2, p: &PigeonParams) -> Vec2 {
    match pair_force(rel, p) {
        Ok(f) => f,
        Err(_) => coincident_direction(i, j) * p.max_pair_magnitude(),
    }
}

/// Whether a neighbour at `rel` is visible: within `r_att` and outside the
/// rear blind cone. The cone is disabled when the node is nearly at rest.
pub fn is_interactive(velocity: Vec2, rel: Vec2, p: &PigeonParams) -> bool {
    if rel.norm() > p.r_att {
        return false;
    }
    if velocity.norm() < HEADING_FLOOR {
        return true;
    }
    let Some(bearing) = rel.try_unit() else { return true };
    let rear = -velocity.unit_or_zero();
    let off = bearing.dot(rear).clamp(-1.0, 1.0).acos();
    off > p.blind_half_angle.to_radians()
}

/// Ids from `candidates` (id, position) that node at `pos` moving with
/// `velocity` interacts with.
pub fn interactive_neighbors(
    pos: Vec2,
    velocity: Vec2,
    candidates: &[(NodeId, Vec2)],
    p: &PigeonParams,
) -> BTreeSet<NodeId> {
    candidates
        .iter()
        .filter(|(_, q)| is_interactive(velocity, *q - pos, p))
        .map(|&(id, _)| id)
        .collect()
}

/// Sum of pair forces over interactive neighbours given as (id, position).
pub fn neighbor_force(me: NodeId, pos: Vec2, neighbors: &[(NodeId, Vec2)], p: &PigeonParams) -> Vec2 {
    neighbors
        .iter()
        .fold(Vec2::ZERO, |acc, &(j, q)| acc + pair_force_between(me, j, q - pos, p))
}

/// Forefront member along `goal`; ties go to the lower id.
pub fn select_leader(members: &[(NodeId, Vec2)], goal: Vec2) -> Result<NodeId, PigeonError> {
    let dir = goal.try_unit().ok_or(PigeonError::ZeroGoalDirection)?;
    let mut best: Option<(f64, NodeId)> = None;
    for &(id, pos) in members {
        let score = pos.dot(dir);
        best = match best {
            Some((s, b)) if s > score || (s == score && b < id) => Some((s, b)),
            _ => Some((score, id)),
        };
    }
    best.map(|(_, id)| id).ok_or(PigeonError::EmptyFormation)
}

/// Hop distance from the leader over intra-cluster links, capped at
/// `s_max`; members the leader cannot reach get `s_max`.
pub fn assign_social_levels(
    links: &BTreeMap<NodeId, BTreeSet<NodeId>>,
    members: &BTreeSet<NodeId>,
    leader: NodeId,
    s_max: u8,
) -> BTreeMap<NodeId, u8> {
    let dist = bfs_distances(links, leader);
    let mut levels: BTreeMap<NodeId, u8> = members
        .iter()
        .map(|&m| {
            let lvl = dist.get(&m).map_or(s_max as u32, |&d| d.min(s_max as u32));
            (m, lvl as u8)
        })
        .collect();
    levels.insert(leader, 0);
    levels
}

/// Same-group nodes at most two levels closer to the leader than `level`.
pub fn is_superior(level: u8, other: u8) -> bool {
    other < level && level - other <= 2
}

/// Position-following plus velocity-matching toward superiors given as
/// (position, velocity).
pub fn following_force(pos: Vec2, vel: Vec2, superiors: &[(Vec2, Vec2)]) -> Vec2 {
    if superiors.is_empty() {
        return Vec2::ZERO;
    }
    let fp = superiors.iter().fold(Vec2::ZERO, |acc, &(q, _)| acc + (q - pos).unit_or_zero());
    let fv = superiors.iter().fold(Vec2::ZERO, |acc, &(_, w)| acc + (w - vel)) / superiors.len() as f64;
    fp + fv
}

pub fn member_total_force(neighbor: Vec2, following: Vec2, f_clamp: f64) -> Vec2 {
    (neighbor + following).clamp_norm(f_clamp)
}
