//! Comparators: Boids steering for the control plane and a flat
//! link-state router that floods full neighbour sets network-wide.

use std::collections::BTreeMap;

use crate::cluster::ClusterState;
use crate::model::{NodeId, SimParams, Vec2};
use crate::route::{build_intra_routes, IntraTopology, TcTable};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoidsParams {
    pub r_rep: f64,
    pub r_att: f64,
    pub w_sep: f64,
    pub w_align: f64,
    pub w_coh: f64,
    pub f_clamp: f64,
}

impl BoidsParams {
    pub fn from_sim(p: &SimParams) -> Self {
        Self { r_rep: p.r_rep, r_att: p.r_att, w_sep: p.w_sep, w_align: p.w_align, w_coh: p.w_coh, f_clamp: p.f_clamp }
    }
}

impl Default for BoidsParams {
    fn default() -> Self {
        Self::from_sim(&SimParams::default())
    }
}

/// Separation, alignment and cohesion over neighbours (position, velocity)
/// within `r_att`.
pub fn boids_force(pos: Vec2, vel: Vec2, neighbors: &[(Vec2, Vec2)], p: &BoidsParams) -> Vec2 {
    let mut sep = Vec2::ZERO;
    let mut vsum = Vec2::ZERO;
    let mut psum = Vec2::ZERO;
    let mut n = 0usize;
    for &(q, w) in neighbors {
        let d = q - pos;
        let dist = d.norm();
        if dist > p.r_att {
            continue;
        }
        n += 1;
        vsum += w;
        psum += q;
        if dist > 0.0 && dist < p.r_rep {
            sep -= d.unit_or_zero() / dist;
        }
    }
    if n == 0 {
        return Vec2::ZERO;
    }
    let k = n as f64;
    let align = vsum / k - vel;
    let coh = (psum / k - pos) / p.r_att;
    (sep * p.w_sep + align * p.w_align + coh * p.w_coh).clamp_norm(p.f_clamp)
}

/// Flat TC content: every live one-hop neighbour.
pub fn flat_tc_advertised(cluster: &ClusterState) -> Vec<NodeId> {
    cluster.one_hop.keys().copied().collect()
}

/// Whole-network topology from the node's own links and every TC heard.
pub fn flat_topology(cluster: &ClusterState, tcs: &TcTable) -> IntraTopology {
    let mut t = IntraTopology::default();
    for &n in cluster.one_hop.keys() {
        t.add_link(cluster.id, n);
    }
    for (a, b) in tcs.links() {
        t.add_link(a, b);
    }
    t
}

pub fn flat_routes(cluster: &ClusterState, tcs: &TcTable) -> BTreeMap<NodeId, NodeId> {
    build_intra_routes(&flat_topology(cluster, tcs), cluster.id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boids_examples() {
        let p = BoidsParams::default();
        assert_eq!(boids_force(Vec2::ZERO, Vec2::new(1.0, 0.0), &[], &p), Vec2::ZERO);

        let v = Vec2::new(5.0, 0.0);
        let ring: Vec<(Vec2, Vec2)> = (0..6).map(|k| (Vec2::from_angle(k as f64 * std::f64::consts::PI / 3.0) * 80.0, v)).collect();
        assert!(boids_force(Vec2::ZERO, v, &ring, &p).norm() < 1e-12);

        let f = boids_force(Vec2::ZERO, v, &[(Vec2::new(150.0, 0.0), v)], &p);
        assert!((f - Vec2::new(0.75, 0.0)).norm() < 1e-12);

        assert_eq!(boids_force(Vec2::ZERO, v, &[(Vec2::new(300.0, 0.0), v)], &p), Vec2::ZERO);
    }
}
