//! Inter-formation control: observation sectors, group force laws, the
//! evasion / local-following / collective pattern choice and velocity-loop
//! suppression.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::model::{GroupId, NodeId, Obstacle, SimParams, Tick, Vec2};
use crate::wire::{CHelloMsg, FollowChain, SeqNum};

pub const HEADING_FLOOR: f64 = 0.01;
pub const FORWARD_SECTORS: usize = 5;
const SECTOR: f64 = PI / 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarlingParams {
    pub r_rep: f64,
    pub r_al: f64,
    pub r_att: f64,
    pub f_clamp: f64,
    pub alpha: f64,
    /// Compare `indicator · r_att` against the threshold instead of the raw
    /// indicator.
    pub normalize_indicator: bool,
    /// Use the log laws with the printed ratios (direction flipped inside
    /// each band).
    pub verbatim_logs: bool,
}

impl StarlingParams {
    pub fn from_sim(p: &SimParams) -> Self {
        Self {
            r_rep: p.group_r_rep,
            r_al: p.group_r_al,
            r_att: p.group_r_att,
            f_clamp: p.f_clamp,
            alpha: p.alpha,
            normalize_indicator: true,
            verbatim_logs: false,
        }
    }
}

impl Default for StarlingParams {
    fn default() -> Self {
        Self::from_sim(&SimParams::default())
    }
}

/// Sector index of `bearing` relative to `heading`. With a heading the five
/// forward sectors are 0..5 (clockwise-most first) and the rear 135° gives
/// `None`; without one, eight absolute sectors are used. A bearing on a
/// boundary belongs to the counterclockwise sector.
pub fn sector_of(heading: Option<Vec2>, bearing: Vec2) -> Option<usize> {
    match heading {
        Some(h) => {
            let rel = h.cross(bearing).atan2(h.dot(bearing));
            let k = ((rel + 2.5 * SECTOR) / SECTOR).floor();
            (0.0..FORWARD_SECTORS as f64).contains(&k).then_some(k as usize)
        }
        None => {
            let a = bearing.angle().rem_euclid(2.0 * PI);
            Some((((a + 0.5 * SECTOR) / SECTOR).floor() as usize) % 8)
        }
    }
}

fn heading_of(v: Vec2) -> Option<Vec2> {
    (v.norm() >= HEADING_FLOOR).then(|| v.unit_or_zero())
}

/// What a head knows about a neighbouring formation from its C-HELLOs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborGroupView {
    pub head: NodeId,
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
    pub prev_velocity: Option<Vec2>,
    pub vel_seq: SeqNum,
    pub follow: Option<FollowChain>,
    pub heard: Tick,
}

impl NeighborGroupView {
    /// The velocity identity this group is currently showing.
    pub fn chain(&self) -> FollowChain {
        self.follow.unwrap_or(FollowChain { group: self.head, seq: self.vel_seq })
    }
}

/// Nearest candidate (by center distance, then lower head id) in each
/// visible sector, ordered by sector.
pub fn observation_neighbors(center: Vec2, velocity: Vec2, candidates: &[NeighborGroupView]) -> Vec<NeighborGroupView> {
    let heading = heading_of(velocity);
    let mut best: BTreeMap<usize, &NeighborGroupView> = BTreeMap::new();
    for c in candidates {
        let d = c.center - center;
        if d.norm() == 0.0 {
            continue;
        }
        let Some(k) = sector_of(heading, d) else { continue };
        let better = match best.get(&k) {
            None => true,
            Some(b) => {
                let (db, dc) = (b.center.distance(center), d.norm());
                dc < db || (dc == db && c.head < b.head)
            }
        };
        if better {
            best.insert(k, c);
        }
    }
    best.into_values().cloned().collect()
}

/// Surface-distance interaction between formation m and neighbour k, with
/// `d = P_k − P_m`.
pub fn group_pair_force(d: Vec2, r_m: f64, r_k: f64, p: &StarlingParams) -> Vec2 {
    let u = d.unit_or_zero();
    let s = d.norm() - r_m - r_k;
    if s <= 0.0 {
        return -u * p.f_clamp;
    }
    let mag = if s <= p.r_rep {
        -log_ratio(p.r_rep, s, p.verbatim_logs)
    } else if s <= p.r_al || s > p.r_att {
        0.0
    } else {
        log_ratio(p.r_att - p.r_al, p.r_att - s, p.verbatim_logs)
    };
    (u * mag).clamp_norm(p.f_clamp)
}

fn log_ratio(num: f64, den: f64, verbatim: bool) -> f64 {
    if den <= 0.0 {
        return f64::INFINITY;
    }
    if verbatim {
        (den / num).ln()
    } else {
        (num / den).ln()
    }
}

/// Repulsion from the obstacle once the formation's edge is within
/// `R_obs` of its center.
pub fn evasion_force(p_m: Vec2, r_m: f64, obstacle: &Obstacle, p: &StarlingParams) -> Vec2 {
    let d = obstacle.center - p_m;
    let u = d.unit_or_zero();
    let clearance = d.norm() - r_m;
    if clearance <= 0.0 {
        return -u * p.f_clamp;
    }
    if clearance > obstacle.radius {
        return Vec2::ZERO;
    }
    (-u * log_ratio(obstacle.radius, clearance, p.verbatim_logs)).clamp_norm(p.f_clamp)
}

pub fn obstacle_clearance(p_m: Vec2, r_m: f64, obstacle: &Obstacle) -> f64 {
    obstacle.center.distance(p_m) - r_m
}

/// Unit vector along the summed velocity differences; zero when the sum
/// vanishes.
pub fn collective_force(v_m: Vec2, neighbors: &[Vec2]) -> Vec2 {
    let sum = neighbors.iter().fold(Vec2::ZERO, |acc, &v| acc + (v - v_m));
    if sum.norm() < 1e-9 {
        Vec2::ZERO
    } else {
        sum.unit_or_zero()
    }
}

pub fn velocity_change_indicator(d_mk: Vec2, v_now: Vec2, v_prev: Vec2) -> f64 {
    let dist = d_mk.norm();
    if v_now.norm() < HEADING_FLOOR || v_prev.norm() < HEADING_FLOOR || dist <= 0.0 {
        return 0.0;
    }
    (1.0 - v_now.unit_or_zero().dot(v_prev.unit_or_zero())) / dist
}

pub fn follow_threshold(v_m: Vec2, neighbors: &[Vec2], alpha: f64) -> f64 {
    let mut sum = Vec2::ZERO;
    let mut n = 0usize;
    for &v in neighbors {
        if v.norm() >= HEADING_FLOOR {
            sum += v.unit_or_zero();
            n += 1;
        }
    }
    if v_m.norm() >= HEADING_FLOOR {
        sum += v_m.unit_or_zero();
    }
    (-alpha / (n as f64 + 1.0) * sum.norm()).exp()
}

/// Latest adopted sequence per source group.
pub type FollowRecords = BTreeMap<GroupId, SeqNum>;

/// Admit unless a record for the same group is equal or newer.
pub fn loop_admit(records: &FollowRecords, incoming: FollowChain) -> bool {
    match records.get(&incoming.group) {
        None => true,
        Some(&s) => incoming.seq.newer_than(s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    Evasion,
    LocalFollow,
    Collective,
}

impl Pattern {
    pub fn name(self) -> &'static str {
        match self {
            Pattern::Evasion => "evasion",
            Pattern::LocalFollow => "local-follow",
            Pattern::Collective => "collective",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternEvent {
    pub tick: Tick,
    pub group: GroupId,
    pub pattern: Pattern,
    pub k_star: Option<GroupId>,
    pub indicator: f64,
    pub threshold: f64,
    pub adopted: Option<FollowChain>,
}

/// Formation m as seen by its head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationInput {
    pub group: GroupId,
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternDecision {
    pub force: Vec2,
    pub pattern: Pattern,
    pub k_star: Option<GroupId>,
    pub indicator: f64,
    pub threshold: f64,
    /// Chain to adopt when the pattern is local following.
    pub chain: Option<FollowChain>,
}

/// Pattern selection over observation neighbours: evasion first, then local
/// following of the sharpest turner if it clears the threshold and the loop
/// check, else collective.
pub fn pattern_force(
    me: &FormationInput,
    neighbors: &[NeighborGroupView],
    obstacle: Option<&Obstacle>,
    records: &FollowRecords,
    p: &StarlingParams,
) -> PatternDecision {
    let velocities: Vec<Vec2> = neighbors.iter().map(|n| n.velocity).collect();
    let threshold = follow_threshold(me.velocity, &velocities, p.alpha);
    if let Some(obs) = obstacle {
        if obstacle_clearance(me.center, me.radius, obs) <= obs.radius {
            return PatternDecision {
                force: evasion_force(me.center, me.radius, obs, p),
                pattern: Pattern::Evasion,
                k_star: None,
                indicator: 0.0,
                threshold,
                chain: None,
            };
        }
    }
    let mut star: Option<(f64, &NeighborGroupView)> = None;
    for n in neighbors {
        let Some(prev) = n.prev_velocity else { continue };
        let a = velocity_change_indicator(n.center - me.center, n.velocity, prev);
        star = match star {
            Some((b, k)) if b > a || (b == a && k.head < n.head) => Some((b, k)),
            _ => Some((a, n)),
        };
    }
    let mut decision = PatternDecision {
        force: collective_force(me.velocity, &velocities),
        pattern: Pattern::Collective,
        k_star: star.map(|(_, k)| k.head),
        indicator: star.map_or(0.0, |(a, _)| a),
        threshold,
        chain: None,
    };
    if let Some((a, k)) = star {
        let scaled = if p.normalize_indicator { a * p.r_att } else { a };
        let chain = k.chain();
        if scaled > threshold && chain.group != me.group && loop_admit(records, chain) {
            decision.force = k.velocity - me.velocity;
            decision.pattern = Pattern::LocalFollow;
            decision.chain = Some(chain);
        }
    }
    decision
}

/// Neighbour-interaction part of the formation force.
pub fn neighbor_group_force(me: &FormationInput, neighbors: &[NeighborGroupView], p: &StarlingParams) -> Vec2 {
    neighbors
        .iter()
        .fold(Vec2::ZERO, |acc, n| acc + group_pair_force(n.center - me.center, me.radius, n.radius, p))
}

/// Per-head starling state: neighbour views, follow records and the
/// velocity identity this formation advertises.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FormationController {
    pub views: BTreeMap<NodeId, NeighborGroupView>,
    pub records: FollowRecords,
    pub adoptions: Vec<(Tick, FollowChain)>,
    pub vel_seq: SeqNum,
    pub follow: Option<FollowChain>,
    seq_heading: Option<Vec2>,
}

/// Turn (radians) after which the formation's own velocity counts as new.
pub const NEW_VELOCITY_TURN: f64 = 10.0 * PI / 180.0;

impl FormationController {
    pub fn observe(&mut self, msg: &CHelloMsg, now: Tick) {
        let prev = self.views.get(&msg.origin_head).map(|v| v.velocity);
        self.views.insert(
            msg.origin_head,
            NeighborGroupView {
                head: msg.origin_head,
                center: msg.center,
                radius: msg.radius,
                velocity: msg.velocity,
                prev_velocity: prev,
                vel_seq: msg.vel_seq,
                follow: msg.follow,
                heard: now,
            },
        );
    }

    pub fn prune(&mut self, now: Tick, expiry: Tick) {
        self.views.retain(|_, v| now.saturating_sub(v.heard) <= expiry);
    }

    /// Formation force and the pattern event for this decision.
    pub fn decide(
        &mut self,
        now: Tick,
        me: &FormationInput,
        obstacle: Option<&Obstacle>,
        p: &StarlingParams,
    ) -> (Vec2, PatternEvent) {
        self.decide_scaled(now, me, obstacle, p, 1.0)
    }

    /// As [`decide`](Self::decide), with the velocity-matching pattern
    /// terms (collective, local-following) multiplied by `velocity_share`.
    pub fn decide_scaled(
        &mut self,
        now: Tick,
        me: &FormationInput,
        obstacle: Option<&Obstacle>,
        p: &StarlingParams,
        velocity_share: f64,
    ) -> (Vec2, PatternEvent) {
        let candidates: Vec<NeighborGroupView> = self.views.values().cloned().collect();
        let neighbors = observation_neighbors(me.center, me.velocity, &candidates);
        let d = pattern_force(me, &neighbors, obstacle, &self.records, p);
        let mut adopted = None;
        match d.pattern {
            Pattern::LocalFollow => {
                if let Some(c) = d.chain {
                    self.records.insert(c.group, c.seq);
                    self.adoptions.push((now, c));
                    self.follow = Some(c);
                    adopted = Some(c);
                }
            }
            Pattern::Evasion | Pattern::Collective => self.follow = None,
        }
        let pattern_term = match d.pattern {
            Pattern::Evasion => d.force,
            Pattern::LocalFollow | Pattern::Collective => d.force * velocity_share,
        };
        let force = (neighbor_group_force(me, &neighbors, p) + pattern_term).clamp_norm(p.f_clamp);
        let ev = PatternEvent {
            tick: now,
            group: me.group,
            pattern: d.pattern,
            k_star: d.k_star,
            indicator: d.indicator,
            threshold: d.threshold,
            adopted,
        };
        (force, ev)
    }

    /// Sequence number to advertise with `velocity`; bumped when the
    /// heading has turned noticeably since the last bump.
    pub fn advertise(&mut self, velocity: Vec2) -> SeqNum {
        if let Some(h) = heading_of(velocity) {
            let turned = match self.seq_heading {
                None => true,
                Some(old) => old.dot(h).clamp(-1.0, 1.0).acos() > NEW_VELOCITY_TURN,
            };
            if turned {
                if self.seq_heading.is_some() {
                    self.vel_seq = self.vel_seq.next();
                }
                self.seq_heading = Some(h);
            }
        }
        self.vel_seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    const TOL: f64 = 1e-8;

    fn view(head: u16, center: Vec2, velocity: Vec2) -> NeighborGroupView {
        NeighborGroupView {
            head: NodeId(head),
            center,
            radius: 0.0,
            velocity,
            prev_velocity: None,
            vel_seq: SeqNum(0),
            follow: None,
            heard: 0,
        }
    }

    #[test]
    fn group_force_examples() {
        let p = StarlingParams::default();
        let x = |s: f64| group_pair_force(Vec2::new(s, 0.0), 0.0, 0.0, &p);
        assert!(x(200.0).norm() < TOL);
        assert!(x(400.0).norm() < TOL);
        assert!((x(100.0) - Vec2::new(-LN_2, 0.0)).norm() < TOL);
        assert!((x(500.0) - Vec2::new(LN_2, 0.0)).norm() < TOL);
        assert!(x(300.0).norm() < TOL);
        assert!(x(700.0).norm() < TOL);
        assert!((x(599.999).norm() - 5.0).abs() < TOL);
        // radii subtract
        let r = group_pair_force(Vec2::new(300.0, 0.0), 100.0, 100.0, &p);
        assert!((r - Vec2::new(-LN_2, 0.0)).norm() < TOL);
    }

    #[test]
    fn evasion_examples() {
        let p = StarlingParams::default();
        let obs = Obstacle { center: Vec2::new(1000.0, 0.0), radius: 400.0 };
        assert!(evasion_force(Vec2::new(600.0, 0.0), 0.0, &obs, &p).norm() < TOL);
        let f = evasion_force(Vec2::new(700.0, 0.0), 100.0, &obs, &p);
        assert!((f - Vec2::new(-std::f64::consts::LN_2, 0.0)).norm() < TOL);
        assert_eq!(evasion_force(Vec2::ZERO, 0.0, &obs, &p), Vec2::ZERO);
    }

    #[test]
    fn indicator_and_threshold() {
        let d = Vec2::new(500.0, 0.0);
        assert!(velocity_change_indicator(d, Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0)).abs() < TOL);
        assert!((velocity_change_indicator(d, Vec2::new(0.0, 2.0), Vec2::new(3.0, 0.0)) - 0.002).abs() < TOL);
        assert!((velocity_change_indicator(d, Vec2::new(-2.0, 0.0), Vec2::new(3.0, 0.0)) - 0.004).abs() < TOL);
        let v = Vec2::new(5.0, 0.0);
        assert!((follow_threshold(v, &[v; 4], 1.0) - 0.36787944).abs() < TOL);
        assert!((follow_threshold(v, &[-v], 1.0) - 1.0).abs() < TOL);
        assert!((follow_threshold(v, &[], 2.0) - (-2.0f64).exp()).abs() < TOL);
    }

    #[test]
    fn collective_examples() {
        let v = Vec2::new(1.0, 1.0);
        assert_eq!(collective_force(v, &[v, v]), Vec2::ZERO);
        assert!((collective_force(Vec2::ZERO, &[Vec2::new(3.0, 4.0)]) - Vec2::new(0.6, 0.8)).norm() < TOL);
        assert_eq!(collective_force(Vec2::ZERO, &[Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)]), Vec2::ZERO);
    }

    #[test]
    fn sectors() {
        let h = Some(Vec2::new(1.0, 0.0));
        assert_eq!(sector_of(h, Vec2::new(1.0, 0.0)), Some(2));
        assert_eq!(sector_of(h, Vec2::new(-1.0, 0.0)), None);
        assert_eq!(sector_of(h, Vec2::from_angle(22.5f64.to_radians())), Some(3));
        assert_eq!(sector_of(h, Vec2::from_angle(-112.5f64.to_radians())), Some(0));
        assert_eq!(sector_of(None, Vec2::new(-1.0, 0.0)), Some(4));

        let c = [
            view(1, Vec2::new(800.0, 0.0), Vec2::ZERO),
            view(2, Vec2::new(500.0, 0.0), Vec2::ZERO),
            view(3, Vec2::new(-500.0, 0.0), Vec2::ZERO),
        ];
        let got = observation_neighbors(Vec2::ZERO, Vec2::new(10.0, 0.0), &c);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].head, NodeId(2));
    }

    #[test]
    fn loop_admit_examples() {
        let mut r = FollowRecords::new();
        let g7 = |s| FollowChain { group: NodeId(7), seq: SeqNum(s) };
        assert!(loop_admit(&r, g7(12)));
        r.insert(NodeId(7), SeqNum(12));
        assert!(!loop_admit(&r, g7(12)));
        assert!(!loop_admit(&r, g7(11)));
        assert!(loop_admit(&r, g7(13)));
    }

    #[test]
    fn pattern_priority() {
        let p = StarlingParams::default();
        let v = Vec2::new(10.0, 0.0);
        let me = FormationInput { group: NodeId(1), center: Vec2::ZERO, radius: 100.0, velocity: v };
        let mut turner = view(5, Vec2::new(300.0, 0.0), -v);
        turner.prev_velocity = Some(v);
        let steady = {
            let mut s = view(6, Vec2::new(0.0, 600.0), v);
            s.prev_velocity = Some(v);
            s
        };
        let records = FollowRecords::new();

        let obs = Obstacle { center: Vec2::new(0.0, -1000.0), radius: 1000.0 };
        let d = pattern_force(&me, &[turner.clone(), steady.clone()], Some(&obs), &records, &p);
        assert_eq!(d.pattern, Pattern::Evasion);

        let d = pattern_force(&me, std::slice::from_ref(&steady), None, &records, &p);
        assert_eq!(d.pattern, Pattern::Collective);
        assert_eq!(d.force, Vec2::ZERO);

        let d = pattern_force(&me, &[turner, steady], None, &records, &p);
        assert_eq!(d.pattern, Pattern::LocalFollow);
        assert_eq!(d.k_star, Some(NodeId(5)));
        assert!((d.force - Vec2::new(-20.0, 0.0)).norm() < TOL);
    }
}
