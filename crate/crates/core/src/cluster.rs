//! Per-node clustering: max-degree head election over the 2-hop
//! neighbourhood, CMN-driven membership, split/overlap/merge maintenance and
//! multipoint-relay selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{NodeId, Tick, Vec2};
use crate::wire::{CmnMsg, FollowChain, HelloMsg, LinkStatus, NeighborEntry, SeqNum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Unclustered,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClusterCause {
    Election,
    CmnJoin,
    Overlap,
    Split,
    Merge,
}

impl ClusterCause {
    pub fn name(self) -> &'static str {
        match self {
            ClusterCause::Election => "election",
            ClusterCause::CmnJoin => "cmn-join",
            ClusterCause::Overlap => "overlap",
            ClusterCause::Split => "split",
            ClusterCause::Merge => "merge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterEvent {
    pub tick: Tick,
    pub node: NodeId,
    pub old_head: Option<NodeId>,
    pub new_head: Option<NodeId>,
    pub cause: ClusterCause,
}

impl ClusterEvent {
    /// A node that had a head lost it or changed it.
    pub fn is_switch(&self) -> bool {
        self.old_head.is_some() && self.old_head != self.new_head
    }
}

/// Timer periods the state machine needs, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterTiming {
    pub hello: Tick,
    pub mwt: Tick,
    /// Neighbour entries not refreshed within this many ticks are dropped.
    pub hold: Tick,
}

impl ClusterTiming {
    /// Two HELLO intervals: how long an election view must stay unchanged.
    pub fn round(&self) -> Tick {
        2 * self.hello
    }
}

/// What a node knows about a one-hop neighbour from its latest HELLO.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborInfo {
    pub degree: u8,
    pub position: Vec2,
    pub velocity: Vec2,
    pub head_id: Option<NodeId>,
    pub hops_to_head: u8,
    pub leader_id: Option<NodeId>,
    pub rank: Option<u8>,
    pub vel_seq: SeqNum,
    pub follow: Option<FollowChain>,
    pub heard: Tick,
    pub neighbors: Vec<NeighborEntry>,
}

impl NeighborInfo {
    pub fn from_hello(h: &HelloMsg, now: Tick) -> Self {
        Self {
            degree: h.degree,
            position: h.position,
            velocity: h.velocity,
            head_id: h.head_id,
            hops_to_head: h.hops_to_head,
            leader_id: h.leader_id,
            rank: h.rank,
            vel_seq: h.vel_seq,
            follow: h.follow,
            heard: now,
            neighbors: h.neighbors.clone(),
        }
    }

    pub fn clustered(&self) -> bool {
        self.head_id.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub id: NodeId,
    pub phase: Phase,
    pub head_id: Option<NodeId>,
    pub hops_to_head: u8,
    pub last_cmn_tick: Option<Tick>,
    pub last_cmn_seq: Option<SeqNum>,
    pub waiting_since: Tick,
    /// Start of the current unbroken run of election wins.
    winning_since: Option<Tick>,
    pub one_hop: BTreeMap<NodeId, NeighborInfo>,
    pub mpr_set: BTreeSet<NodeId>,
}

/// Result of handling a CMN.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CmnOutcome {
    pub event: Option<ClusterEvent>,
    /// The CMN came from this node's head (after any transition).
    pub from_own_head: bool,
    /// Re-broadcast the CMN once to reach the head's 2-hop neighbours.
    pub forward: bool,
}

impl ClusterState {
    pub fn new(id: NodeId, now: Tick) -> Self {
        Self {
            id,
            phase: Phase::Unclustered,
            head_id: None,
            hops_to_head: 0,
            last_cmn_tick: None,
            last_cmn_seq: None,
            waiting_since: now,
            winning_since: None,
            one_hop: BTreeMap::new(),
            mpr_set: BTreeSet::new(),
        }
    }

    pub fn is_head(&self) -> bool {
        self.head_id == Some(self.id)
    }

    pub fn is_member(&self) -> bool {
        self.phase == Phase::Clustered && !self.is_head()
    }

    /// Live one-hop neighbours; in re-election rounds clustered ones are
    /// left out.
    pub fn connectivity_degree(&self, reelection: bool) -> usize {
        if reelection {
            self.one_hop.values().filter(|n| !n.clustered()).count()
        } else {
            self.one_hop.len()
        }
    }

    /// The degree this node puts in its HELLO.
    pub fn advertised_degree(&self) -> u8 {
        let d = self.connectivity_degree(self.phase == Phase::Unclustered);
        d.min(u8::MAX as usize) as u8
    }

    pub fn full_degree(&self) -> u8 {
        self.one_hop.len().min(u8::MAX as usize) as u8
    }

    pub fn on_hello(&mut self, h: &HelloMsg, now: Tick) {
        if h.origin != self.id {
            self.one_hop.insert(h.origin, NeighborInfo::from_hello(h, now));
        }
    }

    pub fn expire(&mut self, now: Tick, hold: Tick) {
        self.one_hop.retain(|_, n| now.saturating_sub(n.heard) <= hold);
    }

    /// Two-hop neighbours (not self, not one-hop) with the one-hop nodes
    /// that reach them.
    pub fn two_hop(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let mut out: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for (&via, info) in &self.one_hop {
            for e in &info.neighbors {
                if e.id != self.id && !self.one_hop.contains_key(&e.id) {
                    out.entry(e.id).or_default().insert(via);
                }
            }
        }
        out
    }

    /// Best-known degree of a node one or two hops away.
    pub fn known_degree(&self, id: NodeId) -> Option<u8> {
        if let Some(n) = self.one_hop.get(&id) {
            return Some(n.degree);
        }
        self.one_hop
            .values()
            .flat_map(|n| n.neighbors.iter())
            .filter(|e| e.id == id)
            .map(|e| e.degree)
            .max()
    }

    /// Unclustered nodes within two hops with their election degrees.
    pub fn election_candidates(&self) -> BTreeMap<NodeId, u8> {
        let mut out = BTreeMap::new();
        for (&id, n) in &self.one_hop {
            if !n.clustered() {
                out.insert(id, n.degree);
            }
        }
        for n in self.one_hop.values() {
            for e in &n.neighbors {
                if e.id == self.id || self.one_hop.contains_key(&e.id) || e.status.clustered {
                    continue;
                }
                let d = out.entry(e.id).or_insert(e.degree);
                *d = (*d).max(e.degree);
            }
        }
        out
    }

    /// Own (degree, −id) beats every unclustered node within two hops.
    pub fn wins_election(&self) -> bool {
        let own = (self.advertised_degree(), std::cmp::Reverse(self.id));
        self.election_candidates()
            .iter()
            .all(|(&id, &deg)| own > (deg, std::cmp::Reverse(id)))
    }

    fn set_head(&mut self, head: Option<NodeId>, hops: u8, now: Tick, cause: ClusterCause) -> ClusterEvent {
        let old = self.head_id;
        self.head_id = head;
        self.hops_to_head = hops;
        match head {
            Some(_) => {
                self.phase = Phase::Clustered;
                self.last_cmn_tick = Some(now);
            }
            None => {
                self.phase = Phase::Unclustered;
                self.waiting_since = now;
                self.winning_since = None;
                self.last_cmn_tick = None;
            }
        }
        self.last_cmn_seq = None;
        ClusterEvent { tick: now, node: self.id, old_head: old, new_head: head, cause }
    }

    pub fn become_head(&mut self, now: Tick) -> ClusterEvent {
        self.set_head(Some(self.id), 0, now, ClusterCause::Election)
    }

    /// Handles a CMN heard `hops` away from its head (1 when received from
    /// the head itself, 2 when relayed).
    pub fn on_cmn(&mut self, msg: &CmnMsg, hops: u8, now: Tick) -> CmnOutcome {
        let head = msg.head_id;
        let mut out = CmnOutcome::default();
        if head == self.id {
            return out;
        }
        match self.phase {
            Phase::Unclustered => {
                out.event = Some(self.set_head(Some(head), hops, now, ClusterCause::CmnJoin));
            }
            Phase::Clustered if self.is_head() => {
                if self.should_yield_to(head) {
                    out.event = Some(self.set_head(Some(head), hops, now, ClusterCause::Merge));
                }
            }
            Phase::Clustered if self.head_id == Some(head) => {}
            Phase::Clustered => {
                if hops < self.hops_to_head {
                    out.event = Some(self.set_head(Some(head), hops, now, ClusterCause::Overlap));
                } else {
                    return out;
                }
            }
        }
        if self.head_id == Some(head) {
            let fresh = self.last_cmn_seq.is_none_or(|s| msg.seq.newer_than(s));
            if fresh {
                self.hops_to_head = hops;
                out.forward = hops == 1;
            } else {
                self.hops_to_head = self.hops_to_head.min(hops);
            }
            self.last_cmn_seq = Some(match self.last_cmn_seq {
                Some(s) if !msg.seq.newer_than(s) => s,
                _ => msg.seq,
            });
            self.last_cmn_tick = Some(now);
            out.from_own_head = true;
        }
        out
    }

    /// Merge rule: the lower-degree head yields; on equal degree the higher
    /// id yields. Unknown degree means no decision yet.
    pub fn should_yield_to(&self, other: NodeId) -> bool {
        match self.known_degree(other) {
            Some(theirs) => yields(self.full_degree(), self.id, theirs, other),
            None => false,
        }
    }

    /// Heads one or two hops away according to the HELLO tables.
    pub fn nearby_heads(&self) -> BTreeMap<NodeId, u8> {
        let mut out = BTreeMap::new();
        for (&id, n) in &self.one_hop {
            if n.head_id == Some(id) {
                out.insert(id, 1);
            }
        }
        for n in self.one_hop.values() {
            for e in &n.neighbors {
                if e.status.head && e.id != self.id && !self.one_hop.contains_key(&e.id) {
                    out.entry(e.id).or_insert(2);
                }
            }
        }
        out
    }

    /// Periodic checks: member timeout, head merging, election.
    pub fn maintenance_tick(&mut self, now: Tick, timing: &ClusterTiming) -> Option<ClusterEvent> {
        match self.phase {
            Phase::Clustered if self.is_head() => {
                let rival = self
                    .nearby_heads()
                    .into_iter()
                    .find(|&(h, _)| self.should_yield_to(h));
                rival.map(|(h, hops)| self.set_head(Some(h), hops, now, ClusterCause::Merge))
            }
            Phase::Clustered => {
                let last = self.last_cmn_tick.unwrap_or(now);
                if now.saturating_sub(last) > timing.mwt {
                    Some(self.set_head(None, 0, now, ClusterCause::Split))
                } else {
                    None
                }
            }
            Phase::Unclustered => {
                self.winning_since = if self.wins_election() { self.winning_since.or(Some(now)) } else { None };
                let round = timing.round();
                let settled = self.winning_since.is_some_and(|t| now.saturating_sub(t) >= round)
                    && now.saturating_sub(self.waiting_since) >= round;
                let gave_up = now.saturating_sub(self.waiting_since) >= 3 * round;
                if settled || gave_up {
                    Some(self.become_head(now))
                } else {
                    None
                }
            }
        }
    }

    /// One-hop table rendered as HELLO neighbour entries.
    pub fn neighbor_entries(&self) -> Vec<NeighborEntry> {
        self.one_hop
            .iter()
            .map(|(&id, n)| NeighborEntry {
                id,
                degree: n.degree,
                status: LinkStatus {
                    clustered: n.clustered(),
                    head: n.head_id == Some(id),
                    same_cluster: self.head_id.is_some() && n.head_id == self.head_id,
                    mpr: self.mpr_set.contains(&id),
                    hops: n.hops_to_head.min(3),
                },
                position: n.position,
            })
            .collect()
    }

    /// Recomputes the MPR set from the current tables.
    pub fn refresh_mprs(&mut self) {
        let candidates: BTreeMap<NodeId, MprCandidate> = self
            .one_hop
            .iter()
            .map(|(&id, n)| {
                let covers = n
                    .neighbors
                    .iter()
                    .map(|e| e.id)
                    .filter(|x| *x != self.id && !self.one_hop.contains_key(x))
                    .collect();
                (id, MprCandidate { degree: n.degree, covers })
            })
            .collect();
        let two_hop: BTreeSet<NodeId> = self.two_hop().into_keys().collect();
        self.mpr_set = select_mprs(&candidates, &two_hop);
    }

    /// Whether `sender` listed this node as one of its MPRs.
    pub fn is_mpr_of(&self, sender: NodeId) -> bool {
        self.one_hop
            .get(&sender)
            .is_some_and(|n| n.neighbors.iter().any(|e| e.id == self.id && e.status.mpr))
    }
}

/// Merge comparison between heads `a` and `b`: true when `a` yields.
pub fn yields(deg_a: u8, a: NodeId, deg_b: u8, b: NodeId) -> bool {
    deg_a < deg_b || (deg_a == deg_b && a > b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MprCandidate {
    pub degree: u8,
    /// Two-hop nodes reachable through this neighbour.
    pub covers: BTreeSet<NodeId>,
}

/// Greedy cover: repeatedly take the neighbour covering the most uncovered
/// two-hop nodes (ties: higher degree, then lower id).
pub fn select_mprs(one_hop: &BTreeMap<NodeId, MprCandidate>, two_hop: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let mut uncovered: BTreeSet<NodeId> = two_hop.clone();
    let mut chosen = BTreeSet::new();
    while !uncovered.is_empty() {
        let best = one_hop
            .iter()
            .filter(|(id, _)| !chosen.contains(*id))
            .map(|(&id, c)| (c.covers.intersection(&uncovered).count(), c.degree, std::cmp::Reverse(id)))
            .filter(|&(gain, _, _)| gain > 0)
            .max();
        let Some((_, _, std::cmp::Reverse(id))) = best else { break };
        for x in &one_hop[&id].covers {
            uncovered.remove(x);
        }
        chosen.insert(id);
    }
    chosen
}

/// Idealised synchronous election on a static graph: each round every
/// unclustered node that is maximal by (unclustered degree, −id) within two
/// hops becomes head; its unclustered 1-hop neighbours join, then their
/// unclustered neighbours join at 2 hops. Returns the heads of each round
/// and the final head of every node.
pub fn election_rounds(adj: &BTreeMap<NodeId, BTreeSet<NodeId>>) -> (Vec<Vec<NodeId>>, BTreeMap<NodeId, NodeId>) {
    let mut head_of: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut rounds = Vec::new();
    let empty = BTreeSet::new();
    let nbrs = |n: &NodeId| adj.get(n).unwrap_or(&empty);
    while head_of.len() < adj.len() {
        let free: BTreeSet<NodeId> = adj.keys().filter(|n| !head_of.contains_key(n)).copied().collect();
        let degree = |n: &NodeId| nbrs(n).iter().filter(|m| free.contains(m)).count();
        let mut winners = Vec::new();
        for n in &free {
            let mut zone: BTreeSet<NodeId> = BTreeSet::new();
            for m in nbrs(n) {
                zone.insert(*m);
                zone.extend(nbrs(m).iter().copied());
            }
            zone.remove(n);
            let own = (degree(n), std::cmp::Reverse(*n));
            if zone.iter().filter(|m| free.contains(m)).all(|m| own > (degree(m), std::cmp::Reverse(*m))) {
                winners.push(*n);
            }
        }
        let mut claim: BTreeMap<NodeId, (u8, NodeId)> = BTreeMap::new();
        for &h in &winners {
            claim.insert(h, (0, h));
        }
        for &h in &winners {
            for m in nbrs(&h) {
                if free.contains(m) && !winners.contains(m) {
                    let c = claim.entry(*m).or_insert((1, h));
                    *c = (*c).min((1, h));
                }
            }
        }
        let first: Vec<(NodeId, NodeId)> =
            claim.iter().filter(|(_, (hops, _))| *hops == 1).map(|(&n, &(_, h))| (n, h)).collect();
        for (m, h) in first {
            for x in nbrs(&m) {
                if free.contains(x) && !claim.contains_key(x) {
                    claim.insert(*x, (2, h));
                } else if let Some(c) = claim.get_mut(x) {
                    if c.0 == 2 && h < c.1 {
                        c.1 = h;
                    }
                }
            }
        }
        if winners.is_empty() {
            break;
        }
        for (n, (_, h)) in claim {
            head_of.insert(n, h);
        }
        rounds.push(winners);
    }
    (rounds, head_of)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u16]) -> BTreeSet<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn graph(edges: &[(u16, u16)], n: u16) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let mut g: BTreeMap<NodeId, BTreeSet<NodeId>> = (1..=n).map(|i| (NodeId(i), BTreeSet::new())).collect();
        for &(a, b) in edges {
            g.get_mut(&NodeId(a)).unwrap().insert(NodeId(b));
            g.get_mut(&NodeId(b)).unwrap().insert(NodeId(a));
        }
        g
    }

    #[test]
    fn line_of_five_rounds() {
        let g = graph(&[(1, 2), (2, 3), (3, 4), (4, 5)], 5);
        let (rounds, head_of) = election_rounds(&g);
        assert_eq!(rounds, vec![vec![NodeId(2)], vec![NodeId(5)]]);
        for i in 1..=4 {
            assert_eq!(head_of[&NodeId(i)], NodeId(2));
        }
        assert_eq!(head_of[&NodeId(5)], NodeId(5));
    }

    #[test]
    fn star_and_isolated() {
        let star = graph(&[(1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (1, 7)], 7);
        let (rounds, head_of) = election_rounds(&star);
        assert_eq!(rounds, vec![vec![NodeId(1)]]);
        assert!(head_of.values().all(|&h| h == NodeId(1)));

        let pair = graph(&[], 2);
        let (rounds, _) = election_rounds(&pair);
        assert_eq!(rounds, vec![vec![NodeId(1), NodeId(2)]]);
    }

    fn info(head: Option<u16>, degree: u8) -> NeighborInfo {
        NeighborInfo {
            degree,
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
            head_id: head.map(NodeId),
            hops_to_head: 1,
            leader_id: None,
            rank: None,
            vel_seq: SeqNum(0),
            follow: None,
            heard: 0,
            neighbors: vec![],
        }
    }

    #[test]
    fn degree_excludes_clustered_in_reelection() {
        let mut s = ClusterState::new(NodeId(1), 0);
        s.one_hop.insert(NodeId(2), info(Some(9), 1));
        s.one_hop.insert(NodeId(3), info(Some(9), 1));
        s.one_hop.insert(NodeId(4), info(None, 1));
        assert_eq!(s.connectivity_degree(false), 3);
        assert_eq!(s.connectivity_degree(true), 1);
        assert_eq!(ClusterState::new(NodeId(5), 0).connectivity_degree(false), 0);
    }

    fn cmn(head: u16, seq: u16) -> CmnMsg {
        CmnMsg { seq: SeqNum(seq), head_id: NodeId(head), group_force: Vec2::ZERO, members: vec![] }
    }

    #[test]
    fn cmn_join_and_overlap() {
        let mut s = ClusterState::new(NodeId(1), 0);
        let o = s.on_cmn(&cmn(7, 1), 2, 10);
        assert_eq!(s.head_id, Some(NodeId(7)));
        assert_eq!(s.phase, Phase::Clustered);
        assert_eq!(o.event.unwrap().cause, ClusterCause::CmnJoin);
        assert!(!o.forward);

        // same hop count: stay put
        let o = s.on_cmn(&cmn(9, 1), 2, 11);
        assert!(o.event.is_none());
        assert_eq!(s.head_id, Some(NodeId(7)));

        // shorter: switch
        let o = s.on_cmn(&cmn(9, 2), 1, 12);
        assert_eq!(s.head_id, Some(NodeId(9)));
        let e = o.event.unwrap();
        assert_eq!(e.cause, ClusterCause::Overlap);
        assert!(e.is_switch());
        assert!(o.forward);
    }

    #[test]
    fn member_splits_after_waiting_time() {
        let timing = ClusterTiming { hello: 4, mwt: 20, hold: 12 };
        let mut s = ClusterState::new(NodeId(1), 0);
        s.on_cmn(&cmn(7, 1), 1, 0);
        assert!(s.maintenance_tick(20, &timing).is_none());
        let e = s.maintenance_tick(21, &timing).unwrap();
        assert_eq!(e.cause, ClusterCause::Split);
        assert_eq!(s.phase, Phase::Unclustered);
    }

    #[test]
    fn merge_tie_break() {
        assert!(yields(4, NodeId(1), 9, NodeId(2)));
        assert!(!yields(9, NodeId(2), 4, NodeId(1)));
        assert!(yields(6, NodeId(11), 6, NodeId(3)));
        assert!(!yields(6, NodeId(3), 6, NodeId(11)));
    }

    #[test]
    fn mpr_cases() {
        let none: BTreeMap<NodeId, MprCandidate> = BTreeMap::new();
        assert!(select_mprs(&none, &BTreeSet::new()).is_empty());

        let mut one_hop = BTreeMap::new();
        one_hop.insert(NodeId(2), MprCandidate { degree: 3, covers: ids(&[10, 11, 12]) });
        one_hop.insert(NodeId(3), MprCandidate { degree: 5, covers: ids(&[10]) });
        assert_eq!(select_mprs(&one_hop, &ids(&[10, 11, 12])), ids(&[2]));
    }
}
