//! Two-layer routing: intra-cluster link state from HELLO/TC, a head
//! directory from HTC/C-HELLO, and hop-by-hop forwarding decisions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cluster::{select_mprs, ClusterState, MprCandidate};
use crate::model::{NodeId, Tick};
use crate::wire::{CHelloMsg, HtcMsg, SeqNum, TcMsg};

pub const DEFAULT_TTL: u8 = 16;

fn edge(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntraTopology {
    pub links: BTreeSet<(NodeId, NodeId)>,
    pub freshness: BTreeMap<NodeId, SeqNum>,
}

impl IntraTopology {
    pub fn from_links(links: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut t = Self::default();
        for (a, b) in links {
            t.add_link(a, b);
        }
        t
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId) {
        if a != b {
            self.links.insert(edge(a, b));
        }
    }

    pub fn adjacency(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for &(a, b) in &self.links {
            adj.entry(a).or_default().insert(b);
            adj.entry(b).or_default().insert(a);
        }
        adj
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.links.iter().flat_map(|&(a, b)| [a, b]).collect()
    }
}

/// Breadth-first next hops; among equal-length paths the lowest next hop
/// wins.
pub fn build_intra_routes(topo: &IntraTopology, me: NodeId) -> BTreeMap<NodeId, NodeId> {
    bfs_next_hops(&topo.adjacency(), me)
}

pub fn bfs_next_hops(adj: &BTreeMap<NodeId, BTreeSet<NodeId>>, me: NodeId) -> BTreeMap<NodeId, NodeId> {
    let mut next: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut seen: BTreeSet<NodeId> = BTreeSet::from([me]);
    let mut frontier: Vec<NodeId> = Vec::new();
    if let Some(ns) = adj.get(&me) {
        for &n in ns {
            next.insert(n, n);
            seen.insert(n);
            frontier.push(n);
        }
    }
    while !frontier.is_empty() {
        let mut level: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for &u in &frontier {
            let hop = next[&u];
            for &v in adj.get(&u).into_iter().flatten() {
                if seen.contains(&v) {
                    continue;
                }
                let e = level.entry(v).or_insert(hop);
                *e = (*e).min(hop);
            }
        }
        frontier = level.keys().copied().collect();
        for (v, hop) in level {
            seen.insert(v);
            next.insert(v, hop);
        }
    }
    next
}

/// Hop distances from `me` over `adj`.
pub fn bfs_distances(adj: &BTreeMap<NodeId, BTreeSet<NodeId>>, me: NodeId) -> BTreeMap<NodeId, u32> {
    let mut dist = BTreeMap::from([(me, 0u32)]);
    let mut queue = std::collections::VecDeque::from([me]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for &v in adj.get(&u).into_iter().flatten() {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq)]
struct TcRecord {
    seq: SeqNum,
    heard: Tick,
    advertised: BTreeSet<NodeId>,
}

/// Link-state records received in TC messages, keyed by originator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TcTable {
    records: BTreeMap<NodeId, TcRecord>,
}

impl TcTable {
    /// Stores the TC if it is newer than what we hold; returns whether it
    /// was new.
    pub fn accept(&mut self, msg: &TcMsg, now: Tick) -> bool {
        if let Some(r) = self.records.get(&msg.origin) {
            if !msg.seq.newer_than(r.seq) {
                return false;
            }
        }
        self.records.insert(
            msg.origin,
            TcRecord { seq: msg.seq, heard: now, advertised: msg.advertised.iter().copied().collect() },
        );
        true
    }

    pub fn prune(&mut self, now: Tick, expiry: Tick) {
        self.records.retain(|_, r| now.saturating_sub(r.heard) <= expiry);
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    pub fn origins(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.records.keys().copied()
    }

    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.records.iter().flat_map(|(&o, r)| r.advertised.iter().map(move |&x| (o, x)))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn freshness(&self) -> impl Iterator<Item = (NodeId, SeqNum)> + '_ {
        self.records.iter().map(|(&o, r)| (o, r.seq))
    }
}

/// The cluster-local topology a node currently believes in: its own
/// same-cluster links, those reported in same-cluster neighbours' HELLOs,
/// and the TC records.
pub fn intra_topology(cluster: &ClusterState, tcs: &TcTable) -> IntraTopology {
    let mut t = IntraTopology::default();
    let Some(head) = cluster.head_id else { return t };
    for (&n, info) in &cluster.one_hop {
        if info.head_id != Some(head) {
            continue;
        }
        t.add_link(cluster.id, n);
        for e in &info.neighbors {
            if e.status.same_cluster && e.id != cluster.id {
                t.add_link(n, e.id);
            }
        }
    }
    for (a, b) in tcs.links() {
        t.add_link(a, b);
    }
    t.freshness = tcs.freshness().collect();
    t
}

/// TC advertisement for BINC: same-cluster neighbours that chose this node
/// as an MPR.
pub fn intra_tc_advertised(cluster: &ClusterState) -> Vec<NodeId> {
    let Some(head) = cluster.head_id else { return Vec::new() };
    cluster
        .one_hop
        .iter()
        .filter(|(&n, info)| info.head_id == Some(head) && cluster.is_mpr_of(n))
        .map(|(&n, _)| n)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct HeadNeighbor {
    heard: Tick,
    neighbors: BTreeSet<NodeId>,
    relays: BTreeSet<NodeId>,
}

/// Head-layer state: cluster membership learned from HTC and head-to-head
/// adjacency learned from C-HELLO.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterDirectory {
    pub membership: BTreeMap<NodeId, NodeId>,
    pub head_links: BTreeSet<(NodeId, NodeId)>,
    htc: BTreeMap<NodeId, (SeqNum, Tick, BTreeSet<NodeId>)>,
    heads: BTreeMap<NodeId, HeadNeighbor>,
}

impl InterDirectory {
    /// Records an HTC if new; returns whether it was.
    pub fn accept_htc(&mut self, msg: &HtcMsg, now: Tick) -> bool {
        if let Some((seq, _, _)) = self.htc.get(&msg.origin_head) {
            if !msg.seq.newer_than(*seq) {
                return false;
            }
        }
        let mut members: BTreeSet<NodeId> = msg.members.iter().copied().collect();
        members.insert(msg.origin_head);
        for other in self.htc.values_mut() {
            other.2.retain(|m| !members.contains(m));
        }
        self.htc.insert(msg.origin_head, (msg.seq, now, members));
        self.rebuild_membership();
        true
    }

    /// Installs this head's own membership without a message.
    pub fn set_own(&mut self, head: NodeId, members: impl IntoIterator<Item = NodeId>, now: Tick) {
        let mut set: BTreeSet<NodeId> = members.into_iter().collect();
        set.insert(head);
        for (h, other) in self.htc.iter_mut() {
            if *h != head {
                other.2.retain(|m| !set.contains(m));
            }
        }
        let seq = self.htc.get(&head).map_or(SeqNum(0), |r| r.0);
        self.htc.insert(head, (seq, now, set));
        self.rebuild_membership();
    }

    fn rebuild_membership(&mut self) {
        self.membership.clear();
        for (&h, (_, _, members)) in &self.htc {
            for &m in members {
                self.membership.insert(m, h);
            }
        }
    }

    /// Notes a C-HELLO heard by head `me`.
    pub fn observe_chello(&mut self, me: NodeId, msg: &CHelloMsg, now: Tick) {
        let neighbors: BTreeSet<NodeId> = msg.neighbor_groups.iter().map(|g| g.head).collect();
        let relays = msg.neighbor_groups.iter().take(msg.relay_count as usize).map(|g| g.head).collect();
        self.heads.insert(msg.origin_head, HeadNeighbor { heard: now, neighbors, relays });
        self.rebuild_links(me);
    }

    fn rebuild_links(&mut self, me: NodeId) {
        self.head_links.clear();
        for (&h, info) in &self.heads {
            self.head_links.insert(edge(me, h));
            for &x in &info.neighbors {
                if x != h {
                    self.head_links.insert(edge(h, x));
                }
            }
        }
    }

    pub fn prune(&mut self, me: NodeId, now: Tick, htc_expiry: Tick, chello_expiry: Tick) {
        let before = (self.htc.len(), self.heads.len());
        self.htc.retain(|&h, r| h == me || now.saturating_sub(r.1) <= htc_expiry);
        self.heads.retain(|_, r| now.saturating_sub(r.heard) <= chello_expiry);
        if before != (self.htc.len(), self.heads.len()) {
            self.rebuild_membership();
            self.rebuild_links(me);
        }
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn head_of(&self, node: NodeId) -> Option<NodeId> {
        self.membership.get(&node).copied()
    }

    /// Heads heard directly on the long channel.
    pub fn neighbor_heads(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.heads.keys().copied()
    }

    /// Whether `sender` listed `me` among its head-layer relays.
    pub fn is_relay_of(&self, me: NodeId, sender: NodeId) -> bool {
        self.heads.get(&sender).is_some_and(|h| h.relays.contains(&me))
    }

    /// Head-layer MPRs of `me` over the C-HELLO neighbourhood.
    pub fn select_relays(&self, me: NodeId) -> BTreeSet<NodeId> {
        let one: BTreeSet<NodeId> = self.heads.keys().copied().collect();
        let mut two = BTreeSet::new();
        let candidates: BTreeMap<NodeId, MprCandidate> = self
            .heads
            .iter()
            .map(|(&h, info)| {
                let covers: BTreeSet<NodeId> =
                    info.neighbors.iter().copied().filter(|x| *x != me && !one.contains(x)).collect();
                two.extend(covers.iter().copied());
                let degree = info.neighbors.len().min(u8::MAX as usize) as u8;
                (h, MprCandidate { degree, covers })
            })
            .collect();
        select_mprs(&candidates, &two)
    }

    /// Next head on a shortest head-layer path from `me` to `target`.
    pub fn next_head(&self, me: NodeId, target: NodeId) -> Option<NodeId> {
        if me == target {
            return Some(me);
        }
        let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for &(a, b) in &self.head_links {
            adj.entry(a).or_default().insert(b);
            adj.entry(b).or_default().insert(a);
        }
        bfs_next_hops(&adj, me).get(&target).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub src: NodeId,
    pub dst: NodeId,
    pub ttl: u8,
    pub id: u32,
}

impl Packet {
    pub fn new(src: NodeId, dst: NodeId, id: u32) -> Self {
        Self { src, dst, ttl: DEFAULT_TTL, id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DropReason {
    UnknownDestination,
    Ttl,
    NotClustered,
    NoLink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    DeliverLocal,
    NextHop(NodeId),
    ToHead,
    InterCluster(NodeId),
    Drop(DropReason),
}

/// What a node consults to forward a packet.
#[derive(Debug, Clone, Copy)]
pub struct NodeContext<'a> {
    pub id: NodeId,
    pub head: Option<NodeId>,
    pub intra: &'a BTreeMap<NodeId, NodeId>,
    pub directory: &'a InterDirectory,
}

pub fn forward(packet: &Packet, ctx: &NodeContext<'_>) -> Action {
    if packet.dst == ctx.id {
        return Action::DeliverLocal;
    }
    if packet.ttl == 0 {
        return Action::Drop(DropReason::Ttl);
    }
    let Some(head) = ctx.head else { return Action::Drop(DropReason::NotClustered) };
    if let Some(&nh) = ctx.intra.get(&packet.dst) {
        return Action::NextHop(nh);
    }
    if head != ctx.id {
        return Action::ToHead;
    }
    match ctx.directory.head_of(packet.dst) {
        Some(h) if h != ctx.id => Action::InterCluster(h),
        _ => Action::Drop(DropReason::UnknownDestination),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vec2;
    use crate::wire::GroupEntry;

    fn n(i: u16) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn line_next_hop_and_unreachable() {
        let t = IntraTopology::from_links([(n(1), n(2)), (n(2), n(3)), (n(7), n(8))]);
        let r = build_intra_routes(&t, n(1));
        assert_eq!(r[&n(3)], n(2));
        assert!(!r.contains_key(&n(7)));
    }

    #[test]
    fn equal_cost_picks_lowest_next_hop() {
        let t = IntraTopology::from_links([(n(1), n(5)), (n(1), n(3)), (n(5), n(9)), (n(3), n(9)), (n(9), n(4))]);
        let r = build_intra_routes(&t, n(1));
        assert_eq!(r[&n(9)], n(3));
        assert_eq!(r[&n(4)], n(3));
    }

    #[test]
    fn forward_cases() {
        let mut intra = BTreeMap::new();
        intra.insert(n(14), n(13));
        intra.insert(n(10), n(10));
        let dir = InterDirectory::default();
        let member = NodeContext { id: n(12), head: Some(n(10)), intra: &intra, directory: &dir };
        assert_eq!(forward(&Packet::new(n(1), n(14), 0), &member), Action::NextHop(n(13)));
        assert_eq!(forward(&Packet::new(n(1), n(88), 0), &member), Action::ToHead);
        assert_eq!(forward(&Packet::new(n(1), n(12), 0), &member), Action::DeliverLocal);

        let empty = BTreeMap::new();
        let head = NodeContext { id: n(10), head: Some(n(10)), intra: &empty, directory: &dir };
        assert_eq!(
            forward(&Packet::new(n(1), n(88), 0), &head),
            Action::Drop(DropReason::UnknownDestination)
        );
        let mut p = Packet::new(n(1), n(14), 0);
        p.ttl = 0;
        assert_eq!(forward(&p, &member), Action::Drop(DropReason::Ttl));
    }

    #[test]
    fn directory_from_htc_and_chello() {
        let mut d = InterDirectory::default();
        assert!(d.accept_htc(&HtcMsg { seq: SeqNum(1), origin_head: n(20), members: vec![n(21), n(88)] }, 0));
        assert!(!d.accept_htc(&HtcMsg { seq: SeqNum(1), origin_head: n(20), members: vec![n(21)] }, 1));
        assert_eq!(d.head_of(n(88)), Some(n(20)));
        assert_eq!(d.head_of(n(20)), Some(n(20)));

        // 88 moves to head 30
        d.accept_htc(&HtcMsg { seq: SeqNum(4), origin_head: n(30), members: vec![n(88)] }, 2);
        assert_eq!(d.head_of(n(88)), Some(n(30)));

        let g = |h| GroupEntry { head: n(h), center: Vec2::ZERO, radius: 1.0, velocity: Vec2::ZERO };
        let ch = CHelloMsg {
            seq: SeqNum(1),
            origin_head: n(20),
            center: Vec2::ZERO,
            radius: 1.0,
            velocity: Vec2::ZERO,
            leader_id: n(21),
            vel_seq: SeqNum(0),
            follow: None,
            relay_count: 1,
            neighbor_groups: vec![g(30), g(10)],
        };
        d.observe_chello(n(10), &ch, 2);
        assert_eq!(d.next_head(n(10), n(30)), Some(n(20)));
        assert!(d.is_relay_of(n(30), n(20)));
        assert!(!d.is_relay_of(n(10), n(20)));
        assert_eq!(d.select_relays(n(10)), BTreeSet::from([n(20)]));

        d.prune(n(10), 100, 10, 10);
        assert!(d.head_links.is_empty());
        assert!(d.membership.is_empty());
    }
}
