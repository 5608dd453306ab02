use std::collections::{BTreeMap, BTreeSet};

use crate::baselines::{boids_force, flat_tc_advertised, BoidsParams};
use crate::cluster::{ClusterEvent, ClusterState, ClusterTiming};
use crate::model::{formation_center, formation_radius, NodeId, Tick, ValidatedParams, Vec2};
use crate::pigeon::{
    assign_social_levels, following_force, interactive_neighbors, is_superior, member_total_force,
    neighbor_force, select_leader, PigeonParams,
};
use crate::radio::{ChannelKind, Delivery, Transmission};
use crate::route::{intra_topology, intra_tc_advertised, InterDirectory, TcTable};
use crate::starling::{evasion_force, FormationController, FormationInput, Pattern, PatternEvent, StarlingParams};
use crate::wire::{
    CHelloMsg, CmnMsg, FollowChain, GroupEntry, HelloMsg, HtcMsg, MemberRank, Message, SeqNum, TcMsg,
};

use super::scenario::{Controller, RouterKind, Scenario};

/// Most entries a one-byte count field can carry.
const MAX_LIST: usize = u8::MAX as usize;

/// Read-only inputs shared by every node during one phase.
#[derive(Debug, Clone)]
pub struct Ctx<'a> {
    pub params: &'a ValidatedParams,
    pub scenario: &'a Scenario,
    pub pigeon: PigeonParams,
    pub starling: StarlingParams,
    pub boids: BoidsParams,
    pub timing: ClusterTiming,
    pub tick: Tick,
}

/// Unit pull toward the destination scaled by `w_goal`; nothing inside the
/// arrival deadband.
pub fn goal_force(pos: Vec2, destination: Vec2, w_goal: f64, deadband: f64) -> Vec2 {
    let d = destination - pos;
    if d.norm() <= deadband {
        Vec2::ZERO
    } else {
        d.unit_or_zero() * w_goal
    }
}

/// What a head last computed for its formation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadState {
    pub leader: NodeId,
    pub pattern: Option<Pattern>,
    pub center: Vec2,
    pub radius: f64,
    pub levels: BTreeMap<NodeId, u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Seqs {
    hello: SeqNum,
    tc: SeqNum,
    cmn: SeqNum,
    chello: SeqNum,
    htc: SeqNum,
}

fn bump(s: &mut SeqNum) -> SeqNum {
    *s = s.next();
    *s
}

#[derive(Debug, Default)]
pub struct NodeOutput {
    pub tx: Vec<Transmission>,
    pub events: Vec<ClusterEvent>,
    pub patterns: Vec<PatternEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavState {
    pub id: NodeId,
    pub pos: Vec2,
    pub vel: Vec2,
    pub cluster: ClusterState,
    pub tcs: TcTable,
    pub directory: InterDirectory,
    pub formation: FormationController,
    pub rank: Option<u8>,
    pub leader_id: Option<NodeId>,
    pub group_force: Option<(Vec2, Tick)>,
    pub follow: Option<FollowChain>,
    pub head_state: Option<HeadState>,
    /// Timer phase offset in ticks.
    pub phase: Tick,
    seq: Seqs,
    cmn_due: bool,
}

impl UavState {
    pub fn new(id: NodeId, pos: Vec2, vel: Vec2, phase: Tick) -> Self {
        Self {
            id,
            pos,
            vel,
            cluster: ClusterState::new(id, 0),
            tcs: TcTable::default(),
            directory: InterDirectory::default(),
            formation: FormationController::default(),
            rank: None,
            leader_id: None,
            group_force: None,
            follow: None,
            head_state: None,
            phase,
            seq: Seqs::default(),
            cmn_due: false,
        }
    }

    pub fn is_head(&self) -> bool {
        self.cluster.is_head()
    }

    pub fn is_leader(&self) -> bool {
        self.cluster.head_id.is_some() && self.leader_id == Some(self.id)
    }

    fn due(&self, tick: Tick, period: Tick) -> bool {
        (tick + self.phase).is_multiple_of(period.max(1))
    }

    fn extrapolate(&self, pos: Vec2, vel: Vec2, heard: Tick, ctx: &Ctx<'_>) -> Vec2 {
        pos + vel * (ctx.tick.saturating_sub(heard) as f64 * ctx.params.dt)
    }

    /// Members this head can place: itself, one-hop members, and the
    /// same-cluster entries of one-hop members' neighbour lists.
    fn member_positions(&self, ctx: &Ctx<'_>) -> BTreeMap<NodeId, Vec2> {
        let me = self.id;
        let mut out = BTreeMap::from([(me, self.pos)]);
        for (&id, n) in &self.cluster.one_hop {
            if n.head_id == Some(me) {
                out.insert(id, self.extrapolate(n.position, n.velocity, n.heard, ctx));
            }
        }
        for n in self.cluster.one_hop.values().filter(|n| n.head_id == Some(me)) {
            for e in &n.neighbors {
                if e.status.same_cluster && !out.contains_key(&e.id) {
                    out.insert(e.id, e.position);
                }
            }
        }
        out
    }

    fn formation_velocity(&self, leader: NodeId) -> Vec2 {
        if leader == self.id {
            return self.vel;
        }
        self.cluster.one_hop.get(&leader).map_or(self.vel, |n| n.velocity)
    }

    fn geometry(&self, ctx: &Ctx<'_>) -> (BTreeMap<NodeId, Vec2>, Vec2, f64) {
        let members = self.member_positions(ctx);
        let pts: Vec<Vec2> = members.values().copied().collect();
        let center = formation_center(&pts).unwrap_or(self.pos);
        let radius = formation_radius(center, &pts).unwrap_or(0.0);
        (members, center, radius)
    }

    fn build_cmn(&mut self, ctx: &Ctx<'_>, out: &mut NodeOutput) -> CmnMsg {
        let (members, center, radius) = self.geometry(ctx);
        let goal = (ctx.scenario.destination - center).try_unit().unwrap_or(Vec2::new(1.0, 0.0));
        let listed: Vec<(NodeId, Vec2)> = members.iter().map(|(&i, &p)| (i, p)).collect();
        let leader = select_leader(&listed, goal).unwrap_or(self.id);
        let adj = intra_topology(&self.cluster, &self.tcs).adjacency();
        let ids: BTreeSet<NodeId> = members.keys().copied().collect();
        let levels = assign_social_levels(&adj, &ids, leader, ctx.pigeon.s_max);

        let v_m = self.formation_velocity(leader);
        let mut pattern = None;
        let force = if ctx.scenario.controller == Controller::Binc && !ctx.scenario.frozen {
            let input = FormationInput { group: self.id, center, radius, velocity: v_m };
            let obstacle = ctx.scenario.avoidance_obstacle();
            // velocity terms spread so one CMN period adds one update
            let share = 1.0 / ctx.params.cmn_ticks.max(1) as f64;
            let (f, ev) = self.formation.decide_scaled(ctx.tick, &input, obstacle.as_ref(), &ctx.starling, share);
            pattern = Some(ev.pattern);
            out.patterns.push(ev);
            f
        } else {
            Vec2::ZERO
        };

        let mut ranks: Vec<MemberRank> = levels.iter().map(|(&id, &rank)| MemberRank { id, rank }).collect();
        if ranks.len() > MAX_LIST {
            ranks.sort_by_key(|m| (m.rank, m.id));
            ranks.truncate(MAX_LIST);
            ranks.sort_by_key(|m| m.id);
        }
        self.rank = Some(levels.get(&self.id).copied().unwrap_or(0));
        self.leader_id = Some(leader);
        if leader == self.id {
            self.group_force = Some((force, ctx.tick));
        }
        self.head_state = Some(HeadState { leader, pattern, center, radius, levels });
        CmnMsg { seq: bump(&mut self.seq.cmn), head_id: self.id, group_force: force, members: ranks }
    }

    fn build_chello(&mut self, ctx: &Ctx<'_>) -> CHelloMsg {
        let (_, center, radius) = self.geometry(ctx);
        let leader = self.head_state.as_ref().map_or(self.id, |h| h.leader);
        let velocity = self.formation_velocity(leader);
        let vel_seq = self.formation.advertise(velocity);
        let relays: Vec<NodeId> = self
            .directory
            .select_relays(self.id)
            .into_iter()
            .filter(|h| self.formation.views.contains_key(h))
            .collect();
        let mut groups: Vec<GroupEntry> = Vec::new();
        let entry = |h: &NodeId| {
            let v = &self.formation.views[h];
            GroupEntry { head: v.head, center: v.center, radius: v.radius, velocity: v.velocity }
        };
        groups.extend(relays.iter().map(entry));
        groups.extend(self.formation.views.keys().filter(|h| !relays.contains(h)).map(entry));
        groups.truncate(MAX_LIST);
        CHelloMsg {
            seq: bump(&mut self.seq.chello),
            origin_head: self.id,
            center,
            radius,
            velocity,
            leader_id: leader,
            vel_seq,
            follow: self.formation.follow,
            relay_count: relays.len().min(MAX_LIST) as u8,
            neighbor_groups: groups,
        }
    }

    fn build_hello(&mut self) -> HelloMsg {
        self.cluster.refresh_mprs();
        let mut neighbors = self.cluster.neighbor_entries();
        neighbors.truncate(MAX_LIST);
        let (vel_seq, follow) = if self.is_head() {
            (self.formation.vel_seq, self.formation.follow)
        } else {
            (SeqNum(0), self.follow)
        };
        HelloMsg {
            seq: bump(&mut self.seq.hello),
            origin: self.id,
            degree: self.cluster.advertised_degree(),
            position: self.pos,
            velocity: self.vel,
            head_id: self.cluster.head_id,
            leader_id: self.leader_id,
            vel_seq,
            follow,
            rank: self.rank,
            hops_to_head: self.cluster.hops_to_head.min(3),
            neighbors,
        }
    }

    fn send(&self, out: &mut NodeOutput, channel: ChannelKind, message: Message) {
        out.tx.push(Transmission { sender: self.id, channel, message, sender_is_head: self.is_head() });
    }

    /// Phase 1: periodic message generation.
    pub fn fire_timers(&mut self, ctx: &Ctx<'_>) -> NodeOutput {
        let p = ctx.params;
        let t = ctx.tick;
        let mut out = NodeOutput::default();
        if self.due(t, p.hello_ticks) {
            let h = self.build_hello();
            self.send(&mut out, ChannelKind::Short, Message::Hello(h));
        }
        if self.due(t, p.tc_ticks) {
            let advertised = match ctx.scenario.router {
                RouterKind::Binc => intra_tc_advertised(&self.cluster),
                RouterKind::Flat => flat_tc_advertised(&self.cluster),
            };
            if !advertised.is_empty() {
                let mut advertised = advertised;
                advertised.truncate(MAX_LIST);
                let tc = TcMsg { seq: bump(&mut self.seq.tc), origin: self.id, advertised };
                self.send(&mut out, ChannelKind::Short, Message::Tc(tc));
            }
        }
        if self.is_head() {
            if self.cmn_due || self.due(t, p.cmn_ticks) {
                self.cmn_due = false;
                let cmn = self.build_cmn(ctx, &mut out);
                self.send(&mut out, ChannelKind::Short, Message::Cmn(cmn));
            }
            if self.due(t, p.chello_ticks) {
                let ch = self.build_chello(ctx);
                self.send(&mut out, ChannelKind::Long, Message::CHello(ch));
            }
            if ctx.scenario.router == RouterKind::Binc && self.due(t, p.htc_ticks) {
                let members: Vec<NodeId> =
                    self.member_positions(ctx).into_keys().filter(|&m| m != self.id).take(MAX_LIST).collect();
                self.directory.set_own(self.id, members.iter().copied(), t);
                if !members.is_empty() {
                    let htc = HtcMsg { seq: bump(&mut self.seq.htc), origin_head: self.id, members };
                    self.send(&mut out, ChannelKind::Long, Message::Htc(htc));
                }
            }
        }
        out
    }

    fn same_cluster(&self, other: NodeId) -> bool {
        let Some(h) = self.cluster.head_id else { return false };
        other == h || self.cluster.one_hop.get(&other).is_some_and(|n| n.head_id == Some(h))
    }

    fn on_tc(&mut self, sender: NodeId, tc: &TcMsg, ctx: &Ctx<'_>, out: &mut NodeOutput) {
        if tc.origin == self.id {
            return;
        }
        if ctx.scenario.router == RouterKind::Binc && !self.same_cluster(sender) {
            return;
        }
        if self.tcs.accept(tc, ctx.tick) && self.cluster.is_mpr_of(sender) {
            self.send(out, ChannelKind::Short, Message::Tc(tc.clone()));
        }
    }

    fn adopt_cmn(&mut self, cmn: &CmnMsg, ctx: &Ctx<'_>) {
        if let Some(m) = cmn.members.iter().find(|m| m.id == self.id) {
            self.rank = Some(m.rank);
        }
        self.leader_id = cmn.members.iter().find(|m| m.rank == 0).map(|m| m.id);
        if self.leader_id == Some(self.id) {
            self.group_force = Some((cmn.group_force, ctx.tick));
        }
    }

    /// Phase 3: consume this tick's deliveries, then run maintenance.
    pub fn handle(&mut self, inbox: &[Delivery], ctx: &Ctx<'_>) -> NodeOutput {
        let now = ctx.tick;
        let mut out = NodeOutput::default();
        let was_head = self.is_head();
        let old_head = self.cluster.head_id;
        let mut cmns: BTreeMap<NodeId, (u8, CmnMsg)> = BTreeMap::new();

        for d in inbox {
            match d.message.as_ref() {
                Message::Hello(h) => {
                    self.cluster.on_hello(h, now);
                    if !self.is_head() && h.follow.is_some() && self.same_cluster(h.origin) {
                        let superior = Some(h.origin) == self.cluster.head_id
                            || matches!((h.rank, self.rank), (Some(a), Some(b)) if a < b);
                        if superior {
                            self.follow = h.follow;
                        }
                    }
                }
                Message::Tc(tc) => self.on_tc(d.sender, tc, ctx, &mut out),
                Message::CHello(ch) => {
                    if self.is_head() && ch.origin_head != self.id {
                        self.formation.observe(ch, now);
                        self.directory.observe_chello(self.id, ch, now);
                    }
                }
                Message::Htc(htc) => {
                    if self.is_head()
                        && htc.origin_head != self.id
                        && self.directory.accept_htc(htc, now)
                        && self.directory.is_relay_of(self.id, d.sender)
                    {
                        self.send(&mut out, ChannelKind::Long, Message::Htc(htc.clone()));
                    }
                }
                Message::Cmn(c) => {
                    let hops = if d.sender == c.head_id { 1 } else { 2 };
                    let e = cmns.entry(c.head_id).or_insert((hops, c.clone()));
                    if hops < e.0 {
                        *e = (hops, c.clone());
                    }
                }
            }
        }

        let mut order: Vec<(u8, NodeId)> = cmns.iter().map(|(&h, (hops, _))| (*hops, h)).collect();
        order.sort();
        for (hops, h) in order {
            let cmn = &cmns[&h].1;
            let o = self.cluster.on_cmn(cmn, hops, now);
            out.events.extend(o.event);
            if o.forward {
                self.send(&mut out, ChannelKind::Short, Message::Cmn(cmn.clone()));
            }
            if o.from_own_head {
                self.adopt_cmn(cmn, ctx);
            }
        }

        let p = ctx.params;
        self.cluster.expire(now, ctx.timing.hold);
        self.tcs.prune(now, 3 * p.tc_ticks);
        if self.is_head() {
            self.directory.prune(self.id, now, 3 * p.htc_ticks, 3 * p.chello_ticks);
            self.formation.prune(now, 3 * p.chello_ticks);
        }
        out.events.extend(self.cluster.maintenance_tick(now, &ctx.timing));

        if self.cluster.head_id != old_head {
            self.rank = None;
            self.leader_id = None;
            self.group_force = None;
            self.follow = None;
            if ctx.scenario.router == RouterKind::Binc {
                self.tcs.clear();
            }
        }
        if self.is_head() != was_head {
            self.directory.clear();
            self.formation = FormationController::default();
            self.head_state = None;
            self.cmn_due = self.is_head();
        }
        out
    }

    /// Same-group one-hop neighbours as (id, position, velocity, rank).
    fn group_neighbors(&self, ctx: &Ctx<'_>) -> Vec<(NodeId, Vec2, Vec2, Option<u8>)> {
        let Some(h) = self.cluster.head_id else { return Vec::new() };
        self.cluster
            .one_hop
            .iter()
            .filter(|(_, n)| n.head_id == Some(h))
            .map(|(&id, n)| (id, self.extrapolate(n.position, n.velocity, n.heard, ctx), n.velocity, n.rank))
            .collect()
    }

    /// Force for a node with nobody to follow: it flies as a provisional
    /// singleton formation.
    fn singleton_force(&self, ctx: &Ctx<'_>) -> Vec2 {
        let p = ctx.params;
        let sc = ctx.scenario;
        let visible: Vec<(NodeId, Vec2)> = self
            .cluster
            .one_hop
            .iter()
            .map(|(&id, n)| (id, self.extrapolate(n.position, n.velocity, n.heard, ctx)))
            .collect();
        let ids = interactive_neighbors(self.pos, self.vel, &visible, &ctx.pigeon);
        let interactive: Vec<(NodeId, Vec2)> = visible.into_iter().filter(|(id, _)| ids.contains(id)).collect();
        let mut f = neighbor_force(self.id, self.pos, &interactive, &ctx.pigeon)
            + goal_force(self.pos, sc.destination, p.w_goal, p.goal_deadband);
        if let Some(obs) = sc.avoidance_obstacle() {
            f += evasion_force(self.pos, 0.0, &obs, &ctx.starling);
        }
        f.clamp_norm(p.f_clamp)
    }

    /// Phase 4: this node's steering force.
    pub fn control_force(&self, ctx: &Ctx<'_>) -> Vec2 {
        let p = ctx.params;
        let sc = ctx.scenario;
        if sc.frozen {
            return Vec2::ZERO;
        }
        match sc.controller {
            Controller::Boids => {
                let nbrs: Vec<(Vec2, Vec2)> = self
                    .cluster
                    .one_hop
                    .values()
                    .map(|n| (self.extrapolate(n.position, n.velocity, n.heard, ctx), n.velocity))
                    .collect();
                let mut f = boids_force(self.pos, self.vel, &nbrs, &ctx.boids)
                    + goal_force(self.pos, sc.destination, p.w_goal, p.goal_deadband);
                if let Some(obs) = sc.avoidance_obstacle() {
                    f += evasion_force(self.pos, 0.0, &obs, &ctx.starling);
                }
                f.clamp_norm(p.f_clamp)
            }
            Controller::Binc => {
                if self.cluster.head_id.is_none() {
                    return self.singleton_force(ctx);
                }
                if self.is_leader() {
                    let gf = match self.group_force {
                        Some((f, at)) if ctx.tick.saturating_sub(at) < 2 * p.cmn_ticks => f,
                        _ => Vec2::ZERO,
                    };
                    return (gf + goal_force(self.pos, sc.destination, p.w_goal, p.goal_deadband)).clamp_norm(p.f_clamp);
                }
                let level = self.rank.unwrap_or(ctx.pigeon.s_max);
                let nbrs = self.group_neighbors(ctx);
                let visible: Vec<(NodeId, Vec2)> = nbrs.iter().map(|&(id, q, _, _)| (id, q)).collect();
                let ids = interactive_neighbors(self.pos, self.vel, &visible, &ctx.pigeon);
                let interactive: Vec<(NodeId, Vec2)> = visible.into_iter().filter(|(id, _)| ids.contains(id)).collect();
                let fn_ = neighbor_force(self.id, self.pos, &interactive, &ctx.pigeon);
                let superiors: Vec<(Vec2, Vec2)> = nbrs
                    .iter()
                    .filter(|(_, _, _, r)| r.is_some_and(|r| is_superior(level, r)))
                    .map(|&(_, q, w, _)| (q, w))
                    .collect();
                if superiors.is_empty() {
                    return self.singleton_force(ctx);
                }
                member_total_force(fn_, following_force(self.pos, self.vel, &superiors), p.f_clamp)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_examples() {
        assert_eq!(goal_force(Vec2::ZERO, Vec2::new(1000.0, 0.0), 1.0, 100.0), Vec2::new(1.0, 0.0));
        assert_eq!(goal_force(Vec2::new(950.0, 0.0), Vec2::new(1000.0, 0.0), 1.0, 100.0), Vec2::ZERO);
        let g = goal_force(Vec2::ZERO, Vec2::new(500.0, 500.0), 1.0, 100.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g - Vec2::new(h, h)).norm() < 1e-12);
    }
}
