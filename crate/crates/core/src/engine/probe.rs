//! Unicast probe packets hopping one link per tick over the routing state
//! the nodes currently hold, with links checked against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::flat_routes;
use crate::model::{NodeId, Tick};
use crate::radio::{ChannelKind, Radio};
use crate::route::{build_intra_routes, forward, intra_topology, Action, DropReason, NodeContext, Packet};

use super::node::UavState;
use super::scenario::{RouterKind, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub period_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: BTreeMap<String, u64>,
    pub hops_total: u64,
    pub max_hops: u32,
    pub in_flight: u64,
}

impl ProbeStats {
    pub fn delivery_ratio(&self) -> Option<f64> {
        let done = self.sent - self.in_flight;
        (done > 0).then(|| self.delivered as f64 / done as f64)
    }

    pub fn mean_hops(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.hops_total as f64 / self.delivered as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct InFlight {
    packet: Packet,
    at: NodeId,
    hops: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Probes {
    /// (spec, period in ticks)
    specs: Vec<(ProbeSpec, Tick)>,
    flying: Vec<InFlight>,
    next_id: u32,
    pub stats: ProbeStats,
}

fn drop_name(r: DropReason) -> &'static str {
    match r {
        DropReason::UnknownDestination => "unknown_destination",
        DropReason::Ttl => "ttl",
        DropReason::NotClustered => "not_clustered",
        DropReason::NoLink => "no_link",
    }
}

fn routes(node: &UavState, router: RouterKind) -> BTreeMap<NodeId, NodeId> {
    match router {
        RouterKind::Binc => build_intra_routes(&intra_topology(&node.cluster, &node.tcs), node.id),
        RouterKind::Flat => flat_routes(&node.cluster, &node.tcs),
    }
}

impl Probes {
    pub fn new(specs: &[ProbeSpec], dt: f64) -> Self {
        let specs = specs.iter().map(|s| (*s, ((s.period_s / dt).round() as Tick).max(1))).collect();
        Self { specs, ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    fn drop(&mut self, reason: DropReason) {
        *self.stats.dropped.entry(drop_name(reason).to_string()).or_default() += 1;
    }

    /// Injects due probes, then moves every packet one hop.
    pub fn advance(&mut self, tick: Tick, nodes: &[UavState], radio: &Radio, scenario: &Scenario) {
        if self.specs.is_empty() {
            return;
        }
        for (spec, period) in &self.specs {
            if tick.is_multiple_of(*period) && spec.src.index() < nodes.len() && spec.dst.index() < nodes.len() {
                self.flying.push(InFlight { packet: Packet::new(spec.src, spec.dst, self.next_id), at: spec.src, hops: 0 });
                self.next_id = self.next_id.wrapping_add(1);
                self.stats.sent += 1;
            }
        }
        let flying = std::mem::take(&mut self.flying);
        for mut f in flying {
            let node = &nodes[f.at.index()];
            let intra = routes(node, scenario.router);
            let ctx = NodeContext { id: node.id, head: node.cluster.head_id, intra: &intra, directory: &node.directory };
            let (next, channel) = match forward(&f.packet, &ctx) {
                Action::DeliverLocal => {
                    self.stats.delivered += 1;
                    self.stats.hops_total += f.hops as u64;
                    self.stats.max_hops = self.stats.max_hops.max(f.hops);
                    continue;
                }
                Action::Drop(r) => {
                    self.drop(r);
                    continue;
                }
                Action::NextHop(n) => (Some(n), ChannelKind::Short),
                Action::ToHead => (node.cluster.head_id.and_then(|h| intra.get(&h).copied()), ChannelKind::Short),
                Action::InterCluster(h) => (node.directory.next_head(node.id, h), ChannelKind::Long),
            };
            let Some(next) = next.filter(|n| n.index() < nodes.len()) else {
                self.drop(DropReason::NoLink);
                continue;
            };
            let peer = &nodes[next.index()];
            let long_ok = channel == ChannelKind::Short || (node.is_head() && peer.is_head());
            if !long_ok || node.pos.distance(peer.pos) > radio.range(channel) {
                self.drop(DropReason::NoLink);
                continue;
            }
            f.packet.ttl -= 1;
            f.hops += 1;
            f.at = next;
            self.flying.push(f);
        }
        self.stats.in_flight = self.flying.len() as u64;
    }
}
