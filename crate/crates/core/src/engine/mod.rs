//! The fixed-tick world: initial placement, the six-phase step, ground-truth
//! formation bookkeeping and per-tick metrics.

mod node;
mod probe;
mod run;
mod scenario;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BoidsParams;
use crate::cluster::{ClusterEvent, ClusterTiming};
use crate::metrics::{mean_radial_difference, velocity_variance, LayerBytes, MetricsFrame, OverheadWindow};
use crate::model::{formation_center, formation_radius, GroupId, NodeId, Tick, ValidatedParams, Vec2};
use crate::pigeon::PigeonParams;
use crate::radio::{Delivery, LedgerEntry, Radio, RadioError, Transmission};
use crate::starling::{observation_neighbors, NeighborGroupView, Pattern, PatternEvent, StarlingParams};
use crate::wire::{Message, SeqNum};

pub use node::{goal_force, Ctx, HeadState, NodeOutput, UavState};
pub use probe::{ProbeSpec, ProbeStats, Probes};
pub use run::{
    events_csv, run, GroupSnap, MemorySink, NodeSnap, RunError, RunOptions, RunReport, RunSink, RunSummary, SinkError,
    Snapshot, EVENT_COLUMNS,
};
pub use scenario::{
    spawn_side, Controller, RouterKind, Scenario, ScenarioKind, DEFAULT_AVOIDANCE_FACTOR, OBSTACLE_CENTER,
    OBSTACLE_DESTINATION, OBSTACLE_RADIUS, SPAWN_MEAN_DEGREE,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("a swarm needs at least one node")]
    NoNodes,
    #[error("{what} has {got} entries, expected {expected}")]
    PlacementMismatch { what: &'static str, got: usize, expected: usize },
    #[error("too many nodes for 16-bit ids: {0}")]
    TooManyNodes(usize),
    #[error("obstacle scenario without an obstacle")]
    MissingObstacle,
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Ground-truth view of one formation after a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationView {
    pub head: NodeId,
    pub leader: NodeId,
    pub members: Vec<NodeId>,
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
    pub pattern: Option<Pattern>,
}

#[derive(Debug)]
pub struct World {
    pub tick: Tick,
    pub params: ValidatedParams,
    pub scenario: Scenario,
    pub seed: u64,
    pub nodes: Vec<UavState>,
    pub formations: BTreeMap<GroupId, FormationView>,
    pub cluster_events: Vec<ClusterEvent>,
    pub pattern_events: Vec<PatternEvent>,
    /// Ledger rows charged during the most recent tick.
    pub last_ledger: Vec<LedgerEntry>,
    /// Bytes charged since the start of the run.
    pub totals: LayerBytes,
    /// Bytes and transmissions per message kind since the start.
    pub kind_totals: BTreeMap<&'static str, (u64, u64)>,
    pub header_bytes: u32,
    pub probes: Probes,
    radio: Radio,
    pending: Vec<Transmission>,
    overhead: OverheadWindow,
    switches: usize,
    min_obstacle: Option<f64>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

/// Sliding window for the bandwidth columns, seconds.
pub const OVERHEAD_WINDOW_S: f64 = 10.0;

fn make_ctx<'a>(p: &'a ValidatedParams, scenario: &'a Scenario, tick: Tick) -> Ctx<'a> {
    Ctx {
        params: p,
        scenario,
        pigeon: PigeonParams::from_sim(p),
        starling: StarlingParams {
            normalize_indicator: !scenario.raw_indicator,
            verbatim_logs: scenario.verbatim_logs,
            ..StarlingParams::from_sim(p)
        },
        boids: BoidsParams::from_sim(p),
        timing: ClusterTiming { hello: p.hello_ticks, mwt: p.mwt_ticks, hold: 3 * p.hello_ticks },
        tick,
    }
}

/// Applies `f` to every node in index order, on the pool when present.
fn map_mut<T, R, F>(pool: &Option<Arc<rayon::ThreadPool>>, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync,
{
    match pool {
        Some(p) => p.install(|| items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()),
        None => items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

fn message_seq(m: &Message) -> SeqNum {
    match m {
        Message::Hello(h) => h.seq,
        Message::CHello(c) => c.seq,
        Message::Cmn(c) => c.seq,
        Message::Tc(t) => t.seq,
        Message::Htc(h) => h.seq,
    }
}

impl World {
    /// Seeded initial state: uniform positions in the spawn square, zero or
    /// randomly headed velocities, everyone unclustered.
    pub fn new(params: ValidatedParams, scenario: Scenario, seed: u64) -> Result<Self, EngineError> {
        let n = params.n_uavs;
        if n == 0 {
            return Err(EngineError::NoNodes);
        }
        if n >= u16::MAX as usize {
            return Err(EngineError::TooManyNodes(n));
        }
        if scenario.kind == ScenarioKind::ObstacleAvoidance && scenario.obstacle.is_none() {
            return Err(EngineError::MissingObstacle);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = scenario.spawn_side / 2.0;
        let random: Vec<Vec2> =
            (0..n).map(|_| Vec2::new(rng.gen_range(-half..=half), rng.gen_range(-half..=half))).collect();
        let headings: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        let phases: Vec<Tick> = (0..n).map(|_| rng.gen_range(0..10_000)).collect();

        let positions = match &scenario.placement {
            Some(p) if p.len() != n => {
                return Err(EngineError::PlacementMismatch { what: "placement", got: p.len(), expected: n })
            }
            Some(p) => p.clone(),
            None => random,
        };
        let velocities = match &scenario.initial_velocities {
            Some(v) if v.len() != n => {
                return Err(EngineError::PlacementMismatch { what: "initial velocities", got: v.len(), expected: n })
            }
            Some(v) => v.clone(),
            None => headings.iter().map(|&a| Vec2::from_angle(a) * scenario.initial_speed).collect(),
        };
        let nodes = (0..n)
            .map(|i| UavState::new(NodeId::from_index(i), positions[i], velocities[i], phases[i]))
            .collect();
        let radio = Radio::new(params.d_tr, params.d_tr_long, scenario.fading, seed ^ 0x5eed_0f_5ad10);
        let overhead = OverheadWindow::new(OVERHEAD_WINDOW_S, params.dt);
        let mut w = Self {
            tick: 0,
            params,
            scenario,
            seed,
            nodes,
            formations: BTreeMap::new(),
            cluster_events: Vec::new(),
            pattern_events: Vec::new(),
            last_ledger: Vec::new(),
            totals: LayerBytes::default(),
            kind_totals: BTreeMap::new(),
            header_bytes: 0,
            probes: Probes::default(),
            radio,
            pending: Vec::new(),
            overhead,
            switches: 0,
            min_obstacle: None,
            pool: None,
        };
        w.update_obstacle_distance();
        Ok(w)
    }

    /// Runs per-node phases on `threads` workers; 0 or 1 means serial.
    pub fn set_threads(&mut self, threads: usize) -> Result<(), EngineError> {
        self.pool = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| EngineError::Threads(e.to_string()))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        Ok(())
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.nodes.iter().map(|n| n.pos).collect()
    }

    pub fn velocities(&self) -> Vec<Vec2> {
        self.nodes.iter().map(|n| n.vel).collect()
    }

    pub fn cluster_switches(&self) -> usize {
        self.switches
    }

    pub fn min_obstacle_distance(&self) -> Option<f64> {
        self.min_obstacle
    }

    pub fn all_clustered(&self) -> bool {
        self.nodes.iter().all(|n| n.cluster.head_id.is_some())
    }

    pub fn head_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_head()).count()
    }

    /// Advances one tick through the six phases.
    pub fn step(&mut self) -> Result<(), EngineError> {
        let pool = self.pool.clone();

        // (1) timers
        let outputs = {
            let ctx = make_ctx(&self.params, &self.scenario, self.tick);
            map_mut(&pool, &mut self.nodes, |_, n| n.fire_timers(&ctx))
        };
        let mut outbox: Vec<Transmission> = Vec::new();
        for o in outputs {
            outbox.extend(o.tx);
            self.pattern_events.extend(o.patterns);
        }

        // (2) delivery of last tick's transmissions
        let positions = self.positions();
        let is_head: Vec<bool> = self.nodes.iter().map(|n| n.is_head()).collect();
        let pending = std::mem::take(&mut self.pending);
        let (deliveries, ledger) = self.radio.deliver(self.tick, &pending, &positions, &is_head)?;
        let mut tick_bytes = LayerBytes::default();
        for e in &ledger {
            tick_bytes.add(e, self.header_bytes);
            self.totals.add(e, self.header_bytes);
            let k = self.kind_totals.entry(e.kind.name()).or_default();
            k.0 += (e.bytes + self.header_bytes) as u64;
            k.1 += 1;
        }
        self.overhead.push(tick_bytes);
        self.last_ledger = ledger;
        let mut inboxes: Vec<Vec<Delivery>> = vec![Vec::new(); self.nodes.len()];
        for d in deliveries {
            inboxes[d.receiver.index()].push(d);
        }
        for inbox in &mut inboxes {
            inbox.sort_by_key(|d| (d.sender, message_seq(&d.message)));
        }

        // (3) handlers
        let outputs = {
            let ctx = make_ctx(&self.params, &self.scenario, self.tick);
            map_mut(&pool, &mut self.nodes, |i, n| n.handle(&inboxes[i], &ctx))
        };
        for o in outputs {
            outbox.extend(o.tx);
            self.switches += o.events.iter().filter(|e| e.is_switch()).count();
            self.cluster_events.extend(o.events);
        }
        self.pending = outbox;

        // (4) forces
        let forces = {
            let ctx = make_ctx(&self.params, &self.scenario, self.tick);
            map_mut(&pool, &mut self.nodes, |_, n| n.control_force(&ctx))
        };

        // (5) integrate
        let dt = self.params.dt;
        let v_max = self.params.v_max;
        for (n, f) in self.nodes.iter_mut().zip(forces) {
            n.vel = (n.vel + f * dt).clamp_norm(v_max);
            n.pos += n.vel * dt;
            debug_assert!(n.pos.is_finite(), "node {} left the plane", n.id);
        }

        // (6) bookkeeping
        self.probes.advance(self.tick, &self.nodes, &self.radio, &self.scenario);
        self.rebuild_formations();
        self.update_obstacle_distance();
        self.tick += 1;
        Ok(())
    }

    fn update_obstacle_distance(&mut self) {
        if let Some(obs) = self.scenario.obstacle {
            let d = crate::metrics::min_obstacle_distance(&self.positions(), &obs);
            self.min_obstacle = match (self.min_obstacle, d) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        }
    }

    fn rebuild_formations(&mut self) {
        let mut groups: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for n in &self.nodes {
            if let Some(h) = n.cluster.head_id {
                if self.nodes[h.index()].is_head() {
                    groups.entry(h).or_default().push(n.id);
                }
            }
        }
        self.formations = groups
            .into_iter()
            .map(|(h, members)| {
                let head = &self.nodes[h.index()];
                let leader = head
                    .head_state
                    .as_ref()
                    .map(|s| s.leader)
                    .filter(|l| members.contains(l))
                    .unwrap_or(h);
                let pts: Vec<Vec2> = members.iter().map(|m| self.nodes[m.index()].pos).collect();
                let center = formation_center(&pts).unwrap_or(head.pos);
                let radius = formation_radius(center, &pts).unwrap_or(0.0);
                let view = FormationView {
                    head: h,
                    leader,
                    members,
                    center,
                    radius,
                    velocity: self.nodes[leader.index()].vel,
                    pattern: head.head_state.as_ref().and_then(|s| s.pattern),
                };
                (h, view)
            })
            .collect();
    }

    /// Ordered observation pairs between formations whose heads share a
    /// long-channel link.
    pub fn observation_pairs(&self) -> (Vec<(Vec2, f64)>, Vec<(usize, usize)>) {
        let views: Vec<&FormationView> = self.formations.values().collect();
        let geo: Vec<(Vec2, f64)> = views.iter().map(|v| (v.center, v.radius)).collect();
        let index: BTreeMap<NodeId, usize> = views.iter().enumerate().map(|(i, v)| (v.head, i)).collect();
        let range = self.params.d_tr_long;
        let mut pairs = Vec::new();
        for (m, vm) in views.iter().enumerate() {
            let hp = self.nodes[vm.head.index()].pos;
            let candidates: Vec<NeighborGroupView> = views
                .iter()
                .filter(|vk| vk.head != vm.head && self.nodes[vk.head.index()].pos.distance(hp) <= range)
                .map(|vk| NeighborGroupView {
                    head: vk.head,
                    center: vk.center,
                    radius: vk.radius,
                    velocity: vk.velocity,
                    prev_velocity: None,
                    vel_seq: SeqNum(0),
                    follow: None,
                    heard: self.tick,
                })
                .collect();
            for k in observation_neighbors(vm.center, vm.velocity, &candidates) {
                pairs.push((m, index[&k.head]));
            }
        }
        (geo, pairs)
    }

    /// Metrics for the state after the last completed tick.
    pub fn frame(&self) -> MetricsFrame {
        let bps = self.overhead.bps();
        let (geo, pairs) = self.observation_pairs();
        let tick = self.tick.saturating_sub(1);
        MetricsFrame {
            tick,
            time_s: tick as f64 * self.params.dt,
            cluster_count: self.formations.len(),
            cluster_switches_cum: self.switches,
            layer1_routing_bps: bps.layer1_routing,
            layer1_control_bps: bps.layer1_control,
            layer1_bps: bps.layer1(),
            layer2_routing_bps: bps.layer2_routing,
            layer2_control_bps: bps.layer2_control,
            layer2_bps: bps.layer2(),
            velocity_variance: velocity_variance(&self.velocities()),
            mean_radial_difference: mean_radial_difference(&geo, &pairs),
            min_obstacle_center_distance: self.min_obstacle,
        }
    }
}
