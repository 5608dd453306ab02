//! Whole-run driver: stepping, metric sampling, snapshots and the summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterEvent;
use crate::metrics::{LayerBytes, MetricsFrame};
use crate::model::{NodeId, Tick, ValidatedParams};
use crate::starling::PatternEvent;

use super::probe::{ProbeSpec, ProbeStats, Probes};
use super::scenario::Scenario;
use super::{EngineError, World};

#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct RunOptions {
    /// Worker threads; 0 or 1 runs serially.
    pub threads: usize,
    /// Metric sample interval, seconds. `None` samples every tick.
    pub sample_every: Option<f64>,
    /// Snapshot interval, seconds. `None` disables snapshots.
    pub snapshot_every: Option<f64>,
    pub header_bytes: u32,
    pub probes: Vec<ProbeSpec>,
}


#[derive(Debug, Error)]
#[error("sink failure: {0}")]
pub struct SinkError(pub String);

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sink(#[from] SinkError),
    #[error("duration {duration} s is not a whole number of {dt} s ticks")]
    Duration { duration: f64, dt: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnap {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub head: Option<NodeId>,
    pub level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSnap {
    pub head: NodeId,
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub pattern: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: Tick,
    pub nodes: Vec<NodeSnap>,
    pub groups: Vec<GroupSnap>,
}

impl Snapshot {
    pub fn of(world: &World) -> Self {
        let nodes = world
            .nodes
            .iter()
            .map(|n| NodeSnap {
                id: n.id,
                x: n.pos.x,
                y: n.pos.y,
                vx: n.vel.x,
                vy: n.vel.y,
                head: n.cluster.head_id,
                level: n.rank,
            })
            .collect();
        let groups = world
            .formations
            .values()
            .map(|f| GroupSnap {
                head: f.head,
                cx: f.center.x,
                cy: f.center.y,
                radius: f.radius,
                pattern: f.pattern.map(|p| p.name().to_string()),
            })
            .collect();
        Self { tick: world.tick.saturating_sub(1), nodes, groups }
    }
}

pub trait RunSink {
    fn metrics(&mut self, frame: &MetricsFrame) -> Result<(), SinkError>;
    fn snapshot(&mut self, snap: &Snapshot) -> Result<(), SinkError>;
}

/// Keeps everything in memory.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    pub frames: Vec<MetricsFrame>,
    pub snapshots: Vec<Snapshot>,
}

impl RunSink for MemorySink {
    fn metrics(&mut self, frame: &MetricsFrame) -> Result<(), SinkError> {
        self.frames.push(frame.clone());
        Ok(())
    }

    fn snapshot(&mut self, snap: &Snapshot) -> Result<(), SinkError> {
        self.snapshots.push(snap.clone());
        Ok(())
    }
}

/// Deterministic run totals written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub n_uavs: usize,
    pub seed: u64,
    pub ticks: Tick,
    pub duration_s: f64,
    pub final_metrics: Option<MetricsFrame>,
    pub cluster_events: usize,
    pub cluster_switches: usize,
    pub pattern_events: usize,
    pub heads: usize,
    pub all_clustered: bool,
    pub bytes: LayerBytes,
    /// Kind name → (bytes, transmissions).
    pub bytes_by_kind: BTreeMap<String, (u64, u64)>,
    pub min_obstacle_center_distance: Option<f64>,
    pub probes: Option<ProbeStats>,
}

#[derive(Debug)]
pub struct RunReport {
    pub summary: RunSummary,
    pub cluster_events: Vec<ClusterEvent>,
    pub pattern_events: Vec<PatternEvent>,
    pub wall_time_s: f64,
    pub world: World,
}

fn every(seconds: f64, dt: f64) -> Tick {
    ((seconds / dt).round() as Tick).max(1)
}

pub fn run(
    params: ValidatedParams,
    scenario: Scenario,
    duration: f64,
    seed: u64,
    opts: &RunOptions,
    sink: &mut dyn RunSink,
) -> Result<RunReport, RunError> {
    let dt = params.dt;
    let steps = duration / dt;
    if !(steps >= 0.0) || (steps - steps.round()).abs() > 1e-9 {
        return Err(RunError::Duration { duration, dt });
    }
    let steps = steps.round() as Tick;
    let started = Instant::now();
    let mut world = World::new(params, scenario, seed)?;
    world.set_threads(opts.threads)?;
    world.header_bytes = opts.header_bytes;
    world.probes = Probes::new(&opts.probes, dt);
    let sample = opts.sample_every.map_or(1, |s| every(s, dt));
    let snap = opts.snapshot_every.map(|s| every(s, dt));

    let mut last = None;
    for k in 1..=steps {
        world.step()?;
        if k % sample == 0 || k == steps {
            let f = world.frame();
            sink.metrics(&f)?;
            last = Some(f);
        }
        if let Some(s) = snap {
            if k % s == 0 {
                sink.snapshot(&Snapshot::of(&world))?;
            }
        }
    }

    let summary = RunSummary {
        scenario: world.scenario.kind.name().to_string(),
        n_uavs: world.nodes.len(),
        seed,
        ticks: steps,
        duration_s: steps as f64 * dt,
        final_metrics: last,
        cluster_events: world.cluster_events.len(),
        cluster_switches: world.cluster_switches(),
        pattern_events: world.pattern_events.len(),
        heads: world.head_count(),
        all_clustered: world.all_clustered(),
        bytes: world.totals,
        bytes_by_kind: world.kind_totals.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        min_obstacle_center_distance: world.min_obstacle_distance(),
        probes: (!world.probes.is_empty()).then(|| world.probes.stats.clone()),
    };
    Ok(RunReport {
        summary,
        cluster_events: std::mem::take(&mut world.cluster_events),
        pattern_events: std::mem::take(&mut world.pattern_events),
        wall_time_s: started.elapsed().as_secs_f64(),
        world,
    })
}

pub const EVENT_COLUMNS: [&str; 12] = [
    "kind",
    "tick",
    "node",
    "old_head",
    "new_head",
    "cause",
    "group",
    "pattern",
    "k_star",
    "indicator",
    "threshold",
    "adopted",
];

fn id(v: Option<NodeId>) -> String {
    v.map(|n| n.to_string()).unwrap_or_default()
}

/// Cluster and pattern events merged in tick order.
pub fn events_csv(cluster: &[ClusterEvent], patterns: &[PatternEvent]) -> String {
    let mut rows: Vec<(Tick, u8, String)> = Vec::with_capacity(cluster.len() + patterns.len());
    for e in cluster {
        let row = format!(
            "cluster,{},{},{},{},{},,,,,,",
            e.tick,
            e.node,
            id(e.old_head),
            id(e.new_head),
            e.cause.name()
        );
        rows.push((e.tick, 0, row));
    }
    for e in patterns {
        let adopted = e.adopted.map(|c| format!("{}:{}", c.group, c.seq.0)).unwrap_or_default();
        let row = format!(
            "pattern,{},,,,,{},{},{},{},{},{}",
            e.tick,
            e.group,
            e.pattern.name(),
            id(e.k_star),
            e.indicator,
            e.threshold,
            adopted
        );
        rows.push((e.tick, 1, row));
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = EVENT_COLUMNS.join(",");
    out.push('\n');
    for (_, _, r) in rows {
        let _ = writeln!(out, "{r}");
    }
    out
}
