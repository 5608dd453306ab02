//! Run measurements: overhead per layer and purpose, cluster dynamics,
//! formation spacing, velocity spread and obstacle clearance.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterEvent;
use crate::model::{Obstacle, Tick, Vec2};
use crate::radio::{ChannelKind, LedgerEntry};

/// Population variance of vx and vy, averaged.
pub fn velocity_variance(velocities: &[Vec2]) -> f64 {
    if velocities.is_empty() {
        return 0.0;
    }
    let n = velocities.len() as f64;
    let mean = velocities.iter().fold(Vec2::ZERO, |a, &v| a + v) / n;
    let (sx, sy) = velocities.iter().fold((0.0, 0.0), |(sx, sy), &v| {
        let d = v - mean;
        (sx + d.x * d.x, sy + d.y * d.y)
    });
    (sx / n + sy / n) / 2.0
}

/// Mean surface gap over ordered pairs `(m, k)` of formations given as
/// (center, radius).
pub fn mean_radial_difference(formations: &[(Vec2, f64)], pairs: &[(usize, usize)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let sum: f64 = pairs
        .iter()
        .map(|&(m, k)| {
            let (pm, rm) = formations[m];
            let (pk, rk) = formations[k];
            pm.distance(pk) - rm - rk
        })
        .sum();
    Some(sum / pairs.len() as f64)
}

pub fn cluster_switches(events: &[ClusterEvent]) -> usize {
    events.iter().filter(|e| e.is_switch()).count()
}

pub fn min_obstacle_distance(positions: &[Vec2], obstacle: &Obstacle) -> Option<f64> {
    positions.iter().map(|p| p.distance(obstacle.center)).min_by(f64::total_cmp)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerBytes {
    pub l1_routing: u64,
    pub l1_control: u64,
    pub l2_routing: u64,
    pub l2_control: u64,
}

impl LayerBytes {
    /// Sums entries, charging `header_bytes` extra routing bytes per
    /// transmission.
    pub fn of(entries: &[LedgerEntry], header_bytes: u32) -> Self {
        let mut b = Self::default();
        for e in entries {
            b.add(e, header_bytes);
        }
        b
    }

    pub fn add(&mut self, e: &LedgerEntry, header_bytes: u32) {
        let routing = (e.routing_bytes() + header_bytes) as u64;
        let control = e.control_bytes as u64;
        match e.channel {
            ChannelKind::Short => {
                self.l1_routing += routing;
                self.l1_control += control;
            }
            ChannelKind::Long => {
                self.l2_routing += routing;
                self.l2_control += control;
            }
        }
    }

    fn sub(&mut self, o: &Self) {
        self.l1_routing -= o.l1_routing;
        self.l1_control -= o.l1_control;
        self.l2_routing -= o.l2_routing;
        self.l2_control -= o.l2_control;
    }

    fn plus(&mut self, o: &Self) {
        self.l1_routing += o.l1_routing;
        self.l1_control += o.l1_control;
        self.l2_routing += o.l2_routing;
        self.l2_control += o.l2_control;
    }

    pub fn total(&self) -> u64 {
        self.l1_routing + self.l1_control + self.l2_routing + self.l2_control
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerBps {
    pub layer1_routing: f64,
    pub layer1_control: f64,
    pub layer2_routing: f64,
    pub layer2_control: f64,
}

impl LayerBps {
    pub fn from_bytes(b: &LayerBytes, seconds: f64) -> Self {
        if seconds <= 0.0 {
            return Self::default();
        }
        let f = |x: u64| x as f64 * 8.0 / seconds;
        Self {
            layer1_routing: f(b.l1_routing),
            layer1_control: f(b.l1_control),
            layer2_routing: f(b.l2_routing),
            layer2_control: f(b.l2_control),
        }
    }

    pub fn layer1(&self) -> f64 {
        self.layer1_routing + self.layer1_control
    }

    pub fn layer2(&self) -> f64 {
        self.layer2_routing + self.layer2_control
    }

    pub fn total(&self) -> f64 {
        self.layer1() + self.layer2()
    }
}

/// Bits per second over a window of `window` seconds.
pub fn bps_by_layer(entries: &[LedgerEntry], window: f64, header_bytes: u32) -> LayerBps {
    LayerBps::from_bytes(&LayerBytes::of(entries, header_bytes), window)
}

/// Sliding sum over the last `len` ticks of per-tick byte totals.
#[derive(Debug, Clone)]
pub struct OverheadWindow {
    len: usize,
    dt: f64,
    ticks: VecDeque<LayerBytes>,
    sum: LayerBytes,
}

impl OverheadWindow {
    pub fn new(window_seconds: f64, dt: f64) -> Self {
        let len = ((window_seconds / dt).round() as usize).max(1);
        Self { len, dt, ticks: VecDeque::with_capacity(len + 1), sum: LayerBytes::default() }
    }

    pub fn push(&mut self, tick_bytes: LayerBytes) {
        self.ticks.push_back(tick_bytes);
        self.sum.plus(&tick_bytes);
        if self.ticks.len() > self.len {
            let old = self.ticks.pop_front().unwrap_or_default();
            self.sum.sub(&old);
        }
    }

    /// Rate over the ticks seen so far, at most the window length.
    pub fn bps(&self) -> LayerBps {
        LayerBps::from_bytes(&self.sum, self.ticks.len() as f64 * self.dt)
    }
}

/// One sampled row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub tick: Tick,
    pub time_s: f64,
    pub cluster_count: usize,
    pub cluster_switches_cum: usize,
    pub layer1_routing_bps: f64,
    pub layer1_control_bps: f64,
    pub layer1_bps: f64,
    pub layer2_routing_bps: f64,
    pub layer2_control_bps: f64,
    pub layer2_bps: f64,
    pub velocity_variance: f64,
    pub mean_radial_difference: Option<f64>,
    pub min_obstacle_center_distance: Option<f64>,
}

pub const METRICS_COLUMNS: [&str; 13] = [
    "tick",
    "time_s",
    "cluster_count",
    "cluster_switches_cum",
    "layer1_routing_bps",
    "layer1_control_bps",
    "layer1_bps",
    "layer2_routing_bps",
    "layer2_control_bps",
    "layer2_bps",
    "velocity_variance",
    "mean_radial_difference",
    "min_obstacle_center_distance",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsFrame {
    pub fn csv_header() -> String {
        METRICS_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.tick,
            self.time_s,
            self.cluster_count,
            self.cluster_switches_cum,
            self.layer1_routing_bps,
            self.layer1_control_bps,
            self.layer1_bps,
            self.layer2_routing_bps,
            self.layer2_control_bps,
            self.layer2_bps,
            self.velocity_variance,
            opt(self.mean_radial_difference),
            opt(self.min_obstacle_center_distance),
        );
        s
    }
}

pub fn metrics_csv(frames: &[MetricsFrame]) -> String {
    let mut out = MetricsFrame::csv_header();
    out.push('\n');
    for f in frames {
        out.push_str(&f.csv_row());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterCause;
    use crate::model::NodeId;
    use crate::wire::MessageKind;

    #[test]
    fn variance_examples() {
        assert_eq!(velocity_variance(&[Vec2::new(3.0, 1.0); 4]), 0.0);
        assert!((velocity_variance(&[Vec2::ZERO, Vec2::new(2.0, 0.0)]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn radial_examples() {
        let f = [(Vec2::ZERO, 100.0), (Vec2::new(1000.0, 0.0), 150.0)];
        assert_eq!(mean_radial_difference(&f, &[(0, 1), (1, 0)]), Some(750.0));
        assert_eq!(mean_radial_difference(&f[..1], &[]), None);
    }

    fn ev(old: Option<u16>, new: Option<u16>) -> ClusterEvent {
        ClusterEvent {
            tick: 0,
            node: NodeId(1),
            old_head: old.map(NodeId),
            new_head: new.map(NodeId),
            cause: ClusterCause::Overlap,
        }
    }

    #[test]
    fn switch_counting() {
        assert_eq!(cluster_switches(&[ev(Some(2), Some(3))]), 1);
        let mut script = Vec::new();
        for _ in 0..5 {
            script.push(ev(Some(2), None));
        }
        for _ in 0..5 {
            script.push(ev(None, Some(3)));
        }
        assert_eq!(cluster_switches(&script), 5);
    }

    fn hello(tick: Tick, bytes: u32) -> LedgerEntry {
        LedgerEntry { tick, sender: NodeId(1), channel: ChannelKind::Short, kind: MessageKind::Hello, bytes, control_bytes: 25 }
    }

    #[test]
    fn bps_examples() {
        assert_eq!(bps_by_layer(&[], 10.0, 0), LayerBps::default());
        let one = bps_by_layer(&[hello(0, 88)], 2.0, 0);
        assert!((one.layer1() - 352.0).abs() < 1e-12);
        assert_eq!(one.layer2(), 0.0);

        let mut w = OverheadWindow::new(2.0, 0.5);
        for t in 0..40 {
            let entries = if t % 4 == 0 { vec![hello(t, 88)] } else { vec![] };
            w.push(LayerBytes::of(&entries, 0));
        }
        assert!((w.bps().layer1() - 352.0).abs() < 1e-12);
    }

    #[test]
    fn csv_shape() {
        let f = MetricsFrame {
            tick: 3,
            time_s: 1.5,
            cluster_count: 2,
            cluster_switches_cum: 0,
            layer1_routing_bps: 1.0,
            layer1_control_bps: 2.0,
            layer1_bps: 3.0,
            layer2_routing_bps: 0.0,
            layer2_control_bps: 0.0,
            layer2_bps: 0.0,
            velocity_variance: 0.25,
            mean_radial_difference: None,
            min_obstacle_center_distance: Some(12.5),
        };
        let csv = metrics_csv(&[f]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), 13);
        assert_eq!(lines[1], "3,1.5,2,0,1,2,3,0,0,0,0.25,,12.5");
    }
}
