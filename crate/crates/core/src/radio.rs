//! Dual-channel link model and broadcast delivery.
//!
//! Received power follows the Friis free-space law. In the default
//! deterministic mode the link predicate is an inclusive disk of the
//! configured range; the radio constants are back-derived so that the Friis
//! range equals it. Every transmission is charged once to the byte ledger,
//! whatever the number of receivers.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, Tick, Vec2};
use crate::wire::{self, Message, MessageKind, WireError};

/// Transmit power used by [`calibrate`], W.
const CAL_TX_POWER: f64 = 0.1;
/// 2.4 GHz carrier.
const CAL_WAVELENGTH: f64 = 0.125;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("received power is undefined at zero distance")]
    ZeroDistance,
    #[error("node {0} transmitted on the long channel without being a cluster head")]
    LongChannelByNonHead(NodeId),
    #[error("channel parameter {0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("encoding a transmission from node {sender}: {source}")]
    Encode { sender: NodeId, source: WireError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub enum FadingMode {
    /// `|h0|² ≡ 1`.
    #[default]
    Deterministic,
    /// Unit-mean Gamma power fading with the given shape.
    Gamma { shape: f64 },
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub tx_power: f64,
    pub gain_tx: f64,
    pub gain_rx: f64,
    pub wavelength: f64,
    pub sensitivity: f64,
    pub fading: FadingMode,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), RadioError> {
        let checks = [
            (self.tx_power, "tx_power"),
            (self.gain_tx, "gain_tx"),
            (self.gain_rx, "gain_rx"),
            (self.wavelength, "wavelength"),
            (self.sensitivity, "sensitivity"),
        ];
        for (v, name) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RadioError::NonPositive(name));
            }
        }
        if let FadingMode::Gamma { shape } = self.fading {
            if !(shape > 0.0 && shape.is_finite()) {
                return Err(RadioError::NonPositive("fading shape"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    Short,
    Long,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Short => "short",
            ChannelKind::Long => "long",
        }
    }
}

/// `P0·G_tx·G_rx·(λ/(4πd))²·fade`.
pub fn friis_rx_power(ch: &ChannelParams, d: f64, fade: f64) -> Result<f64, RadioError> {
    if d <= 0.0 {
        return Err(RadioError::ZeroDistance);
    }
    let path = ch.wavelength / (4.0 * PI * d);
    Ok(ch.tx_power * ch.gain_tx * ch.gain_rx * path * path * fade)
}

/// Distance at which the unfaded received power equals the sensitivity.
pub fn max_range(ch: &ChannelParams) -> f64 {
    ch.wavelength / (4.0 * PI) * (ch.tx_power * ch.gain_tx * ch.gain_rx / ch.sensitivity).sqrt()
}

/// Radio constants whose deterministic range is `range`.
pub fn calibrate(range: f64, fading: FadingMode) -> ChannelParams {
    let path = CAL_WAVELENGTH / (4.0 * PI * range);
    ChannelParams {
        tx_power: CAL_TX_POWER,
        gain_tx: 1.0,
        gain_rx: 1.0,
        wavelength: CAL_WAVELENGTH,
        sensitivity: CAL_TX_POWER * path * path,
        fading,
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One broadcast queued for delivery at the next tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub sender: NodeId,
    pub channel: ChannelKind,
    pub message: Message,
    /// Whether the sender was a head when it queued the message.
    pub sender_is_head: bool,
}

/// One byte-ledger row: a single transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub tick: Tick,
    pub sender: NodeId,
    pub channel: ChannelKind,
    pub kind: MessageKind,
    pub bytes: u32,
    pub control_bytes: u32,
}

impl LedgerEntry {
    pub fn routing_bytes(&self) -> u32 {
        self.bytes - self.control_bytes
    }
}

#[derive(Debug, Clone)]
pub struct Delivery {
    pub receiver: NodeId,
    pub sender: NodeId,
    pub channel: ChannelKind,
    pub message: Arc<Message>,
}

#[derive(Debug, Clone)]
pub struct Radio {
    pub short: ChannelParams,
    pub long: ChannelParams,
    short_range: f64,
    long_range: f64,
    seed: u64,
}

impl Radio {
    pub fn new(d_tr: f64, d_tr_long: f64, fading: FadingMode, seed: u64) -> Self {
        Self {
            short: calibrate(d_tr, fading),
            long: calibrate(d_tr_long, fading),
            short_range: d_tr,
            long_range: d_tr_long,
            seed,
        }
    }

    pub fn range(&self, kind: ChannelKind) -> f64 {
        match kind {
            ChannelKind::Short => self.short_range,
            ChannelKind::Long => self.long_range,
        }
    }

    fn params(&self, kind: ChannelKind) -> &ChannelParams {
        match kind {
            ChannelKind::Short => &self.short,
            ChannelKind::Long => &self.long,
        }
    }

    /// Fade draw for one (sender, receiver, tick); 1 in deterministic mode.
    pub fn fade(&self, kind: ChannelKind, tick: Tick, sender: NodeId, receiver: NodeId) -> f64 {
        match self.params(kind).fading {
            FadingMode::Deterministic => 1.0,
            FadingMode::Gamma { shape } => {
                let key = mix(self.seed ^ mix(tick ^ mix(((sender.0 as u64) << 16) | receiver.0 as u64)));
                let mut rng = ChaCha8Rng::seed_from_u64(key ^ kind as u64);
                Gamma::new(shape, 1.0 / shape).map(|g| g.sample(&mut rng)).unwrap_or(1.0)
            }
        }
    }

    pub fn link_up(&self, a: Vec2, b: Vec2, kind: ChannelKind, fade: f64) -> bool {
        let d = a.distance(b);
        match self.params(kind).fading {
            FadingMode::Deterministic => d <= self.range(kind),
            FadingMode::Gamma { .. } => {
                let ch = self.params(kind);
                match friis_rx_power(ch, d, fade) {
                    Ok(p) => p >= ch.sensitivity,
                    Err(_) => true,
                }
            }
        }
    }

    fn deterministic(&self) -> bool {
        matches!(self.short.fading, FadingMode::Deterministic)
    }

    /// Delivers `outbox` to every in-range receiver. `positions` and
    /// `is_head` are indexed by node index; long-channel receivers are the
    /// nodes that are heads now.
    pub fn deliver(
        &self,
        tick: Tick,
        outbox: &[Transmission],
        positions: &[Vec2],
        is_head: &[bool],
    ) -> Result<(Vec<Delivery>, Vec<LedgerEntry>), RadioError> {
        let grid = Grid::build(positions, self.short_range);
        let heads: Vec<usize> = (0..positions.len()).filter(|&i| is_head[i]).collect();
        let mut deliveries = Vec::new();
        let mut ledger = Vec::with_capacity(outbox.len());

        for t in outbox {
            if t.channel == ChannelKind::Long && !t.sender_is_head {
                return Err(RadioError::LongChannelByNonHead(t.sender));
            }
            let bytes = wire::encode(&t.message).map_err(|source| RadioError::Encode { sender: t.sender, source })?;
            let decoded = wire::decode(&bytes).map_err(|source| RadioError::Encode { sender: t.sender, source })?;
            ledger.push(LedgerEntry {
                tick,
                sender: t.sender,
                channel: t.channel,
                kind: t.message.kind(),
                bytes: bytes.len() as u32,
                control_bytes: t.message.control_bytes() as u32,
            });
            let message = Arc::new(decoded);
            let s = t.sender.index();
            let origin = positions[s];
            let mut push = |r: usize| {
                let receiver = NodeId::from_index(r);
                let fade = self.fade(t.channel, tick, t.sender, receiver);
                if self.link_up(origin, positions[r], t.channel, fade) {
                    deliveries.push(Delivery { receiver, sender: t.sender, channel: t.channel, message: message.clone() });
                }
            };
            match t.channel {
                ChannelKind::Short if self.deterministic() => {
                    for r in grid.near(origin) {
                        if r != s {
                            push(r);
                        }
                    }
                }
                ChannelKind::Short => {
                    for r in (0..positions.len()).filter(|&r| r != s) {
                        push(r);
                    }
                }
                ChannelKind::Long => {
                    for &r in heads.iter().filter(|&&r| r != s) {
                        push(r);
                    }
                }
            }
        }
        Ok((deliveries, ledger))
    }
}

/// Uniform bucket grid with cell size equal to the short range.
struct Grid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn build(positions: &[Vec2], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            buckets.entry(Self::key(*p, cell)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    fn key(p: Vec2, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Candidate indices in the 3×3 block around `p`, ascending.
    fn near(&self, p: Vec2) -> Vec<usize> {
        let (cx, cy) = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = self.buckets.get(&(cx + dx, cy + dy)) {
                    out.extend_from_slice(b);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{HelloMsg, SeqNum};

    fn unit_channel() -> ChannelParams {
        ChannelParams {
            tx_power: 1.0,
            gain_tx: 1.0,
            gain_rx: 1.0,
            wavelength: 4.0 * PI,
            sensitivity: 1e-6,
            fading: FadingMode::Deterministic,
        }
    }

    #[test]
    fn friis_identity_and_inverse_square() {
        let ch = unit_channel();
        assert!((friis_rx_power(&ch, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let p1 = friis_rx_power(&ch, 37.0, 1.0).unwrap();
        let p2 = friis_rx_power(&ch, 74.0, 1.0).unwrap();
        assert!((p1 / p2 - 4.0).abs() < 1e-12);
        assert_eq!(friis_rx_power(&ch, 0.0, 1.0), Err(RadioError::ZeroDistance));
    }

    #[test]
    fn calibration_inverts() {
        for range in [200.0, 1000.0] {
            let ch = calibrate(range, FadingMode::Deterministic);
            assert!((max_range(&ch) - range).abs() < 0.1);
            let p = friis_rx_power(&ch, range, 1.0).unwrap();
            // closed form τ = P0·G·(λ/(4π·range))²
            let tau = CAL_TX_POWER * (CAL_WAVELENGTH / (4.0 * PI * range)).powi(2);
            assert!(((p - tau) / tau).abs() < 1e-12);
        }
        let mut ch = calibrate(200.0, FadingMode::Deterministic);
        ch.tx_power *= 4.0;
        assert!((max_range(&ch) - 400.0).abs() < 1e-9);
    }

    #[test]
    fn disk_boundary_is_inclusive() {
        let r = Radio::new(200.0, 1000.0, FadingMode::Deterministic, 1);
        let o = Vec2::ZERO;
        assert!(r.link_up(o, Vec2::new(200.0, 0.0), ChannelKind::Short, 1.0));
        assert!(!r.link_up(o, Vec2::new(200.0001, 0.0), ChannelKind::Short, 1.0));
        assert!(r.link_up(o, Vec2::new(900.0, 0.0), ChannelKind::Long, 1.0));
    }

    fn hello(origin: u16) -> Message {
        Message::Hello(HelloMsg {
            seq: SeqNum(0),
            origin: NodeId(origin),
            degree: 0,
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
            head_id: None,
            leader_id: None,
            vel_seq: SeqNum(0),
            follow: None,
            rank: None,
            hops_to_head: 0,
            neighbors: vec![],
        })
    }

    #[test]
    fn broadcast_charged_once() {
        let r = Radio::new(200.0, 1000.0, FadingMode::Deterministic, 1);
        let pos = [
            Vec2::ZERO,
            Vec2::new(100.0, 0.0),
            Vec2::new(0.0, 150.0),
            Vec2::new(-199.0, 0.0),
            Vec2::new(5000.0, 0.0),
        ];
        let heads = [false; 5];
        let tx = Transmission { sender: NodeId(1), channel: ChannelKind::Short, message: hello(1), sender_is_head: false };
        let (d, l) = r.deliver(0, &[tx], &pos, &heads).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].bytes, 38);

        let lonely = Transmission { sender: NodeId(5), channel: ChannelKind::Short, message: hello(5), sender_is_head: false };
        let (d, l) = r.deliver(0, &[lonely], &pos, &heads).unwrap();
        assert!(d.is_empty());
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn long_channel_rules() {
        let r = Radio::new(200.0, 1000.0, FadingMode::Deterministic, 1);
        let pos = [Vec2::ZERO, Vec2::new(1200.0, 0.0)];
        let heads = [true, true];
        let tx = Transmission { sender: NodeId(1), channel: ChannelKind::Long, message: hello(1), sender_is_head: true };
        let (d, _) = r.deliver(0, std::slice::from_ref(&tx), &pos, &heads).unwrap();
        assert!(d.is_empty());
        let bad = Transmission { sender_is_head: false, ..tx };
        assert_eq!(r.deliver(0, &[bad], &pos, &heads).unwrap_err(), RadioError::LongChannelByNonHead(NodeId(1)));
    }

    #[test]
    fn gamma_fades_have_unit_mean() {
        let r = Radio::new(200.0, 1000.0, FadingMode::Gamma { shape: 3.0 }, 9);
        let n = 20_000;
        let mean: f64 = (0..n).map(|t| r.fade(ChannelKind::Short, t, NodeId(1), NodeId(2))).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
        assert_eq!(
            r.fade(ChannelKind::Short, 5, NodeId(3), NodeId(4)),
            r.fade(ChannelKind::Short, 5, NodeId(3), NodeId(4))
        );
    }
}
