//! Canonical byte layout of the five fused messages.
//!
//! Every packet is a 4-byte header (type tag, flags, little-endian payload
//! length) followed by the payload. All multi-byte integers are
//! little-endian. Coordinates and velocities are signed 32-bit fixed point
//! with 0.01 resolution, radii unsigned 32-bit with 0.01 m resolution.
//! Positions inside HELLO neighbor entries use signed 24-bit fixed point at
//! 0.1 m so that an entry fits in 10 bytes.
//!
//! | type    | fixed size | per entry |
//! |---------|-----------:|----------:|
//! | HELLO   | 38         | 10        |
//! | C-HELLO | 38         | 22        |
//! | CMN     | 17         | 3         |
//! | TC      | 9          | 2         |
//! | HTC     | 9          | 2         |

mod seq;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GroupId, NodeId, Vec2};

pub use seq::{newer_than, SeqNum};

pub const HEADER_LEN: usize = 4;
pub const HELLO_FIXED: usize = 38;
pub const HELLO_PER_NEIGHBOR: usize = 10;
pub const CHELLO_FIXED: usize = 38;
pub const CHELLO_PER_GROUP: usize = 22;
pub const CMN_FIXED: usize = 17;
pub const CMN_PER_MEMBER: usize = 3;
pub const TC_FIXED: usize = 9;
pub const TC_PER_ID: usize = 2;

const TAG_HELLO: u8 = 1;
const TAG_CHELLO: u8 = 2;
const TAG_CMN: u8 = 3;
const TAG_TC: u8 = 4;
const TAG_HTC: u8 = 5;

const FLAG_HEAD: u8 = 0x01;
const FLAG_LEADER: u8 = 0x02;
const FLAG_FOLLOW: u8 = 0x04;
const FLAG_RANK: u8 = 0x08;

const FINE: f64 = 100.0;
const COARSE: f64 = 10.0;
const I24_MIN: i64 = -(1 << 23);
const I24_MAX: i64 = (1 << 23) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed packet: {0}")]
    MalformedPacket(String),
    #[error("field out of range: {0}")]
    RangeViolation(String),
}

/// Per-neighbor flags carried in a HELLO entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStatus {
    /// Neighbor is in the clustered state.
    pub clustered: bool,
    /// Neighbor is a cluster head.
    pub head: bool,
    /// Neighbor belongs to the sender's cluster.
    pub same_cluster: bool,
    /// Sender selected this neighbor as a multipoint relay.
    pub mpr: bool,
    /// Neighbor's hop count to its head, 0..=3.
    pub hops: u8,
}

impl LinkStatus {
    fn to_byte(self) -> Result<u8, WireError> {
        if self.hops > 3 {
            return Err(WireError::RangeViolation(format!("link hops {} > 3", self.hops)));
        }
        Ok((self.clustered as u8) << 7
            | (self.head as u8) << 6
            | (self.same_cluster as u8) << 5
            | (self.mpr as u8) << 4
            | self.hops)
    }

    fn from_byte(b: u8) -> Result<Self, WireError> {
        if b & 0x0c != 0 {
            return Err(WireError::MalformedPacket(format!("reserved link status bits set: {b:#04x}")));
        }
        Ok(Self {
            clustered: b & 0x80 != 0,
            head: b & 0x40 != 0,
            same_cluster: b & 0x20 != 0,
            mpr: b & 0x10 != 0,
            hops: b & 0x03,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub id: NodeId,
    pub degree: u8,
    pub status: LinkStatus,
    pub position: Vec2,
}

/// Origin of a velocity being followed: the group that first produced it and
/// that group's velocity sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FollowChain {
    pub group: GroupId,
    pub seq: SeqNum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloMsg {
    pub seq: SeqNum,
    pub origin: NodeId,
    pub degree: u8,
    pub position: Vec2,
    pub velocity: Vec2,
    pub head_id: Option<NodeId>,
    pub leader_id: Option<NodeId>,
    pub vel_seq: SeqNum,
    pub follow: Option<FollowChain>,
    /// Social level last assigned by the head.
    pub rank: Option<u8>,
    pub hops_to_head: u8,
    pub neighbors: Vec<NeighborEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub head: NodeId,
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CHelloMsg {
    pub seq: SeqNum,
    pub origin_head: NodeId,
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
    pub leader_id: NodeId,
    pub vel_seq: SeqNum,
    pub follow: Option<FollowChain>,
    /// The first `relay_count` neighbor groups are the heads this head
    /// selected to relay its inter-cluster floods.
    pub relay_count: u8,
    pub neighbor_groups: Vec<GroupEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRank {
    pub id: NodeId,
    pub rank: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmnMsg {
    pub seq: SeqNum,
    pub head_id: NodeId,
    pub group_force: Vec2,
    pub members: Vec<MemberRank>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcMsg {
    pub seq: SeqNum,
    pub origin: NodeId,
    pub advertised: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HtcMsg {
    pub seq: SeqNum,
    pub origin_head: NodeId,
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Message {
    Hello(HelloMsg),
    CHello(CHelloMsg),
    Cmn(CmnMsg),
    Tc(TcMsg),
    Htc(HtcMsg),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    Hello,
    CHello,
    Cmn,
    Tc,
    Htc,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Hello => "HELLO",
            MessageKind::CHello => "C-HELLO",
            MessageKind::Cmn => "CMN",
            MessageKind::Tc => "TC",
            MessageKind::Htc => "HTC",
        }
    }
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Hello(_) => MessageKind::Hello,
            Message::CHello(_) => MessageKind::CHello,
            Message::Cmn(_) => MessageKind::Cmn,
            Message::Tc(_) => MessageKind::Tc,
            Message::Htc(_) => MessageKind::Htc,
        }
    }

    /// Encoded length in bytes, computed from the layout without encoding.
    pub fn size_of(&self) -> usize {
        match self {
            Message::Hello(m) => HELLO_FIXED + HELLO_PER_NEIGHBOR * m.neighbors.len(),
            Message::CHello(m) => CHELLO_FIXED + CHELLO_PER_GROUP * m.neighbor_groups.len(),
            Message::Cmn(m) => CMN_FIXED + CMN_PER_MEMBER * m.members.len(),
            Message::Tc(m) => TC_FIXED + TC_PER_ID * m.advertised.len(),
            Message::Htc(m) => TC_FIXED + TC_PER_ID * m.members.len(),
        }
    }

    /// Bytes of the encoding that carry flight-control information: the
    /// kinematic and velocity-following fields of HELLO and C-HELLO, and the
    /// whole of CMN. The remainder is routing overhead.
    pub fn control_bytes(&self) -> usize {
        match self {
            // position 8, velocity 8, leader 2, vel_seq 2, follow 4, rank 1
            Message::Hello(_) => 25,
            // center 8, radius 4, velocity 8, leader 2, vel_seq 2, follow 4,
            // plus center/radius/velocity of each neighbor group
            Message::CHello(m) => 28 + 20 * m.neighbor_groups.len(),
            Message::Cmn(_) => self.size_of(),
            Message::Tc(_) | Message::Htc(_) => 0,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        encode(self)
    }
}

pub fn size_of(m: &Message) -> usize {
    m.size_of()
}

// ---------------------------------------------------------------- encoding

fn range(msg: impl Into<String>) -> WireError {
    WireError::RangeViolation(msg.into())
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn id(&mut self, id: NodeId, what: &str) -> Result<(), WireError> {
        if id.0 == 0 {
            return Err(range(format!("{what}: node id 0 is reserved")));
        }
        self.u16(id.0);
        Ok(())
    }
    fn opt_id(&mut self, id: Option<NodeId>, what: &str) -> Result<(), WireError> {
        match id {
            Some(id) => self.id(id, what),
            None => {
                self.u16(0);
                Ok(())
            }
        }
    }
    fn fixed(&mut self, v: f64, what: &str) -> Result<(), WireError> {
        let scaled = (v * FINE).round();
        if !scaled.is_finite() || scaled < i32::MIN as f64 || scaled > i32::MAX as f64 {
            return Err(range(format!("{what} = {v} does not fit 32-bit fixed point")));
        }
        self.buf.extend_from_slice(&(scaled as i32).to_le_bytes());
        Ok(())
    }
    fn vec(&mut self, v: Vec2, what: &str) -> Result<(), WireError> {
        self.fixed(v.x, what)?;
        self.fixed(v.y, what)
    }
    fn radius(&mut self, v: f64, what: &str) -> Result<(), WireError> {
        let scaled = (v * FINE).round();
        if !scaled.is_finite() || scaled < 0.0 || scaled > u32::MAX as f64 {
            return Err(range(format!("{what} = {v} does not fit unsigned 32-bit fixed point")));
        }
        self.buf.extend_from_slice(&(scaled as u32).to_le_bytes());
        Ok(())
    }
    fn coarse(&mut self, v: f64, what: &str) -> Result<(), WireError> {
        let scaled = (v * COARSE).round();
        if !scaled.is_finite() || scaled < I24_MIN as f64 || scaled > I24_MAX as f64 {
            return Err(range(format!("{what} = {v} does not fit 24-bit fixed point")));
        }
        let bytes = (scaled as i32).to_le_bytes();
        self.buf.extend_from_slice(&bytes[..3]);
        Ok(())
    }
    fn count(&mut self, n: usize, what: &str) -> Result<(), WireError> {
        if n > u8::MAX as usize {
            return Err(range(format!("{what}: {n} entries exceed 255")));
        }
        self.u8(n as u8);
        Ok(())
    }
    fn follow(&mut self, f: Option<FollowChain>) -> Result<(), WireError> {
        match f {
            Some(f) => {
                self.id(f.group, "follow_group")?;
                self.u16(f.seq.0);
            }
            None => {
                self.u16(0);
                self.u16(0);
            }
        }
        Ok(())
    }
}

fn check_unique(ids: impl Iterator<Item = NodeId>, what: &str) -> Result<(), WireError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(range(format!("{what}: duplicate id {id}")));
        }
    }
    Ok(())
}

/// Serializes a message in the canonical layout.
pub fn encode(m: &Message) -> Result<Vec<u8>, WireError> {
    let mut w = Writer { buf: Vec::with_capacity(m.size_of()) };
    let (tag, flags) = match m {
        Message::Hello(h) => {
            let mut f = 0;
            if h.head_id.is_some() {
                f |= FLAG_HEAD;
            }
            if h.leader_id.is_some() {
                f |= FLAG_LEADER;
            }
            if h.follow.is_some() {
                f |= FLAG_FOLLOW;
            }
            if h.rank.is_some() {
                f |= FLAG_RANK;
            }
            (TAG_HELLO, f)
        }
        Message::CHello(c) => (TAG_CHELLO, if c.follow.is_some() { FLAG_FOLLOW } else { 0 }),
        Message::Cmn(_) => (TAG_CMN, 0),
        Message::Tc(_) => (TAG_TC, 0),
        Message::Htc(_) => (TAG_HTC, 0),
    };
    w.u8(tag);
    w.u8(flags);
    w.u16(0); // patched below

    match m {
        Message::Hello(h) => {
            if h.neighbors.iter().any(|n| n.id == h.origin) {
                return Err(range("HELLO neighbor list contains its origin"));
            }
            check_unique(h.neighbors.iter().map(|n| n.id), "HELLO neighbors")?;
            w.u16(h.seq.0);
            w.id(h.origin, "origin")?;
            w.u8(h.degree);
            w.vec(h.position, "position")?;
            w.vec(h.velocity, "velocity")?;
            w.opt_id(h.head_id, "head_id")?;
            w.opt_id(h.leader_id, "leader_id")?;
            w.u16(h.vel_seq.0);
            w.follow(h.follow)?;
            w.u8(h.rank.unwrap_or(0));
            w.u8(h.hops_to_head);
            w.count(h.neighbors.len(), "HELLO neighbors")?;
            for n in &h.neighbors {
                w.id(n.id, "neighbor id")?;
                w.u8(n.degree);
                w.u8(n.status.to_byte()?);
                w.coarse(n.position.x, "neighbor position")?;
                w.coarse(n.position.y, "neighbor position")?;
            }
        }
        Message::CHello(c) => {
            check_unique(c.neighbor_groups.iter().map(|g| g.head), "C-HELLO neighbor groups")?;
            if c.relay_count as usize > c.neighbor_groups.len() {
                return Err(range(format!(
                    "relay_count {} exceeds {} neighbor groups",
                    c.relay_count,
                    c.neighbor_groups.len()
                )));
            }
            w.u16(c.seq.0);
            w.id(c.origin_head, "origin_head")?;
            w.vec(c.center, "center")?;
            w.radius(c.radius, "radius")?;
            w.vec(c.velocity, "velocity")?;
            w.id(c.leader_id, "leader_id")?;
            w.u16(c.vel_seq.0);
            w.follow(c.follow)?;
            w.u8(c.relay_count);
            w.count(c.neighbor_groups.len(), "C-HELLO neighbor groups")?;
            for g in &c.neighbor_groups {
                w.id(g.head, "group head")?;
                w.vec(g.center, "group center")?;
                w.radius(g.radius, "group radius")?;
                w.vec(g.velocity, "group velocity")?;
            }
        }
        Message::Cmn(c) => {
            check_unique(c.members.iter().map(|m| m.id), "CMN members")?;
            w.u16(c.seq.0);
            w.id(c.head_id, "head_id")?;
            w.vec(c.group_force, "group_force")?;
            w.count(c.members.len(), "CMN members")?;
            for mr in &c.members {
                w.id(mr.id, "member id")?;
                w.u8(mr.rank);
            }
        }
        Message::Tc(t) => {
            if t.advertised.is_empty() {
                return Err(range("TC advertised set must be non-empty"));
            }
            w.u16(t.seq.0);
            w.id(t.origin, "origin")?;
            w.count(t.advertised.len(), "TC advertised")?;
            for id in &t.advertised {
                w.id(*id, "advertised id")?;
            }
        }
        Message::Htc(t) => {
            if t.members.is_empty() {
                return Err(range("HTC member list must be non-empty"));
            }
            w.u16(t.seq.0);
            w.id(t.origin_head, "origin_head")?;
            w.count(t.members.len(), "HTC members")?;
            for id in &t.members {
                w.id(*id, "member id")?;
            }
        }
    }

    let payload = w.buf.len() - HEADER_LEN;
    if payload > u16::MAX as usize {
        return Err(range("payload exceeds 65535 bytes"));
    }
    w.buf[2..4].copy_from_slice(&(payload as u16).to_le_bytes());
    debug_assert_eq!(w.buf.len(), m.size_of());
    Ok(w.buf)
}

// ---------------------------------------------------------------- decoding

/// One decoded field, for annotated dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub offset: usize,
    pub len: usize,
    pub name: String,
    pub value: String,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    trace: Option<Vec<Field>>,
}

fn malformed(msg: impl Into<String>) -> WireError {
    WireError::MalformedPacket(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, name: &str) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.bytes.len() {
            return Err(malformed(format!(
                "truncated at offset {} reading {name} ({n} bytes, {} left)",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn note(&mut self, start: usize, name: &str, value: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            t.push(Field { offset: start, len: self.pos - start, name: name.to_string(), value: value() });
        }
    }

    fn u8(&mut self, name: &str) -> Result<u8, WireError> {
        let start = self.pos;
        let v = self.take(1, name)?[0];
        self.note(start, name, || v.to_string());
        Ok(v)
    }

    fn u16(&mut self, name: &str) -> Result<u16, WireError> {
        let start = self.pos;
        let b = self.take(2, name)?;
        let v = u16::from_le_bytes([b[0], b[1]]);
        self.note(start, name, || v.to_string());
        Ok(v)
    }

    fn id(&mut self, name: &str) -> Result<NodeId, WireError> {
        let v = self.u16(name)?;
        if v == 0 {
            return Err(malformed(format!("{name}: node id 0 is reserved")));
        }
        Ok(NodeId(v))
    }

    fn opt_id(&mut self, name: &str, present: bool) -> Result<Option<NodeId>, WireError> {
        let v = self.u16(name)?;
        match (present, v) {
            (true, 0) => Err(malformed(format!("{name}: flagged present but zero"))),
            (true, v) => Ok(Some(NodeId(v))),
            (false, 0) => Ok(None),
            (false, _) => Err(malformed(format!("{name}: flagged absent but non-zero"))),
        }
    }

    fn fixed(&mut self, name: &str) -> Result<f64, WireError> {
        let start = self.pos;
        let b = self.take(4, name)?;
        let v = i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / FINE;
        self.note(start, name, || format!("{v:.2}"));
        Ok(v)
    }

    fn vec(&mut self, name: &str) -> Result<Vec2, WireError> {
        let x = self.fixed(&format!("{name}.x"))?;
        let y = self.fixed(&format!("{name}.y"))?;
        Ok(Vec2::new(x, y))
    }

    fn radius(&mut self, name: &str) -> Result<f64, WireError> {
        let start = self.pos;
        let b = self.take(4, name)?;
        let v = u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / FINE;
        self.note(start, name, || format!("{v:.2}"));
        Ok(v)
    }

    fn coarse(&mut self, name: &str) -> Result<f64, WireError> {
        let start = self.pos;
        let b = self.take(3, name)?;
        let sign = if b[2] & 0x80 != 0 { 0xff } else { 0 };
        let v = i32::from_le_bytes([b[0], b[1], b[2], sign]) as f64 / COARSE;
        self.note(start, name, || format!("{v:.1}"));
        Ok(v)
    }

    fn follow(&mut self, present: bool) -> Result<Option<FollowChain>, WireError> {
        let group = self.u16("follow_group")?;
        let seq = self.u16("follow_seq")?;
        match (present, group, seq) {
            (true, 0, _) => Err(malformed("follow_group flagged present but zero")),
            (true, g, s) => Ok(Some(FollowChain { group: NodeId(g), seq: SeqNum(s) })),
            (false, 0, 0) => Ok(None),
            (false, _, _) => Err(malformed("follow fields flagged absent but non-zero")),
        }
    }
}

/// Parses a packet produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
    decode_inner(bytes, None).map(|(m, _)| m)
}

/// Like [`decode`], also returning every field with its offset.
pub fn decode_traced(bytes: &[u8]) -> Result<(Message, Vec<Field>), WireError> {
    decode_inner(bytes, Some(Vec::new()))
}

fn decode_inner(bytes: &[u8], trace: Option<Vec<Field>>) -> Result<(Message, Vec<Field>), WireError> {
    let mut r = Reader { bytes, pos: 0, trace };
    let tag = r.u8("type")?;
    let flags = r.u8("flags")?;
    let len = r.u16("payload_length")? as usize;
    if bytes.len() != HEADER_LEN + len {
        return Err(malformed(format!(
            "payload length field says {len} but {} bytes follow the header",
            bytes.len().saturating_sub(HEADER_LEN)
        )));
    }
    let allowed = match tag {
        TAG_HELLO => FLAG_HEAD | FLAG_LEADER | FLAG_FOLLOW | FLAG_RANK,
        TAG_CHELLO => FLAG_FOLLOW,
        TAG_CMN | TAG_TC | TAG_HTC => 0,
        other => return Err(malformed(format!("unknown message type {other}"))),
    };
    if flags & !allowed != 0 {
        return Err(malformed(format!("unexpected flags {flags:#04x} for type {tag}")));
    }

    let msg = match tag {
        TAG_HELLO => {
            let seq = SeqNum(r.u16("seq")?);
            let origin = r.id("origin")?;
            let degree = r.u8("degree")?;
            let position = r.vec("position")?;
            let velocity = r.vec("velocity")?;
            let head_id = r.opt_id("head_id", flags & FLAG_HEAD != 0)?;
            let leader_id = r.opt_id("leader_id", flags & FLAG_LEADER != 0)?;
            let vel_seq = SeqNum(r.u16("vel_seq")?);
            let follow = r.follow(flags & FLAG_FOLLOW != 0)?;
            let rank_raw = r.u8("rank")?;
            let rank = if flags & FLAG_RANK != 0 {
                Some(rank_raw)
            } else if rank_raw == 0 {
                None
            } else {
                return Err(malformed("rank flagged absent but non-zero"));
            };
            let hops_to_head = r.u8("hops_to_head")?;
            let n = r.u8("neighbor_count")? as usize;
            let mut neighbors = Vec::with_capacity(n);
            for i in 0..n {
                let id = r.id(&format!("neighbor[{i}].id"))?;
                let degree = r.u8(&format!("neighbor[{i}].degree"))?;
                let status = LinkStatus::from_byte(r.u8(&format!("neighbor[{i}].status"))?)?;
                let x = r.coarse(&format!("neighbor[{i}].position.x"))?;
                let y = r.coarse(&format!("neighbor[{i}].position.y"))?;
                neighbors.push(NeighborEntry { id, degree, status, position: Vec2::new(x, y) });
            }
            if neighbors.iter().any(|e| e.id == origin) {
                return Err(malformed("HELLO neighbor list contains its origin"));
            }
            check_unique(neighbors.iter().map(|e| e.id), "HELLO neighbors")
                .map_err(|e| malformed(e.to_string()))?;
            Message::Hello(HelloMsg {
                seq,
                origin,
                degree,
                position,
                velocity,
                head_id,
                leader_id,
                vel_seq,
                follow,
                rank,
                hops_to_head,
                neighbors,
            })
        }
        TAG_CHELLO => {
            let seq = SeqNum(r.u16("seq")?);
            let origin_head = r.id("origin_head")?;
            let center = r.vec("center")?;
            let radius = r.radius("radius")?;
            let velocity = r.vec("velocity")?;
            let leader_id = r.id("leader_id")?;
            let vel_seq = SeqNum(r.u16("vel_seq")?);
            let follow = r.follow(flags & FLAG_FOLLOW != 0)?;
            let relay_count = r.u8("relay_count")?;
            let n = r.u8("group_count")? as usize;
            if relay_count as usize > n {
                return Err(malformed("relay_count exceeds group count"));
            }
            let mut neighbor_groups = Vec::with_capacity(n);
            for i in 0..n {
                let head = r.id(&format!("group[{i}].head"))?;
                let center = r.vec(&format!("group[{i}].center"))?;
                let radius = r.radius(&format!("group[{i}].radius"))?;
                let velocity = r.vec(&format!("group[{i}].velocity"))?;
                neighbor_groups.push(GroupEntry { head, center, radius, velocity });
            }
            check_unique(neighbor_groups.iter().map(|g| g.head), "C-HELLO groups")
                .map_err(|e| malformed(e.to_string()))?;
            Message::CHello(CHelloMsg {
                seq,
                origin_head,
                center,
                radius,
                velocity,
                leader_id,
                vel_seq,
                follow,
                relay_count,
                neighbor_groups,
            })
        }
        TAG_CMN => {
            let seq = SeqNum(r.u16("seq")?);
            let head_id = r.id("head_id")?;
            let group_force = r.vec("group_force")?;
            let n = r.u8("member_count")? as usize;
            let mut members = Vec::with_capacity(n);
            for i in 0..n {
                let id = r.id(&format!("member[{i}].id"))?;
                let rank = r.u8(&format!("member[{i}].rank"))?;
                members.push(MemberRank { id, rank });
            }
            check_unique(members.iter().map(|m| m.id), "CMN members").map_err(|e| malformed(e.to_string()))?;
            Message::Cmn(CmnMsg { seq, head_id, group_force, members })
        }
        TAG_TC | TAG_HTC => {
            let seq = SeqNum(r.u16("seq")?);
            let origin = r.id("origin")?;
            let n = r.u8("id_count")? as usize;
            if n == 0 {
                return Err(malformed("empty topology list"));
            }
            let mut ids = Vec::with_capacity(n);
            for i in 0..n {
                ids.push(r.id(&format!("id[{i}]"))?);
            }
            if tag == TAG_TC {
                Message::Tc(TcMsg { seq, origin, advertised: ids })
            } else {
                Message::Htc(HtcMsg { seq, origin_head: origin, members: ids })
            }
        }
        _ => unreachable!(),
    };
    if r.pos != bytes.len() {
        return Err(malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((msg, r.trace.unwrap_or_default()))
}

/// Renders a packet as annotated hex, one field per line.
pub fn annotate(bytes: &[u8]) -> Result<String, WireError> {
    let (msg, fields) = decode_traced(bytes)?;
    let mut out = format!("{} packet, {} bytes\n", msg.kind().name(), bytes.len());
    for f in fields {
        let hex: Vec<String> = bytes[f.offset..f.offset + f.len].iter().map(|b| format!("{b:02x}")).collect();
        out.push_str(&format!("{:>5}  {:<12} {:<28} {}\n", f.offset, hex.join(" "), f.name, f.value));
    }
    Ok(out)
}
