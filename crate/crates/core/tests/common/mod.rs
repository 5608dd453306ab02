//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use binc::model::{NodeId, Vec2};
use binc::wire::{
    CHelloMsg, CmnMsg, FollowChain, GroupEntry, HelloMsg, HtcMsg, LinkStatus, MemberRank, Message, NeighborEntry,
    SeqNum, TcMsg,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Value exactly representable at `scale` steps per unit.
fn grid<R: Rng>(rng: &mut R, max_steps: i64, scale: f64) -> f64 {
    rng.gen_range(-max_steps..=max_steps) as f64 / scale
}

fn fine<R: Rng>(rng: &mut R) -> f64 {
    grid(rng, i32::MAX as i64, 100.0)
}

fn fine_vec<R: Rng>(rng: &mut R) -> Vec2 {
    Vec2::new(fine(rng), fine(rng))
}

fn radius<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(0..=u32::MAX as u64) as f64 / 100.0
}

fn id<R: Rng>(rng: &mut R) -> NodeId {
    NodeId(rng.gen_range(1..=u16::MAX))
}

fn distinct_ids<R: Rng>(rng: &mut R, n: usize, exclude: Option<NodeId>) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c = id(rng);
        if Some(c) != exclude && !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn opt<R: Rng, T>(rng: &mut R, f: impl FnOnce(&mut R) -> T) -> Option<T> {
    rng.gen_bool(0.5).then(|| f(rng))
}

fn follow<R: Rng>(rng: &mut R) -> Option<FollowChain> {
    opt(rng, |r| FollowChain { group: id(r), seq: SeqNum(r.gen()) })
}

fn entries<R: Rng>(rng: &mut R) -> usize {
    // Small lists dominate; the maximum count is hit now and then.
    if rng.gen_bool(0.05) {
        255
    } else {
        rng.gen_range(0..40)
    }
}

pub fn random_hello<R: Rng>(rng: &mut R) -> HelloMsg {
    let origin = id(rng);
    let n = entries(rng);
    let neighbors = distinct_ids(rng, n, Some(origin))
        .into_iter()
        .map(|nid| NeighborEntry {
            id: nid,
            degree: rng.gen(),
            status: LinkStatus {
                clustered: rng.gen(),
                head: rng.gen(),
                same_cluster: rng.gen(),
                mpr: rng.gen(),
                hops: rng.gen_range(0..=3),
            },
            position: Vec2::new(grid(rng, (1 << 23) - 1, 10.0), grid(rng, (1 << 23) - 1, 10.0)),
        })
        .collect();
    HelloMsg {
        seq: SeqNum(rng.gen()),
        origin,
        degree: rng.gen(),
        position: fine_vec(rng),
        velocity: fine_vec(rng),
        head_id: opt(rng, id),
        leader_id: opt(rng, id),
        vel_seq: SeqNum(rng.gen()),
        follow: follow(rng),
        rank: opt(rng, |r| r.gen()),
        hops_to_head: rng.gen(),
        neighbors,
    }
}

pub fn random_chello<R: Rng>(rng: &mut R) -> CHelloMsg {
    let n = entries(rng);
    let neighbor_groups: Vec<GroupEntry> = distinct_ids(rng, n, None)
        .into_iter()
        .map(|head| GroupEntry { head, center: fine_vec(rng), radius: radius(rng), velocity: fine_vec(rng) })
        .collect();
    CHelloMsg {
        seq: SeqNum(rng.gen()),
        origin_head: id(rng),
        center: fine_vec(rng),
        radius: radius(rng),
        velocity: fine_vec(rng),
        leader_id: id(rng),
        vel_seq: SeqNum(rng.gen()),
        follow: follow(rng),
        relay_count: rng.gen_range(0..=neighbor_groups.len()) as u8,
        neighbor_groups,
    }
}

pub fn random_cmn<R: Rng>(rng: &mut R) -> CmnMsg {
    let n = entries(rng);
    CmnMsg {
        seq: SeqNum(rng.gen()),
        head_id: id(rng),
        group_force: fine_vec(rng),
        members: distinct_ids(rng, n, None).into_iter().map(|id| MemberRank { id, rank: rng.gen() }).collect(),
    }
}

pub fn random_tc<R: Rng>(rng: &mut R) -> TcMsg {
    let n = entries(rng).max(1);
    let mut advertised = distinct_ids(rng, n, None);
    advertised.shuffle(rng);
    TcMsg { seq: SeqNum(rng.gen()), origin: id(rng), advertised }
}

pub fn random_htc<R: Rng>(rng: &mut R) -> HtcMsg {
    let n = entries(rng).max(1);
    HtcMsg { seq: SeqNum(rng.gen()), origin_head: id(rng), members: distinct_ids(rng, n, None) }
}

/// One random message of kind `k` (0..5 in wire tag order).
pub fn random_message<R: Rng>(rng: &mut R, k: usize) -> Message {
    match k {
        0 => Message::Hello(random_hello(rng)),
        1 => Message::CHello(random_chello(rng)),
        2 => Message::Cmn(random_cmn(rng)),
        3 => Message::Tc(random_tc(rng)),
        _ => Message::Htc(random_htc(rng)),
    }
}

pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

pub fn assert_vec_close(a: Vec2, b: Vec2, tol: f64) {
    assert!((a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol, "{a:?} vs {b:?} (tol {tol})");
}

/// Follow adoptions per formation on a ring of rotating formations, and how
/// often a sharper turner was ignored because its chain was already known.
#[derive(Debug, Clone, Default)]
pub struct RingAudit {
    pub adoptions: Vec<Vec<(binc::model::Tick, FollowChain)>>,
    pub blocked: usize,
}

impl RingAudit {
    /// (formation, group, seq) adopted more than once.
    pub fn violations(&self) -> Vec<(usize, FollowChain)> {
        let mut out = Vec::new();
        for (i, list) in self.adoptions.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            for (_, c) in list {
                if !seen.insert(*c) {
                    out.push((i, *c));
                }
            }
        }
        out
    }

    pub fn total(&self) -> usize {
        self.adoptions.iter().map(Vec::len).sum()
    }
}

/// `k` formations on a circle, flying tangentially, exchanging C-HELLOs
/// every beacon interval. Formation 1 turns by 90° once a minute so fresh
/// velocity identities keep entering the ring.
pub fn ring_of_formations(k: usize, seconds: f64) -> RingAudit {
    use binc::model::SimParams;
    use binc::starling::{loop_admit, FormationController, FormationInput, StarlingParams};

    let sim = SimParams::default();
    let p = StarlingParams::from_sim(&sim);
    let dt = sim.dt;
    let beacon = (sim.t_chello / dt).round() as u64;
    let radius = 100.0;
    let ring = 300.0 / (std::f64::consts::PI / k as f64).sin();
    let mut pos: Vec<Vec2> = Vec::new();
    let mut vel: Vec<Vec2> = Vec::new();
    for i in 0..k {
        let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
        pos.push(Vec2::from_angle(a) * ring);
        vel.push(Vec2::from_angle(a + std::f64::consts::FRAC_PI_2) * 15.0);
    }
    let ids: Vec<NodeId> = (0..k).map(NodeId::from_index).collect();
    let mut ctrls = vec![FormationController::default(); k];
    let mut force = vec![Vec2::ZERO; k];
    let mut audit = RingAudit { adoptions: vec![Vec::new(); k], blocked: 0 };
    let ticks = (seconds / dt).round() as u64;
    let turn_every = (60.0 / dt).round() as u64;
    for t in 1..=ticks {
        if t % turn_every == 0 {
            vel[1] = Vec2::from_angle(vel[1].angle() + 90f64.to_radians()) * vel[1].norm();
        }
        if t % beacon == 0 {
            let msgs: Vec<CHelloMsg> = (0..k)
                .map(|i| CHelloMsg {
                    seq: SeqNum(t as u16),
                    origin_head: ids[i],
                    center: pos[i],
                    radius,
                    velocity: vel[i],
                    leader_id: ids[i],
                    vel_seq: ctrls[i].advertise(vel[i]),
                    follow: ctrls[i].follow,
                    relay_count: 0,
                    neighbor_groups: Vec::new(),
                })
                .collect();
            for i in 0..k {
                for (j, m) in msgs.iter().enumerate() {
                    if i != j && pos[i].distance(pos[j]) <= sim.d_tr_long {
                        ctrls[i].observe(m, t);
                    }
                }
                ctrls[i].prune(t, 3 * beacon);
            }
            for i in 0..k {
                let me = FormationInput { group: ids[i], center: pos[i], radius, velocity: vel[i] };
                let (f, ev) = ctrls[i].decide(t, &me, None, &p);
                force[i] = f;
                if let Some(c) = ev.adopted {
                    audit.adoptions[i].push((t, c));
                } else if let Some(ks) = ev.k_star {
                    let chain = ctrls[i].views[&ks].chain();
                    if ev.indicator * p.r_att > ev.threshold && chain.group != ids[i] && !loop_admit(&ctrls[i].records, chain) {
                        audit.blocked += 1;
                    }
                }
            }
        }
        for i in 0..k {
            vel[i] = (vel[i] + force[i] * dt).clamp_norm(sim.v_max);
            pos[i] += vel[i] * dt;
        }
    }
    audit
}

pub fn params(n: usize, seed: u64) -> binc::model::ValidatedParams {
    let raw = binc::model::SimParams { n_uavs: n, seed, ..Default::default() };
    binc::model::validate_config(raw).expect("reference parameters validate")
}

/// Ground-truth hop distances from `from` over the short-range unit-disk graph.
pub fn hop_distances(positions: &[Vec2], range: f64, from: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; positions.len()];
    dist[from] = Some(0);
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap();
        for v in 0..positions.len() {
            if dist[v].is_none() && positions[u].distance(positions[v]) <= range {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
