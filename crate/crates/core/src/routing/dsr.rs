//! DSR: on-demand source routing with a path cache.
//!
//! Discovery starts with a one-hop request and then floods with doubling
//! timeouts. Only the target answers requests (no replies from cache). Routes
//! are learned from requests, replies and forwarded data. A node that cannot
//! reach the next hop in a source route reports the broken link to the source
//! and drops the packet; the source retries from its cache or rediscovers.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{
    buffer_packet, sweep_buffer, Ctx, DropReason, Layer, ProtocolKind, RouteView, RoutingProtocol, SendBuffer,
    SendKind, Timer,
};
use crate::packet::{Body, ControlPacket, DsrRerr, DsrRrep, DsrRreq, NodeId, Packet, SourceRoute};
use crate::time::SimTime;

/// Routes from this node's own discoveries live apart from routes overheard
/// while relaying, so relay traffic cannot evict them.
const PRIMARY_CAPACITY: usize = 30;
const SECONDARY_CAPACITY: usize = 34;
const NONPROP_TIMEOUT: SimTime = SimTime::from_millis(30);
const FIRST_TIMEOUT: SimTime = SimTime::from_millis(500);
const MAX_TIMEOUT: SimTime = SimTime::from_secs(10);
const MAX_ATTEMPTS: u32 = 6;
const FLOOD_TTL: u32 = 255;
const SEEN_LIFETIME: SimTime = SimTime::from_secs(30);

fn attempt_plan(attempt: u32) -> Option<(u32, SimTime)> {
    match attempt {
        0 => Some((1, NONPROP_TIMEOUT)),
        a if a < MAX_ATTEMPTS => Some((FLOOD_TTL, FIRST_TIMEOUT.mul(1 << (a - 1)).min(MAX_TIMEOUT))),
        _ => None,
    }
}

/// Paths starting at the owning node, oldest first.
#[derive(Debug)]
struct PathCache {
    paths: VecDeque<Vec<NodeId>>,
    capacity: usize,
}

impl PathCache {
    fn new(capacity: usize) -> Self {
        PathCache { paths: VecDeque::new(), capacity }
    }

    fn add(&mut self, path: Vec<NodeId>) {
        if path.len() < 2 || crate::packet::has_repeats(&path) {
            return;
        }
        if self.paths.iter().any(|p| p.starts_with(&path)) {
            return;
        }
        if self.paths.len() >= self.capacity {
            self.paths.pop_front();
        }
        self.paths.push_back(path);
    }

    /// Shortest cached prefix ending at `dst`; the oldest wins ties.
    fn find(&self, dst: NodeId) -> Option<&[NodeId]> {
        let mut best: Option<&[NodeId]> = None;
        for p in &self.paths {
            if let Some(i) = p.iter().position(|&n| n == dst) {
                if best.is_none_or(|b| i + 1 < b.len()) {
                    best = Some(&p[..=i]);
                }
            }
        }
        best
    }

    /// Cuts every path at the first use of link `a`–`b` (either direction).
    fn remove_link(&mut self, a: NodeId, b: NodeId) {
        for p in self.paths.iter_mut() {
            if let Some(i) = p.windows(2).position(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a)) {
                p.truncate(i + 1);
            }
        }
        self.paths.retain(|p| p.len() >= 2);
    }
}

#[derive(Debug)]
pub struct Dsr {
    me: NodeId,
    primary: PathCache,
    secondary: PathCache,
    rreq_id: u32,
    seen: HashMap<(NodeId, u32), (usize, SimTime)>,
    last_seen_purge: SimTime,
    discoveries: BTreeMap<NodeId, u32>,
    buffer: SendBuffer,
}

impl Dsr {
    pub fn new(me: NodeId) -> Self {
        Dsr {
            me,
            primary: PathCache::new(PRIMARY_CAPACITY),
            secondary: PathCache::new(SECONDARY_CAPACITY),
            rreq_id: 0,
            seen: HashMap::new(),
            last_seen_purge: SimTime::ZERO,
            discoveries: BTreeMap::new(),
            buffer: SendBuffer::default(),
        }
    }

    fn control(ctx: &mut Ctx, c: ControlPacket) -> Packet {
        Packet { id: ctx.new_id(), body: Body::Control(c) }
    }

    /// Shortest cached route to `dst`, primary cache first on ties.
    fn find(&self, dst: NodeId) -> Option<&[NodeId]> {
        match (self.primary.find(dst), self.secondary.find(dst)) {
            (Some(p), Some(s)) if s.len() < p.len() => Some(s),
            (Some(p), _) => Some(p),
            (None, s) => s,
        }
    }

    fn remove_link(&mut self, a: NodeId, b: NodeId) {
        self.primary.remove_link(a, b);
        self.secondary.remove_link(a, b);
    }

    /// Learns both directions of `route` as seen from this node.
    fn learn(&mut self, route: &[NodeId], primary: bool) {
        let Some(i) = route.iter().position(|&n| n == self.me) else {
            return;
        };
        let cache = if primary { &mut self.primary } else { &mut self.secondary };
        cache.add(route[i..].to_vec());
        let mut back: Vec<NodeId> = route[..=i].to_vec();
        back.reverse();
        cache.add(back);
    }

    /// Attaches a cached route to a data packet this node originated.
    fn send_from_source(&mut self, ctx: &mut Ctx, mut packet: Packet, send: SendKind) -> Result<(), Packet> {
        let dst = packet.data().expect("data").dst;
        let Some(route) = self.find(dst).and_then(|r| SourceRoute::new(r.to_vec())) else {
            return Err(packet);
        };
        let next = route.hops()[1];
        if let Body::Data(d) = &mut packet.body {
            d.source_route = Some((route, 1));
        }
        ctx.unicast(next, packet, send);
        Ok(())
    }

    fn flush(&mut self, ctx: &mut Ctx) {
        for dst in self.buffer.destinations() {
            if self.find(dst).is_none() {
                continue;
            }
            self.discoveries.remove(&dst);
            for p in self.buffer.take_for(dst) {
                if let Err(p) = self.send_from_source(ctx, p, SendKind::Originate) {
                    buffer_packet(ctx, &mut self.buffer, p);
                }
            }
        }
    }

    fn send_rreq(&mut self, ctx: &mut Ctx, dst: NodeId, attempt: u32) {
        let Some((ttl, wait)) = attempt_plan(attempt) else {
            self.discoveries.remove(&dst);
            for p in self.buffer.take_for(dst) {
                ctx.drop_packet(p, DropReason::NoRoute, Layer::Rtr);
            }
            return;
        };
        self.discoveries.insert(dst, attempt);
        self.rreq_id = self.rreq_id.wrapping_add(1);
        self.seen.insert((self.me, self.rreq_id), (0, ctx.now));
        let rreq = DsrRreq { id: self.rreq_id, originator: self.me, target: dst, route: vec![self.me], ttl };
        let packet = Self::control(ctx, ControlPacket::DsrRreq(rreq));
        ctx.broadcast(packet, SendKind::Originate);
        ctx.set_timer(wait, Timer::Discovery { dst, attempt });
    }

    fn on_rreq(&mut self, ctx: &mut Ctx, rreq: DsrRreq) {
        if rreq.originator == self.me || rreq.route.contains(&self.me) {
            return;
        }
        if ctx.now.saturating_sub(self.last_seen_purge) >= SimTime::from_secs(1) {
            self.last_seen_purge = ctx.now;
            let now = ctx.now;
            self.seen.retain(|_, (_, at)| *at + SEEN_LIFETIME > now);
        }
        let mut full = rreq.route.clone();
        full.push(self.me);
        self.learn(&full, false);
        let hops = full.len() - 1;
        let key = (rreq.originator, rreq.id);
        match self.seen.get_mut(&key) {
            None => {
                self.seen.insert(key, (hops, ctx.now));
            }
            Some((best, _)) if hops < *best => *best = hops,
            Some(_) => return,
        }
        if self.buffer.destinations().contains(&rreq.originator) {
            self.flush(ctx);
        }
        if rreq.target == self.me {
            let Some(route) = SourceRoute::new(full) else { return };
            let index = route.hops().len() - 2;
            let next = route.hops()[index];
            let packet = Self::control(ctx, ControlPacket::DsrRrep(DsrRrep { route, index }));
            ctx.unicast(next, packet, SendKind::Originate);
            return;
        }
        if rreq.ttl <= 1 {
            return;
        }
        let fwd = DsrRreq { route: full, ttl: rreq.ttl - 1, ..rreq };
        let packet = Self::control(ctx, ControlPacket::DsrRreq(fwd));
        ctx.broadcast(packet, SendKind::Forward);
    }

    fn on_rrep(&mut self, ctx: &mut Ctx, rrep: DsrRrep) {
        if rrep.route.hops().get(rrep.index) != Some(&self.me) {
            return;
        }
        self.learn(rrep.route.hops(), rrep.index == 0);
        if rrep.index == 0 {
            self.flush(ctx);
            return;
        }
        let next = rrep.route.hops()[rrep.index - 1];
        let fwd = DsrRrep { index: rrep.index - 1, ..rrep };
        let packet = Self::control(ctx, ControlPacket::DsrRrep(fwd));
        ctx.unicast(next, packet, SendKind::Forward);
    }

    fn on_rerr(&mut self, ctx: &mut Ctx, rerr: DsrRerr) {
        self.remove_link(rerr.broken_from, rerr.broken_to);
        let hops = rerr.back_route.hops();
        if hops.get(rerr.index) != Some(&self.me) || rerr.index + 1 >= hops.len() {
            return;
        }
        let next = hops[rerr.index + 1];
        let fwd = DsrRerr { index: rerr.index + 1, ..rerr };
        let packet = Self::control(ctx, ControlPacket::DsrRerr(fwd));
        ctx.unicast(next, packet, SendKind::Forward);
    }

    fn on_data(&mut self, ctx: &mut Ctx, mut packet: Packet) {
        let Body::Data(d) = &mut packet.body else { return };
        let Some((route, index)) = d.source_route.as_mut() else {
            return;
        };
        if route.hops().get(*index) != Some(&self.me) {
            return;
        }
        let hops = route.hops().to_vec();
        let i = *index;
        if i + 1 == hops.len() {
            self.learn(&hops, false);
            ctx.deliver(packet);
            return;
        }
        *index = i + 1;
        self.learn(&hops, false);
        ctx.unicast(hops[i + 1], packet, SendKind::Forward);
    }
}

impl RoutingProtocol for Dsr {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Dsr
    }

    fn start(&mut self, _ctx: &mut Ctx) {}

    fn on_data_from_app(&mut self, ctx: &mut Ctx, packet: Packet) {
        let dst = packet.data().expect("data").dst;
        if let Err(p) = self.send_from_source(ctx, packet, SendKind::Originate) {
            buffer_packet(ctx, &mut self.buffer, p);
            if !self.discoveries.contains_key(&dst) {
                self.send_rreq(ctx, dst, 0);
            }
        }
    }

    fn on_receive(&mut self, ctx: &mut Ctx, _from: NodeId, packet: Packet) {
        match packet.body {
            Body::Data(_) => self.on_data(ctx, packet),
            Body::Control(ControlPacket::DsrRreq(r)) => self.on_rreq(ctx, r),
            Body::Control(ControlPacket::DsrRrep(r)) => self.on_rrep(ctx, r),
            Body::Control(ControlPacket::DsrRerr(r)) => self.on_rerr(ctx, r),
            Body::Control(_) | Body::Probe { .. } => {}
        }
    }

    fn on_link_failure(&mut self, ctx: &mut Ctx, next_hop: NodeId, mut packet: Packet) {
        self.remove_link(self.me, next_hop);
        let Body::Data(d) = &mut packet.body else {
            ctx.drop_packet(packet, DropReason::RetryLimit, Layer::Mac);
            return;
        };
        let (src, dst) = (d.src, d.dst);
        if src == self.me {
            d.source_route = None;
            if let Err(p) = self.send_from_source(ctx, packet, SendKind::Resend) {
                buffer_packet(ctx, &mut self.buffer, p);
                if !self.discoveries.contains_key(&dst) {
                    self.send_rreq(ctx, dst, 0);
                }
            }
            return;
        }
        let back = d.source_route.as_ref().and_then(|(route, index)| {
            let upto = index.checked_sub(1)?;
            let mut back = route.hops()[..=upto].to_vec();
            back.reverse();
            SourceRoute::new(back)
        });
        if let Some(back_route) = back {
            let next = back_route.hops()[1];
            let rerr = DsrRerr { broken_from: self.me, broken_to: next_hop, back_route, index: 1 };
            let p = Self::control(ctx, ControlPacket::DsrRerr(rerr));
            ctx.unicast(next, p, SendKind::Originate);
        }
        ctx.drop_packet(packet, DropReason::RetryLimit, Layer::Mac);
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::Discovery { dst, attempt } => {
                if self.discoveries.get(&dst) != Some(&attempt) {
                    return;
                }
                if self.find(dst).is_some() {
                    self.flush(ctx);
                    return;
                }
                if !self.buffer.has_for(dst) {
                    self.discoveries.remove(&dst);
                    return;
                }
                self.send_rreq(ctx, dst, attempt + 1);
            }
            Timer::BufferSweep => sweep_buffer(ctx, &mut self.buffer),
            _ => {}
        }
    }

    fn select_route(&self, dst: NodeId, _now: SimTime) -> Option<RouteView> {
        if dst == self.me {
            return Some(RouteView { next_hop: self.me, hops: 0 });
        }
        self.find(dst).map(|r| RouteView { next_hop: r[1], hops: (r.len() - 1) as u32 })
    }

    fn check_invariants(&self) -> Result<(), String> {
        for cache in [&self.primary, &self.secondary] {
            for p in &cache.paths {
                if p.first() != Some(&self.me) || crate::packet::has_repeats(p) {
                    return Err(format!("node {} caches malformed path {p:?}", self.me));
                }
            }
            if cache.paths.len() > cache.capacity {
                return Err(format!("node {} cache over capacity", self.me));
            }
        }
        Ok(())
    }
}
