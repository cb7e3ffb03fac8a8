//! AODV (RFC 3561 timing) and its multipath extension AOMDV.
//!
//! Both share discovery, buffering and error handling. With `multipath` set a
//! route keeps up to three next hops for the same destination sequence
//! number; a new path is accepted only if the neighbor's advertised hop count
//! is below the bound this node itself advertised, which keeps the union of
//! paths loop free.
//!
//! Duplicate RREQs are normally dropped, but a copy that arrived over strictly
//! fewer hops than any earlier copy is processed again. Without this, whichever
//! copy happened to win the jittered flood would fix the reverse route.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{
    buffer_packet, seq_newer, sweep_buffer, Ctx, DropReason, Layer, ProtocolKind, RouteView, RoutingProtocol,
    SendBuffer, SendKind, Timer,
};
use crate::packet::{Body, ControlPacket, Hello, NodeId, Packet, Rerr, Rrep, Rreq};
use crate::time::SimTime;

const ACTIVE_ROUTE_TIMEOUT: SimTime = SimTime::from_secs(3);
const MY_ROUTE_TIMEOUT: SimTime = SimTime::from_secs(6);
const NODE_TRAVERSAL_TIME: SimTime = SimTime::from_millis(40);
const NET_DIAMETER: u32 = 35;
const NET_TRAVERSAL_TIME: SimTime = SimTime::from_millis(2 * 40 * 35);
const PATH_DISCOVERY_TIME: SimTime = SimTime::from_millis(2 * 2 * 40 * 35);
const TTL_START: u32 = 1;
const TTL_INCREMENT: u32 = 2;
const TTL_THRESHOLD: u32 = 7;
const TIMEOUT_BUFFER: u32 = 2;
const RREQ_RETRIES: u32 = 2;
const HELLO_INTERVAL: SimTime = SimTime::from_secs(1);
const ALLOWED_HELLO_LOSS: u64 = 2;
const RERR_RATELIMIT: usize = 10;
const MAX_PATHS: usize = 3;

/// TTL and wait time of each discovery attempt: an expanding ring up to the
/// threshold, then network-wide floods with exponential backoff.
fn attempt_plan(attempt: u32) -> Option<(u32, SimTime)> {
    let ring_steps = (TTL_THRESHOLD - TTL_START) / TTL_INCREMENT + 1;
    if attempt < ring_steps {
        let ttl = TTL_START + attempt * TTL_INCREMENT;
        let wait = NODE_TRAVERSAL_TIME.mul(2 * u64::from(ttl + TIMEOUT_BUFFER));
        return Some((ttl, wait));
    }
    let retry = attempt - ring_steps;
    (retry <= RREQ_RETRIES).then(|| (NET_DIAMETER, NET_TRAVERSAL_TIME.mul(1 << retry)))
}

#[derive(Debug, Clone)]
struct Path {
    next_hop: NodeId,
    hops: u32,
    /// Hop count the neighbor advertised (multipath only).
    nbr_adv: u32,
    expires: SimTime,
}

#[derive(Debug, Clone, Default)]
struct Route {
    seq: Option<u32>,
    valid: bool,
    /// Sorted by hop count; ties keep insertion order.
    paths: Vec<Path>,
    /// Multipath only: the hop count this node advertised for `seq`.
    adv: Option<u32>,
    precursors: BTreeSet<NodeId>,
    /// Rotates replies over reverse paths.
    rotate: usize,
}

impl Route {
    fn live(&self, now: SimTime) -> Option<&Path> {
        if !self.valid {
            return None;
        }
        self.paths.iter().find(|p| p.expires > now)
    }

    fn live_mut(&mut self, now: SimTime) -> Option<&mut Path> {
        if !self.valid {
            return None;
        }
        self.paths.iter_mut().find(|p| p.expires > now)
    }

    fn sort_paths(&mut self) {
        self.paths.sort_by_key(|p| p.hops);
    }
}

#[derive(Debug)]
struct Seen {
    best_hops: u32,
    at: SimTime,
    reply_seq: Option<u32>,
    replied_via: Vec<NodeId>,
}

#[derive(Debug)]
pub struct Aodv {
    me: NodeId,
    multipath: bool,
    seq: u32,
    rreq_id: u32,
    routes: BTreeMap<NodeId, Route>,
    seen: HashMap<(NodeId, u32), Seen>,
    last_seen_purge: SimTime,
    discoveries: BTreeMap<NodeId, u32>,
    buffer: SendBuffer,
    /// Neighbors that have sent HELLOs, with the last time anything was heard.
    hello_neighbors: BTreeMap<NodeId, SimTime>,
    last_active: Option<SimTime>,
    hello_armed: bool,
    rerr_times: VecDeque<SimTime>,
}

/// What a route update changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Update {
    Rejected,
    Refreshed,
    Changed,
}

impl Aodv {
    pub fn new(me: NodeId, multipath: bool) -> Self {
        Aodv {
            me,
            multipath,
            seq: 0,
            rreq_id: 0,
            routes: BTreeMap::new(),
            seen: HashMap::new(),
            last_seen_purge: SimTime::ZERO,
            discoveries: BTreeMap::new(),
            buffer: SendBuffer::default(),
            hello_neighbors: BTreeMap::new(),
            last_active: None,
            hello_armed: false,
            rerr_times: VecDeque::new(),
        }
    }

    fn control(ctx: &mut Ctx, c: ControlPacket) -> Packet {
        Packet { id: ctx.new_id(), body: Body::Control(c) }
    }

    fn live_next_hop(&self, dst: NodeId, now: SimTime) -> Option<NodeId> {
        self.routes.get(&dst).and_then(|r| r.live(now)).map(|p| p.next_hop)
    }

    fn update_route(
        &mut self,
        now: SimTime,
        dst: NodeId,
        seq: Option<u32>,
        hops: u32,
        next_hop: NodeId,
        nbr_adv: u32,
        lifetime: SimTime,
    ) -> Update {
        let expires = now + lifetime;
        let path = Path { next_hop, hops, nbr_adv, expires };
        let r = self.routes.entry(dst).or_default();
        if self.multipath {
            return Self::update_multipath(r, now, seq, path);
        }
        let live = r.live(now).map(|p| (p.next_hop, p.hops));
        let accept = match (seq, r.seq) {
            (_, None) => live.is_none_or(|(_, h)| hops < h || seq.is_some()),
            (None, Some(_)) => live.is_none(),
            (Some(s), Some(old)) => seq_newer(s, old) || (s == old && live.is_none_or(|(_, h)| hops < h)),
        };
        if accept {
            if seq.is_some() {
                r.seq = seq;
            }
            r.valid = true;
            r.paths = vec![path];
            return Update::Changed;
        }
        match r.live_mut(now) {
            Some(p) if p.next_hop == next_hop && p.hops == hops => {
                p.expires = p.expires.max(expires);
                Update::Refreshed
            }
            _ => Update::Rejected,
        }
    }

    fn update_multipath(r: &mut Route, now: SimTime, seq: Option<u32>, path: Path) -> Update {
        let fresher = match (seq, r.seq) {
            (Some(s), Some(old)) => seq_newer(s, old),
            (Some(_), None) => true,
            (None, _) => false,
        };
        if fresher {
            r.seq = seq;
            r.adv = None;
            r.valid = true;
            r.paths = vec![path];
            return Update::Changed;
        }
        if seq.is_some() && seq != r.seq {
            return Update::Rejected;
        }
        r.paths.retain(|p| p.expires > now);
        if !r.valid {
            r.valid = true;
            r.paths.clear();
        }
        if seq.is_none() && !r.paths.is_empty() {
            // Hearsay without a sequence number never adds a parallel path.
            if let Some(p) = r.paths.iter_mut().find(|p| p.next_hop == path.next_hop) {
                p.expires = p.expires.max(path.expires);
                return Update::Refreshed;
            }
            return Update::Rejected;
        }
        let admissible = r.adv.is_none_or(|a| path.nbr_adv < a);
        if let Some(p) = r.paths.iter_mut().find(|p| p.next_hop == path.next_hop) {
            if admissible && path.hops < p.hops {
                *p = path;
                r.sort_paths();
                return Update::Changed;
            }
            p.expires = p.expires.max(path.expires);
            return Update::Refreshed;
        }
        if !admissible {
            return Update::Rejected;
        }
        if r.paths.len() < MAX_PATHS {
            r.paths.push(path);
            r.sort_paths();
            return Update::Changed;
        }
        let worst = r.paths.last().expect("full path list").hops;
        if path.hops < worst {
            r.paths.pop();
            r.paths.push(path);
            r.sort_paths();
            return Update::Changed;
        }
        Update::Rejected
    }

    /// The hop count this node announces for `dst`; fixed per sequence number
    /// in multipath mode, the current best in single-path mode.
    fn advertise(&mut self, dst: NodeId, now: SimTime) -> (u32, u32) {
        if dst == self.me {
            return (0, 0);
        }
        let multipath = self.multipath;
        let r = self.routes.get_mut(&dst).expect("advertised route exists");
        let hops = r.live(now).map_or(0, |p| p.hops);
        if !multipath {
            return (hops, hops);
        }
        let adv = *r.adv.get_or_insert_with(|| r.paths.iter().map(|p| p.nbr_adv + 1).max().unwrap_or(hops));
        (hops, adv)
    }

    fn mark_active(&mut self, ctx: &mut Ctx) {
        self.last_active = Some(ctx.now);
        if !self.hello_armed {
            self.hello_armed = true;
            ctx.set_timer(HELLO_INTERVAL, Timer::Hello);
        }
    }

    fn refresh(&mut self, dst: NodeId, now: SimTime) {
        if let Some(p) = self.routes.get_mut(&dst).and_then(|r| r.live_mut(now)) {
            p.expires = p.expires.max(now + ACTIVE_ROUTE_TIMEOUT);
        }
    }

    fn send_data(&mut self, ctx: &mut Ctx, packet: Packet, send: SendKind) -> Result<(), Packet> {
        let d = packet.data().expect("data packet");
        let (src, dst) = (d.src, d.dst);
        let Some(nh) = self.live_next_hop(dst, ctx.now) else {
            return Err(packet);
        };
        self.refresh(dst, ctx.now);
        self.refresh(src, ctx.now);
        self.refresh(nh, ctx.now);
        self.mark_active(ctx);
        ctx.unicast(nh, packet, send);
        Ok(())
    }

    fn flush(&mut self, ctx: &mut Ctx, dst: NodeId) {
        if self.live_next_hop(dst, ctx.now).is_none() {
            return;
        }
        self.discoveries.remove(&dst);
        for p in self.buffer.take_for(dst) {
            if let Err(p) = self.send_data(ctx, p, SendKind::Originate) {
                buffer_packet(ctx, &mut self.buffer, p);
            }
        }
    }

    fn start_discovery(&mut self, ctx: &mut Ctx, dst: NodeId) {
        if self.discoveries.contains_key(&dst) {
            return;
        }
        self.send_rreq(ctx, dst, 0);
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
        self.seq = self.seq.wrapping_add(1);
        self.rreq_id = self.rreq_id.wrapping_add(1);
        self.seen.insert(
            (self.me, self.rreq_id),
            Seen { best_hops: 0, at: ctx.now, reply_seq: None, replied_via: Vec::new() },
        );
        let target_seq = self.routes.get(&dst).and_then(|r| r.seq);
        let rreq = Rreq {
            id: self.rreq_id,
            originator: self.me,
            orig_seq: self.seq,
            target: dst,
            target_seq,
            hop_count: 0,
            advertised: 0,
            ttl,
        };
        let packet = Self::control(ctx, ControlPacket::Rreq(rreq));
        ctx.broadcast(packet, SendKind::Originate);
        ctx.set_timer(wait, Timer::Discovery { dst, attempt });
    }

    fn heard(&mut self, ctx: &mut Ctx, from: NodeId) {
        if let Some(t) = self.hello_neighbors.get_mut(&from) {
            *t = ctx.now;
        }
        // A neighbor is always reachable in one hop, sequence number unknown.
        if self.update_route(ctx.now, from, None, 1, from, 0, ACTIVE_ROUTE_TIMEOUT) == Update::Changed {
            self.flush(ctx, from);
        }
    }

    fn purge_seen(&mut self, now: SimTime) {
        if now.saturating_sub(self.last_seen_purge) < SimTime::from_secs(1) {
            return;
        }
        self.last_seen_purge = now;
        self.seen.retain(|_, s| s.at + PATH_DISCOVERY_TIME > now);
    }

    fn on_rreq(&mut self, ctx: &mut Ctx, from: NodeId, rreq: Rreq) {
        if rreq.originator == self.me {
            return;
        }
        self.purge_seen(ctx.now);
        let hops = rreq.hop_count + 1;
        let key = (rreq.originator, rreq.id);
        let (first, improved) = match self.seen.get_mut(&key) {
            None => {
                self.seen.insert(key, Seen { best_hops: hops, at: ctx.now, reply_seq: None, replied_via: Vec::new() });
                (true, false)
            }
            Some(s) if hops < s.best_hops => {
                s.best_hops = hops;
                (false, true)
            }
            Some(_) => (false, false),
        };
        if !first && !improved && !self.multipath {
            return;
        }
        let reverse = self.update_route(
            ctx.now,
            rreq.originator,
            Some(rreq.orig_seq),
            hops,
            from,
            rreq.advertised,
            ACTIVE_ROUTE_TIMEOUT,
        );
        if reverse == Update::Changed {
            self.flush(ctx, rreq.originator);
        }

        if rreq.target == self.me {
            let seen = self.seen.get_mut(&key).expect("inserted above");
            let reply_seq = match seen.reply_seq {
                Some(s) => s,
                None => {
                    // Only a request for exactly the next number moves it on;
                    // bumping on every reply splits neighbors' views of our
                    // freshness and lets longer paths outrank shorter ones.
                    if rreq.target_seq == Some(self.seq.wrapping_add(1)) {
                        self.seq = self.seq.wrapping_add(1);
                    }
                    seen.reply_seq = Some(self.seq);
                    self.seq
                }
            };
            let distinct = !seen.replied_via.contains(&from);
            let reply = if self.multipath {
                (distinct && seen.replied_via.len() < MAX_PATHS) || improved
            } else {
                first || improved
            };
            if !reply {
                return;
            }
            seen.replied_via.push(from);
            let rrep = Rrep {
                originator: rreq.originator,
                target: self.me,
                target_seq: reply_seq,
                hop_count: 0,
                advertised: 0,
                lifetime: MY_ROUTE_TIMEOUT,
            };
            let packet = Self::control(ctx, ControlPacket::Rrep(rrep));
            ctx.unicast(from, packet, SendKind::Originate);
            return;
        }
        if !first && !improved {
            return;
        }

        // Intermediate reply from a fresh enough active route.
        let now = ctx.now;
        let fresh = self.routes.get(&rreq.target).and_then(|r| {
            let p = r.live(now)?;
            let s = r.seq?;
            let ok = rreq.target_seq.is_none_or(|t| s == t || seq_newer(s, t));
            (ok && p.next_hop != from).then(|| (s, p.expires))
        });
        if let Some((s, expires)) = fresh {
            let (my_hops, adv) = self.advertise(rreq.target, now);
            let route = self.routes.get_mut(&rreq.target).expect("route exists");
            route.precursors.insert(from);
            // The route is about to carry traffic; do not hand out one that
            // is moments from expiring.
            let fwd = route.live_mut(now).expect("live");
            fwd.expires = fwd.expires.max(now + ACTIVE_ROUTE_TIMEOUT);
            let (fwd_nh, expires) = (fwd.next_hop, fwd.expires.max(expires));
            if let Some(rev) = self.routes.get_mut(&rreq.originator) {
                rev.precursors.insert(fwd_nh);
            }
            let rrep = Rrep {
                originator: rreq.originator,
                target: rreq.target,
                target_seq: s,
                hop_count: my_hops,
                advertised: adv,
                lifetime: expires.saturating_sub(now),
            };
            let packet = Self::control(ctx, ControlPacket::Rrep(rrep));
            ctx.unicast(from, packet, SendKind::Originate);
            return;
        }

        if rreq.ttl <= 1 {
            return;
        }
        let known = self.routes.get(&rreq.target).and_then(|r| r.seq);
        let target_seq = match (rreq.target_seq, known) {
            (Some(a), Some(b)) => Some(if seq_newer(b, a) { b } else { a }),
            (a, b) => a.or(b),
        };
        let (hop_count, advertised) = if self.multipath {
            let (_, adv) = self.advertise(rreq.originator, now);
            (hops, adv)
        } else {
            (hops, hops)
        };
        let fwd = Rreq { hop_count, advertised, ttl: rreq.ttl - 1, target_seq, ..rreq };
        let packet = Self::control(ctx, ControlPacket::Rreq(fwd));
        ctx.broadcast(packet, SendKind::Forward);
    }

    fn on_rrep(&mut self, ctx: &mut Ctx, from: NodeId, rrep: Rrep) {
        let hops = rrep.hop_count + 1;
        let lifetime = rrep.lifetime.max(ACTIVE_ROUTE_TIMEOUT);
        let update =
            self.update_route(ctx.now, rrep.target, Some(rrep.target_seq), hops, from, rrep.advertised, lifetime);
        if rrep.originator == self.me {
            if update == Update::Changed {
                self.flush(ctx, rrep.target);
            }
            return;
        }
        if update != Update::Changed {
            return;
        }
        let now = ctx.now;
        let reverse_nh = {
            let Some(rev) = self.routes.get_mut(&rrep.originator) else {
                return;
            };
            if !rev.valid {
                return;
            }
            let live: Vec<NodeId> = rev.paths.iter().filter(|p| p.expires > now).map(|p| p.next_hop).collect();
            if live.is_empty() {
                return;
            }
            let nh = live[rev.rotate % live.len()];
            rev.rotate = rev.rotate.wrapping_add(1);
            rev.precursors.insert(from);
            nh
        };
        let (my_hops, adv) = self.advertise(rrep.target, now);
        if let Some(r) = self.routes.get_mut(&rrep.target) {
            r.precursors.insert(reverse_nh);
        }
        let fwd = Rrep { hop_count: my_hops, advertised: adv, ..rrep };
        let packet = Self::control(ctx, ControlPacket::Rrep(fwd));
        ctx.unicast(reverse_nh, packet, SendKind::Forward);
    }

    fn send_rerr(&mut self, ctx: &mut Ctx, unreachable: Vec<(NodeId, u32)>, send: SendKind) {
        if unreachable.is_empty() {
            return;
        }
        while self.rerr_times.front().is_some_and(|t| *t + SimTime::from_secs(1) <= ctx.now) {
            self.rerr_times.pop_front();
        }
        if self.rerr_times.len() >= RERR_RATELIMIT {
            return;
        }
        self.rerr_times.push_back(ctx.now);
        let packet = Self::control(ctx, ControlPacket::Rerr(Rerr { unreachable }));
        ctx.broadcast(packet, send);
    }

    /// Drops every path through `nh`; returns destinations that became
    /// unreachable and have precursors to tell.
    fn break_link(&mut self, nh: NodeId, rerr_seq: Option<&BTreeMap<NodeId, u32>>) -> Vec<(NodeId, u32)> {
        let mut lost = Vec::new();
        for (&dst, r) in self.routes.iter_mut() {
            if !r.valid {
                continue;
            }
            if let Some(seqs) = rerr_seq {
                if !seqs.contains_key(&dst) {
                    continue;
                }
            }
            let before = r.paths.len();
            if self.multipath {
                r.paths.retain(|p| p.next_hop != nh);
            } else if r.paths.first().is_some_and(|p| p.next_hop == nh) {
                r.paths.clear();
            }
            if r.paths.len() == before || !r.paths.is_empty() {
                continue;
            }
            r.valid = false;
            let reported = rerr_seq.and_then(|m| m.get(&dst).copied());
            let next = match (r.seq, reported) {
                (Some(s), Some(t)) => Some(if seq_newer(t, s) { t } else { s }),
                (Some(s), None) if !self.multipath => Some(s.wrapping_add(1)),
                (s, t) => s.or(t),
            };
            r.seq = next;
            if !r.precursors.is_empty() {
                lost.push((dst, next.unwrap_or(0)));
            }
        }
        lost
    }

    fn on_rerr(&mut self, ctx: &mut Ctx, from: NodeId, rerr: Rerr) {
        let seqs: BTreeMap<NodeId, u32> = rerr.unreachable.into_iter().collect();
        let lost = self.break_link(from, Some(&seqs));
        self.send_rerr(ctx, lost, SendKind::Forward);
    }

    fn handle_data(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet) {
        let d = packet.data().expect("data");
        if d.dst == self.me {
            // The sink is an endpoint of the route, so it keeps up HELLOs too;
            // a silent sink would be declared lost by its upstream neighbor.
            self.refresh(d.src, ctx.now);
            self.mark_active(ctx);
            ctx.deliver(packet);
            return;
        }
        let dst = d.dst;
        if let Some(r) = self.routes.get_mut(&dst) {
            r.precursors.insert(from);
        }
        if let Err(p) = self.send_data(ctx, packet, SendKind::Forward) {
            let seq = self.routes.get(&dst).and_then(|r| r.seq).unwrap_or(0);
            ctx.drop_packet(p, DropReason::NoRoute, Layer::Rtr);
            self.send_rerr(ctx, vec![(dst, seq)], SendKind::Originate);
        }
    }

    fn lose_neighbor(&mut self, ctx: &mut Ctx, nh: NodeId) {
        self.hello_neighbors.remove(&nh);
        let lost = self.break_link(nh, None);
        self.send_rerr(ctx, lost, SendKind::Originate);
    }

    fn hello_tick(&mut self, ctx: &mut Ctx) {
        let now = ctx.now;
        let deadline = HELLO_INTERVAL.mul(ALLOWED_HELLO_LOSS);
        let silent: Vec<NodeId> =
            self.hello_neighbors.iter().filter(|(_, &t)| t + deadline < now).map(|(&n, _)| n).collect();
        for n in silent {
            self.lose_neighbor(ctx, n);
        }
        let active = self.last_active.is_some_and(|t| t + ACTIVE_ROUTE_TIMEOUT > now);
        if active {
            let packet = Self::control(ctx, ControlPacket::Hello(Hello { seq: self.seq }));
            ctx.broadcast(packet, SendKind::Originate);
        }
        if active || !self.hello_neighbors.is_empty() {
            ctx.set_timer(HELLO_INTERVAL, Timer::Hello);
        } else {
            self.hello_armed = false;
        }
    }
}

impl RoutingProtocol for Aodv {
    fn kind(&self) -> ProtocolKind {
        if self.multipath {
            ProtocolKind::Aomdv
        } else {
            ProtocolKind::Aodv
        }
    }

    fn start(&mut self, _ctx: &mut Ctx) {}

    fn on_data_from_app(&mut self, ctx: &mut Ctx, packet: Packet) {
        let dst = packet.data().expect("data").dst;
        if let Err(p) = self.send_data(ctx, packet, SendKind::Originate) {
            buffer_packet(ctx, &mut self.buffer, p);
            self.start_discovery(ctx, dst);
        }
    }

    fn on_receive(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet) {
        self.heard(ctx, from);
        match packet.body {
            Body::Data(_) => self.handle_data(ctx, from, packet),
            Body::Control(ControlPacket::Rreq(r)) => self.on_rreq(ctx, from, r),
            Body::Control(ControlPacket::Rrep(r)) => self.on_rrep(ctx, from, r),
            Body::Control(ControlPacket::Rerr(r)) => self.on_rerr(ctx, from, r),
            Body::Control(ControlPacket::Hello(h)) => {
                self.hello_neighbors.insert(from, ctx.now);
                let life = HELLO_INTERVAL.mul(ALLOWED_HELLO_LOSS);
                if self.update_route(ctx.now, from, Some(h.seq), 1, from, 0, life) == Update::Changed {
                    self.flush(ctx, from);
                }
                if !self.hello_armed {
                    self.hello_armed = true;
                    ctx.set_timer(HELLO_INTERVAL, Timer::Hello);
                }
            }
            Body::Control(_) | Body::Probe { .. } => {}
        }
    }

    fn on_link_ok(&mut self, ctx: &mut Ctx, to: NodeId) {
        // An acknowledged frame proves the link as well as a HELLO does.
        if let Some(t) = self.hello_neighbors.get_mut(&to) {
            *t = ctx.now;
        }
    }

    fn on_link_failure(&mut self, ctx: &mut Ctx, next_hop: NodeId, packet: Packet) {
        self.lose_neighbor(ctx, next_hop);
        let Some(d) = packet.data() else {
            ctx.drop_packet(packet, DropReason::RetryLimit, Layer::Mac);
            return;
        };
        let (src, dst) = (d.src, d.dst);
        if src == self.me {
            if let Err(p) = self.send_data(ctx, packet, SendKind::Resend) {
                buffer_packet(ctx, &mut self.buffer, p);
                self.start_discovery(ctx, dst);
            }
            return;
        }
        if self.multipath {
            if let Err(p) = self.send_data(ctx, packet, SendKind::Resend) {
                ctx.drop_packet(p, DropReason::RetryLimit, Layer::Mac);
            }
            return;
        }
        ctx.drop_packet(packet, DropReason::RetryLimit, Layer::Mac);
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::Discovery { dst, attempt } => {
                if self.discoveries.get(&dst) != Some(&attempt) {
                    return;
                }
                if self.live_next_hop(dst, ctx.now).is_some() {
                    self.flush(ctx, dst);
                    return;
                }
                if !self.buffer.has_for(dst) {
                    self.discoveries.remove(&dst);
                    return;
                }
                self.send_rreq(ctx, dst, attempt + 1);
            }
            Timer::BufferSweep => sweep_buffer(ctx, &mut self.buffer),
            Timer::Hello => self.hello_tick(ctx),
            Timer::Periodic | Timer::Triggered => {}
        }
    }

    fn select_route(&self, dst: NodeId, now: SimTime) -> Option<RouteView> {
        if dst == self.me {
            return Some(RouteView { next_hop: self.me, hops: 0 });
        }
        let p = self.routes.get(&dst)?.live(now)?;
        Some(RouteView { next_hop: p.next_hop, hops: p.hops })
    }

    fn next_hops(&self, dst: NodeId, now: SimTime) -> Vec<RouteView> {
        match self.routes.get(&dst) {
            Some(r) if r.valid => r
                .paths
                .iter()
                .filter(|p| p.expires > now)
                .map(|p| RouteView { next_hop: p.next_hop, hops: p.hops })
                .collect(),
            _ => Vec::new(),
        }
    }

    fn check_invariants(&self) -> Result<(), String> {
        for (dst, r) in &self.routes {
            if !self.multipath && r.paths.len() > 1 {
                return Err(format!("node {} keeps {} next hops to {dst}", self.me, r.paths.len()));
            }
            if r.paths.len() > MAX_PATHS {
                return Err(format!("node {} keeps {} paths to {dst}", self.me, r.paths.len()));
            }
            let mut hops: Vec<NodeId> = r.paths.iter().map(|p| p.next_hop).collect();
            hops.sort_unstable();
            hops.dedup();
            if hops.len() != r.paths.len() {
                return Err(format!("node {} has repeated next hops to {dst}", self.me));
            }
            if let Some(adv) = r.adv {
                for p in &r.paths {
                    if p.nbr_adv >= adv || p.hops > adv {
                        return Err(format!(
                            "node {} path to {dst} via {} (hops {}, neighbor adv {}) violates advertised bound {adv}",
                            self.me, p.next_hop, p.hops, p.nbr_adv
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::Net;
    use super::*;
    use crate::packet::PacketKind;

    fn line(kind: ProtocolKind, n: u32) -> Net {
        let edges: Vec<(NodeId, NodeId)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Net::from_edges(kind, n as usize, &edges)
    }

    #[test]
    fn attempt_plan_matches_rfc_ring() {
        let ttls: Vec<u32> = (0..8).filter_map(attempt_plan).map(|(t, _)| t).collect();
        assert_eq!(ttls, vec![1, 3, 5, 7, 35, 35, 35]);
        assert_eq!(attempt_plan(0).unwrap().1, SimTime::from_millis(240));
        assert_eq!(attempt_plan(4).unwrap().1, SimTime::from_millis(2800));
        assert_eq!(attempt_plan(6).unwrap().1, SimTime::from_millis(11200));
    }

    #[test]
    fn no_route_buffers_and_sends_one_rreq() {
        let mut net = line(ProtocolKind::Aodv, 3);
        net.send_data(0, 2);
        assert_eq!(net.control_count(PacketKind::Rreq), 1);
        assert!(net.delivered.is_empty() && net.dropped.is_empty());
    }

    #[test]
    fn line_discovery_delivers_over_bfs_hops() {
        for kind in [ProtocolKind::Aodv, ProtocolKind::Aomdv] {
            let mut net = line(kind, 5);
            net.send_data(0, 4);
            net.run_until(SimTime::from_secs(2));
            assert_eq!(net.delivered.len(), 1, "{kind}");
            assert_eq!(net.route(0, 4).unwrap().hops, 4);
            assert_eq!(net.route(4, 0).unwrap().hops, 4);
        }
    }

    fn rrep_seqs(net: &Net, from: NodeId) -> Vec<u32> {
        net.sent_control
            .iter()
            .filter_map(|(n, p, _)| match &p.body {
                Body::Control(ControlPacket::Rrep(r)) if *n == from => Some(r.target_seq),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn destination_bumps_only_when_asked_for_the_next_number() {
        let mut net = Net::from_edges(ProtocolKind::Aodv, 3, &[(0, 1), (1, 2), (0, 2)]);
        net.send_data(0, 2);
        net.run_until(SimTime::from_millis(10));
        assert_eq!(rrep_seqs(&net, 2), vec![0]);

        // Losing the direct link makes node 0 ask for number 1.
        net.links[0].retain(|&n| n != 2);
        net.links[2].retain(|&n| n != 0);
        net.send_data(0, 2);
        net.run_until(SimTime::from_secs(3));
        assert_eq!(rrep_seqs(&net, 2), vec![0, 1]);
        assert_eq!(net.nodes[0].select_route(2, net.now).map(|r| r.hops), Some(2));
    }

    #[test]
    fn idle_network_is_silent() {
        for kind in [ProtocolKind::Aodv, ProtocolKind::Aomdv] {
            let mut net = line(kind, 4);
            net.run_until(SimTime::from_secs(60));
            assert!(net.sent_control.is_empty());
        }
    }

    #[test]
    fn aomdv_square_keeps_two_paths() {
        // 0 = S, 1 = A, 2 = B, 3 = D.
        let mut net = Net::from_edges(ProtocolKind::Aomdv, 4, &[(0, 1), (1, 3), (0, 2), (2, 3)]);
        net.send_data(0, 3);
        net.run_until(SimTime::from_secs(2));
        let paths = net.nodes[0].next_hops(3, net.now);
        let mut hops: Vec<(NodeId, u32)> = paths.iter().map(|v| (v.next_hop, v.hops)).collect();
        hops.sort_unstable();
        assert_eq!(hops, vec![(1, 2), (2, 2)]);
        for n in &net.nodes {
            n.check_invariants().unwrap();
        }
    }

    #[test]
    fn aomdv_falls_back_without_rerr() {
        let mut net = Net::from_edges(ProtocolKind::Aomdv, 4, &[(0, 1), (1, 3), (0, 2), (2, 3)]);
        net.send_data(0, 3);
        net.run_until(SimTime::from_secs(1));
        let first = net.route(0, 3).unwrap().next_hop;
        net.cut(0, first);
        let rerr_before = net.control_count(PacketKind::Rerr);
        net.send_data(0, 3);
        net.run_until(SimTime::from_secs(2));
        assert_eq!(net.delivered.len(), 2);
        assert_eq!(net.control_count(PacketKind::Rerr), rerr_before);
        assert_ne!(net.route(0, 3).unwrap().next_hop, first);
    }

    #[test]
    fn aodv_break_sends_rerr_and_rediscovers() {
        // 0-1-2-3 with a detour 1-4-2.
        let mut net = Net::from_edges(ProtocolKind::Aodv, 5, &[(0, 1), (1, 2), (2, 3), (1, 4), (4, 2)]);
        net.send_data(0, 3);
        net.run_until(SimTime::from_secs(1));
        assert_eq!(net.delivered.len(), 1);
        net.cut(1, 2);
        net.send_data(0, 3);
        net.run_until(SimTime::from_secs(3));
        assert!(net.control_count(PacketKind::Rerr) >= 1);
        assert!(net.dropped.iter().any(|(n, _, r)| *n == 1 && *r == DropReason::RetryLimit));
        net.send_data(0, 3);
        net.run_until(SimTime::from_secs(6));
        assert_eq!(net.delivered.len(), 2);
        assert_eq!(net.route(0, 3).unwrap().hops, 4);
    }

    #[test]
    fn expired_route_is_not_selected() {
        let mut net = line(ProtocolKind::Aodv, 3);
        net.send_data(0, 2);
        net.run_until(SimTime::from_secs(1));
        assert!(net.route(0, 2).is_some());
        net.run_until(SimTime::from_secs(30));
        assert!(net.route(0, 2).is_none());
        assert_eq!(net.route(0, 0), Some(RouteView { next_hop: 0, hops: 0 }));
    }

    #[test]
    fn unreachable_destination_gives_up_with_no_route() {
        let mut net = Net::from_edges(ProtocolKind::Aodv, 3, &[(0, 1)]);
        net.send_data(0, 2);
        net.run_until(SimTime::from_secs(40));
        assert_eq!(net.dropped.len(), 1);
        assert_eq!(net.dropped[0].2, DropReason::NoRoute);
        let originated = net
            .sent_control
            .iter()
            .filter(|(n, p, k)| *n == 0 && p.kind() == PacketKind::Rreq && *k == SendKind::Originate)
            .count();
        assert_eq!(originated, 7);
    }
}
