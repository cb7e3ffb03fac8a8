//! DSDV: proactive distance vector with destination sequence numbers.
//!
//! Every node owns an even sequence number, bumped by two with each periodic
//! full dump. A broken link is advertised with the next odd number and an
//! infinite metric. Changes trigger incremental updates, at most one per
//! second.
//!
//! When a fresher sequence number first arrives over a longer path, the node
//! keeps its current route for up to one period to give its shorter next hop
//! a chance to deliver the same number. Sequence numbers never go backwards,
//! so this delay cannot create loops.

use std::collections::BTreeMap;

use rand::Rng;

use super::{seq_newer, Ctx, DropReason, Layer, ProtocolKind, RouteView, RoutingProtocol, SendKind, Timer};
use crate::packet::{Body, ControlPacket, DsdvEntry, DsdvUpdate, NodeId, Packet};
use crate::time::SimTime;

pub const PERIODIC_INTERVAL: SimTime = SimTime::from_secs(15);
const TRIGGER_SPACING: SimTime = SimTime::from_secs(1);
const NEIGHBOR_TIMEOUT: SimTime = SimTime::from_secs(45);
const SETTLE: SimTime = SimTime::from_secs(16);
/// Largest update packet: 24 header bytes plus 12 per entry.
const MAX_UPDATE_BYTES: u32 = 1500;

#[derive(Debug, Clone)]
struct Entry {
    next_hop: NodeId,
    /// `None` means unreachable.
    metric: Option<u32>,
    seq: u32,
    /// Set when a change should go out in the next incremental update.
    changed: bool,
    /// When the sequence number was last refreshed.
    updated: SimTime,
    /// Fresher but longer alternative waiting out the settling period.
    candidate: Option<(u32, u32, NodeId)>,
}

#[derive(Debug)]
pub struct Dsdv {
    me: NodeId,
    seq: u32,
    table: BTreeMap<NodeId, Entry>,
    neighbors: BTreeMap<NodeId, SimTime>,
    last_update: Option<SimTime>,
    trigger_pending: bool,
    /// Own sequence number moved since the last update went out.
    own_changed: bool,
}

fn worse(a: Option<u32>, b: Option<u32>) -> bool {
    match (a, b) {
        (None, None) => false,
        (None, Some(_)) => true,
        (Some(_), None) => false,
        (Some(x), Some(y)) => x > y,
    }
}

impl Dsdv {
    pub fn new(me: NodeId) -> Self {
        Dsdv {
            me,
            seq: 0,
            table: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            last_update: None,
            trigger_pending: false,
            own_changed: false,
        }
    }

    fn schedule_trigger(&mut self, ctx: &mut Ctx) {
        if self.trigger_pending {
            return;
        }
        self.trigger_pending = true;
        let earliest = self.last_update.map_or(ctx.now, |t| t + TRIGGER_SPACING);
        ctx.set_timer(earliest.saturating_sub(ctx.now), Timer::Triggered);
    }

    fn send_entries(&mut self, ctx: &mut Ctx, entries: Vec<DsdvEntry>, full: bool) {
        let per_packet = ((MAX_UPDATE_BYTES - 24) / 12) as usize;
        for chunk in entries.chunks(per_packet) {
            let update = DsdvUpdate { full, entries: chunk.to_vec() };
            let packet = Packet { id: ctx.new_id(), body: Body::Control(ControlPacket::DsdvUpdate(update)) };
            ctx.broadcast(packet, SendKind::Originate);
        }
        self.last_update = Some(ctx.now);
        self.own_changed = false;
    }

    fn full_dump(&mut self, ctx: &mut Ctx) {
        self.seq = self.seq.wrapping_add(2);
        let mut entries = vec![DsdvEntry { dst: self.me, seq: self.seq, metric: Some(0) }];
        for (&dst, e) in self.table.iter_mut() {
            e.changed = false;
            entries.push(DsdvEntry { dst, seq: e.seq, metric: e.metric });
        }
        self.send_entries(ctx, entries, true);
    }

    fn incremental(&mut self, ctx: &mut Ctx) {
        let mut entries = Vec::new();
        for (&dst, e) in self.table.iter_mut() {
            if e.changed {
                e.changed = false;
                entries.push(DsdvEntry { dst, seq: e.seq, metric: e.metric });
            }
        }
        if !entries.is_empty() || self.own_changed {
            entries.insert(0, DsdvEntry { dst: self.me, seq: self.seq, metric: Some(0) });
            self.send_entries(ctx, entries, false);
        }
    }

    fn break_neighbor(&mut self, ctx: &mut Ctx, nh: NodeId) {
        self.neighbors.remove(&nh);
        let mut any = false;
        for e in self.table.values_mut() {
            if e.next_hop == nh && e.metric.is_some() {
                e.metric = None;
                e.seq |= 1;
                e.changed = true;
                e.candidate = None;
                any = true;
            }
        }
        if any {
            self.schedule_trigger(ctx);
        }
    }

    fn adopt(e: &mut Entry, seq: u32, metric: Option<u32>, from: NodeId, now: SimTime) -> bool {
        let significant = e.metric != metric || (metric.is_some() && e.next_hop != from);
        e.seq = seq;
        e.metric = metric;
        e.next_hop = from;
        e.updated = now;
        if e.candidate.is_some_and(|(s, _, _)| !seq_newer(s, seq)) {
            e.candidate = None;
        }
        significant
    }

    fn on_update(&mut self, ctx: &mut Ctx, from: NodeId, update: DsdvUpdate) {
        let now = ctx.now;
        self.neighbors.insert(from, now);
        let mut trigger = false;
        for adv in update.entries {
            if adv.dst == self.me {
                if adv.metric.is_none() && !seq_newer(self.seq, adv.seq) {
                    // Someone reports us unreachable with a number we must beat.
                    self.seq = adv.seq.wrapping_add(if adv.seq % 2 == 0 { 2 } else { 1 });
                    self.own_changed = true;
                    trigger = true;
                }
                continue;
            }
            let metric = adv.metric.map(|m| m + 1);
            match self.table.get_mut(&adv.dst) {
                None => {
                    if metric.is_some() {
                        self.table.insert(
                            adv.dst,
                            Entry {
                                next_hop: from,
                                metric,
                                seq: adv.seq,
                                changed: true,
                                updated: now,
                                candidate: None,
                            },
                        );
                        trigger = true;
                    }
                }
                Some(e) => {
                    if seq_newer(adv.seq, e.seq) {
                        // Unreachable news is never held back: it must reach
                        // the destination so that it issues a fresh number.
                        let settling = e.metric.is_some()
                            && metric.is_some()
                            && from != e.next_hop
                            && worse(metric, e.metric)
                            && e.updated + SETTLE > now;
                        if settling {
                            if let Some(m) = metric {
                                let better = match e.candidate {
                                    None => true,
                                    Some((s, cm, _)) => seq_newer(adv.seq, s) || (adv.seq == s && m < cm),
                                };
                                if better {
                                    e.candidate = Some((adv.seq, m, from));
                                }
                            }
                            continue;
                        }
                        if Self::adopt(e, adv.seq, metric, from, now) {
                            e.changed = true;
                            trigger = true;
                        }
                    } else if adv.seq == e.seq && worse(e.metric, metric) {
                        Self::adopt(e, adv.seq, metric, from, now);
                        e.changed = true;
                        trigger = true;
                    } else if adv.seq == e.seq && from == e.next_hop {
                        e.updated = now;
                    }
                }
            }
        }
        if trigger {
            self.schedule_trigger(ctx);
        }
    }

    /// Adopts parked candidates whose settling period ran out.
    fn settle(&mut self, ctx: &mut Ctx) {
        let now = ctx.now;
        let mut trigger = false;
        for e in self.table.values_mut() {
            let Some((seq, metric, nh)) = e.candidate else { continue };
            if e.updated + SETTLE <= now && seq_newer(seq, e.seq) {
                e.candidate = None;
                if Self::adopt(e, seq, Some(metric), nh, now) {
                    e.changed = true;
                    trigger = true;
                }
            }
        }
        if trigger {
            self.schedule_trigger(ctx);
        }
    }

    fn forward(&mut self, ctx: &mut Ctx, packet: Packet, send: SendKind) {
        let dst = packet.data().expect("data").dst;
        match self.table.get(&dst) {
            Some(Entry { metric: Some(_), next_hop, .. }) => ctx.unicast(*next_hop, packet, send),
            _ => ctx.drop_packet(packet, DropReason::NoRoute, Layer::Rtr),
        }
    }
}

impl RoutingProtocol for Dsdv {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Dsdv
    }

    fn start(&mut self, ctx: &mut Ctx) {
        let phase = SimTime::from_micros(ctx.rng.gen_range(0..1_000_000));
        ctx.set_timer(phase, Timer::Periodic);
    }

    fn on_data_from_app(&mut self, ctx: &mut Ctx, packet: Packet) {
        self.forward(ctx, packet, SendKind::Originate);
    }

    fn on_receive(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet) {
        if let Some(t) = self.neighbors.get_mut(&from) {
            *t = ctx.now;
        }
        match packet.body {
            Body::Data(ref d) => {
                if d.dst == self.me {
                    ctx.deliver(packet);
                } else {
                    self.forward(ctx, packet, SendKind::Forward);
                }
            }
            Body::Control(ControlPacket::DsdvUpdate(u)) => self.on_update(ctx, from, u),
            Body::Control(_) | Body::Probe { .. } => {}
        }
    }

    fn on_link_failure(&mut self, ctx: &mut Ctx, next_hop: NodeId, packet: Packet) {
        self.break_neighbor(ctx, next_hop);
        ctx.drop_packet(packet, DropReason::RetryLimit, Layer::Mac);
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::Periodic => {
                let now = ctx.now;
                let stale: Vec<NodeId> =
                    self.neighbors.iter().filter(|(_, &t)| t + NEIGHBOR_TIMEOUT <= now).map(|(&n, _)| n).collect();
                for n in stale {
                    self.break_neighbor(ctx, n);
                }
                self.settle(ctx);
                self.full_dump(ctx);
                ctx.set_timer(PERIODIC_INTERVAL, Timer::Periodic);
            }
            Timer::Triggered => {
                self.trigger_pending = false;
                self.settle(ctx);
                self.incremental(ctx);
            }
            _ => {}
        }
    }

    fn select_route(&self, dst: NodeId, _now: SimTime) -> Option<RouteView> {
        if dst == self.me {
            return Some(RouteView { next_hop: self.me, hops: 0 });
        }
        let e = self.table.get(&dst)?;
        e.metric.map(|hops| RouteView { next_hop: e.next_hop, hops })
    }

    fn check_invariants(&self) -> Result<(), String> {
        if self.seq % 2 != 0 {
            return Err(format!("node {} owns odd sequence number {}", self.me, self.seq));
        }
        for (dst, e) in &self.table {
            if e.metric == Some(0) {
                return Err(format!("node {} has zero metric to remote {dst}", self.me));
            }
        }
        Ok(())
    }
}
