//! Routing protocols behind one event-driven interface.
//!
//! A protocol instance lives on one node. The simulation calls it with a
//! [`Ctx`] through which it emits [`Output`]s (frames to send, packets to
//! deliver or drop) and requests timers. Timers are never cancelled; a
//! protocol recognises and ignores stale ones.

mod aodv;
mod dsdv;
mod dsr;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

pub use aodv::Aodv;
pub use dsdv::Dsdv;
pub use dsr::Dsr;

use crate::kernel::RandomStream;
use crate::packet::{NodeId, Packet, PacketId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolKind {
    Aodv,
    Aomdv,
    Dsr,
    Dsdv,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] = [ProtocolKind::Aodv, ProtocolKind::Aomdv, ProtocolKind::Dsr, ProtocolKind::Dsdv];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Aodv => "AODV",
            ProtocolKind::Aomdv => "AOMDV",
            ProtocolKind::Dsr => "DSR",
            ProtocolKind::Dsdv => "DSDV",
        }
    }

    pub fn is_on_demand(self) -> bool {
        self != ProtocolKind::Dsdv
    }

    pub fn instantiate(self, node: NodeId) -> Box<dyn RoutingProtocol> {
        match self {
            ProtocolKind::Aodv => Box::new(Aodv::new(node, false)),
            ProtocolKind::Aomdv => Box::new(Aodv::new(node, true)),
            ProtocolKind::Dsr => Box::new(Dsr::new(node)),
            ProtocolKind::Dsdv => Box::new(Dsdv::new(node)),
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown protocol `{s}` (expected AODV, AOMDV, DSR or DSDV)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    App,
    Rtr,
    Mac,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::App => "APP",
            Layer::Rtr => "RTR",
            Layer::Mac => "MAC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "APP" => Some(Layer::App),
            "RTR" => Some(Layer::Rtr),
            "MAC" => Some(Layer::Mac),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    NoRoute,
    RetryLimit,
    Collision,
    BufferTimeout,
    BufferEvict,
    Malformed,
    Dup,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "NO_ROUTE",
            DropReason::RetryLimit => "RETRY_LIMIT",
            DropReason::Collision => "COLLISION",
            DropReason::BufferTimeout => "BUFFER_TIMEOUT",
            DropReason::BufferEvict => "BUFFER_EVICT",
            DropReason::Malformed => "MALFORMED",
            DropReason::Dup => "DUP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "NO_ROUTE" => DropReason::NoRoute,
            "RETRY_LIMIT" => DropReason::RetryLimit,
            "COLLISION" => DropReason::Collision,
            "BUFFER_TIMEOUT" => DropReason::BufferTimeout,
            "BUFFER_EVICT" => DropReason::BufferEvict,
            "MALFORMED" => DropReason::Malformed,
            "DUP" => DropReason::Dup,
            _ => return None,
        })
    }
}

/// How a transmission relates to the packet's journey; decides trace logging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendKind {
    /// First transmission by the node that created the packet.
    Originate,
    /// Relaying a packet received from a neighbor.
    Forward,
    /// Another attempt by the same node after a failure; not logged again.
    Resend,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Unicast { next_hop: NodeId, packet: Packet, send: SendKind },
    Broadcast { packet: Packet, send: SendKind },
    Deliver { packet: Packet },
    Drop { packet: Packet, reason: DropReason, layer: Layer },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Timer {
    Periodic,
    Triggered,
    Hello,
    BufferSweep,
    Discovery { dst: NodeId, attempt: u32 },
}

/// Everything a protocol may touch while handling one event.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub me: NodeId,
    pub rng: &'a mut RandomStream,
    next_id: &'a mut PacketId,
    out: &'a mut Vec<Output>,
    timers: &'a mut Vec<(SimTime, Timer)>,
}

impl<'a> Ctx<'a> {
    pub fn new(
        now: SimTime,
        me: NodeId,
        rng: &'a mut RandomStream,
        next_id: &'a mut PacketId,
        out: &'a mut Vec<Output>,
        timers: &'a mut Vec<(SimTime, Timer)>,
    ) -> Self {
        Ctx { now, me, rng, next_id, out, timers }
    }

    pub fn new_id(&mut self) -> PacketId {
        let id = *self.next_id;
        *self.next_id += 1;
        id
    }

    pub fn set_timer(&mut self, delay: SimTime, timer: Timer) {
        self.timers.push((self.now + delay, timer));
    }

    pub fn unicast(&mut self, next_hop: NodeId, packet: Packet, send: SendKind) {
        self.out.push(Output::Unicast { next_hop, packet, send });
    }

    pub fn broadcast(&mut self, packet: Packet, send: SendKind) {
        self.out.push(Output::Broadcast { packet, send });
    }

    pub fn deliver(&mut self, packet: Packet) {
        self.out.push(Output::Deliver { packet });
    }

    pub fn drop_packet(&mut self, packet: Packet, reason: DropReason, layer: Layer) {
        self.out.push(Output::Drop { packet, reason, layer });
    }
}

/// Answer to "how would this node reach `dst` right now".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteView {
    pub next_hop: NodeId,
    pub hops: u32,
}

pub trait RoutingProtocol: Send + fmt::Debug {
    fn kind(&self) -> ProtocolKind;

    /// Called once at time zero.
    fn start(&mut self, ctx: &mut Ctx);

    /// A data packet created by this node's application.
    fn on_data_from_app(&mut self, ctx: &mut Ctx, packet: Packet);

    /// Any packet received intact from neighbor `from`.
    fn on_receive(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet);

    /// The MAC gave up delivering `packet` to `next_hop`.
    fn on_link_failure(&mut self, ctx: &mut Ctx, next_hop: NodeId, packet: Packet);

    /// The MAC delivered a unicast frame to neighbor `to` (it was acknowledged).
    fn on_link_ok(&mut self, _ctx: &mut Ctx, _to: NodeId) {}

    fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer);

    /// Pure query.
    fn select_route(&self, dst: NodeId, now: SimTime) -> Option<RouteView>;

    /// Every usable next hop toward `dst`, preferred first.
    fn next_hops(&self, dst: NodeId, now: SimTime) -> Vec<RouteView> {
        self.select_route(dst, now).into_iter().collect()
    }

    /// Protocol-specific structural invariants of the routing state.
    fn check_invariants(&self) -> Result<(), String> {
        Ok(())
    }
}

/// `a` is strictly fresher than `b` under wrap-around arithmetic.
pub fn seq_newer(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) > 0
}

/// Packets waiting for a route.
#[derive(Debug, Default)]
pub struct SendBuffer {
    items: VecDeque<(SimTime, Packet)>,
}

impl SendBuffer {
    pub const CAPACITY: usize = 64;
    pub const TIMEOUT: SimTime = SimTime::from_secs(30);

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Returns the oldest packet if it had to make room.
    pub fn push(&mut self, now: SimTime, packet: Packet) -> Option<Packet> {
        let evicted = if self.items.len() >= Self::CAPACITY { self.items.pop_front().map(|(_, p)| p) } else { None };
        self.items.push_back((now, packet));
        evicted
    }

    pub fn has_for(&self, dst: NodeId) -> bool {
        self.items.iter().any(|(_, p)| p.data().is_some_and(|d| d.dst == dst))
    }

    pub fn take_for(&mut self, dst: NodeId) -> Vec<Packet> {
        self.take_where(|p| p.data().is_some_and(|d| d.dst == dst))
    }

    pub fn take_where(&mut self, mut pred: impl FnMut(&Packet) -> bool) -> Vec<Packet> {
        let mut taken = Vec::new();
        self.items.retain(|(_, p)| {
            if pred(p) {
                taken.push(p.clone());
                false
            } else {
                true
            }
        });
        taken
    }

    pub fn expire(&mut self, now: SimTime) -> Vec<Packet> {
        let mut expired = Vec::new();
        while let Some((at, _)) = self.items.front() {
            if *at + Self::TIMEOUT > now {
                break;
            }
            expired.push(self.items.pop_front().expect("front exists").1);
        }
        expired
    }

    pub fn destinations(&self) -> Vec<NodeId> {
        let mut d: Vec<NodeId> = self.items.iter().filter_map(|(_, p)| p.data().map(|d| d.dst)).collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

/// Buffers `packet`, reporting an eviction if the buffer was full, and arms
/// the sweep timer when the buffer goes from empty to non-empty.
pub(crate) fn buffer_packet(ctx: &mut Ctx, buffer: &mut SendBuffer, packet: Packet) {
    if buffer.is_empty() {
        ctx.set_timer(SimTime::from_secs(1), Timer::BufferSweep);
    }
    if let Some(old) = buffer.push(ctx.now, packet) {
        ctx.drop_packet(old, DropReason::BufferEvict, Layer::Rtr);
    }
}

pub(crate) fn sweep_buffer(ctx: &mut Ctx, buffer: &mut SendBuffer) {
    for p in buffer.expire(ctx.now) {
        ctx.drop_packet(p, DropReason::BufferTimeout, Layer::Rtr);
    }
    if !buffer.is_empty() {
        ctx.set_timer(SimTime::from_secs(1), Timer::BufferSweep);
    }
}
