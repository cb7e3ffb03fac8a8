//! Wires mobility, the shared medium, per-node routing and CBR traffic into one
//! event loop, and writes the event trace.

use std::collections::{HashSet, VecDeque};
use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::kernel::{Kernel, KernelStats, Purpose, RandomStream, StreamId};
use crate::mobility::Mobility;
use crate::packet::{Body, DataPacket, NodeId, Packet, PacketId};
use crate::routing::{Ctx, DropReason, Layer, Output, ProtocolKind, RouteView, RoutingProtocol, SendKind, Timer};
use crate::time::SimTime;
use crate::trace::{TraceEvent, TraceRecord};
use crate::traffic::Flow;
use crate::wireless::{Dest, Frame, MacConfig, MacEvent, MacOutput, Medium, MediumStats, PhyConfig};

/// Broadcasts wait a uniform random delay up to this long so that neighbors
/// relaying the same flood do not all transmit in the same slot.
pub const BROADCAST_JITTER: SimTime = SimTime::from_millis(10);

#[derive(Debug)]
pub enum Event {
    Mac(MacEvent),
    App { flow: usize },
    Timer { node: NodeId, timer: Timer },
    Broadcast { node: NodeId, packet: Packet, send: SendKind },
}

impl From<MacEvent> for Event {
    fn from(e: MacEvent) -> Self {
        Event::Mac(e)
    }
}

#[derive(Debug, Clone)]
pub struct SimSetup {
    pub protocol: ProtocolKind,
    pub phy: PhyConfig,
    pub mac: MacConfig,
    pub flows: Vec<Flow>,
    pub end: SimTime,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("flow {flow} references node {node} but the scenario has {nodes} nodes")]
    UnknownNode { flow: u32, node: NodeId, nodes: usize },
    #[error("writing trace: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimSummary {
    pub kernel: KernelStats,
    pub mac: MediumStats,
    pub trace_lines: u64,
    /// Delivered packets whose hop trail revisits a node.
    pub loop_violations: u64,
}

pub struct Simulation<W: Write> {
    kernel: Kernel<Event>,
    medium: Medium,
    protocols: Vec<Box<dyn RoutingProtocol>>,
    routing_rngs: Vec<RandomStream>,
    jitter_rngs: Vec<RandomStream>,
    flows: Vec<Flow>,
    end: SimTime,
    next_id: PacketId,
    delivered: HashSet<PacketId>,
    pending_mac: VecDeque<MacOutput>,
    trace: W,
    io_error: Option<io::Error>,
    trace_lines: u64,
    loop_violations: u64,
}

impl<W: Write> Simulation<W> {
    pub fn new(setup: SimSetup, mobility: Mobility, trace: W) -> Result<Self, SimError> {
        let n = mobility.len();
        for f in &setup.flows {
            for node in [f.src, f.dst] {
                if node as usize >= n {
                    return Err(SimError::UnknownNode { flow: f.id, node, nodes: n });
                }
            }
        }
        let mut kernel = Kernel::new();
        for (i, f) in setup.flows.iter().enumerate() {
            if let Some(at) = f.first_send() {
                kernel.schedule(at, Event::App { flow: i }).expect("kernel starts at zero");
            }
        }
        let ids = 0..n as NodeId;
        let mut sim = Simulation {
            kernel,
            medium: Medium::new(setup.phy, setup.mac, mobility, setup.seed),
            protocols: ids.clone().map(|i| setup.protocol.instantiate(i)).collect(),
            routing_rngs: ids.clone().map(|i| RandomStream::new(setup.seed, StreamId::node(i, Purpose::Routing))).collect(),
            jitter_rngs: ids.clone().map(|i| RandomStream::new(setup.seed, StreamId::node(i, Purpose::Jitter))).collect(),
            flows: setup.flows,
            end: setup.end,
            next_id: 0,
            delivered: HashSet::new(),
            pending_mac: VecDeque::new(),
            trace,
            io_error: None,
            trace_lines: 0,
            loop_violations: 0,
        };
        for node in ids {
            sim.with_protocol(node, |p, ctx| p.start(ctx));
        }
        sim.flush_mac();
        Ok(sim)
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    pub fn end(&self) -> SimTime {
        self.end
    }

    pub fn node_count(&self) -> usize {
        self.protocols.len()
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    /// The route `from` would use toward `to` right now.
    pub fn route(&self, from: NodeId, to: NodeId) -> Option<RouteView> {
        self.protocols.get(from as usize)?.select_route(to, self.now())
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        self.protocols.iter().try_for_each(|p| p.check_invariants())
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            kernel: self.kernel.stats(),
            mac: self.medium.stats(),
            trace_lines: self.trace_lines,
            loop_violations: self.loop_violations,
        }
    }

    /// Processes every event up to and including `t` (capped at the end time).
    pub fn run_until(&mut self, t: SimTime) -> Result<(), SimError> {
        let t = t.min(self.end);
        while let Some((_, ev)) = self.kernel.pop_until(t) {
            self.dispatch(ev);
            if let Some(e) = self.io_error.take() {
                return Err(e.into());
            }
        }
        if self.kernel.now() < t {
            self.kernel.advance_to(t).expect("advancing forward");
        }
        Ok(())
    }

    /// Runs to the end time, flushes the trace and hands the writer back.
    pub fn run(mut self) -> Result<(SimSummary, W), SimError> {
        self.run_until(self.end)?;
        self.trace.flush()?;
        Ok((self.summary(), self.trace))
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Mac(m) => {
                let mut out = Vec::new();
                self.medium.handle(&mut self.kernel, m, &mut out);
                self.pending_mac.extend(out);
            }
            Event::App { flow } => self.on_app(flow),
            Event::Timer { node, timer } => self.with_protocol(node, |p, ctx| p.on_timer(ctx, timer)),
            Event::Broadcast { node, packet, send } => {
                self.log_send(node, &packet, send);
                let mut out = Vec::new();
                self.medium.enqueue(&mut self.kernel, node, Frame { dst: Dest::Broadcast, packet }, &mut out);
                self.pending_mac.extend(out);
            }
        }
        self.flush_mac();
    }

    fn on_app(&mut self, index: usize) {
        let f = &self.flows[index];
        let now = self.kernel.now();
        let (src, next) = (f.src, f.next_send(now));
        let packet = Packet {
            id: self.next_id,
            body: Body::Data(DataPacket {
                flow: f.id,
                src: f.src,
                dst: f.dst,
                created: now,
                size: f.size,
                trail: Vec::new(),
                source_route: None,
            }),
        };
        self.next_id += 1;
        self.log(TraceEvent::Sent, src, Layer::App, &packet, None);
        if let Some(at) = next {
            self.kernel.schedule(at, Event::App { flow: index }).expect("next send is in the future");
        }
        self.with_protocol(src, |p, ctx| p.on_data_from_app(ctx, packet));
    }

    fn with_protocol(&mut self, node: NodeId, f: impl FnOnce(&mut dyn RoutingProtocol, &mut Ctx)) {
        let mut out = Vec::new();
        let mut timers = Vec::new();
        let now = self.kernel.now();
        {
            let rng = &mut self.routing_rngs[node as usize];
            let mut ctx = Ctx::new(now, node, rng, &mut self.next_id, &mut out, &mut timers);
            f(self.protocols[node as usize].as_mut(), &mut ctx);
        }
        for (at, timer) in timers {
            self.kernel.schedule(at, Event::Timer { node, timer }).expect("timers are not in the past");
        }
        for o in out {
            self.apply(node, o);
        }
    }

    fn apply(&mut self, node: NodeId, output: Output) {
        match output {
            Output::Unicast { next_hop, mut packet, send } => {
                if let Body::Data(d) = &mut packet.body {
                    if d.trail.last() != Some(&node) {
                        d.trail.push(node);
                    }
                }
                self.log_send(node, &packet, send);
                let mut out = Vec::new();
                let frame = Frame { dst: Dest::Unicast(next_hop), packet };
                self.medium.enqueue(&mut self.kernel, node, frame, &mut out);
                self.pending_mac.extend(out);
            }
            Output::Broadcast { packet, send } => {
                let delay = self.jitter_rngs[node as usize].gen_range(0..=BROADCAST_JITTER.as_micros());
                let ev = Event::Broadcast { node, packet, send };
                self.kernel.schedule_in(SimTime::from_micros(delay), ev);
            }
            Output::Deliver { mut packet } => {
                if !self.delivered.insert(packet.id) {
                    self.log(TraceEvent::Dropped, node, Layer::App, &packet, Some(DropReason::Dup));
                    return;
                }
                if let Body::Data(d) = &mut packet.body {
                    d.trail.push(node);
                    if crate::packet::has_repeats(&d.trail) {
                        self.loop_violations += 1;
                    }
                }
                self.log(TraceEvent::Received, node, Layer::App, &packet, None);
            }
            Output::Drop { packet, reason, layer } => self.log(TraceEvent::Dropped, node, layer, &packet, Some(reason)),
        }
    }

    fn flush_mac(&mut self) {
        while let Some(o) = self.pending_mac.pop_front() {
            match o {
                MacOutput::Received { node, from, packet } => {
                    if let Body::Control(c) = &packet.body {
                        if c.validate().is_err() {
                            self.log(TraceEvent::Dropped, node, Layer::Rtr, &packet, Some(DropReason::Malformed));
                            continue;
                        }
                    }
                    self.with_protocol(node, |p, ctx| p.on_receive(ctx, from, packet));
                }
                MacOutput::Failed { node, next_hop, packet } => {
                    let mut stranded = vec![packet];
                    stranded.extend(self.medium.drain_to(node, next_hop));
                    for p in stranded {
                        self.with_protocol(node, |proto, ctx| proto.on_link_failure(ctx, next_hop, p));
                    }
                }
                MacOutput::Collision { node, packet, .. } => {
                    self.log(TraceEvent::Dropped, node, Layer::Mac, &packet, Some(DropReason::Collision));
                }
                MacOutput::Evicted { node, packet } => {
                    self.log(TraceEvent::Dropped, node, Layer::Mac, &packet, Some(DropReason::BufferEvict));
                }
                MacOutput::Acked { node, to, .. } => self.with_protocol(node, |p, ctx| p.on_link_ok(ctx, to)),
                MacOutput::BroadcastDone { .. } => {}
            }
        }
    }

    /// Data is logged once at origination (APP) and at each relay; control
    /// at every originating or relaying transmission. Resends are silent.
    fn log_send(&mut self, node: NodeId, packet: &Packet, send: SendKind) {
        let event = match (send, packet.is_control()) {
            (SendKind::Forward, _) => TraceEvent::Forwarded,
            (SendKind::Originate, true) => TraceEvent::Sent,
            _ => return,
        };
        self.log(event, node, Layer::Rtr, packet, None);
    }

    fn log(&mut self, event: TraceEvent, node: NodeId, layer: Layer, packet: &Packet, reason: Option<DropReason>) {
        if self.io_error.is_some() {
            return;
        }
        let rec = TraceRecord {
            event,
            time: self.kernel.now(),
            node,
            layer,
            packet: packet.id,
            kind: packet.kind(),
            size: packet.trace_size(),
            reason,
            flow: packet.data().map(|d| (d.src, d.dst)),
        };
        if let Err(e) = writeln!(self.trace, "{rec}") {
            self.io_error = Some(e);
        }
        self.trace_lines += 1;
    }
}
