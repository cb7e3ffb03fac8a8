//! Shared channel plus per-node DCF state.
//!
//! Every transmission (data, broadcast or ACK) becomes a record with the
//! sender's position at start and its `[start, end)` interval. Carrier sense
//! and reception are both decided against these records:
//!
//! * a node senses a record once it has started (same-instant starts are not
//!   seen, so simultaneous attempts collide) if the sender is in
//!   carrier-sense range;
//! * a frame is received intact iff the receiver is in tx range, is not
//!   transmitting itself, and no other record overlapping in time comes from
//!   within interference range of it.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;

use super::{airtime, MacConfig, PhyConfig};
use crate::kernel::{EventHandle, Kernel, Purpose, RandomStream, StreamId};
use crate::mobility::{distance, Mobility, Point};
use crate::packet::{NodeId, Packet, PacketId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub dst: Dest,
    pub packet: Packet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacEvent {
    Attempt(NodeId),
    TxEnd(u64),
    AckTimeout(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MacOutput {
    /// Intact reception handed to the upper layer of `node`.
    Received { node: NodeId, from: NodeId, packet: Packet },
    /// Unicast acknowledged; `attempts` counts transmissions of the frame.
    Acked { node: NodeId, to: NodeId, packet_id: PacketId, attempts: u32 },
    /// Unicast abandoned after the retry limit.
    Failed { node: NodeId, next_hop: NodeId, packet: Packet },
    /// Unicast frame destroyed at its intended receiver by an overlap.
    Collision { node: NodeId, from: NodeId, packet: Packet },
    /// Interface queue full.
    Evicted { node: NodeId, packet: Packet },
    /// Broadcast transmission finished.
    BroadcastDone { node: NodeId, packet_id: PacketId, receivers: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MediumStats {
    pub transmissions: u64,
    pub acks: u64,
    pub collisions: u64,
    pub retries: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, Copy)]
enum TxKind {
    Frame { dst: Dest, seq: u32 },
    Ack { to: NodeId, seq: u32 },
}

#[derive(Debug, Clone, Copy)]
struct TxRecord {
    sender: NodeId,
    pos: Point,
    start: SimTime,
    end: SimTime,
    kind: TxKind,
}

#[derive(Debug)]
struct Current {
    frame: Frame,
    seq: u32,
    failures: u32,
    slots: u32,
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Idle,
    /// Counting down: the medium was last seen busy until `idle_from`.
    Backoff { idle_from: SimTime, handle: EventHandle },
    Transmitting,
    AwaitAck { handle: EventHandle },
}

#[derive(Debug)]
struct NodeMac {
    queue: VecDeque<Frame>,
    current: Option<Current>,
    phase: Phase,
    next_seq: u32,
    last_rx_seq: HashMap<NodeId, u32>,
    rng: RandomStream,
}

/// Records older than this (beyond the longest airtime seen) can no longer
/// influence a countdown or a reception and are discarded.
const RETENTION: SimTime = SimTime::from_millis(50);

#[derive(Debug)]
pub struct Medium {
    phy: PhyConfig,
    mac: MacConfig,
    mobility: Mobility,
    nodes: Vec<NodeMac>,
    txs: BTreeMap<u64, TxRecord>,
    next_tx: u64,
    longest_air: SimTime,
    last_purge: SimTime,
    stats: MediumStats,
    scratch: Vec<NodeId>,
}

impl Medium {
    pub fn new(phy: PhyConfig, mac: MacConfig, mobility: Mobility, seed: u64) -> Self {
        let nodes = (0..mobility.len() as NodeId)
            .map(|n| NodeMac {
                queue: VecDeque::new(),
                current: None,
                phase: Phase::Idle,
                next_seq: 0,
                last_rx_seq: HashMap::new(),
                rng: RandomStream::new(seed, StreamId::node(n, Purpose::MacBackoff)),
            })
            .collect();
        Medium {
            phy,
            mac,
            mobility,
            nodes,
            txs: BTreeMap::new(),
            next_tx: 0,
            longest_air: SimTime::ZERO,
            last_purge: SimTime::ZERO,
            stats: MediumStats::default(),
            scratch: Vec::new(),
        }
    }

    pub fn phy(&self) -> &PhyConfig {
        &self.phy
    }

    pub fn mac(&self) -> &MacConfig {
        &self.mac
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }

    pub fn mobility_mut(&mut self) -> &mut Mobility {
        &mut self.mobility
    }

    pub fn stats(&self) -> MediumStats {
        self.stats
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Frames waiting at `node`, including the one in service.
    pub fn backlog(&self, node: NodeId) -> usize {
        let n = &self.nodes[node as usize];
        n.queue.len() + usize::from(n.current.is_some())
    }

    fn frame_bytes(&self, frame: &Frame) -> u32 {
        frame.packet.wire_size() + self.mac.header_bytes
    }

    /// Hands a frame to `node`'s interface queue. Control frames jump ahead of
    /// queued data; when the queue is full the newest data frame is evicted.
    pub fn enqueue<E: From<MacEvent>>(
        &mut self,
        k: &mut Kernel<E>,
        node: NodeId,
        frame: Frame,
        out: &mut Vec<MacOutput>,
    ) {
        let cap = self.mac.queue_capacity;
        let n = &mut self.nodes[node as usize];
        let control = frame.packet.is_control();
        if n.queue.len() >= cap {
            let victim = if control { n.queue.iter().rposition(|f| !f.packet.is_control()) } else { None };
            match victim {
                Some(i) => {
                    let evicted = n.queue.remove(i).expect("index in range");
                    out.push(MacOutput::Evicted { node, packet: evicted.packet });
                }
                None => {
                    out.push(MacOutput::Evicted { node, packet: frame.packet });
                    return;
                }
            }
        }
        if control {
            let at = n.queue.iter().position(|f| !f.packet.is_control()).unwrap_or(n.queue.len());
            n.queue.insert(at, frame);
        } else {
            n.queue.push_back(frame);
        }
        self.start_next(k, node);
    }

    /// Removes queued (not in-service) unicast frames addressed to `next_hop`.
    pub fn drain_to(&mut self, node: NodeId, next_hop: NodeId) -> Vec<Packet> {
        let n = &mut self.nodes[node as usize];
        let mut taken = Vec::new();
        let mut kept = VecDeque::with_capacity(n.queue.len());
        for f in n.queue.drain(..) {
            if f.dst == Dest::Unicast(next_hop) {
                taken.push(f.packet);
            } else {
                kept.push_back(f);
            }
        }
        n.queue = kept;
        taken
    }

    fn start_next<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, node: NodeId) {
        let cw0 = self.mac.cw(0);
        let n = &mut self.nodes[node as usize];
        if n.current.is_some() {
            return;
        }
        let Some(frame) = n.queue.pop_front() else {
            n.phase = Phase::Idle;
            return;
        };
        let seq = n.next_seq;
        n.next_seq = n.next_seq.wrapping_add(1);
        let slots = n.rng.gen_range(0..=cw0);
        n.current = Some(Current { frame, seq, failures: 0, slots });
        let now = k.now();
        let idle_from = self.busy_until(node, now).max(now);
        self.schedule_attempt(k, node, idle_from);
    }

    /// Newest first, every record that may still be on the air after `t`.
    /// Records are created in start order up to one SIFS (an ACK is created
    /// when the frame it answers ends), so once a record is too old to reach
    /// `t`, every earlier one is as well.
    fn live_since(&self, t: SimTime) -> impl Iterator<Item = &TxRecord> + '_ {
        let reach = self.longest_air + self.mac.sifs;
        self.txs.values().rev().take_while(move |r| r.start + reach > t)
    }

    fn sensed(&self, node: NodeId, at: Point, rec: &TxRecord) -> bool {
        rec.sender == node || distance(rec.pos, at) <= self.phy.cs_range
    }

    /// End of the latest sensed transmission in progress at `now`, or `now`.
    fn busy_until(&self, node: NodeId, now: SimTime) -> SimTime {
        let here = self.mobility.position(node, now);
        self.live_since(now)
            .filter(|r| r.start < now && r.end > now && self.sensed(node, here, r))
            .map(|r| r.end)
            .fold(now, SimTime::max)
    }

    fn schedule_attempt<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, node: NodeId, idle_from: SimTime) {
        let aifs = self.mac.aifs();
        let slot = self.mac.slot;
        let n = &mut self.nodes[node as usize];
        let slots = n.current.as_ref().expect("frame in service").slots;
        let at = (idle_from + aifs + slot.mul(u64::from(slots))).max(k.now());
        let handle = k.schedule(at, MacEvent::Attempt(node).into()).expect("attempt is not in the past");
        n.phase = Phase::Backoff { idle_from, handle };
    }

    pub fn handle<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, ev: MacEvent, out: &mut Vec<MacOutput>) {
        match ev {
            MacEvent::Attempt(node) => self.on_attempt(k, node),
            MacEvent::TxEnd(id) => self.on_tx_end(k, id, out),
            MacEvent::AckTimeout(node) => self.on_ack_timeout(k, node, out),
        }
    }

    fn on_attempt<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, node: NodeId) {
        let Phase::Backoff { idle_from, .. } = self.nodes[node as usize].phase else {
            return;
        };
        let now = k.now();
        let here = self.mobility.position(node, now);
        let count_start = idle_from + self.mac.aifs();
        let mut first_busy: Option<SimTime> = None;
        let mut last_end = SimTime::ZERO;
        for r in self.live_since(idle_from) {
            let started = r.start < now || (r.sender == node && r.start <= now);
            if started && r.end > idle_from && self.sensed(node, here, r) {
                first_busy = Some(first_busy.map_or(r.start, |f| f.min(r.start)));
                last_end = last_end.max(r.end);
            }
        }
        if let Some(first) = first_busy {
            // Freeze: keep the slots that elapsed before the medium went busy.
            let elapsed = first.saturating_sub(count_start).as_micros() / self.mac.slot.as_micros();
            let cur = self.nodes[node as usize].current.as_mut().expect("frame in service");
            cur.slots -= (elapsed.min(u64::from(cur.slots))) as u32;
            self.schedule_attempt(k, node, last_end);
            return;
        }
        self.transmit(k, node, now, here);
    }

    fn new_record<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, rec: TxRecord) -> u64 {
        let id = self.next_tx;
        self.next_tx += 1;
        self.longest_air = self.longest_air.max(rec.end - rec.start);
        k.schedule(rec.end, MacEvent::TxEnd(id).into()).expect("transmission ends in the future");
        self.txs.insert(id, rec);
        self.purge(k.now());
        id
    }

    fn purge(&mut self, now: SimTime) {
        let keep = RETENTION + self.longest_air;
        if now.saturating_sub(self.last_purge) < RETENTION || self.txs.len() < 32 {
            return;
        }
        self.last_purge = now;
        self.txs.retain(|_, r| r.end + keep > now);
    }

    fn transmit<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, node: NodeId, now: SimTime, pos: Point) {
        let cur = self.nodes[node as usize].current.as_ref().expect("frame in service");
        let bytes = self.frame_bytes(&cur.frame);
        let kind = TxKind::Frame { dst: cur.frame.dst, seq: cur.seq };
        let end = now + airtime(bytes, &self.phy);
        self.stats.transmissions += 1;
        self.nodes[node as usize].phase = Phase::Transmitting;
        self.new_record(k, TxRecord { sender: node, pos, start: now, end, kind });
    }

    /// Other records overlapping `rec` in time.
    fn overlapping(&self, id: u64, rec: &TxRecord) -> Vec<TxRecord> {
        let reach = self.longest_air + self.mac.sifs;
        self.txs
            .iter()
            .rev()
            .take_while(|(_, u)| u.start + reach > rec.start)
            .filter(|&(&other, u)| other != id && u.start < rec.end && u.end > rec.start)
            .map(|(_, u)| *u)
            .collect()
    }

    fn received_intact(&self, rec: &TxRecord, overlaps: &[TxRecord], rx: NodeId) -> bool {
        if rx == rec.sender {
            return false;
        }
        let p = self.mobility.position(rx, rec.start);
        if distance(rec.pos, p) > self.phy.tx_range {
            return false;
        }
        !overlaps.iter().any(|u| u.sender == rx || distance(u.pos, p) <= self.phy.interference_range)
    }

    fn on_tx_end<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, id: u64, out: &mut Vec<MacOutput>) {
        let Some(rec) = self.txs.get(&id).copied() else {
            return;
        };
        let overlaps = self.overlapping(id, &rec);
        match rec.kind {
            TxKind::Frame { dst: Dest::Broadcast, .. } => {
                let sender = rec.sender;
                let mut nearby = std::mem::take(&mut self.scratch);
                self.mobility.within(rec.pos, self.phy.tx_range, rec.start, &mut nearby);
                let cur = self.nodes[sender as usize].current.take().expect("broadcast in service");
                let mut receivers = 0;
                for &rx in &nearby {
                    if self.received_intact(&rec, &overlaps, rx) {
                        receivers += 1;
                        out.push(MacOutput::Received { node: rx, from: sender, packet: cur.frame.packet.clone() });
                    }
                }
                self.scratch = nearby;
                out.push(MacOutput::BroadcastDone { node: sender, packet_id: cur.frame.packet.id, receivers });
                self.nodes[sender as usize].phase = Phase::Idle;
                self.start_next(k, sender);
            }
            TxKind::Frame { dst: Dest::Unicast(rx), seq } => {
                let sender = rec.sender;
                let ack_air = airtime(self.mac.ack_bytes, &self.phy);
                if self.received_intact(&rec, &overlaps, rx) {
                    let fresh = self.nodes[rx as usize].last_rx_seq.insert(sender, seq) != Some(seq);
                    if fresh {
                        let packet = self.nodes[sender as usize].current.as_ref().expect("unicast in service").frame.packet.clone();
                        out.push(MacOutput::Received { node: rx, from: sender, packet });
                    }
                    let start = rec.end + self.mac.sifs;
                    let pos = self.mobility.position(rx, start);
                    self.stats.acks += 1;
                    self.new_record(k, TxRecord { sender: rx, pos, start, end: start + ack_air, kind: TxKind::Ack { to: sender, seq } });
                } else if distance(rec.pos, self.mobility.position(rx, rec.start)) <= self.phy.tx_range {
                    self.stats.collisions += 1;
                    let packet = self.nodes[sender as usize].current.as_ref().expect("unicast in service").frame.packet.clone();
                    out.push(MacOutput::Collision { node: rx, from: sender, packet });
                }
                let timeout = rec.end + self.mac.sifs + ack_air + SimTime::from_micros(1);
                let handle = k.schedule(timeout, MacEvent::AckTimeout(sender).into()).expect("timeout in the future");
                self.nodes[sender as usize].phase = Phase::AwaitAck { handle };
            }
            TxKind::Ack { to, seq } => {
                if !self.received_intact(&rec, &overlaps, to) {
                    return;
                }
                let n = &mut self.nodes[to as usize];
                let (Phase::AwaitAck { handle }, Some(cur)) = (n.phase, n.current.as_ref()) else {
                    return;
                };
                if cur.seq != seq {
                    return;
                }
                k.cancel(handle);
                let cur = n.current.take().expect("checked above");
                n.phase = Phase::Idle;
                out.push(MacOutput::Acked {
                    node: to,
                    to: rec.sender,
                    packet_id: cur.frame.packet.id,
                    attempts: cur.failures + 1,
                });
                self.start_next(k, to);
            }
        }
    }

    fn on_ack_timeout<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, node: NodeId, out: &mut Vec<MacOutput>) {
        let limit = self.mac.retry_limit;
        let n = &mut self.nodes[node as usize];
        if !matches!(n.phase, Phase::AwaitAck { .. }) {
            return;
        }
        let cur = n.current.as_mut().expect("unicast in service");
        cur.failures += 1;
        if cur.failures > limit {
            let cur = n.current.take().expect("checked above");
            n.phase = Phase::Idle;
            let Dest::Unicast(next_hop) = cur.frame.dst else { unreachable!("only unicast awaits ACK") };
            self.stats.failures += 1;
            out.push(MacOutput::Failed { node, next_hop, packet: cur.frame.packet });
            self.start_next(k, node);
            return;
        }
        self.stats.retries += 1;
        let cw = self.mac.cw(cur.failures);
        cur.slots = n.rng.gen_range(0..=cw);
        let now = k.now();
        let idle_from = self.busy_until(node, now).max(now);
        self.schedule_attempt(k, node, idle_from);
    }

    /// Overrides the backoff draw of the frame in service (tests only need this
    /// to force deterministic collisions).
    #[doc(hidden)]
    pub fn force_slots<E: From<MacEvent>>(&mut self, k: &mut Kernel<E>, node: NodeId, slots: u32) {
        let n = &mut self.nodes[node as usize];
        if let (Phase::Backoff { idle_from, handle }, Some(cur)) = (n.phase, n.current.as_mut()) {
            cur.slots = slots;
            k.cancel(handle);
            self.schedule_attempt(k, node, idle_from);
        }
    }
}
