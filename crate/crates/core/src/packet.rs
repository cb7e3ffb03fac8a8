//! Packets as they travel between the application, routing and MAC layers.

use std::fmt;

use crate::time::SimTime;

pub type NodeId = u32;

/// Unique per run; shared by data and control packets.
pub type PacketId = u64;

/// Kind label written to the trace. DSR's control packets share the generic
/// request/reply/error labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    Data,
    Rreq,
    Rrep,
    Rerr,
    DsdvUpdate,
    Hello,
    Ack,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Data => "DATA",
            PacketKind::Rreq => "RREQ",
            PacketKind::Rrep => "RREP",
            PacketKind::Rerr => "RERR",
            PacketKind::DsdvUpdate => "DSDV_UPDATE",
            PacketKind::Hello => "HELLO",
            PacketKind::Ack => "ACK",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "DATA" => PacketKind::Data,
            "RREQ" => PacketKind::Rreq,
            "RREP" => PacketKind::Rrep,
            "RERR" => PacketKind::Rerr,
            "DSDV_UPDATE" => PacketKind::DsdvUpdate,
            "HELLO" => PacketKind::Hello,
            "ACK" => PacketKind::Ack,
            _ => return None,
        })
    }

    pub fn is_routing(self) -> bool {
        !matches!(self, PacketKind::Data | PacketKind::Ack)
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full hop list from source to destination, inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourceRoute(Vec<NodeId>);

impl SourceRoute {
    /// Rejects routes shorter than two nodes or with a repeated node.
    pub fn new(hops: Vec<NodeId>) -> Option<Self> {
        if hops.len() < 2 || has_repeats(&hops) {
            return None;
        }
        Some(SourceRoute(hops))
    }

    pub fn hops(&self) -> &[NodeId] {
        &self.0
    }

    pub fn source(&self) -> NodeId {
        self.0[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.0.last().unwrap()
    }

    pub fn hop_count(&self) -> usize {
        self.0.len() - 1
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.0.iter().position(|&n| n == node)
    }

    pub fn reversed(&self) -> SourceRoute {
        let mut v = self.0.clone();
        v.reverse();
        SourceRoute(v)
    }
}

pub fn has_repeats(nodes: &[NodeId]) -> bool {
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).any(|w| w[0] == w[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub flow: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub created: SimTime,
    /// Application payload bytes.
    pub size: u32,
    /// Nodes that have transmitted this packet, in order.
    pub trail: Vec<NodeId>,
    /// DSR only: the carried route and the index of the current holder.
    pub source_route: Option<(SourceRoute, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rreq {
    pub id: u32,
    pub originator: NodeId,
    pub orig_seq: u32,
    pub target: NodeId,
    pub target_seq: Option<u32>,
    pub hop_count: u32,
    /// Multipath only: sender's advertised hop count toward the originator.
    pub advertised: u32,
    pub ttl: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rrep {
    /// The node that asked (where the reply is headed).
    pub originator: NodeId,
    /// The node the route leads to.
    pub target: NodeId,
    pub target_seq: u32,
    pub hop_count: u32,
    /// Multipath only: sender's advertised hop count toward the target.
    pub advertised: u32,
    pub lifetime: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rerr {
    pub unreachable: Vec<(NodeId, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub seq: u32,
}

/// `metric == None` advertises an unreachable destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DsdvEntry {
    pub dst: NodeId,
    pub seq: u32,
    pub metric: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsdvUpdate {
    pub full: bool,
    pub entries: Vec<DsdvEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsrRreq {
    pub id: u32,
    pub originator: NodeId,
    pub target: NodeId,
    /// Originator first, then every node that re-broadcast the request.
    pub route: Vec<NodeId>,
    pub ttl: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsrRrep {
    /// Discovered route, requester first.
    pub route: SourceRoute,
    /// Index into `route` of the current holder; the reply walks it backwards.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsrRerr {
    pub broken_from: NodeId,
    pub broken_to: NodeId,
    /// Path from the detecting node back to the data source.
    pub back_route: SourceRoute,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlPacket {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    Hello(Hello),
    DsdvUpdate(DsdvUpdate),
    DsrRreq(DsrRreq),
    DsrRrep(DsrRrep),
    DsrRerr(DsrRerr),
}

impl ControlPacket {
    pub fn kind(&self) -> PacketKind {
        match self {
            ControlPacket::Rreq(_) | ControlPacket::DsrRreq(_) => PacketKind::Rreq,
            ControlPacket::Rrep(_) | ControlPacket::DsrRrep(_) => PacketKind::Rrep,
            ControlPacket::Rerr(_) | ControlPacket::DsrRerr(_) => PacketKind::Rerr,
            ControlPacket::Hello(_) => PacketKind::Hello,
            ControlPacket::DsdvUpdate(_) => PacketKind::DsdvUpdate,
        }
    }

    /// Network-layer size in bytes (header plus body).
    pub fn size(&self) -> u32 {
        const IP: u32 = 20;
        IP + match self {
            ControlPacket::Rreq(_) => 24,
            ControlPacket::Rrep(_) => 20,
            ControlPacket::Rerr(r) => 4 + 8 * r.unreachable.len() as u32,
            ControlPacket::Hello(_) => 20,
            ControlPacket::DsdvUpdate(u) => 4 + 12 * u.entries.len() as u32,
            ControlPacket::DsrRreq(r) => 8 + 4 * r.route.len() as u32,
            ControlPacket::DsrRrep(r) => 4 + 4 * r.route.hops().len() as u32,
            ControlPacket::DsrRerr(r) => 12 + 4 * r.back_route.hops().len() as u32,
        }
    }

    /// Structural sanity checks; a packet failing them is dropped as malformed.
    pub fn validate(&self) -> Result<(), &'static str> {
        match self {
            ControlPacket::Rreq(r) if r.originator == r.target => Err("RREQ for its own originator"),
            ControlPacket::Rrep(r) if r.originator == r.target => Err("RREP for its own originator"),
            ControlPacket::Rerr(r) if r.unreachable.is_empty() => Err("empty RERR"),
            ControlPacket::DsrRreq(r) => {
                if r.route.first() != Some(&r.originator) {
                    Err("DSR RREQ route does not start at originator")
                } else if has_repeats(&r.route) {
                    Err("DSR RREQ route repeats a node")
                } else {
                    Ok(())
                }
            }
            ControlPacket::DsrRrep(r) if r.index >= r.route.hops().len() => Err("DSR RREP index out of range"),
            ControlPacket::DsrRerr(r) if r.index >= r.back_route.hops().len() => {
                Err("DSR RERR index out of range")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Data(DataPacket),
    Control(ControlPacket),
    /// Link-layer test traffic with an explicit size; never produced by routing.
    Probe { tag: u64, size: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub body: Body,
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match &self.body {
            Body::Data(_) | Body::Probe { .. } => PacketKind::Data,
            Body::Control(c) => c.kind(),
        }
    }

    /// Size recorded in the trace: application payload for data, full
    /// network-layer size for control.
    pub fn trace_size(&self) -> u32 {
        match &self.body {
            Body::Data(d) => d.size,
            Body::Control(c) => c.size(),
            Body::Probe { size, .. } => *size,
        }
    }

    /// Bytes handed to the MAC (before its own header).
    pub fn wire_size(&self) -> u32 {
        match &self.body {
            Body::Data(d) => d.size + d.source_route.as_ref().map_or(0, |(r, _)| 4 * r.hops().len() as u32),
            Body::Control(c) => c.size(),
            Body::Probe { size, .. } => *size,
        }
    }

    pub fn data(&self) -> Option<&DataPacket> {
        match &self.body {
            Body::Data(d) => Some(d),
            _ => None,
        }
    }

    pub fn is_control(&self) -> bool {
        matches!(self.body, Body::Control(_))
    }
}
