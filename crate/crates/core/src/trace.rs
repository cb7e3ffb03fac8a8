//! Line-oriented event trace shared by the simulator and the analyzer.
//!
//! ```text
//! <event> <time_us> <node> <layer> <pkt_id> <kind> <size> <reason|-> [<flow_src> <flow_dst>]
//! ```
//!
//! Flow endpoints appear on every DATA record and nowhere else.

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::packet::{NodeId, PacketId, PacketKind};
use crate::routing::{DropReason, Layer};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Sent,
    Received,
    Dropped,
    Forwarded,
}

impl TraceEvent {
    pub fn as_char(self) -> char {
        match self {
            TraceEvent::Sent => 's',
            TraceEvent::Received => 'r',
            TraceEvent::Dropped => 'd',
            TraceEvent::Forwarded => 'f',
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "s" => TraceEvent::Sent,
            "r" => TraceEvent::Received,
            "d" => TraceEvent::Dropped,
            "f" => TraceEvent::Forwarded,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub event: TraceEvent,
    pub time: SimTime,
    pub node: NodeId,
    pub layer: Layer,
    pub packet: PacketId,
    pub kind: PacketKind,
    pub size: u32,
    /// Present on drops only.
    pub reason: Option<DropReason>,
    /// Present on DATA records only.
    pub flow: Option<(NodeId, NodeId)>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {} {}",
            self.event.as_char(),
            self.time.as_micros(),
            self.node,
            self.layer.as_str(),
            self.packet,
            self.kind.as_str(),
            self.size,
            self.reason.map_or("-", DropReason::as_str),
        )?;
        if let Some((s, d)) = self.flow {
            write!(f, " {s} {d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("reading trace: {0}")]
    Io(#[from] io::Error),
}

fn field<T>(line: usize, name: &str, raw: &str, parse: impl FnOnce(&str) -> Option<T>) -> Result<T, TraceError> {
    parse(raw).ok_or_else(|| TraceError::Malformed { line, message: format!("bad {name} `{raw}`") })
}

impl TraceRecord {
    /// Parses one line; `line` is 1-based and only used for error messages.
    pub fn parse(text: &str, line: usize) -> Result<Self, TraceError> {
        let parts: Vec<&str> = text.split(' ').collect();
        if parts.len() != 8 && parts.len() != 10 {
            return Err(TraceError::Malformed { line, message: format!("expected 8 or 10 fields, found {}", parts.len()) });
        }
        let event = field(line, "event", parts[0], TraceEvent::parse)?;
        let time = field(line, "time", parts[1], |s| s.parse().ok().map(SimTime::from_micros))?;
        let node = field(line, "node", parts[2], |s| s.parse().ok())?;
        let layer = field(line, "layer", parts[3], Layer::parse)?;
        let packet = field(line, "packet id", parts[4], |s| s.parse().ok())?;
        let kind = field(line, "packet kind", parts[5], PacketKind::parse)?;
        let size = field(line, "size", parts[6], |s| s.parse().ok())?;
        let reason = match parts[7] {
            "-" => None,
            r => Some(field(line, "reason", r, DropReason::parse)?),
        };
        if reason.is_some() != (event == TraceEvent::Dropped) {
            return Err(TraceError::Malformed { line, message: "drop reason must appear exactly on drop events".into() });
        }
        let flow = if parts.len() == 10 {
            let s = field(line, "flow source", parts[8], |s| s.parse().ok())?;
            let d = field(line, "flow destination", parts[9], |s| s.parse().ok())?;
            Some((s, d))
        } else {
            None
        };
        if flow.is_some() != (kind == PacketKind::Data) {
            return Err(TraceError::Malformed { line, message: "flow endpoints must appear exactly on DATA records".into() });
        }
        Ok(TraceRecord { event, time, node, layer, packet, kind, size, reason, flow })
    }
}

/// Reads every record, skipping blank lines.
pub fn read_trace(reader: impl BufRead) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim_end();
        if text.is_empty() {
            continue;
        }
        out.push(TraceRecord::parse(text, i + 1)?);
    }
    Ok(out)
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    read_trace(text.as_bytes())
}

pub fn write_trace(mut w: impl Write, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn data_line_round_trips() {
        let line = "s 10000000 3 APP 17 DATA 512 - 3 7";
        let r = TraceRecord::parse(line, 1).unwrap();
        assert_eq!(r.event, TraceEvent::Sent);
        assert_eq!(r.time, SimTime::from_secs(10));
        assert_eq!(r.flow, Some((3, 7)));
        assert_eq!(r.to_string(), line);
    }

    #[test]
    fn drop_needs_reason() {
        assert!(TraceRecord::parse("d 5 1 MAC 2 RREQ 48 -", 1).is_err());
        assert!(TraceRecord::parse("s 5 1 RTR 2 RREQ 48 NO_ROUTE", 1).is_err());
        let r = TraceRecord::parse("d 5 1 MAC 2 RREQ 48 COLLISION", 1).unwrap();
        assert_eq!(r.reason, Some(DropReason::Collision));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "s 1 0 APP 1 DATA 512 - 0 1\n\ns 2 0 APP 2 DATA 512 - 0\n";
        match parse_trace(text) {
            Err(TraceError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_trace("x 1 0 APP 1 DATA 512 - 0 1"), Err(TraceError::Malformed { line: 1, .. })));
        assert!(parse_trace("s 1 0 APP 1 HELLO 20 - 0 1").is_err());
    }

    fn record() -> impl Strategy<Value = TraceRecord> {
        let kinds = [
            PacketKind::Data,
            PacketKind::Rreq,
            PacketKind::Rrep,
            PacketKind::Rerr,
            PacketKind::DsdvUpdate,
            PacketKind::Hello,
            PacketKind::Ack,
        ];
        let reasons = [
            DropReason::NoRoute,
            DropReason::RetryLimit,
            DropReason::Collision,
            DropReason::BufferTimeout,
            DropReason::BufferEvict,
            DropReason::Malformed,
            DropReason::Dup,
        ];
        (0u8..4, any::<u64>(), any::<u32>(), 0u8..3, any::<u64>(), 0usize..7, any::<u32>(), 0usize..7, any::<(u32, u32)>())
            .prop_map(move |(e, t, node, l, packet, k, size, r, flow)| {
                let event = [TraceEvent::Sent, TraceEvent::Received, TraceEvent::Dropped, TraceEvent::Forwarded][e as usize];
                let kind = kinds[k];
                TraceRecord {
                    event,
                    time: SimTime::from_micros(t),
                    node,
                    layer: [Layer::App, Layer::Rtr, Layer::Mac][l as usize],
                    packet,
                    kind,
                    size,
                    reason: (event == TraceEvent::Dropped).then_some(reasons[r]),
                    flow: (kind == PacketKind::Data).then_some(flow),
                }
            })
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(records in proptest::collection::vec(record(), 0..40)) {
            let mut buf = Vec::new();
            write_trace(&mut buf, &records).unwrap();
            prop_assert_eq!(read_trace(&buf[..]).unwrap(), records);
        }
    }
}
