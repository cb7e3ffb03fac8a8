//! Trace analysis: delivery ratio, delay, loss, routing load and throughput.
//!
//! Every DATA packet originated at the application layer ends up in exactly
//! one bucket: received (an APP `r` record), dropped (a terminal drop record)
//! or in flight when the trace ends. Collision and duplicate drops describe a
//! single frame copy rather than the packet's fate, so they do not count.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::packet::{PacketId, PacketKind};
use crate::routing::{DropReason, Layer};
use crate::time::SimTime;
use crate::trace::{read_trace, TraceError, TraceEvent, TraceRecord};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("integrity: {0}")]
    Integrity(String),
}

/// `100 * received / sent`; `None` when nothing was sent.
pub fn pdr(received: u64, sent: u64) -> Result<Option<f64>, MetricsError> {
    if received > sent {
        return Err(MetricsError::Integrity(format!("{received} packets received but only {sent} sent")));
    }
    Ok((sent > 0).then(|| 100.0 * received as f64 / sent as f64))
}

/// Mean `received - sent` in milliseconds.
pub fn avg_e2e_delay(delivered: &[(SimTime, SimTime)]) -> Option<f64> {
    if delivered.is_empty() {
        return None;
    }
    let total: u128 = delivered.iter().map(|&(s, r)| u128::from((r - s).as_micros())).sum();
    Some(total as f64 / delivered.len() as f64 / 1000.0)
}

pub fn packet_loss(dropped: u64, sent: u64) -> Option<f64> {
    (sent > 0).then(|| 100.0 * dropped as f64 / sent as f64)
}

/// Routing transmissions per delivered data packet, as a plain ratio.
pub fn nrl(routing: u64, received: u64) -> Option<f64> {
    if routing == 0 {
        return Some(0.0);
    }
    (received > 0).then(|| routing as f64 / received as f64)
}

/// kbit/s over `[start, stop]`.
pub fn avg_throughput(received_bytes: u64, start: SimTime, stop: SimTime) -> Option<f64> {
    (stop > start).then(|| received_bytes as f64 * 8.0 / (stop - start).as_secs_f64() / 1000.0)
}

fn is_terminal(reason: DropReason) -> bool {
    !matches!(reason, DropReason::Collision | DropReason::Dup)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub pdr: Option<f64>,
    pub e2e_ms: Option<f64>,
    pub loss_pct: Option<f64>,
    pub nrl: Option<f64>,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub routing: u64,
    pub received_bytes: u64,
    pub throughput_kbps: Option<f64>,
    /// First and last APP-layer DATA event.
    pub start: Option<SimTime>,
    pub stop: Option<SimTime>,
    /// Terminal DATA drops keyed by `LAYER REASON`.
    pub drops_by_cause: BTreeMap<String, u64>,
    /// Routing transmissions keyed by packet kind.
    pub routing_by_kind: BTreeMap<String, u64>,
}

impl MetricsReport {
    /// `sent = received + dropped + in flight`.
    pub fn accounting_holds(&self) -> bool {
        self.sent == self.received + self.dropped + self.in_flight
    }
}

/// Computes a report from parsed records.
pub fn analyze(records: &[TraceRecord]) -> Result<MetricsReport, MetricsError> {
    let mut sent_at: HashMap<PacketId, SimTime> = HashMap::new();
    let mut received_at: HashMap<PacketId, SimTime> = HashMap::new();
    let mut dropped: HashMap<PacketId, (Layer, DropReason)> = HashMap::new();
    let mut report = MetricsReport::default();
    let mut delays = Vec::new();

    for r in records {
        let data = r.kind == PacketKind::Data;
        if data && r.layer == Layer::App && matches!(r.event, TraceEvent::Sent | TraceEvent::Received) {
            report.start = Some(report.start.map_or(r.time, |s| s.min(r.time)));
            report.stop = Some(report.stop.map_or(r.time, |s| s.max(r.time)));
        }
        match (r.event, r.layer, data) {
            (TraceEvent::Sent, Layer::App, true) => {
                if sent_at.insert(r.packet, r.time).is_some() {
                    return Err(MetricsError::Integrity(format!("packet {} originated twice", r.packet)));
                }
            }
            (TraceEvent::Received, Layer::App, true) => {
                let Some(&at) = sent_at.get(&r.packet) else {
                    return Err(MetricsError::Integrity(format!("packet {} received but never sent", r.packet)));
                };
                if received_at.insert(r.packet, r.time).is_some() {
                    return Err(MetricsError::Integrity(format!("packet {} received twice", r.packet)));
                }
                if r.time < at {
                    return Err(MetricsError::Integrity(format!("packet {} received before it was sent", r.packet)));
                }
                delays.push((at, r.time));
                report.received_bytes += u64::from(r.size);
            }
            (TraceEvent::Dropped, layer, true) => {
                if let Some(reason) = r.reason.filter(|&x| is_terminal(x)) {
                    dropped.entry(r.packet).or_insert((layer, reason));
                }
            }
            (TraceEvent::Sent | TraceEvent::Forwarded, Layer::Rtr, false) => {
                report.routing += 1;
                *report.routing_by_kind.entry(r.kind.as_str().to_string()).or_default() += 1;
            }
            _ => {}
        }
    }

    report.sent = sent_at.len() as u64;
    report.received = received_at.len() as u64;
    for (id, (layer, reason)) in &dropped {
        if sent_at.contains_key(id) && !received_at.contains_key(id) {
            report.dropped += 1;
            *report.drops_by_cause.entry(format!("{} {}", layer.as_str(), reason.as_str())).or_default() += 1;
        }
    }
    report.in_flight = report.sent - report.received - report.dropped;
    report.pdr = pdr(report.received, report.sent)?;
    report.e2e_ms = avg_e2e_delay(&delays);
    report.loss_pct = packet_loss(report.dropped, report.sent);
    report.nrl = nrl(report.routing, report.received);
    report.throughput_kbps = match (report.start, report.stop) {
        (Some(a), Some(b)) => avg_throughput(report.received_bytes, a, b),
        _ => None,
    };
    Ok(report)
}

pub fn analyze_file(path: &Path) -> Result<MetricsReport, MetricsError> {
    let file = std::fs::File::open(path).map_err(TraceError::Io)?;
    analyze(&read_trace(std::io::BufReader::new(file))?)
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.decimals$}"))
}

fn opt_secs(t: Option<SimTime>) -> String {
    t.map_or_else(|| "N/A".to_string(), |t| t.to_string())
}

/// Rows of the human-readable table: label, value formatter.
type Row = (&'static str, fn(&MetricsReport) -> String);

const ROWS: &[Row] = &[
    ("PDR (%)", |r| opt(r.pdr, 2)),
    ("Average E2E Delay (ms)", |r| opt(r.e2e_ms, 2)),
    ("Packet Loss (%)", |r| opt(r.loss_pct, 2)),
    ("NRL", |r| opt(r.nrl, 2)),
    ("Packets Dropped", |r| r.dropped.to_string()),
    ("Packets Send", |r| r.sent.to_string()),
    ("Packets Received", |r| r.received.to_string()),
    ("Packets In Flight", |r| r.in_flight.to_string()),
    ("Routing Packets", |r| r.routing.to_string()),
    ("Average Throughput (Kbps)", |r| opt(r.throughput_kbps, 2)),
    ("Start Time (s)", |r| opt_secs(r.start)),
    ("Stop Time (s)", |r| opt_secs(r.stop)),
];

/// Side-by-side table with one column per labelled report.
pub fn format_table(columns: &[(&str, &MetricsReport)]) -> String {
    let label_w = ROWS.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> = columns.iter().map(|(_, r)| ROWS.iter().map(|(_, f)| f(r)).collect()).collect();
    let widths: Vec<usize> = columns
        .iter()
        .zip(&cells)
        .map(|((name, _), c)| c.iter().map(String::len).chain([name.len()]).max().unwrap_or(0))
        .collect();
    let mut out = format!("{:label_w$}", "Metric");
    for ((name, _), w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {name:>w$}");
    }
    out.push('\n');
    for (i, (label, _)) in ROWS.iter().enumerate() {
        let _ = write!(out, "{label:label_w$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", c[i]);
        }
        out.push('\n');
    }
    out
}

/// Single-column report followed by the provenance breakdown.
pub fn format_report(name: &str, report: &MetricsReport) -> String {
    let mut out = format_table(&[(name, report)]);
    if !report.drops_by_cause.is_empty() {
        out.push_str("\nDrops by cause\n");
        for (k, v) in &report.drops_by_cause {
            let _ = writeln!(out, "  {k:<24} {v}");
        }
    }
    if !report.routing_by_kind.is_empty() {
        out.push_str("\nRouting packets by kind\n");
        for (k, v) in &report.routing_by_kind {
            let _ = writeln!(out, "  {k:<24} {v}");
        }
    }
    out
}

pub const CSV_HEADER: &str =
    "protocol,scenario,seed,pdr,e2e_ms,loss_pct,nrl,dropped,sent,received,routing,throughput_kbps,start_s,stop_s";

fn csv_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.decimals$}"))
}

pub fn csv_row(protocol: &str, scenario: &str, seed: u64, r: &MetricsReport) -> String {
    format!(
        "{protocol},{scenario},{seed},{},{},{},{},{},{},{},{},{},{},{}",
        csv_opt(r.pdr, 4),
        csv_opt(r.e2e_ms, 4),
        csv_opt(r.loss_pct, 4),
        csv_opt(r.nrl, 4),
        r.dropped,
        r.sent,
        r.received,
        r.routing,
        csv_opt(r.throughput_kbps, 3),
        r.start.map_or_else(|| "NA".to_string(), |t| t.to_string()),
        r.stop.map_or_else(|| "NA".to_string(), |t| t.to_string()),
    )
}
