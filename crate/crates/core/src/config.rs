//! Scenario configuration: `key = value` lines grouped under `[section]`
//! headers, optional density presets, validation and a canonical dump.
//!
//! ```text
//! preset = low
//! protocol = AODV
//! seed = 3
//!
//! [traffic]
//! packet_size = 256
//! ```

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::mobility::parse_trace;
use crate::routing::ProtocolKind;
use crate::time::SimTime;
use crate::traffic::TrafficSpec;
use crate::wireless::{MacConfig, PhyConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if self.key.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "`{}`: {}", self.key, self.message)
        }
    }
}

fn err(line: Option<usize>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { line, key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Low,
    Medium,
    High,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Low, Preset::Medium, Preset::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Low => "low",
            Preset::Medium => "medium",
            Preset::High => "high",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown preset `{s}` (expected low, medium or high)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    /// Block edge in metres.
    pub block: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MobilitySource {
    Grid(GridSpec),
    Trace(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    pub connections: usize,
    pub packet_size: u32,
    pub interval: SimTime,
    pub start: SimTime,
    pub stop: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub vehicles: usize,
    /// Debug override that shrinks large scenarios.
    pub vehicle_cap: Option<usize>,
    pub mobility: MobilitySource,
    /// Must be set (here or on the command line) before running.
    pub protocol: Option<ProtocolKind>,
    pub traffic: TrafficParams,
    pub phy: PhyConfig,
    pub mac: MacConfig,
    pub sim_end: SimTime,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Density presets: an 8x8 grid of 200 m blocks, 5 to 20 m/s, 512-byte
    /// packets at 4 per second, 1000 s runs.
    pub fn preset(p: Preset) -> Self {
        let (vehicles, connections, stop) = match p {
            Preset::Low => (11, 8, 40),
            Preset::Medium => (60, 50, 240),
            Preset::High => (1218, 50, 240),
        };
        ScenarioConfig {
            name: p.as_str().to_string(),
            vehicles,
            vehicle_cap: None,
            mobility: MobilitySource::Grid(GridSpec { rows: 8, cols: 8, block: 200.0, speed_min: 5.0, speed_max: 20.0 }),
            protocol: None,
            traffic: TrafficParams {
                connections,
                packet_size: 512,
                interval: SimTime::from_millis(250),
                start: SimTime::from_secs(10),
                stop: SimTime::from_secs(stop),
            },
            phy: PhyConfig::default(),
            mac: MacConfig::default(),
            sim_end: SimTime::from_secs(1000),
            seed: 1,
        }
    }

    /// Vehicle count after applying `vehicle_cap`.
    pub fn effective_vehicles(&self) -> usize {
        self.vehicle_cap.map_or(self.vehicles, |c| c.min(self.vehicles))
    }

    pub fn traffic_spec(&self) -> TrafficSpec {
        TrafficSpec {
            connections: self.traffic.connections,
            size: self.traffic.packet_size,
            interval: self.traffic.interval,
            start: self.traffic.start,
            stop: self.traffic.stop,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = |key: &str, msg: String| Err(err(None, key, msg));
        if self.name.is_empty() || self.name.contains(char::is_whitespace) {
            return v("name", "must be a non-empty word".into());
        }
        let n = self.effective_vehicles();
        if n < 2 && self.traffic.connections > 0 {
            return v("vehicles", format!("{n} vehicles cannot host any connection"));
        }
        if n == 0 {
            return v("vehicles", "must be positive".into());
        }
        if self.vehicle_cap == Some(0) {
            return v("vehicle_cap", "must be positive".into());
        }
        let possible = n * n.saturating_sub(1);
        if self.traffic.connections > possible {
            return v("connections", format!("{} exceeds the {possible} ordered pairs of {n} vehicles", self.traffic.connections));
        }
        if self.traffic.packet_size == 0 {
            return v("packet_size", "must be positive".into());
        }
        if self.traffic.interval == SimTime::ZERO {
            return v("interval", "must be positive".into());
        }
        if self.traffic.start >= self.traffic.stop {
            return v("traffic_stop", "must be after traffic_start".into());
        }
        if self.sim_end < self.traffic.stop {
            return v("sim_end", "must not precede traffic_stop".into());
        }
        if let MobilitySource::Grid(g) = &self.mobility {
            if g.rows == 0 || g.cols == 0 {
                return v("grid", "needs at least one block in each direction".into());
            }
            if !(g.block > 0.0 && g.block.is_finite()) {
                return v("block", "must be positive".into());
            }
            if !(g.speed_min > 0.0 && g.speed_min <= g.speed_max && g.speed_max.is_finite()) {
                return v("speed_min", format!("invalid speed range [{}, {}]", g.speed_min, g.speed_max));
            }
        }
        self.phy.validate().or_else(|m| v("phy", m))?;
        self.mac.validate().or_else(|m| v("mac", m))?;
        Ok(())
    }

    /// Canonical text form; loading it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "vehicles = {}", self.vehicles);
        if let Some(c) = self.vehicle_cap {
            let _ = writeln!(s, "vehicle_cap = {c}");
        }
        if let Some(p) = self.protocol {
            let _ = writeln!(s, "protocol = {p}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "sim_end = {}", self.sim_end);
        s.push_str("\n[mobility]\n");
        match &self.mobility {
            MobilitySource::Grid(g) => {
                let _ = writeln!(s, "grid = {}x{}", g.rows, g.cols);
                let _ = writeln!(s, "block = {}", g.block);
                let _ = writeln!(s, "speed_min = {}", g.speed_min);
                let _ = writeln!(s, "speed_max = {}", g.speed_max);
            }
            MobilitySource::Trace(p) => {
                let _ = writeln!(s, "trace = {}", p.display());
            }
        }
        let t = &self.traffic;
        s.push_str("\n[traffic]\n");
        let _ = writeln!(s, "connections = {}", t.connections);
        let _ = writeln!(s, "packet_size = {}", t.packet_size);
        let _ = writeln!(s, "interval = {}", t.interval);
        let _ = writeln!(s, "traffic_start = {}", t.start);
        let _ = writeln!(s, "traffic_stop = {}", t.stop);
        let p = &self.phy;
        s.push_str("\n[phy]\n");
        let _ = writeln!(s, "tx_range = {}", p.tx_range);
        let _ = writeln!(s, "cs_range = {}", p.cs_range);
        let _ = writeln!(s, "interference_range = {}", p.interference_range);
        let _ = writeln!(s, "rate_mbps = {}", p.rate_mbps);
        let _ = writeln!(s, "phy_overhead = {}", p.phy_overhead);
        let m = &self.mac;
        s.push_str("\n[mac]\n");
        let _ = writeln!(s, "slot = {}", m.slot);
        let _ = writeln!(s, "sifs = {}", m.sifs);
        let _ = writeln!(s, "aifsn = {}", m.aifsn);
        let _ = writeln!(s, "cw_min = {}", m.cw_min);
        let _ = writeln!(s, "cw_max = {}", m.cw_max);
        let _ = writeln!(s, "retry_limit = {}", m.retry_limit);
        let _ = writeln!(s, "header_bytes = {}", m.header_bytes);
        let _ = writeln!(s, "ack_bytes = {}", m.ack_bytes);
        let _ = writeln!(s, "queue_capacity = {}", m.queue_capacity);
        s
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_value<T: FromStr>(e: &Entry, key: &str, what: &str) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| err(Some(e.line), key, format!("expected {what}, found `{}`", e.value)))
}

fn parse_grid(e: &Entry) -> Result<(u32, u32), ConfigError> {
    let bad = || err(Some(e.line), "grid", format!("expected ROWSxCOLS, found `{}`", e.value));
    let (r, c) = e.value.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

const KEYS: &[(&str, &str)] = &[
    ("", "preset"),
    ("", "name"),
    ("", "vehicles"),
    ("", "vehicle_cap"),
    ("", "protocol"),
    ("", "seed"),
    ("", "sim_end"),
    ("mobility", "trace"),
    ("mobility", "grid"),
    ("mobility", "block"),
    ("mobility", "speed_min"),
    ("mobility", "speed_max"),
    ("traffic", "connections"),
    ("traffic", "packet_size"),
    ("traffic", "interval"),
    ("traffic", "traffic_start"),
    ("traffic", "traffic_stop"),
    ("phy", "tx_range"),
    ("phy", "cs_range"),
    ("phy", "interference_range"),
    ("phy", "rate_mbps"),
    ("phy", "phy_overhead"),
    ("mac", "slot"),
    ("mac", "sifs"),
    ("mac", "aifsn"),
    ("mac", "cw_min"),
    ("mac", "cw_max"),
    ("mac", "retry_limit"),
    ("mac", "header_bytes"),
    ("mac", "ack_bytes"),
    ("mac", "queue_capacity"),
];

/// Keys that only make sense without a preset to fall back on.
const REQUIRED_WITHOUT_PRESET: &[&str] = &["name", "connections", "traffic_start", "traffic_stop"];

/// Parses config text. Relative trace paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ConfigError> {
    let mut entries: HashMap<&'static str, Entry> = HashMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            if !KEYS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(err(Some(line), "", format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(err(Some(line), "", format!("expected `key = value`, found `{body}`")));
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(&(_, key)) = KEYS.iter().find(|(s, key)| *s == section && *key == k) else {
            let where_ = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
            return Err(err(Some(line), k, format!("unknown key at {where_}")));
        };
        if v.is_empty() {
            return Err(err(Some(line), key, "missing value"));
        }
        if let Some(prev) = entries.insert(key, Entry { line, value: v.to_string() }) {
            return Err(err(Some(line), key, format!("already set on line {}", prev.line)));
        }
    }

    let mut cfg = match entries.get("preset") {
        Some(e) => ScenarioConfig::preset(e.value.parse().map_err(|m: String| err(Some(e.line), "preset", m))?),
        None => {
            for key in REQUIRED_WITHOUT_PRESET {
                if !entries.contains_key(key) {
                    return Err(err(None, key, "missing (required when no preset is given)"));
                }
            }
            let has_trace = entries.contains_key("trace");
            if !has_trace && !entries.contains_key("vehicles") {
                return Err(err(None, "vehicles", "missing (required for grid mobility)"));
            }
            ScenarioConfig::preset(Preset::Low)
        }
    };

    let has_grid_keys = ["grid", "block", "speed_min", "speed_max"].iter().any(|k| entries.contains_key(k));
    if let Some(e) = entries.get("trace") {
        if has_grid_keys {
            return Err(err(Some(e.line), "trace", "cannot be combined with grid mobility keys"));
        }
        let path = base_dir.join(&e.value);
        let text = std::fs::read_to_string(&path)
            .map_err(|x| err(Some(e.line), "trace", format!("cannot read {}: {x}", path.display())))?;
        let traces = parse_trace(&text).map_err(|x| err(Some(e.line), "trace", x.to_string()))?;
        if let Some(v) = entries.get("vehicles") {
            let n: usize = parse_value(v, "vehicles", "a count")?;
            if n != traces.len() {
                return Err(err(Some(v.line), "vehicles", format!("{n} does not match the {} nodes in the trace", traces.len())));
            }
        }
        cfg.vehicles = traces.len();
        cfg.mobility = MobilitySource::Trace(path);
    }

    for (&key, e) in &entries {
        let line = Some(e.line);
        match key {
            "preset" | "trace" => {}
            "name" => cfg.name = e.value.clone(),
            "vehicles" => cfg.vehicles = parse_value(e, key, "a count")?,
            "vehicle_cap" => cfg.vehicle_cap = Some(parse_value(e, key, "a count")?),
            "protocol" => cfg.protocol = Some(e.value.parse().map_err(|m: String| err(line, key, m))?),
            "seed" => cfg.seed = parse_value(e, key, "an unsigned integer")?,
            "sim_end" => cfg.sim_end = parse_value(e, key, "seconds")?,
            "connections" => cfg.traffic.connections = parse_value(e, key, "a non-negative count")?,
            "packet_size" => cfg.traffic.packet_size = parse_value(e, key, "bytes")?,
            "interval" => cfg.traffic.interval = parse_value(e, key, "seconds")?,
            "traffic_start" => cfg.traffic.start = parse_value(e, key, "seconds")?,
            "traffic_stop" => cfg.traffic.stop = parse_value(e, key, "seconds")?,
            "tx_range" => cfg.phy.tx_range = parse_value(e, key, "metres")?,
            "cs_range" => cfg.phy.cs_range = parse_value(e, key, "metres")?,
            "interference_range" => cfg.phy.interference_range = parse_value(e, key, "metres")?,
            "rate_mbps" => cfg.phy.rate_mbps = parse_value(e, key, "Mbit/s")?,
            "phy_overhead" => cfg.phy.phy_overhead = parse_value(e, key, "seconds")?,
            "slot" => cfg.mac.slot = parse_value(e, key, "seconds")?,
            "sifs" => cfg.mac.sifs = parse_value(e, key, "seconds")?,
            "aifsn" => cfg.mac.aifsn = parse_value(e, key, "a slot count")?,
            "cw_min" => cfg.mac.cw_min = parse_value(e, key, "a slot count")?,
            "cw_max" => cfg.mac.cw_max = parse_value(e, key, "a slot count")?,
            "retry_limit" => cfg.mac.retry_limit = parse_value(e, key, "a count")?,
            "header_bytes" => cfg.mac.header_bytes = parse_value(e, key, "bytes")?,
            "ack_bytes" => cfg.mac.ack_bytes = parse_value(e, key, "bytes")?,
            "queue_capacity" => cfg.mac.queue_capacity = parse_value(e, key, "a frame count")?,
            "grid" | "block" | "speed_min" | "speed_max" => {
                let MobilitySource::Grid(g) = &mut cfg.mobility else { unreachable!("trace excludes grid keys") };
                match key {
                    "grid" => (g.rows, g.cols) = parse_grid(e)?,
                    "block" => g.block = parse_value(e, key, "metres")?,
                    "speed_min" => g.speed_min = parse_value(e, key, "m/s")?,
                    _ => g.speed_max = parse_value(e, key, "m/s")?,
                }
            }
            _ => unreachable!("keys are checked against the table"),
        }
    }

    cfg.validate().map_err(|mut e| {
        e.line = entries.get(e.key.as_str()).map(|x| x.line);
        e
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(None, "", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
