//! Vehicle motion: waypoint traces, a synthetic urban-grid generator, and a
//! spatial index for range queries.
//!
//! Trace files are line oriented:
//!
//! ```text
//! # comment
//! node <id> at <t> pos <x> <y>
//! node <id> at <t> goto <x> <y> speed <v>
//! ```
//!
//! A `goto` at time `t` starts moving the vehicle from wherever it is at `t`
//! toward `(x, y)` at `v` m/s; it parks on arrival. The first line for a node
//! must be its `pos`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::kernel::RandomStream;
use crate::packet::NodeId;
use crate::time::SimTime;

pub type Point = (f64, f64);

pub fn distance(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MobilityError {
    #[error("grid has zero area but {0} vehicles were requested")]
    ZeroAreaGrid(usize),
    #[error("invalid speed range [{min}, {max}]")]
    SpeedRange { min: String, max: String },
    #[error("node {node}: {message}")]
    InvalidTrace { node: NodeId, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub at: SimTime,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    start: SimTime,
    from: Point,
    to: Point,
    speed: f64,
    length: f64,
}

impl Segment {
    fn position(&self, t: SimTime) -> Point {
        if self.length == 0.0 || self.speed <= 0.0 {
            return if self.length == 0.0 { self.to } else { self.from };
        }
        let travelled = self.speed * (t - self.start).as_secs_f64();
        if travelled >= self.length {
            return self.to;
        }
        let f = travelled / self.length;
        (self.from.0 + (self.to.0 - self.from.0) * f, self.from.1 + (self.to.1 - self.from.1) * f)
    }
}

/// One vehicle's piecewise-linear motion.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    node: NodeId,
    placed_at: SimTime,
    initial: Point,
    waypoints: Vec<Waypoint>,
    segments: Vec<Segment>,
}

impl MobilityTrace {
    pub fn new(node: NodeId, placed_at: SimTime, initial: Point, waypoints: Vec<Waypoint>) -> Result<Self, MobilityError> {
        let invalid = |message: String| MobilityError::InvalidTrace { node, message };
        if !(initial.0.is_finite() && initial.1.is_finite()) {
            return Err(invalid("non-finite initial position".into()));
        }
        let mut trace = MobilityTrace { node, placed_at, initial, waypoints: Vec::new(), segments: Vec::new() };
        for w in waypoints {
            trace.push(w).map_err(invalid)?;
        }
        Ok(trace)
    }

    /// A vehicle that never moves.
    pub fn fixed(node: NodeId, at: Point) -> Self {
        MobilityTrace { node, placed_at: SimTime::ZERO, initial: at, waypoints: Vec::new(), segments: Vec::new() }
    }

    fn push(&mut self, w: Waypoint) -> Result<(), String> {
        if !(w.x.is_finite() && w.y.is_finite()) {
            return Err("non-finite waypoint coordinates".into());
        }
        if !(w.speed.is_finite() && w.speed >= 0.0) {
            return Err(format!("invalid speed {}", w.speed));
        }
        if w.at < self.placed_at {
            return Err("non-monotone time: waypoint precedes initial position".into());
        }
        if let Some(last) = self.waypoints.last() {
            if w.at <= last.at {
                return Err(format!("non-monotone time: {} after {}", w.at, last.at));
            }
        }
        let from = self.position_at(w.at);
        let to = (w.x, w.y);
        self.segments.push(Segment { start: w.at, from, to, speed: w.speed, length: distance(from, to) });
        self.waypoints.push(w);
        Ok(())
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn initial(&self) -> Point {
        self.initial
    }

    pub fn placed_at(&self) -> SimTime {
        self.placed_at
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn max_speed(&self) -> f64 {
        self.waypoints.iter().map(|w| w.speed).fold(0.0, f64::max)
    }

    /// Initial position before the first waypoint, linear interpolation while
    /// moving, parked at the target once reached.
    pub fn position_at(&self, t: SimTime) -> Point {
        let i = self.segments.partition_point(|s| s.start <= t);
        if i == 0 {
            self.initial
        } else {
            self.segments[i - 1].position(t)
        }
    }

    /// For traces where each waypoint starts when the previous target is
    /// reached: the speed implied by distance over elapsed time must match the
    /// declared speed within 1 %.
    pub fn check_speed_consistency(&self) -> Result<(), String> {
        for pair in self.segments.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let dt = (b.start - a.start).as_secs_f64();
            if a.length == 0.0 || dt == 0.0 {
                continue;
            }
            let implied = a.length / dt;
            if (implied - a.speed).abs() > 0.01 * a.speed {
                return Err(format!(
                    "segment at {}: implied speed {implied:.4} m/s vs declared {:.4} m/s",
                    a.start, a.speed
                ));
            }
        }
        Ok(())
    }
}

fn parse_f64(tok: Option<&str>, what: &str) -> Result<f64, String> {
    let tok = tok.ok_or_else(|| format!("missing {what}"))?;
    let v: f64 = tok.parse().map_err(|_| format!("invalid {what} `{tok}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite {what} `{tok}`"));
    }
    Ok(v)
}

/// Parses a trace file. Returns one trace per declared node, ordered by id.
pub fn parse_trace(text: &str) -> Result<Vec<MobilityTrace>, TraceParseError> {
    let mut traces: BTreeMap<NodeId, MobilityTrace> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| TraceParseError { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        if toks.next() != Some("node") {
            return Err(err("expected `node`".into()));
        }
        let id: NodeId = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err("invalid node id".into()))?;
        if toks.next() != Some("at") {
            return Err(err("expected `at`".into()));
        }
        let at: SimTime = toks
            .next()
            .ok_or_else(|| err("missing time".into()))?
            .parse()
            .map_err(|e: crate::time::ParseTimeError| err(e.to_string()))?;
        match toks.next() {
            Some("pos") => {
                let x = parse_f64(toks.next(), "x").map_err(err)?;
                let y = parse_f64(toks.next(), "y").map_err(err)?;
                if toks.next().is_some() {
                    return Err(err("trailing tokens".into()));
                }
                if traces.contains_key(&id) {
                    return Err(err(format!("duplicate pos for node {id}")));
                }
                traces.insert(id, MobilityTrace::fixed(id, (x, y)));
                traces.get_mut(&id).unwrap().placed_at = at;
            }
            Some("goto") => {
                let x = parse_f64(toks.next(), "x").map_err(err)?;
                let y = parse_f64(toks.next(), "y").map_err(err)?;
                if toks.next() != Some("speed") {
                    return Err(err("expected `speed`".into()));
                }
                let speed = parse_f64(toks.next(), "speed").map_err(err)?;
                if toks.next().is_some() {
                    return Err(err("trailing tokens".into()));
                }
                let trace = traces
                    .get_mut(&id)
                    .ok_or_else(|| err(format!("unknown node {id}: first line for a node must be `pos`")))?;
                trace.push(Waypoint { at, x, y, speed }).map_err(err)?;
            }
            Some(other) => return Err(err(format!("unknown directive `{other}`"))),
            None => return Err(err("missing directive".into())),
        }
    }
    Ok(traces.into_values().collect())
}

pub fn write_traces(traces: &[MobilityTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        let _ = writeln!(out, "node {} at {} pos {} {}", t.node, t.placed_at, t.initial.0, t.initial.1);
        for w in &t.waypoints {
            let _ = writeln!(out, "node {} at {} goto {} {} speed {}", t.node, w.at, w.x, w.y, w.speed);
        }
    }
    out
}

/// Manhattan street grid: `rows × cols` blocks of `block` meters.
#[derive(Debug, Clone, PartialEq)]
pub struct UrbanGrid {
    pub rows: u32,
    pub cols: u32,
    pub block: f64,
    pub vehicles: usize,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl UrbanGrid {
    pub fn width(&self) -> f64 {
        f64::from(self.cols) * self.block
    }

    pub fn height(&self) -> f64 {
        f64::from(self.rows) * self.block
    }

    fn intersection(&self, (r, c): (u32, u32)) -> Point {
        (f64::from(c) * self.block, f64::from(r) * self.block)
    }

    fn adjacent(&self, (r, c): (u32, u32)) -> Vec<(u32, u32)> {
        let mut v = Vec::with_capacity(4);
        if r > 0 {
            v.push((r - 1, c));
        }
        if r < self.rows {
            v.push((r + 1, c));
        }
        if c > 0 {
            v.push((r, c - 1));
        }
        if c < self.cols {
            v.push((r, c + 1));
        }
        v
    }

    /// Distance from `p` to the nearest street segment.
    pub fn distance_to_streets(&self, p: Point) -> f64 {
        let clamp = |v: f64, hi: f64| v.clamp(0.0, hi);
        let (w, h) = (self.width(), self.height());
        // Nearest vertical street (x = k·block) and horizontal street (y = k·block).
        let kx = (p.0 / self.block).round().clamp(0.0, f64::from(self.cols));
        let ky = (p.1 / self.block).round().clamp(0.0, f64::from(self.rows));
        let to_vertical = distance(p, (kx * self.block, clamp(p.1, h)));
        let to_horizontal = distance(p, (clamp(p.0, w), ky * self.block));
        to_vertical.min(to_horizontal)
    }
}

/// Random walks over the street grid: each vehicle starts at a random
/// intersection and at every intersection turns uniformly at random (never
/// straight back unless it is a dead end), with a per-block speed drawn
/// uniformly from the configured range.
pub fn generate_grid_traces(
    grid: &UrbanGrid,
    duration: SimTime,
    rng: &mut RandomStream,
) -> Result<Vec<MobilityTrace>, MobilityError> {
    if !(grid.speed_min >= 0.0 && grid.speed_min <= grid.speed_max && grid.speed_max.is_finite()) {
        return Err(MobilityError::SpeedRange { min: grid.speed_min.to_string(), max: grid.speed_max.to_string() });
    }
    if grid.vehicles == 0 {
        return Ok(Vec::new());
    }
    if grid.rows == 0 || grid.cols == 0 || !(grid.block > 0.0) {
        return Err(MobilityError::ZeroAreaGrid(grid.vehicles));
    }
    let mut traces = Vec::with_capacity(grid.vehicles);
    for v in 0..grid.vehicles {
        let node = v as NodeId;
        let start_corner = (rng.gen_range(0..=grid.rows), rng.gen_range(0..=grid.cols));
        let mut here = start_corner;
        let mut previous: Option<(u32, u32)> = None;
        let mut waypoints = Vec::new();
        let mut t = SimTime::ZERO;
        while t < duration {
            let mut choices = grid.adjacent(here);
            if choices.len() > 1 {
                if let Some(p) = previous {
                    choices.retain(|&c| c != p);
                }
            }
            let next = choices[rng.gen_range(0..choices.len())];
            let speed = if grid.speed_min == grid.speed_max {
                grid.speed_min
            } else {
                rng.gen_range(grid.speed_min..=grid.speed_max)
            };
            if speed <= 0.0 {
                break;
            }
            let (x, y) = grid.intersection(next);
            waypoints.push(Waypoint { at: t, x, y, speed });
            // Round the leg up so the vehicle always reaches the corner before turning.
            t += SimTime::from_secs_f64_ceil(grid.block / speed).max(SimTime::from_micros(1));
            previous = Some(here);
            here = next;
        }
        traces.push(MobilityTrace::new(node, SimTime::ZERO, grid.intersection(start_corner), waypoints)?);
    }
    Ok(traces)
}

/// Position lookup for all vehicles plus a coarse grid index, rebuilt once per
/// time bucket, for "who is within r of p at t" queries.
#[derive(Debug)]
pub struct Mobility {
    traces: Vec<MobilityTrace>,
    max_speed: f64,
    cell: f64,
    bucket: SimTime,
    built: Option<u64>,
    cells: HashMap<(i64, i64), Vec<NodeId>>,
}

impl Mobility {
    /// `traces[i]` must describe node `i`.
    pub fn new(traces: Vec<MobilityTrace>, cell: f64) -> Result<Self, MobilityError> {
        for (i, t) in traces.iter().enumerate() {
            if t.node() as usize != i {
                return Err(MobilityError::InvalidTrace {
                    node: t.node(),
                    message: format!("node ids must be 0..{} without gaps", traces.len()),
                });
            }
        }
        let max_speed = traces.iter().map(MobilityTrace::max_speed).fold(0.0, f64::max);
        Ok(Mobility {
            traces,
            max_speed,
            cell: cell.max(1.0),
            bucket: SimTime::from_secs(1),
            built: None,
            cells: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn traces(&self) -> &[MobilityTrace] {
        &self.traces
    }

    pub fn position(&self, node: NodeId, t: SimTime) -> Point {
        self.traces[node as usize].position_at(t)
    }

    fn cell_of(&self, p: Point) -> (i64, i64) {
        ((p.0 / self.cell).floor() as i64, (p.1 / self.cell).floor() as i64)
    }

    fn rebuild(&mut self, t: SimTime) {
        let b = t.as_micros() / self.bucket.as_micros();
        if self.built == Some(b) {
            return;
        }
        let at = SimTime::from_micros(b * self.bucket.as_micros());
        self.cells.clear();
        for i in 0..self.traces.len() {
            let c = self.cell_of(self.traces[i].position_at(at));
            self.cells.entry(c).or_default().push(i as NodeId);
        }
        self.built = Some(b);
    }

    /// Every node whose position at `t` lies within `radius` of `center`,
    /// sorted by id.
    pub fn within(&mut self, center: Point, radius: f64, t: SimTime, out: &mut Vec<NodeId>) {
        out.clear();
        self.rebuild(t);
        let slack = radius + self.max_speed * self.bucket.as_secs_f64() + 1e-6;
        let lo = self.cell_of((center.0 - slack, center.1 - slack));
        let hi = self.cell_of((center.0 + slack, center.1 + slack));
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                if let Some(nodes) = self.cells.get(&(cx, cy)) {
                    for &n in nodes {
                        if distance(self.traces[n as usize].position_at(t), center) <= radius {
                            out.push(n);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}
