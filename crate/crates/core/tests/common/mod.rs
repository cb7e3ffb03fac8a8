//! Scenario builders and independent oracles shared by the integration
//! tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vrl_core::config::{GridSpec, MobilitySource, Preset, ScenarioConfig, TrafficParams};
use vrl_core::metrics::{analyze, MetricsReport};
use vrl_core::mobility::{distance, Mobility, MobilityTrace, Point};
use vrl_core::packet::{NodeId, PacketId, PacketKind};
use vrl_core::routing::ProtocolKind;
use vrl_core::runner;
use vrl_core::sim::{SimSetup, Simulation};
use vrl_core::time::SimTime;
use vrl_core::routing::Layer;
use vrl_core::trace::{parse_trace, TraceEvent, TraceRecord};
use vrl_core::traffic::Flow;
use vrl_core::wireless::{MacConfig, PhyConfig};

pub const RANGE: f64 = 250.0;

pub fn line(n: usize, spacing: f64) -> Vec<Point> {
    (0..n).map(|i| (i as f64 * spacing, 0.0)).collect()
}

/// Square lattice; diagonals (283 m at 200 m spacing) are out of range.
pub fn lattice(side: usize, spacing: f64) -> Vec<Point> {
    (0..side * side).map(|i| ((i % side) as f64 * spacing, (i / side) as f64 * spacing)).collect()
}

/// Uniform placement in a square, redrawn until the unit-disk graph is
/// connected.
pub fn random_connected(n: usize, side: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let pts: Vec<Point> = (0..n).map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side))).collect();
        if bfs_hops(&pts, RANGE).iter().all(|row| row.iter().all(Option::is_some)) {
            return pts;
        }
    }
}

/// All-pairs hop distances of the unit-disk graph.
pub fn bfs_hops(pts: &[Point], range: f64) -> Vec<Vec<Option<u32>>> {
    let n = pts.len();
    let adj: Vec<Vec<usize>> =
        (0..n).map(|a| (0..n).filter(|&b| b != a && distance(pts[a], pts[b]) <= range).collect()).collect();
    (0..n)
        .map(|s| {
            let mut dist = vec![None; n];
            dist[s] = Some(0);
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if dist[v].is_none() {
                        dist[v] = Some(dist[u].unwrap() + 1);
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

pub fn fixed_mobility(pts: &[Point]) -> Mobility {
    let traces = pts.iter().enumerate().map(|(i, &p)| MobilityTrace::fixed(i as NodeId, p)).collect();
    Mobility::new(traces, RANGE).unwrap()
}

pub fn setup(protocol: ProtocolKind, flows: Vec<Flow>, end: SimTime, seed: u64) -> SimSetup {
    SimSetup { protocol, phy: PhyConfig::default(), mac: MacConfig::default(), flows, end, seed }
}

/// The named static topologies the shortest-path check covers.
pub fn oracle_topologies() -> Vec<(String, Vec<Point>)> {
    let mut out = vec![("line5".to_string(), line(5, 200.0)), ("grid3x3".to_string(), lattice(3, 200.0))];
    for seed in 1..=3 {
        out.push((format!("random10_s{seed}"), random_connected(10, 600.0, seed)));
    }
    out
}

const WARMUP: SimTime = SimTime::from_secs(20);
const SLOT: SimTime = SimTime::from_secs(4);
const BURST: SimTime = SimTime::from_secs(3);

/// Gives every ordered pair its own burst of traffic, long enough for route
/// repair to settle, then asks the source which route it is using. Returns the number of pairs checked and a
/// description of each whose hop count differs from BFS.
pub fn shortest_path_mismatches(protocol: ProtocolKind, pts: &[Point]) -> (usize, Vec<String>) {
    let n = pts.len();
    let truth = bfs_hops(pts, RANGE);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let slot_start = |k: usize| WARMUP + SLOT.mul(k as u64);
    let flows = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| Flow {
            id: k as u32,
            src: a as NodeId,
            dst: b as NodeId,
            size: 512,
            interval: SimTime::from_millis(250),
            start: slot_start(k),
            stop: slot_start(k) + BURST,
        })
        .collect();
    let end = slot_start(pairs.len()) + SLOT;
    let mut sim = Simulation::new(setup(protocol, flows, end, 1), fixed_mobility(pts), std::io::sink()).unwrap();
    let mut bad = Vec::new();
    for (k, &(a, b)) in pairs.iter().enumerate() {
        sim.run_until(slot_start(k) + BURST).unwrap();
        let want = truth[a][b].unwrap();
        match sim.route(a as NodeId, b as NodeId) {
            Some(r) if r.hops == want => {}
            got => bad.push(format!("{a}->{b}: bfs {want}, got {:?}", got.map(|r| r.hops))),
        }
    }
    (pairs.len(), bad)
}

/// Small mobile scenario on a 4x4 block grid.
pub fn mobile_grid_config(protocol: ProtocolKind, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset(Preset::Low);
    cfg.name = "mobile20".into();
    cfg.vehicles = 20;
    cfg.mobility = MobilitySource::Grid(GridSpec { rows: 4, cols: 4, block: 200.0, speed_min: 5.0, speed_max: 20.0 });
    cfg.traffic = TrafficParams {
        connections: 10,
        packet_size: 512,
        interval: SimTime::from_millis(250),
        start: SimTime::from_secs(5),
        stop: SimTime::from_secs(120),
    };
    cfg.sim_end = SimTime::from_secs(125);
    cfg.protocol = Some(protocol);
    cfg.seed = seed;
    cfg
}

pub fn simulate_records(cfg: &ScenarioConfig) -> Vec<TraceRecord> {
    let (_, buf) = runner::simulate(cfg, Vec::new()).unwrap();
    parse_trace(std::str::from_utf8(&buf).unwrap()).unwrap()
}

/// Rebuilds each delivered DATA packet's path from the trace alone (source
/// from APP send, relays from RTR forwards, sink from APP receive) and
/// returns `(delivered, paths with a repeated node)`.
pub fn loop_check(records: &[TraceRecord]) -> (usize, Vec<(PacketId, Vec<NodeId>)>) {
    let mut paths: HashMap<PacketId, Vec<NodeId>> = HashMap::new();
    let mut delivered = Vec::new();
    for r in records.iter().filter(|r| r.kind == PacketKind::Data) {
        match (r.event, r.layer) {
            (TraceEvent::Sent, Layer::App) => {
                paths.insert(r.packet, vec![r.node]);
            }
            (TraceEvent::Forwarded, Layer::Rtr) => paths.entry(r.packet).or_default().push(r.node),
            (TraceEvent::Received, Layer::App) => {
                let path = paths.entry(r.packet).or_default();
                path.push(r.node);
                delivered.push(r.packet);
            }
            _ => {}
        }
    }
    let looping = delivered
        .iter()
        .filter_map(|id| {
            let p = &paths[id];
            let mut sorted = p.clone();
            sorted.sort_unstable();
            sorted.windows(2).any(|w| w[0] == w[1]).then(|| (*id, p.clone()))
        })
        .collect();
    (delivered.len(), looping)
}

/// Steady-state figures of a static in-range run.
#[derive(Debug, Clone, Copy)]
pub struct SteadyState {
    pub sent: u64,
    pub received: u64,
    pub pdr: f64,
    pub e2e_ms: f64,
}

/// Five static nodes within 150 m of each other carrying two flows.
/// Packets a flow originates before its first delivery are discovery
/// transients and are left out.
pub fn static_delivery(protocol: ProtocolKind) -> SteadyState {
    let pts = [(0.0, 0.0), (100.0, 0.0), (50.0, 80.0), (20.0, 120.0), (110.0, 100.0)];
    let flow = |id: u32, src: NodeId, dst: NodeId| Flow {
        id,
        src,
        dst,
        size: 512,
        interval: SimTime::from_millis(250),
        start: SimTime::from_secs(5),
        stop: SimTime::from_secs(65),
    };
    let flows = vec![flow(0, 0, 4), flow(1, 3, 1)];
    let s = setup(protocol, flows.clone(), SimTime::from_secs(70), 1);
    let (_, buf) = Simulation::new(s, fixed_mobility(&pts), Vec::new()).unwrap().run().unwrap();
    let records = parse_trace(std::str::from_utf8(&buf).unwrap()).unwrap();

    let mut sent: HashMap<PacketId, (SimTime, (NodeId, NodeId))> = HashMap::new();
    let mut recv: HashMap<PacketId, SimTime> = HashMap::new();
    for r in records.iter().filter(|r| r.kind == PacketKind::Data && r.layer == Layer::App) {
        match r.event {
            TraceEvent::Sent => {
                sent.insert(r.packet, (r.time, r.flow.unwrap()));
            }
            TraceEvent::Received => {
                recv.entry(r.packet).or_insert(r.time);
            }
            _ => {}
        }
    }
    let mut first_delivery: HashMap<(NodeId, NodeId), SimTime> = HashMap::new();
    for (id, t) in &recv {
        let (_, pair) = sent[id];
        let e = first_delivery.entry(pair).or_insert(*t);
        *e = (*e).min(*t);
    }
    let (mut n_sent, mut n_recv, mut delay) = (0u64, 0u64, 0.0);
    for (id, (t, pair)) in &sent {
        let Some(&settled) = first_delivery.get(pair) else {
            n_sent += 1;
            continue;
        };
        if *t < settled {
            continue;
        }
        n_sent += 1;
        if let Some(rt) = recv.get(id) {
            n_recv += 1;
            delay += (rt.as_secs_f64() - t.as_secs_f64()) * 1e3;
        }
    }
    SteadyState {
        sent: n_sent,
        received: n_recv,
        pdr: if n_sent == 0 { 0.0 } else { 100.0 * n_recv as f64 / n_sent as f64 },
        e2e_ms: if n_recv == 0 { f64::INFINITY } else { delay / n_recv as f64 },
    }
}

/// Report of a run with no data traffic at all.
pub fn idle_report(protocol: ProtocolKind, preset: Preset, sim_end: SimTime) -> MetricsReport {
    let mut cfg = ScenarioConfig::preset(preset);
    cfg.traffic.connections = 0;
    cfg.sim_end = sim_end;
    cfg.traffic.start = SimTime::ZERO;
    cfg.traffic.stop = sim_end;
    cfg.protocol = Some(protocol);
    analyze(&simulate_records(&cfg)).unwrap()
}
