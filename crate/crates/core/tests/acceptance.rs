//! End-to-end acceptance checks. Prints one `[PASS]` or `[FAIL]` line per
//! criterion with the measured values and the tolerance applied.
//!
//! Exit status is non-zero only when a criterion fails that is not listed in
//! `KNOWN_UNATTAINABLE`; those still print `[FAIL]`.
//!
//! `VRL_ACCEPT_SKIP=8` (comma list) skips criteria, e.g. the long full-scale
//! run on slow machines; a skipped criterion prints `[SKIP]`.

mod common;

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use vrl_core::config::{Preset, ScenarioConfig};
use vrl_core::metrics::{nrl, packet_loss, pdr, MetricsReport};
use vrl_core::routing::ProtocolKind;
use vrl_core::runner::{self, RunOutput};
use vrl_core::time::SimTime;

/// Criteria that cannot pass as specified; see the project notes.
const KNOWN_UNATTAINABLE: &[u32] = &[1];

const PUBLISHED_TOLERANCE: f64 = 0.01;
const STATIC_MIN_PDR: f64 = 99.0;
const STATIC_MAX_E2E_MS: f64 = 10.0;
const TREND_MIN_SEEDS: usize = 4;
const TREND_SEEDS: u64 = 5;
const DETERMINISM_CAP: usize = 200;
const SCALE_BUDGET: Duration = Duration::from_secs(30 * 60);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn c1_published_formulas() -> Verdict {
    let cases: [(&str, f64, f64); 8] = [
        ("low AODV PDR", pdr(2389, 6593).unwrap().unwrap(), 36.24),
        ("low AODV loss", packet_loss(3756, 6593).unwrap(), 56.97),
        ("low AODV NRL", nrl(215, 2389).unwrap(), 0.09),
        ("low AOMDV loss", packet_loss(4176, 6593).unwrap(), 63.34),
        ("low AOMDV NRL", nrl(1060, 2293).unwrap(), 0.46),
        ("low DSDV loss", packet_loss(4345, 6593).unwrap(), 64.86),
        ("medium AODV NRL", nrl(57019, 14079).unwrap(), 4.05),
        ("medium AOMDV NRL", nrl(46982, 13935).unwrap(), 3.37),
    ];
    let bad: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > PUBLISHED_TOLERANCE)
        .map(|(name, got, want)| format!("{name} {got:.2} vs {want:.2}"))
        .collect();
    let ok = cases.len() - bad.len();
    let mut d = format!("{ok}/{} within ±{PUBLISHED_TOLERANCE}", cases.len());
    if !bad.is_empty() {
        d.push_str(&format!("; off: {}", bad.join(", ")));
    }
    verdict(bad.is_empty(), d)
}

fn files_equal(a: &Path, b: &Path) -> std::io::Result<bool> {
    let (fa, fb) = (File::open(a)?, File::open(b)?);
    if fa.metadata()?.len() != fb.metadata()?.len() {
        return Ok(false);
    }
    let (mut ra, mut rb) = (BufReader::new(fa), BufReader::new(fb));
    let (mut ba, mut bb) = (vec![0u8; 1 << 16], vec![0u8; 1 << 16]);
    loop {
        let n = ra.read(&mut ba)?;
        if n == 0 {
            return Ok(true);
        }
        rb.read_exact(&mut bb[..n])?;
        if ba[..n] != bb[..n] {
            return Ok(false);
        }
    }
}

fn sweep_cells() -> Vec<ScenarioConfig> {
    let mut cells = Vec::new();
    for preset in [Preset::Low, Preset::Medium, Preset::High] {
        for kind in ProtocolKind::ALL {
            let mut cfg = ScenarioConfig::preset(preset);
            cfg.protocol = Some(kind);
            cfg.seed = 1;
            if preset == Preset::High {
                cfg.vehicle_cap = Some(DETERMINISM_CAP);
            }
            cells.push(cfg);
        }
    }
    cells
}

/// Runs the 12 sweep cells twice. Returns the determinism verdict and the
/// first pass's outputs for the accounting check.
fn c2_determinism(work: &Path) -> (Verdict, Vec<RunOutput>) {
    let started = Instant::now();
    let first = runner::sweep(sweep_cells(), &work.join("a")).unwrap();
    let second = runner::sweep(sweep_cells(), &work.join("b")).unwrap();
    let mut outputs = Vec::new();
    let mut differing = Vec::new();
    let mut failed = Vec::new();
    for ((cell, a), (_, b)) in first.results.into_iter().zip(second.results) {
        match (a, b) {
            (Ok(a), Ok(b)) => {
                if !files_equal(&a.trace_path, &b.trace_path).unwrap_or(false) {
                    differing.push(cell);
                }
                outputs.push(a);
            }
            (a, b) => failed.push(format!("{cell}: {:?}", a.err().or(b.err()))),
        }
    }
    let n = outputs.len();
    let pass = differing.is_empty() && failed.is_empty() && n == 12;
    let mut d = format!("{}/{n} cells byte-identical in {:.0} s", n - differing.len(), started.elapsed().as_secs_f64());
    if !differing.is_empty() {
        d.push_str(&format!("; differ: {}", differing.join(", ")));
    }
    if !failed.is_empty() {
        d.push_str(&format!("; failed: {}", failed.join(", ")));
    }
    (verdict(pass, d), outputs)
}

fn c3_shortest_paths() -> Verdict {
    let (mut checked, mut bad) = (0, Vec::new());
    for (name, pts) in oracle_topologies() {
        for kind in ProtocolKind::ALL {
            let (n, miss) = shortest_path_mismatches(kind, &pts);
            checked += n;
            bad.extend(miss.into_iter().map(|m| format!("{kind}/{name} {m}")));
        }
    }
    let mut d = format!("{}/{checked} pairs at BFS distance (need 100 %)", checked - bad.len());
    if !bad.is_empty() {
        d.push_str(&format!("; first: {}", bad[..bad.len().min(3)].join(", ")));
    }
    verdict(bad.is_empty(), d)
}

fn c4_loop_freedom() -> Verdict {
    let (mut delivered, mut violations) = (0, Vec::new());
    for seed in 1..=5 {
        for kind in ProtocolKind::ALL {
            let (n, looping) = loop_check(&simulate_records(&mobile_grid_config(kind, seed)));
            delivered += n;
            violations.extend(looping.into_iter().map(|(id, path)| format!("{kind} s{seed} pkt {id} {path:?}")));
        }
    }
    let mut d = format!("{} violations over {delivered} delivered packets (need 0)", violations.len());
    if !violations.is_empty() {
        d.push_str(&format!("; first: {}", violations[0]));
    }
    verdict(violations.is_empty() && delivered > 0, d)
}

fn c5_static_delivery() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in ProtocolKind::ALL {
        let s = static_delivery(kind);
        pass &= s.pdr >= STATIC_MIN_PDR && s.e2e_ms < STATIC_MAX_E2E_MS;
        parts.push(format!("{kind} {:.2} % {:.2} ms", s.pdr, s.e2e_ms));
    }
    verdict(pass, format!("{} (need ≥ {STATIC_MIN_PDR} %, < {STATIC_MAX_E2E_MS} ms)", parts.join(", ")))
}

fn preset_pdr(preset: Preset, kind: ProtocolKind, seed: u64) -> f64 {
    let mut cfg = ScenarioConfig::preset(preset);
    cfg.protocol = Some(kind);
    cfg.seed = seed;
    let (_, buf) = runner::simulate(&cfg, Vec::new()).unwrap();
    let records = vrl_core::trace::parse_trace(std::str::from_utf8(&buf).unwrap()).unwrap();
    vrl_core::metrics::analyze(&records).unwrap().pdr.unwrap_or(0.0)
}

fn c6_trends() -> Verdict {
    let started = Instant::now();
    let seeds: Vec<u64> = (1..=TREND_SEEDS).collect();
    let mut rows = Vec::new();
    for &seed in &seeds {
        let aodv = preset_pdr(Preset::Medium, ProtocolKind::Aodv, seed);
        let aomdv = preset_pdr(Preset::Medium, ProtocolKind::Aomdv, seed);
        let dsdv = preset_pdr(Preset::Medium, ProtocolKind::Dsdv, seed);
        let low = preset_pdr(Preset::Low, ProtocolKind::Aodv, seed);
        rows.push((aodv, aomdv, dsdv, low));
    }
    let aodv_wins = rows.iter().filter(|r| r.0 > r.2).count();
    let aomdv_wins = rows.iter().filter(|r| r.1 > r.2).count();
    let density_wins = rows.iter().filter(|r| r.0 > r.3).count();

    let idle_end = SimTime::from_secs(1000);
    let idle: Vec<(ProtocolKind, MetricsReport)> =
        ProtocolKind::ALL.iter().map(|&k| (k, idle_report(k, Preset::Medium, idle_end))).collect();
    let demand_ok = idle.iter().all(|(k, r)| if k.is_on_demand() { r.routing == 0 } else { r.routing > 0 });

    let pass = aodv_wins >= TREND_MIN_SEEDS && aomdv_wins >= TREND_MIN_SEEDS && density_wins >= TREND_MIN_SEEDS && demand_ok;
    let fmt = |v: Vec<f64>| v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join("/");
    let d = format!(
        "(a) AODV>DSDV {aodv_wins}/{TREND_SEEDS}, AOMDV>DSDV {aomdv_wins}/{TREND_SEEDS} [medium PDR AODV {} AOMDV {} DSDV {}]; \
         (b) AODV medium>low {density_wins}/{TREND_SEEDS} [low {}]; (c) idle routing packets {}; need ≥ {TREND_MIN_SEEDS}/{TREND_SEEDS}; {:.0} s",
        fmt(rows.iter().map(|r| r.0).collect()),
        fmt(rows.iter().map(|r| r.1).collect()),
        fmt(rows.iter().map(|r| r.2).collect()),
        fmt(rows.iter().map(|r| r.3).collect()),
        idle.iter().map(|(k, r)| format!("{k}={}", r.routing)).collect::<Vec<_>>().join(" "),
        started.elapsed().as_secs_f64(),
    );
    verdict(pass, d)
}

/// Parses the sweep CSV's printed throughput and window so the check sees
/// exactly the rounded output.
fn c7_accounting(outputs: &[RunOutput], csv: &Path) -> Verdict {
    let text = std::fs::read_to_string(csv).unwrap_or_default();
    let mut identity_bad = Vec::new();
    let mut throughput_bad = Vec::new();
    let mut checked = 0usize;
    for out in outputs {
        let r = &out.report;
        if !r.accounting_holds() {
            identity_bad.push(format!("{} {} != {}+{}+{}", out.cell, r.sent, r.received, r.dropped, r.in_flight));
        }
        let prefix = format!("{},{},{},", out.protocol, out.scenario, out.seed);
        let Some(line) = text.lines().find(|l| l.starts_with(&prefix)) else {
            throughput_bad.push(format!("{} missing from csv", out.cell));
            continue;
        };
        let cols: Vec<&str> = line.split(',').collect();
        let (thr, start, stop) = (cols[11].parse::<f64>(), cols[12].parse::<f64>(), cols[13].parse::<f64>());
        let (Ok(thr), Ok(start), Ok(stop)) = (thr, start, stop) else {
            // No deliveries: throughput is NA and there is nothing to match.
            if r.received_bytes != 0 {
                throughput_bad.push(format!("{} unparsable row", out.cell));
            }
            continue;
        };
        checked += 1;
        let span = stop - start;
        let lhs = thr * span;
        let rhs = 8.0 * r.received_bytes as f64 / 1000.0;
        // Half a unit in the last printed digit of each factor.
        let tol = 0.0005 * span + thr * 1e-6 + 1e-9;
        if (lhs - rhs).abs() > tol {
            throughput_bad.push(format!("{} {lhs:.4} vs {rhs:.4} kbit", out.cell));
        }
    }
    let pass = identity_bad.is_empty() && throughput_bad.is_empty() && !outputs.is_empty();
    let mut d = format!(
        "identity holds in {}/{} cells; throughput·span = 8·bytes in {}/{checked} within rounding",
        outputs.len() - identity_bad.len(),
        outputs.len(),
        checked.saturating_sub(throughput_bad.len())
    );
    for b in identity_bad.iter().chain(&throughput_bad).take(3) {
        d.push_str(&format!("; {b}"));
    }
    verdict(pass, d)
}

fn c8_scale(work: &Path) -> Verdict {
    let mut cfg = ScenarioConfig::preset(Preset::High);
    cfg.protocol = Some(ProtocolKind::Aodv);
    cfg.seed = 1;
    let started = Instant::now();
    let res = runner::run(&cfg, &work.join("scale"));
    let took = started.elapsed();
    match res {
        Ok(out) => {
            let _ = std::fs::remove_file(&out.trace_path);
            verdict(
                took <= SCALE_BUDGET,
                format!(
                    "{} vehicles, {} events in {:.0} s (budget {} s), PDR {:.2} %",
                    cfg.effective_vehicles(),
                    out.summary.kernel.executed,
                    took.as_secs_f64(),
                    SCALE_BUDGET.as_secs(),
                    out.report.pdr.unwrap_or(0.0)
                ),
            )
        }
        Err(e) => verdict(false, format!("failed after {:.0} s: {e}", took.as_secs_f64())),
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; listing is the
    // only one that changes behaviour.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let skip: Vec<u32> = std::env::var("VRL_ACCEPT_SKIP")
        .unwrap_or_default()
        .split(',')
        .filter_map(|s| s.trim().parse().ok())
        .collect();
    let work = tempfile::tempdir().expect("temp dir");
    let mut unexpected = 0;
    let mut report = |n: u32, name: &str, v: Option<Verdict>| {
        let Some(v) = v else {
            println!("[SKIP] {n}. {name}");
            return;
        };
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && KNOWN_UNATTAINABLE.contains(&n) { " (known unattainable)" } else { "" };
        println!("[{tag}] {n}. {name}: {}{note}", v.detail);
        if !v.pass && note.is_empty() {
            unexpected += 1;
        }
    };
    let run = |n: u32| !skip.contains(&n);

    report(1, "metric formulas on published counts", run(1).then(c1_published_formulas));
    let (det, outputs) = if run(2) || run(7) { let (v, o) = c2_determinism(work.path()); (Some(v), o) } else { (None, Vec::new()) };
    report(2, "determinism", if run(2) { det } else { None });
    report(3, "shortest-path oracle", run(3).then(c3_shortest_paths));
    report(4, "loop freedom", run(4).then(c4_loop_freedom));
    report(5, "delivery under connectivity", run(5).then(c5_static_delivery));
    report(6, "density and protocol trends", run(6).then(c6_trends));
    let csv = work.path().join("a").join("sweep.csv");
    report(7, "accounting identity", run(7).then(|| c7_accounting(&outputs, &csv)));
    report(8, "full-scale run", run(8).then(|| c8_scale(work.path())));

    if unexpected > 0 {
        std::process::exit(1);
    }
}
