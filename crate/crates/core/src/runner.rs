//! Turns a scenario config into a finished run on disk, and fans a grid of
//! runs out across threads.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, MobilitySource, ScenarioConfig};
use crate::kernel::{Purpose, RandomStream, StreamId};
use crate::metrics::{analyze_file, csv_row, format_report, MetricsError, MetricsReport, CSV_HEADER};
use crate::mobility::{generate_grid_traces, parse_trace, Mobility, MobilityError, UrbanGrid};
use crate::routing::ProtocolKind;
use crate::sim::{SimError, SimSetup, SimSummary, Simulation};
use crate::traffic::{build_flows, Flow, TrafficError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("no protocol selected")]
    MissingProtocol,
    #[error("mobility: {0}")]
    Mobility(#[from] MobilityError),
    #[error("mobility trace {path}: {message}")]
    MobilityTrace { path: PathBuf, message: String },
    #[error("traffic: {0}")]
    Traffic(#[from] TrafficError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("analysis: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("accounting identity violated: sent {sent} != received {received} + dropped {dropped} + in flight {in_flight}")]
    Accounting { sent: u64, received: u64, dropped: u64, in_flight: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// File stem shared by a cell's outputs, e.g. `low_AODV_s1`.
pub fn cell_name(cfg: &ScenarioConfig, protocol: ProtocolKind) -> String {
    format!("{}_{}_s{}", cfg.name, protocol, cfg.seed)
}

/// Vehicle traces for the config, honouring `vehicle_cap`.
pub fn build_mobility(cfg: &ScenarioConfig) -> Result<Mobility, RunError> {
    let n = cfg.effective_vehicles();
    let traces = match &cfg.mobility {
        MobilitySource::Grid(g) => {
            let grid = UrbanGrid {
                rows: g.rows,
                cols: g.cols,
                block: g.block,
                vehicles: n,
                speed_min: g.speed_min,
                speed_max: g.speed_max,
            };
            let mut rng = RandomStream::new(cfg.seed, StreamId::global(Purpose::Mobility));
            generate_grid_traces(&grid, cfg.sim_end, &mut rng)?
        }
        MobilitySource::Trace(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let mut traces =
                parse_trace(&text).map_err(|e| RunError::MobilityTrace { path: path.clone(), message: e.to_string() })?;
            traces.truncate(n);
            traces
        }
    };
    Ok(Mobility::new(traces, cfg.phy.tx_range)?)
}

pub fn flows_for(cfg: &ScenarioConfig) -> Result<Vec<Flow>, RunError> {
    let mut rng = RandomStream::new(cfg.seed, StreamId::global(Purpose::Traffic));
    Ok(build_flows(cfg.effective_vehicles(), &cfg.traffic_spec(), &mut rng)?)
}

/// Runs the scenario, streaming the trace into `out`.
pub fn simulate<W: Write>(cfg: &ScenarioConfig, out: W) -> Result<(SimSummary, W), RunError> {
    cfg.validate()?;
    let protocol = cfg.protocol.ok_or(RunError::MissingProtocol)?;
    let mobility = build_mobility(cfg)?;
    let setup = SimSetup {
        protocol,
        phy: cfg.phy.clone(),
        mac: cfg.mac.clone(),
        flows: flows_for(cfg)?,
        end: cfg.sim_end,
        seed: cfg.seed,
    };
    Ok(Simulation::new(setup, mobility, out)?.run()?)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub cell: String,
    pub scenario: String,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub trace_path: PathBuf,
    pub report_path: PathBuf,
    pub report: MetricsReport,
    pub summary: SimSummary,
}

/// Simulates one cell, writes `<cell>.trace` and `<cell>.report.txt` to
/// `out_dir`, and checks the accounting identity.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunOutput, RunError> {
    let protocol = cfg.protocol.ok_or(RunError::MissingProtocol)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let cell = cell_name(cfg, protocol);
    let trace_path = out_dir.join(format!("{cell}.trace"));
    let file = File::create(&trace_path).map_err(io_err(&trace_path))?;
    let (summary, writer) = simulate(cfg, BufWriter::new(file))?;
    writer.into_inner().map_err(|e| RunError::Io { path: trace_path.clone(), source: e.into_error() })?;

    let report = analyze_file(&trace_path)?;
    if !report.accounting_holds() {
        return Err(RunError::Accounting {
            sent: report.sent,
            received: report.received,
            dropped: report.dropped,
            in_flight: report.in_flight,
        });
    }
    let report_path = out_dir.join(format!("{cell}.report.txt"));
    let text = format!("# {cell}\n{}", format_report(protocol.as_str(), &report));
    std::fs::write(&report_path, text).map_err(io_err(&report_path))?;
    Ok(RunOutput { cell, scenario: cfg.name.clone(), protocol, seed: cfg.seed, trace_path, report_path, report, summary })
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub csv_path: PathBuf,
    /// One per distinct cell, in request order.
    pub results: Vec<(String, Result<RunOutput, RunError>)>,
    pub warnings: Vec<String>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|(_, r)| r.is_err()).count()
    }
}

/// Runs every distinct cell (protocol and seed already set) in parallel and
/// writes `sweep.csv`. A failing cell is reported, not fatal.
pub fn sweep(cells: Vec<ScenarioConfig>, out_dir: &Path) -> Result<SweepOutcome, RunError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    for cfg in cells {
        let protocol = cfg.protocol.ok_or(RunError::MissingProtocol)?;
        let name = cell_name(&cfg, protocol);
        if seen.insert(name.clone()) {
            unique.push((name, cfg));
        } else {
            warnings.push(format!("duplicate cell {name} ignored"));
        }
    }
    let results: Vec<(String, Result<RunOutput, RunError>)> =
        unique.into_par_iter().map(|(name, cfg)| (name, run(&cfg, out_dir))).collect();

    let csv_path = out_dir.join("sweep.csv");
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for (_, r) in &results {
        if let Ok(out) = r {
            csv.push_str(&csv_row(out.protocol.as_str(), &out.scenario, out.seed, &out.report));
            csv.push('\n');
        }
    }
    std::fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
    Ok(SweepOutcome { csv_path, results, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    #[test]
    fn missing_protocol_is_an_error() {
        let cfg = ScenarioConfig::preset(Preset::Low);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run(&cfg, dir.path()), Err(RunError::MissingProtocol)));
    }

    #[test]
    fn vehicle_cap_shrinks_mobility() {
        let mut cfg = ScenarioConfig::preset(Preset::High);
        cfg.vehicle_cap = Some(30);
        assert_eq!(build_mobility(&cfg).unwrap().len(), 30);
        assert_eq!(flows_for(&cfg).unwrap().len(), 50);
    }
}
