use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use vrl_core::config::{load_config, Preset, ScenarioConfig};
use vrl_core::kernel::{Purpose, RandomStream, StreamId};
use vrl_core::metrics::{analyze_file, csv_row, format_report, CSV_HEADER};
use vrl_core::mobility::{generate_grid_traces, write_traces, UrbanGrid};
use vrl_core::routing::ProtocolKind;
use vrl_core::runner;
use vrl_core::time::SimTime;

#[derive(Parser)]
#[command(name = "vrl", version, about = "Vehicular ad hoc routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace and report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the protocol in the config.
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "VRL_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Run a preset x protocol x seed grid in parallel and write sweep.csv.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "low,medium,high")]
        preset: Vec<Preset>,
        #[arg(long, value_delimiter = ',', default_value = "AODV,AOMDV,DSR,DSDV")]
        protocols: Vec<ProtocolKind>,
        /// Inclusive range `A..B` or a comma list.
        #[arg(long, default_value = "1")]
        seeds: String,
        /// Caps the vehicle count of every cell.
        #[arg(long)]
        vehicle_cap: Option<usize>,
        #[arg(long, env = "VRL_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Compute metrics from a trace file.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        /// Print a CSV row instead of the table.
        #[arg(long)]
        csv: bool,
    },
    /// Generate urban-grid mobility traces.
    GenMobility {
        /// Blocks as ROWSxCOLS.
        #[arg(long, default_value = "8x8")]
        grid: String,
        #[arg(long)]
        vehicles: usize,
        /// Seconds.
        #[arg(long)]
        duration: SimTime,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        block: f64,
        #[arg(long, default_value_t = 5.0)]
        speed_min: f64,
        #[arg(long, default_value_t = 20.0)]
        speed_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective config of a preset or config file.
    ShowConfig {
        #[arg(long, conflicts_with = "config")]
        preset: Option<Preset>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("invalid seeds `{s}` (expected A..B or a comma list)");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let bad = || format!("invalid grid `{s}` (expected ROWSxCOLS)");
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?))
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config, protocol, seed, out } => {
            let mut cfg = load_config(&config).map_err(|e| format!("{}: {e}", config.display()))?;
            if protocol.is_some() {
                cfg.protocol = protocol;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let started = Instant::now();
            let res = runner::run(&cfg, &out).map_err(|e| e.to_string())?;
            print!("{}", std::fs::read_to_string(&res.report_path).map_err(|e| e.to_string())?);
            eprintln!(
                "{}: {} events in {:.1} s, trace {}",
                res.cell,
                res.summary.kernel.executed,
                started.elapsed().as_secs_f64(),
                res.trace_path.display()
            );
            Ok(())
        }
        Command::Sweep { preset, protocols, seeds, vehicle_cap, out } => {
            let seeds = parse_seeds(&seeds)?;
            let mut cells = Vec::new();
            for p in &preset {
                for &proto in &protocols {
                    for &seed in &seeds {
                        let mut cfg = ScenarioConfig::preset(*p);
                        cfg.protocol = Some(proto);
                        cfg.seed = seed;
                        cfg.vehicle_cap = vehicle_cap;
                        cells.push(cfg);
                    }
                }
            }
            let outcome = runner::sweep(cells, &out).map_err(|e| e.to_string())?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for (cell, r) in &outcome.results {
                match r {
                    Ok(_) => eprintln!("{cell}: ok"),
                    Err(e) => eprintln!("{cell}: FAILED: {e}"),
                }
            }
            println!("{}", outcome.csv_path.display());
            if outcome.failures() == outcome.results.len() && !outcome.results.is_empty() {
                return Err("every cell failed".into());
            }
            Ok(())
        }
        Command::Analyze { trace, csv } => {
            let report = analyze_file(&trace).map_err(|e| e.to_string())?;
            let name = trace.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
            if csv {
                println!("{CSV_HEADER}\n{}", csv_row("-", name, 0, &report));
            } else {
                print!("{}", format_report(name, &report));
            }
            Ok(())
        }
        Command::GenMobility { grid, vehicles, duration, seed, block, speed_min, speed_max, out } => {
            let (rows, cols) = parse_grid(&grid)?;
            let spec = UrbanGrid { rows, cols, block, vehicles, speed_min, speed_max };
            let mut rng = RandomStream::new(seed, StreamId::global(Purpose::Mobility));
            let traces = generate_grid_traces(&spec, duration, &mut rng).map_err(|e| e.to_string())?;
            std::fs::write(&out, write_traces(&traces)).map_err(|e| format!("{}: {e}", out.display()))?;
            Ok(())
        }
        Command::ShowConfig { preset, config } => {
            let cfg = match (preset, config) {
                (Some(p), _) => ScenarioConfig::preset(p),
                (None, Some(path)) => load_config(&path).map_err(|e| format!("{}: {e}", path.display()))?,
                (None, None) => return Err("give --preset or --config".into()),
            };
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}
