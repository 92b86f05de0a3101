use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use citysim::analytics::{self, AnalyticsError, Calendar};
use citysim::engine::{
    read_events, run_bench, BenchConfig, EngineError, JsonlWriter, Parallelism, SimConfig,
    Simulation, Snapshot,
};
use citysim::persona::{generate_population, load_personas, save_personas, PopulationSpec};
use citysim::world::{generate_grid_city, load_city, GridCitySpec};

/// Bad input rather than a failure while running.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

#[derive(Parser)]
#[command(name = "citysim", version, about = "City-scale agent simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic grid city as JSON.
    GenCity {
        #[arg(long, default_value_t = 6)]
        rows: u32,
        #[arg(long, default_value_t = 6)]
        cols: u32,
        #[arg(long, default_value_t = 30)]
        pois_per_area: u32,
        #[arg(long, default_value_t = 1000.0)]
        area_size_m: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic population as JSONL.
    GenPersonas {
        #[arg(long)]
        city: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML distribution spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation to completion.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured number of days.
        #[arg(long)]
        days: Option<u64>,
        /// Override the configured worker count (0 = serial).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run until the start of a day and save a snapshot there.
    Snapshot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        at_day: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resume a snapshot and run to the end of its configured days.
    Restore {
        #[arg(long)]
        snapshot: PathBuf,
        /// Event log for the resumed part; defaults to the configured log
        /// with a `.resumed` suffix.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        days: Option<u64>,
    },
    /// State-store scaling benchmark; prints CSV.
    Bench {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1000,10000,100000,1000000"
        )]
        agents: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads; 0 runs serially.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Leave out the 10^6 tier.
        #[arg(long)]
        skip_1m: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate an event log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        /// timeuse, travel, popularity or density.
        #[arg(long)]
        metric: String,
        #[arg(long)]
        out: PathBuf,
        /// Needed for timeuse.
        #[arg(long)]
        personas: Option<PathBuf>,
        /// Optional for density: fixes the grid extent.
        #[arg(long)]
        city: Option<PathBuf>,
        /// `poi_id,count` CSV, needed for popularity.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = analytics::DEFAULT_CELL_M)]
        cell: f64,
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

fn threads_to_parallelism(n: usize) -> Parallelism {
    if n == 0 {
        Parallelism::Serial
    } else {
        Parallelism::Parallel(n)
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_summary(summary: &citysim::engine::RunSummary) -> Result<()> {
    emit(&(serde_json::to_string_pretty(summary)? + "\n"))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCity {
            rows,
            cols,
            pois_per_area,
            area_size_m,
            seed,
            out,
        } => {
            if rows == 0 || cols == 0 || pois_per_area < 4 || area_size_m <= 0.0 {
                bail!(UsageError(
                    "grid needs rows, cols >= 1, pois_per_area >= 4 and a positive area size"
                        .into()
                ));
            }
            let city = generate_grid_city(&GridCitySpec {
                rows,
                cols,
                area_size_m,
                pois_per_area,
                seed,
            });
            city.save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            log::info!(
                "{} areas, {} POIs -> {}",
                city.areas().len(),
                city.pois().len(),
                out.display()
            );
        }
        Command::GenPersonas {
            city,
            n,
            seed,
            spec,
            out,
        } => {
            let city = load_city(&city).map_err(EngineError::from)?;
            let spec = match spec {
                Some(p) => PopulationSpec::load(p).map_err(EngineError::from)?,
                None => PopulationSpec::default(),
            };
            let personas = generate_population(n, &city, seed, &spec).map_err(EngineError::from)?;
            save_personas(&out, &personas).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Run {
            config,
            days,
            threads,
        } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(d) = days {
                cfg.days = d;
            }
            if let Some(t) = threads {
                cfg.parallelism = threads_to_parallelism(t);
            }
            cfg.validate()?;
            let mut sim = Simulation::from_config(cfg)?;
            let summary = sim.run_to_files()?;
            print_summary(&summary)?;
        }
        Command::Snapshot {
            config,
            at_day,
            out,
        } => {
            let cfg = SimConfig::load(&config)?;
            if at_day > cfg.days {
                bail!(UsageError(format!(
                    "--at-day {at_day} is past the configured {} days",
                    cfg.days
                )));
            }
            let mut sim = Simulation::from_config(cfg)?;
            let mut sink = JsonlWriter::create(sim.config().event_log_path())?;
            sim.run_until(at_day * 1440, &mut sink)?;
            citysim::engine::EventSink::finish(&mut sink)?;
            sim.save_snapshot(&out)?;
            log::info!("snapshot at day {at_day} -> {}", out.display());
        }
        Command::Restore {
            snapshot,
            log,
            days,
        } => {
            let mut snap = Snapshot::load(&snapshot)?;
            if let Some(d) = days {
                snap.config.days = d;
                snap.config.validate()?;
            }
            let log = log.unwrap_or_else(|| {
                let mut p = snap.config.event_log_path().into_os_string();
                p.push(".resumed");
                PathBuf::from(p)
            });
            let mut sim = snap.restore_with_config_oracle()?;
            let mut sink = JsonlWriter::create(&log)?;
            let summary = sim.run(&mut sink)?;
            print_summary(&summary)?;
        }
        Command::Bench {
            mut agents,
            reps,
            seed,
            threads,
            skip_1m,
            out,
        } => {
            if skip_1m {
                agents.retain(|&n| n < 1_000_000);
            }
            if agents.is_empty() || reps == 0 {
                bail!(UsageError(
                    "need at least one tier and one repetition".into()
                ));
            }
            let report = run_bench(&BenchConfig {
                tiers: agents,
                reps,
                seed,
                fetches_per_set: citysim::engine::bench::FETCHES_PER_SET,
                parallelism: threads_to_parallelism(threads),
            })?;
            let csv = report.to_csv();
            emit(&csv)?;
            if let Some(out) = out {
                std::fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
            }
            let base = report.rows.first().map(|r| r.agents);
            for r in report.rows.iter().skip(1) {
                if let Some(ratio) = base.and_then(|b| report.ratio(r.agents, b)) {
                    eprintln!(
                        "step({})/step({}) = {ratio:.2}",
                        r.agents,
                        base.unwrap_or(0)
                    );
                }
            }
        }
        Command::Analyze {
            log,
            metric,
            out,
            personas,
            city,
            reference,
            cell,
            format,
        } => analyze(
            &log, &metric, &out, personas, city, reference, cell, &format,
        )?,
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    log: &Path,
    metric: &str,
    out: &Path,
    personas: Option<PathBuf>,
    city: Option<PathBuf>,
    reference: Option<PathBuf>,
    cell: f64,
    format: &str,
) -> Result<()> {
    analytics::Format::parse(format)?;
    let events = read_events(log)?;
    match metric {
        "timeuse" => {
            let path = personas.ok_or_else(|| UsageError("timeuse needs --personas".into()))?;
            let personas = load_personas(&path).map_err(EngineError::from)?;
            analytics::export(&analytics::timeuse_shares(&events, &personas), out, format)?;
        }
        "travel" => {
            let agents = events
                .iter()
                .map(|e| e.agent_id)
                .collect::<std::collections::BTreeSet<_>>()
                .len();
            let h = analytics::travel_histogram(&events, agents, &Calendar::from_log(&events));
            if h.weekend_empty() {
                log::warn!("no weekend days in the log; weekend series is all zero");
            }
            analytics::export(&h, out, format)?;
        }
        "popularity" => {
            let path =
                reference.ok_or_else(|| UsageError("popularity needs --reference".into()))?;
            let reference = analytics::read_reference_counts(path)?;
            analytics::export(&analytics::popularity(&events, &reference)?, out, format)?;
        }
        "density" => {
            let city = city.map(load_city).transpose().map_err(EngineError::from)?;
            analytics::export(
                &analytics::density_grid(&events, city.as_ref(), cell, None),
                out,
                format,
            )?;
        }
        other => bail!(UsageError(format!(
            "unknown metric {other:?}; use timeuse, travel, popularity or density"
        ))),
    }
    Ok(())
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<UsageError>()
            || c.downcast_ref::<EngineError>()
                .is_some_and(EngineError::is_config)
            || c.downcast_ref::<AnalyticsError>().is_some_and(|a| {
                matches!(
                    a,
                    AnalyticsError::UnknownFormat(_)
                        | AnalyticsError::Parse { .. }
                        | AnalyticsError::TooFewCommon(_)
                )
            })
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}
