use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use leoroute::batch::{run_batch, write_atomic, write_run_outputs};
use leoroute::constellation::{fibonacci_ground_stations, BodyModel, Constellation};
use leoroute::segmentation::{dump_plan, plan_partition};
use leoroute::topology::{dump_edges, Topology};
use leoroute::{parse_config, preset, ConfigError, EngineError, Paradigm, RunConfig};

#[derive(Parser)]
#[command(
    name = "leoroute",
    version,
    about = "Failure-aware routing simulator for LEO constellations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped scenario preset, e.g. iridium-random-f15.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (file for partition and topology).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        paradigm: Option<Paradigm>,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Run every paradigm x fraction x seed combination.
    Batch {
        #[command(flatten)]
        source: Source,
        /// Comma-separated paradigms; all four when omitted.
        #[arg(long, value_delimiter = ',')]
        paradigm: Vec<Paradigm>,
        /// Comma-separated failure fractions; the configured one when omitted.
        #[arg(long, value_delimiter = ',')]
        fraction: Vec<f64>,
        /// Comma-separated seeds; overrides --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Emit the segment plan dump.
    Partition {
        #[command(flatten)]
        source: Source,
    },
    /// Emit the edge list of the unfailed topology at a time.
    Topology {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
    },
}

/// Failure reported as a single JSON object on stderr.
struct Failure {
    kind: &'static str,
    line: Option<usize>,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            kind: "config",
            line: e.line(),
            message: e.to_string(),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => c.into(),
            other => Failure {
                kind: "engine",
                line: None,
                message: other.to_string(),
            },
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure {
            kind: "io",
            line: None,
            message: format!("{e:#}"),
        }
    }
}

fn load(source: &Source) -> Result<RunConfig, Failure> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text)?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = source.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &source.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn build_topology(cfg: &RunConfig, horizon_s: f64) -> Result<Topology, Failure> {
    let constellation =
        Constellation::new(cfg.constellation_spec()?, BodyModel::EARTH).map_err(EngineError::from)?;
    let stations = fibonacci_ground_stations(cfg.ground_stations, cfg.ground_station_seed);
    Ok(Topology::build(constellation, stations, horizon_s, cfg.tick_s))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            source,
            paradigm,
            fraction,
        } => {
            let mut cfg = load(&source)?;
            if let Some(p) = paradigm {
                cfg.paradigm = p;
            }
            if let Some(f) = fraction {
                cfg.fraction = f;
            }
            cfg.validate()?;
            let out = leoroute::run(&cfg)?;
            write_run_outputs(&cfg.output_dir, &cfg, &out).context("writing run outputs")?;
            println!(
                "{}",
                serde_json::to_string_pretty(&out.summary).expect("summary serializes")
            );
        }
        Command::Batch {
            source,
            paradigm,
            fraction,
            seeds,
            jobs,
        } => {
            let cfg = load(&source)?;
            cfg.validate()?;
            let paradigms = if paradigm.is_empty() {
                Paradigm::ALL.to_vec()
            } else {
                paradigm
            };
            let fractions = if fraction.is_empty() {
                vec![cfg.fraction]
            } else {
                fraction
            };
            let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds };
            for &f in &fractions {
                RunConfig {
                    fraction: f,
                    ..cfg.clone()
                }
                .validate()?;
            }
            let result = run_batch(&cfg, &paradigms, &fractions, &seeds, jobs);
            let mut failed = 0;
            for r in &result.runs {
                let dir = cfg.output_dir.join(r.key.dir_name());
                match &r.result {
                    Ok(out) => {
                        let mut run_cfg = cfg.clone();
                        run_cfg.paradigm = r.key.paradigm;
                        run_cfg.fraction = r.key.fraction;
                        run_cfg.seed = r.key.seed;
                        write_run_outputs(&dir, &run_cfg, out).context("writing run outputs")?;
                    }
                    Err(e) => {
                        failed += 1;
                        eprintln!(
                            "{}",
                            serde_json::json!({"run": r.key.dir_name(), "error": e.to_string()})
                        );
                    }
                }
            }
            let table = cfg.output_dir.join("comparison.csv");
            write_atomic(&table, result.comparison.as_bytes()).context("writing comparison table")?;
            print!("{}", result.comparison);
            eprintln!("{} runs, {} failed", result.runs.len(), failed);
        }
        Command::Partition { source } => {
            let cfg = load(&source)?;
            cfg.validate()?;
            let topo = build_topology(&cfg, 0.0)?;
            let plan = plan_partition(&topo, cfg.segment_count, cfg.partition_seed(), 0.0)
                .map_err(EngineError::from)?;
            write_or_print(source.out.as_deref(), &dump_plan(&plan))?;
        }
        Command::Topology { source, time } => {
            let cfg = load(&source)?;
            cfg.validate()?;
            let topo = build_topology(&cfg, time.max(0.0))?;
            let snapshot = topo.snapshot(time, &leoroute::topology::NoMask);
            write_or_print(source.out.as_deref(), &dump_edges(&topo, &snapshot))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": f.kind, "line": f.line, "message": f.message}})
            );
            ExitCode::from(2)
        }
    }
}
