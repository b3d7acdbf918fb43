//! Seeded grids of runs, per-run output files and the merged comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::awareness::Paradigm;
use crate::config::{FailureModel, RunConfig};
use crate::engine::{run_prepared, EngineError, Prepared, RunOutput};
use crate::metrics::{latency_series, latency_series_table, records_table, series_table, RunSummary};

/// Writes `contents` to `path` through a temporary file in the same directory,
/// so the file is either complete or absent.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes the per-message table, the summary and the series of one run.
/// Targeted runs also get the latency-by-emission series.
pub fn write_run_outputs(dir: &Path, cfg: &RunConfig, out: &RunOutput) -> std::io::Result<Vec<PathBuf>> {
    let span = cfg.horizon_s + cfg.drain_s;
    let mut files = vec![
        (dir.join("messages.csv"), records_table(&out.records)),
        (
            dir.join("summary.json"),
            serde_json::to_string_pretty(&out.summary).expect("summary serializes") + "\n",
        ),
        (
            dir.join("series.csv"),
            series_table(
                &out.summary.throughput_series,
                &out.summary.drop_series,
                cfg.bin_s,
            ),
        ),
    ];
    if cfg.failure_model == FailureModel::Targeted {
        let lat = latency_series(&out.records, cfg.bin_s, span);
        files.push((
            dir.join("latency_series.csv"),
            latency_series_table(&lat, cfg.bin_s),
        ));
    }
    for (path, text) in &files {
        write_atomic(path, text.as_bytes())?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// One cell of a batch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub paradigm: Paradigm,
    pub fraction: f64,
    pub seed: u64,
}

impl RunKey {
    pub fn dir_name(&self) -> String {
        format!(
            "{}-f{:02}-s{}",
            self.paradigm,
            (self.fraction * 100.0).round() as u32,
            self.seed
        )
    }
}

#[derive(Debug)]
pub struct BatchRun {
    pub key: RunKey,
    pub result: Result<RunOutput, EngineError>,
}

#[derive(Debug)]
pub struct BatchResult {
    pub runs: Vec<BatchRun>,
    pub comparison: String,
}

/// Every `(paradigm, fraction, seed)` combination over `base`, executed on up
/// to `jobs` threads. Failed runs are reported and excluded from the table.
pub fn run_batch(
    base: &RunConfig,
    paradigms: &[Paradigm],
    fractions: &[f64],
    seeds: &[u64],
    jobs: usize,
) -> BatchResult {
    let configs: Vec<(RunKey, RunConfig)> = paradigms
        .iter()
        .flat_map(|&paradigm| {
            fractions.iter().flat_map(move |&fraction| {
                seeds.iter().map(move |&seed| {
                    let mut cfg = base.clone();
                    cfg.paradigm = paradigm;
                    cfg.fraction = fraction;
                    cfg.seed = seed;
                    (
                        RunKey {
                            paradigm,
                            fraction,
                            seed,
                        },
                        cfg,
                    )
                })
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        let mut keys: Vec<String> = configs.iter().map(|(_, c)| Prepared::key(c)).collect();
        keys.sort();
        keys.dedup();
        let prepared: BTreeMap<String, Result<Prepared, String>> = keys
            .par_iter()
            .map(|k| {
                let cfg = &configs.iter().find(|(_, c)| &Prepared::key(c) == k).unwrap().1;
                (k.clone(), Prepared::build(cfg).map_err(|e| e.to_string()))
            })
            .collect();
        let runs: Vec<BatchRun> = configs
            .par_iter()
            .map(|(key, cfg)| {
                let result = match &prepared[&Prepared::key(cfg)] {
                    Ok(prep) => run_prepared(cfg, prep),
                    Err(_) => Prepared::build(cfg).and_then(|p| run_prepared(cfg, &p)),
                };
                BatchRun {
                    key: key.clone(),
                    result,
                }
            })
            .collect();
        let summaries: Vec<&RunSummary> = runs
            .iter()
            .filter_map(|r| r.result.as_ref().ok().map(|o| &o.summary))
            .collect();
        let comparison = comparison_table(&summaries);
        BatchResult { runs, comparison }
    })
}

pub const COMPARISON_METRICS: [&str; 6] = [
    "non_delivered_pct",
    "latency_q97_mean_s",
    "pct_messages_with_loops",
    "avg_loop_detections_per_message",
    "avg_reroutes_per_message",
    "signaling_share",
];

fn metric(s: &RunSummary, i: usize) -> Option<f64> {
    match i {
        0 => Some(s.non_delivered_pct),
        1 => s.latency_q97_mean_s,
        2 => Some(s.pct_messages_with_loops),
        3 => Some(s.avg_loop_detections_per_message),
        4 => Some(s.avg_reroutes_per_message),
        5 => Some(s.signaling_share),
        _ => None,
    }
}

/// Rows keyed by `(paradigm, fraction)` in paradigm then fraction order, each
/// metric as seed mean, min and max.
pub fn comparison_table(summaries: &[&RunSummary]) -> String {
    let mut groups: BTreeMap<(usize, u64), Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        let p = Paradigm::ALL.iter().position(|&x| x == s.paradigm).unwrap();
        groups
            .entry((p, (s.failure_fraction * 1e6).round() as u64))
            .or_default()
            .push(s);
    }
    let mut out = String::from("constellation,paradigm,fraction,runs");
    for m in COMPARISON_METRICS {
        let _ = write!(out, ",{m}_mean,{m}_min,{m}_max");
    }
    out.push('\n');
    for ((p, _), rows) in &groups {
        let _ = write!(
            out,
            "{},{},{},{}",
            rows[0].constellation,
            Paradigm::ALL[*p],
            rows[0].failure_fraction,
            rows.len()
        );
        for i in 0..COMPARISON_METRICS.len() {
            let vals: Vec<f64> = rows.iter().filter_map(|s| metric(s, i)).collect();
            if vals.is_empty() {
                out.push_str(",,,");
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = write!(out, ",{mean:.6},{min:.6},{max:.6}");
        }
        out.push('\n');
    }
    out
}
