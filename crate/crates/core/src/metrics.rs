//! Per-message records, run summaries and binned time series.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::awareness::Paradigm;
use crate::routing::{Message, Status};

pub const RECORD_HEADER: &str = "msg_id,src_gst,dst_gst,t_emit_s,t_final_s,status,hops,reroutes,loop_detections,signaling_delay_s,stored_time_s,cross_segment";
pub const SERIES_HEADER: &str = "bin_start_s,delivered,dropped";
pub const LATENCY_SERIES_HEADER: &str = "bin_start_s,delivered,mean_latency_s";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no delivered messages")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub msg_id: u64,
    pub src_gst: u32,
    pub dst_gst: u32,
    pub t_emit_s: f64,
    pub t_final_s: Option<f64>,
    pub status: Status,
    pub hops: u32,
    pub reroutes: u32,
    pub loop_detections: u32,
    pub signaling_delay_s: f64,
    pub stored_time_s: f64,
    pub cross_segment: Option<bool>,
}

impl MessageRecord {
    pub fn from_message(m: &Message) -> Self {
        Self {
            msg_id: m.id,
            src_gst: m.src,
            dst_gst: m.dst,
            t_emit_s: m.t_emit,
            t_final_s: m.t_final,
            status: m.status,
            hops: m.hops,
            reroutes: m.reroutes,
            loop_detections: m.loop_detections,
            signaling_delay_s: m.signaling_delay_s,
            stored_time_s: m.stored_time_s,
            cross_segment: m.cross_segment,
        }
    }

    pub fn latency(&self) -> Option<f64> {
        match (self.status, self.t_final_s) {
            (Status::Delivered, Some(t)) => Some(t - self.t_emit_s),
            _ => None,
        }
    }

    pub fn is_sent(&self) -> bool {
        self.status != Status::NeverSent
    }
}

/// Trimmed mean of the latencies at or below the nearest-rank 0.97 quantile.
pub fn latency_q97_mean(latencies: &[f64]) -> Result<f64, MetricsError> {
    if latencies.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut v = latencies.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (0.97 * v.len() as f64).ceil() as usize;
    let cutoff = v[rank.max(1) - 1];
    let kept: Vec<f64> = v.into_iter().take_while(|&x| x <= cutoff).collect();
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Identifies a run in its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub paradigm: Paradigm,
    pub constellation: String,
    pub failure_fraction: f64,
    pub seed: u64,
    pub horizon_s: f64,
    pub drain_s: f64,
    pub bin_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub paradigm: Paradigm,
    pub constellation: String,
    pub failure_fraction: f64,
    pub seed: u64,
    /// Messages actually sent; never-sent messages are counted separately.
    pub emitted: u64,
    pub never_sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub unresolved: u64,
    pub non_delivered_pct: f64,
    /// Sent messages not delivered by the horizon, drain excluded.
    pub non_delivered_pct_at_horizon: f64,
    pub latency_q97_mean_s: Option<f64>,
    pub latency_mean_s: Option<f64>,
    pub pct_messages_with_loops: f64,
    pub avg_loop_detections_per_message: f64,
    pub avg_reroutes_per_message: f64,
    pub signaling_share: f64,
    pub throughput_series: Vec<u64>,
    pub drop_series: Vec<u64>,
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

pub fn summarize(records: &[MessageRecord], meta: &RunMeta) -> RunSummary {
    let sent: Vec<&MessageRecord> = records.iter().filter(|r| r.is_sent()).collect();
    let n = sent.len() as u64;
    let count = |s: Status| sent.iter().filter(|r| r.status == s).count() as u64;
    let delivered = count(Status::Delivered);
    let dropped = count(Status::Dropped);
    let latencies: Vec<f64> = sent.iter().filter_map(|r| r.latency()).collect();
    let delivered_by_horizon = sent
        .iter()
        .filter(|r| r.latency().is_some() && r.t_final_s.is_some_and(|t| t <= meta.horizon_s))
        .count() as u64;
    let looped = sent.iter().filter(|r| r.loop_detections > 0).count() as u64;
    let loops: u64 = sent.iter().map(|r| r.loop_detections as u64).sum();
    let reroutes: u64 = sent.iter().map(|r| r.reroutes as u64).sum();
    let shares: Vec<f64> = sent
        .iter()
        .filter_map(|r| {
            let l = r.latency()?;
            Some(if l > 0.0 { r.signaling_delay_s / l } else { 0.0 })
        })
        .collect();
    let per_msg = |x: u64| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    let (throughput_series, drop_series) = time_series(records, meta.bin_s, meta.horizon_s + meta.drain_s);
    RunSummary {
        paradigm: meta.paradigm,
        constellation: meta.constellation.clone(),
        failure_fraction: meta.failure_fraction,
        seed: meta.seed,
        emitted: n,
        never_sent: records.len() as u64 - n,
        delivered,
        dropped,
        unresolved: n - delivered - dropped,
        non_delivered_pct: pct(n - delivered, n),
        non_delivered_pct_at_horizon: pct(n - delivered_by_horizon, n),
        latency_q97_mean_s: latency_q97_mean(&latencies).ok(),
        latency_mean_s: (!latencies.is_empty())
            .then(|| latencies.iter().sum::<f64>() / latencies.len() as f64),
        pct_messages_with_loops: pct(looped, n),
        avg_loop_detections_per_message: per_msg(loops),
        avg_reroutes_per_message: per_msg(reroutes),
        signaling_share: if shares.is_empty() {
            0.0
        } else {
            shares.iter().sum::<f64>() / shares.len() as f64
        },
        throughput_series,
        drop_series,
    }
}

fn bin_count(span_s: f64, bin_s: f64) -> usize {
    (span_s / bin_s).ceil().max(0.0) as usize
}

/// The run end itself falls in the last bin.
fn bin_of(t: f64, bin_s: f64, bins: usize) -> Option<usize> {
    let b = (t / bin_s).floor();
    if b < 0.0 || bins == 0 {
        return None;
    }
    let b = b as usize;
    if b < bins {
        Some(b)
    } else if t <= bins as f64 * bin_s {
        Some(bins - 1)
    } else {
        None
    }
}

/// Deliveries and drops binned by final time over `[0, span)`.
pub fn time_series(records: &[MessageRecord], bin_s: f64, span_s: f64) -> (Vec<u64>, Vec<u64>) {
    assert!(bin_s > 0.0);
    let bins = bin_count(span_s, bin_s);
    let mut delivered = vec![0; bins];
    let mut dropped = vec![0; bins];
    for r in records {
        let Some(t) = r.t_final_s else { continue };
        let Some(b) = bin_of(t, bin_s, bins) else { continue };
        match r.status {
            Status::Delivered => delivered[b] += 1,
            Status::Dropped => dropped[b] += 1,
            _ => {}
        }
    }
    (delivered, dropped)
}

/// Delivered count and mean latency per emission-time bin.
pub fn latency_series(records: &[MessageRecord], bin_s: f64, span_s: f64) -> Vec<(u64, Option<f64>)> {
    let bins = bin_count(span_s, bin_s);
    let mut acc = vec![(0u64, 0.0f64); bins];
    for r in records {
        if let (Some(l), Some(b)) = (r.latency(), bin_of(r.t_emit_s, bin_s, bins)) {
            acc[b].0 += 1;
            acc[b].1 += l;
        }
    }
    acc.into_iter()
        .map(|(n, s)| (n, (n > 0).then(|| s / n as f64)))
        .collect()
}

fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}

pub fn records_table(records: &[MessageRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.msg_id,
            r.src_gst,
            r.dst_gst,
            fmt_f(r.t_emit_s),
            r.t_final_s.map(fmt_f).unwrap_or_default(),
            r.status.as_str(),
            r.hops,
            r.reroutes,
            r.loop_detections,
            fmt_f(r.signaling_delay_s),
            fmt_f(r.stored_time_s),
            r.cross_segment.map(|b| b.to_string()).unwrap_or_default(),
        );
    }
    out
}

pub fn series_table(delivered: &[u64], dropped: &[u64], bin_s: f64) -> String {
    let mut out = format!("{SERIES_HEADER}\n");
    for (i, (d, x)) in delivered.iter().zip(dropped).enumerate() {
        let _ = writeln!(out, "{},{d},{x}", i as f64 * bin_s);
    }
    out
}

pub fn latency_series_table(series: &[(u64, Option<f64>)], bin_s: f64) -> String {
    let mut out = format!("{LATENCY_SERIES_HEADER}\n");
    for (i, (n, mean)) in series.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{n},{}",
            i as f64 * bin_s,
            mean.map(fmt_f).unwrap_or_default()
        );
    }
    out
}
