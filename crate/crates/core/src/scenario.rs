//! Seeded experiment streams: burst traffic, sustained random link failures
//! and the targeted border-satellite outage.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::awareness::FailureEvent;
use crate::topology::{Link, LinkId, NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    pub burst_length_s: f64,
    pub mean_rate_per_s: f64,
    pub horizon_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub t: f64,
    pub src: u32,
    pub dst: u32,
}

/// Messages in burst `b`: the running total rounded, differenced, so the
/// long-run rate is exact and each burst holds `round(rate * burst)` ± 1.
pub fn burst_count(b: u64, rate: f64, burst_s: f64) -> u64 {
    let total = |i: u64| (i as f64 * rate * burst_s).round() as u64;
    total(b + 1) - total(b)
}

/// Back-to-back bursts tiling `[0, horizon)`, emission times uniform within
/// each burst and ordered, endpoints uniform over distinct station pairs.
pub fn generate_traffic(spec: &TrafficSpec, gst_count: usize) -> Vec<Emission> {
    assert!(gst_count >= 2, "traffic needs two ground stations");
    assert!(spec.mean_rate_per_s > 0.0 && spec.burst_length_s > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bursts = (spec.horizon_s / spec.burst_length_s).ceil() as u64;
    let mut out = Vec::new();
    for b in 0..bursts {
        let start = b as f64 * spec.burst_length_s;
        let end = (start + spec.burst_length_s).min(spec.horizon_s);
        let n = burst_count(b, spec.mean_rate_per_s, spec.burst_length_s);
        let mut burst: Vec<Emission> = (0..n)
            .map(|_| {
                let t = rng.gen_range(start..end);
                let src = rng.gen_range(0..gst_count as u32);
                let mut dst = rng.gen_range(0..gst_count as u32 - 1);
                if dst >= src {
                    dst += 1;
                }
                Emission { t, src, dst }
            })
            .collect();
        burst.sort_by(|a, b| a.t.total_cmp(&b.t));
        out.extend(burst);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomFailureSpec {
    pub fraction: f64,
    pub downtime_s: f64,
    /// Satellites whose links are never selected.
    pub exclusions: BTreeSet<usize>,
    pub seed: u64,
}

/// Candidates minus links touching an excluded satellite.
pub fn eligible_links(links: &[Link], candidates: &[LinkId], exclusions: &BTreeSet<usize>) -> Vec<LinkId> {
    candidates
        .iter()
        .copied()
        .filter(|&id| {
            let l = &links[id.index()];
            ![l.a, l.b]
                .iter()
                .any(|n| n.sat().is_some_and(|s| exclusions.contains(&s)))
        })
        .collect()
}

/// Keeps `round(fraction * eligible)` links down at all times. Initial
/// recoveries are spread over `(0, downtime]`; each recovery before the
/// horizon immediately fails another currently-up link.
pub fn random_failure_process(
    spec: &RandomFailureSpec,
    links: &[Link],
    candidates: &[LinkId],
    horizon_s: f64,
) -> Vec<FailureEvent> {
    let eligible = eligible_links(links, candidates, &spec.exclusions);
    let concurrent = (spec.fraction * eligible.len() as f64).round() as usize;
    if concurrent == 0 || horizon_s <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let chosen: BTreeSet<usize> = sample(&mut rng, eligible.len(), concurrent).into_iter().collect();
    let mut up: Vec<LinkId> = Vec::with_capacity(eligible.len());
    // (recovery time bits, link, down since)
    let mut pending = BinaryHeap::new();
    for (i, &id) in eligible.iter().enumerate() {
        if chosen.contains(&i) {
            let u: f64 = rng.gen();
            let recover = spec.downtime_s * (1.0 - u);
            pending.push(Reverse((recover.to_bits(), id, 0.0f64.to_bits())));
        } else {
            up.push(id);
        }
    }
    let mut events = Vec::new();
    while let Some(Reverse((bits, id, since))) = pending.pop() {
        let t = f64::from_bits(bits);
        events.push(FailureEvent {
            link: id,
            t_down: f64::from_bits(since),
            t_up: t,
        });
        if t < horizon_s && !up.is_empty() {
            let j = rng.gen_range(0..up.len());
            let next = up.swap_remove(j);
            pending.push(Reverse(((t + spec.downtime_s).to_bits(), next, t.to_bits())));
        }
        up.push(id);
    }
    events.sort_by(|a, b| a.t_down.total_cmp(&b.t_down).then(a.link.cmp(&b.link)));
    events
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetedFailureSpec {
    pub targets: BTreeSet<usize>,
    pub t_start_s: f64,
    pub duration_s: f64,
}

/// Every link ever incident to a target goes down for the outage window.
pub fn targeted_outage(spec: &TargetedFailureSpec, topology: &Topology) -> Vec<FailureEvent> {
    let links: BTreeSet<LinkId> = spec
        .targets
        .iter()
        .flat_map(|&s| topology.links_of_sat(s).iter().copied())
        .collect();
    links
        .into_iter()
        .map(|link| FailureEvent {
            link,
            t_down: spec.t_start_s,
            t_up: spec.t_start_s + spec.duration_s,
        })
        .collect()
}

/// Number of links down at `t`, counting a link down on `[t_down, t_up)`.
pub fn down_count_at(events: &[FailureEvent], t: f64) -> usize {
    events.iter().filter(|e| e.t_down <= t && t < e.t_up).count()
}

/// Links touching `sat` among `links`; used by tests and the outage report.
pub fn incident(links: &[Link], sat: usize) -> impl Iterator<Item = LinkId> + '_ {
    links
        .iter()
        .enumerate()
        .filter(move |(_, l)| l.touches(NodeId::Sat(sat as u32)))
        .map(|(i, _)| LinkId(i as u32))
}
