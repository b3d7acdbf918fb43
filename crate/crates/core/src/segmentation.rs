//! Static partitioning of the satellite graph: PAM k-medoids over the latency
//! distance matrix, then one border satellite per adjacent segment pair chosen
//! by closeness centrality on the pair's induced subgraph.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::routing::paths;
use crate::topology::{distance_matrix, GraphSnapshot, NoMask, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("distance matrix has infinite entries: the graph is disconnected")]
    Disconnected,
    #[error("k = {k} is outside [1, {n}]")]
    BadK { k: usize, n: usize },
    #[error("no border candidate for segment pair ({0}, {1})")]
    NoCandidate(u32, u32),
}

pub type SegmentPair = (u32, u32);

fn pair(a: u32, b: u32) -> SegmentPair {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMedoids {
    /// Segment id per node: the position of its medoid in `medoids`.
    pub assignment: Vec<u32>,
    /// Medoid node indices, ascending.
    pub medoids: Vec<usize>,
    pub cost: f64,
}

/// Total distance from every node to its nearest medoid.
pub fn medoid_cost(dist: &[Vec<f64>], medoids: &[usize]) -> f64 {
    (0..dist.len())
        .map(|i| medoids.iter().map(|&m| dist[i][m]).fold(f64::INFINITY, f64::min))
        .sum()
}

/// PAM: greedy BUILD followed by best-improvement SWAP until no single
/// (medoid, non-medoid) exchange lowers the cost. The seed fixes the order in
/// which equal-cost candidates are considered.
pub fn k_medoids(dist: &[Vec<f64>], k: usize, seed: u64) -> Result<KMedoids, SegmentationError> {
    let n = dist.len();
    if k < 1 || k > n {
        return Err(SegmentationError::BadK { k, n });
    }
    if dist.iter().flatten().any(|d| !d.is_finite()) {
        return Err(SegmentationError::Disconnected);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // BUILD
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for &c in &order {
            if medoids.contains(&c) {
                continue;
            }
            let total: f64 = (0..n).map(|j| nearest[j].min(dist[c][j])).sum();
            if best.is_none_or(|(b, _)| total < b) {
                best = Some((total, c));
            }
        }
        let (_, c) = best.unwrap();
        medoids.push(c);
        for j in 0..n {
            nearest[j] = nearest[j].min(dist[c][j]);
        }
    }

    // SWAP
    let mut cost = medoid_cost(dist, &medoids);
    loop {
        // nearest and second-nearest medoid distance per node
        let mut d1 = vec![f64::INFINITY; n];
        let mut d2 = vec![f64::INFINITY; n];
        let mut m1 = vec![0usize; n];
        for j in 0..n {
            for (mi, &m) in medoids.iter().enumerate() {
                let d = dist[j][m];
                if d < d1[j] {
                    d2[j] = d1[j];
                    d1[j] = d;
                    m1[j] = mi;
                } else if d < d2[j] {
                    d2[j] = d;
                }
            }
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for mi in 0..k {
            for &h in &order {
                if medoids.contains(&h) {
                    continue;
                }
                let mut delta = 0.0;
                for j in 0..n {
                    let dh = dist[j][h];
                    let now = d1[j];
                    let after = if m1[j] == mi { dh.min(d2[j]) } else { dh.min(d1[j]) };
                    delta += after - now;
                }
                if best.is_none_or(|(b, _, _)| delta < b) {
                    best = Some((delta, mi, h));
                }
            }
        }
        match best {
            Some((delta, mi, h)) if delta < -1e-12 * cost.max(1.0) => {
                medoids[mi] = h;
                let new_cost = medoid_cost(dist, &medoids);
                if new_cost >= cost {
                    break;
                }
                cost = new_cost;
            }
            _ => break,
        }
    }

    medoids.sort_unstable();
    let assignment = (0..n)
        .map(|j| {
            let mut best = 0;
            for (mi, &m) in medoids.iter().enumerate() {
                if dist[j][m] < dist[j][medoids[best]] {
                    best = mi;
                }
            }
            best as u32
        })
        .collect();
    let cost = medoid_cost(dist, &medoids);
    Ok(KMedoids {
        assignment,
        medoids,
        cost,
    })
}

/// Satellites with a usable ISL into the other segment of each pair.
pub fn border_candidates(
    assignment: &[u32],
    snapshot: &GraphSnapshot,
) -> BTreeMap<SegmentPair, BTreeSet<usize>> {
    let mut out: BTreeMap<SegmentPair, BTreeSet<usize>> = BTreeMap::new();
    for (_, u, v, _) in snapshot.isl_edges() {
        let (su, sv) = (assignment[u], assignment[v]);
        if su != sv {
            let set = out.entry(pair(su, sv)).or_default();
            set.insert(u);
            set.insert(v);
        }
    }
    out
}

/// Closeness `(|U| - 1) / Σ d(v, u)` over the subgraph induced by `members`.
/// Zero when some member is unreachable.
pub fn closeness_in(snapshot: &GraphSnapshot, v: usize, members: &BTreeSet<usize>) -> f64 {
    if members.len() < 2 {
        return 0.0;
    }
    let inside = |x: usize| members.contains(&x);
    let d = paths::shortest_distances(snapshot, v, &NoMask, Some(&inside));
    let total: f64 = members.iter().map(|&u| d[u]).sum();
    if !total.is_finite() || total <= 0.0 {
        return 0.0;
    }
    (members.len() - 1) as f64 / total
}

/// Highest-closeness candidate per pair, ties to the lowest index.
pub fn select_border_satellites(
    candidates: &BTreeMap<SegmentPair, BTreeSet<usize>>,
    assignment: &[u32],
    snapshot: &GraphSnapshot,
) -> Result<BTreeMap<SegmentPair, usize>, SegmentationError> {
    let mut out = BTreeMap::new();
    for (&(a, b), cands) in candidates {
        let members: BTreeSet<usize> = (0..assignment.len())
            .filter(|&i| assignment[i] == a || assignment[i] == b)
            .collect();
        let mut best: Option<(f64, usize)> = None;
        for &v in cands {
            let c = closeness_in(snapshot, v, &members);
            if best.is_none_or(|(bc, _)| c > bc) {
                best = Some((c, v));
            }
        }
        let (_, v) = best.ok_or(SegmentationError::NoCandidate(a, b))?;
        out.insert((a, b), v);
    }
    Ok(out)
}

/// Fixed partition of the constellation for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub k: usize,
    pub assignment: Vec<u32>,
    pub medoids: Vec<usize>,
    pub border_map: BTreeMap<SegmentPair, usize>,
    pub built_at: f64,
}

impl SegmentPlan {
    pub fn segment_of(&self, sat: usize) -> u32 {
        self.assignment[sat]
    }

    pub fn border(&self, a: u32, b: u32) -> Option<usize> {
        self.border_map.get(&pair(a, b)).copied()
    }

    /// Every border satellite serving a pair that includes `segment`.
    pub fn borders_of_segment(&self, segment: u32) -> impl Iterator<Item = usize> + '_ {
        self.border_map
            .iter()
            .filter(move |((a, b), _)| *a == segment || *b == segment)
            .map(|(_, &v)| v)
    }

    /// Distinct border satellites.
    pub fn border_satellites(&self) -> BTreeSet<usize> {
        self.border_map.values().copied().collect()
    }

    /// Pairs served by border `sat`.
    pub fn pairs_of_border(&self, sat: usize) -> impl Iterator<Item = SegmentPair> + '_ {
        self.border_map
            .iter()
            .filter(move |(_, &v)| v == sat)
            .map(|(&p, _)| p)
    }

    /// Hop sequence through the segment adjacency graph (pairs with a border),
    /// breadth-first with lowest-id tie-breaks. Includes both ends.
    pub fn segment_route(&self, from: u32, to: u32) -> Option<Vec<u32>> {
        if from == to {
            return Some(vec![from]);
        }
        let mut prev: BTreeMap<u32, u32> = BTreeMap::new();
        let mut queue = std::collections::VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(s) = queue.pop_front() {
            let mut next: Vec<u32> = self
                .border_map
                .keys()
                .filter_map(|&(a, b)| {
                    if a == s {
                        Some(b)
                    } else if b == s {
                        Some(a)
                    } else {
                        None
                    }
                })
                .collect();
            next.sort_unstable();
            for t in next {
                if seen.insert(t) {
                    prev.insert(t, s);
                    if t == to {
                        let mut route = vec![to];
                        let mut cur = to;
                        while let Some(&p) = prev.get(&cur) {
                            route.push(p);
                            cur = p;
                        }
                        route.reverse();
                        return Some(route);
                    }
                    queue.push_back(t);
                }
            }
        }
        None
    }
}

/// Builds the plan from the unfailed snapshot at `t0`.
pub fn plan_partition(
    topology: &Topology,
    k: usize,
    seed: u64,
    t0: f64,
) -> Result<SegmentPlan, SegmentationError> {
    let snapshot = topology.snapshot(t0, &NoMask);
    plan_from_snapshot(&snapshot, k, seed)
}

pub fn plan_from_snapshot(
    snapshot: &GraphSnapshot,
    k: usize,
    seed: u64,
) -> Result<SegmentPlan, SegmentationError> {
    let dist = distance_matrix(snapshot);
    let km = k_medoids(&dist, k, seed)?;
    let candidates = border_candidates(&km.assignment, snapshot);
    let border_map = select_border_satellites(&candidates, &km.assignment, snapshot)?;
    Ok(SegmentPlan {
        k,
        assignment: km.assignment,
        medoids: km.medoids,
        border_map,
        built_at: snapshot.time,
    })
}

/// Text dump: a `sat_id,segment_id` section then a `seg_a,seg_b,border_sat_id`
/// section.
pub fn dump_plan(plan: &SegmentPlan) -> String {
    let mut out = String::from("sat_id,segment_id\n");
    for (i, s) in plan.assignment.iter().enumerate() {
        out.push_str(&format!("{i},{s}\n"));
    }
    out.push_str("seg_a,seg_b,border_sat_id\n");
    for (&(a, b), v) in &plan.border_map {
        out.push_str(&format!("{a},{b},{v}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanDump {
    pub assignment: Vec<u32>,
    pub borders: BTreeMap<SegmentPair, usize>,
}

/// Parses the output of [`dump_plan`]. Satellite ids must be dense and in order.
pub fn parse_plan_dump(text: &str) -> Result<PlanDump, String> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Sats,
        Borders,
    }
    let mut section = Section::None;
    let mut dump = PlanDump::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        match line {
            "sat_id,segment_id" => {
                section = Section::Sats;
                continue;
            }
            "seg_a,seg_b,border_sat_id" => {
                section = Section::Borders;
                continue;
            }
            _ => {}
        }
        let nums: Result<Vec<u64>, _> = line.split(',').map(|f| f.trim().parse::<u64>()).collect();
        let nums = nums.map_err(|_| format!("line {lineno}: non-numeric field"))?;
        let narrow = |x: u64| u32::try_from(x).map_err(|_| format!("line {lineno}: value out of range"));
        match (&section, nums.as_slice()) {
            (Section::Sats, &[sat, seg]) => {
                if sat as usize != dump.assignment.len() {
                    return Err(format!(
                        "line {lineno}: expected satellite {}",
                        dump.assignment.len()
                    ));
                }
                dump.assignment.push(narrow(seg)?);
            }
            (Section::Borders, &[a, b, v]) => {
                let (a, b) = (narrow(a)?, narrow(b)?);
                if a == b {
                    return Err(format!("line {lineno}: a border joins two distinct segments"));
                }
                let v = narrow(v)? as usize;
                if v >= dump.assignment.len() {
                    return Err(format!("line {lineno}: unknown satellite {v}"));
                }
                if dump.borders.insert(pair(a, b), v).is_some() {
                    return Err(format!("line {lineno}: duplicate pair ({a}, {b})"));
                }
            }
            (Section::None, _) => return Err(format!("line {lineno}: missing section header")),
            _ => return Err(format!("line {lineno}: wrong field count")),
        }
    }
    Ok(dump)
}
