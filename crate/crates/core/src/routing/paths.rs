//! Latency-weighted shortest paths on snapshots and earliest-arrival search
//! over contact plans.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::topology::{ContactPlan, GraphSnapshot, LinkId, LinkMask};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Restricts a search to a subset of nodes.
pub type NodeFilter<'a> = Option<&'a dyn Fn(usize) -> bool>;

fn run(
    snapshot: &GraphSnapshot,
    src: usize,
    target: Option<usize>,
    mask: &(impl LinkMask + ?Sized),
    allowed: NodeFilter<'_>,
) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = snapshot.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Entry { cost: 0.0, node: src });
    while let Some(Entry { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if Some(node) == target {
            break;
        }
        for e in snapshot.neighbors(node) {
            if done[e.to] || mask.contains(e.link) {
                continue;
            }
            if let Some(ok) = allowed {
                if !ok(e.to) {
                    continue;
                }
            }
            let c = cost + e.latency_s;
            let better = c < dist[e.to] || (c == dist[e.to] && pred[e.to].is_some_and(|p| node < p));
            if better {
                dist[e.to] = c;
                pred[e.to] = Some(node);
                heap.push(Entry { cost: c, node: e.to });
            }
        }
    }
    (dist, pred)
}

/// Single-source latencies to every node (`INFINITY` when unreachable).
pub fn shortest_distances(
    snapshot: &GraphSnapshot,
    src: usize,
    mask: &(impl LinkMask + ?Sized),
    allowed: NodeFilter<'_>,
) -> Vec<f64> {
    run(snapshot, src, None, mask, allowed).0
}

/// Minimum-latency path `src → dst` avoiding masked links; `None` when
/// disconnected. Equal-cost ties go to the smaller predecessor index.
pub fn dijkstra(
    snapshot: &GraphSnapshot,
    src: usize,
    dst: usize,
    mask: &(impl LinkMask + ?Sized),
    allowed: NodeFilter<'_>,
) -> Option<(Vec<usize>, f64)> {
    if src == dst {
        return Some((vec![src], 0.0));
    }
    let (dist, pred) = run(snapshot, src, Some(dst), mask, allowed);
    if !dist[dst].is_finite() {
        return None;
    }
    let mut path = vec![dst];
    let mut cur = dst;
    while let Some(p) = pred[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Some((path, dist[dst]))
}

/// A path through a contact plan with the arrival time at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPath {
    pub nodes: Vec<usize>,
    pub arrivals: Vec<f64>,
}

impl TimedPath {
    pub fn arrival(&self) -> f64 {
        *self.arrivals.last().unwrap()
    }
}

/// Label-setting earliest-arrival search. Crossing link `e` after arriving at
/// `a` departs at the next availability `>= a` and takes `latency(e, depart)`.
/// `usable` filters links (failures, link kinds).
pub fn earliest_arrival(
    plan: &ContactPlan,
    src: usize,
    dst: usize,
    t0: f64,
    latency: impl Fn(LinkId, f64) -> f64,
    usable: impl Fn(LinkId) -> bool,
) -> Option<TimedPath> {
    let n = plan.node_count();
    let mut best = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[src] = t0;
    heap.push(Entry { cost: t0, node: src });
    while let Some(Entry { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == dst {
            break;
        }
        for &(next, link) in plan.neighbors(node) {
            if done[next] || !usable(link) {
                continue;
            }
            let Some(depart) = plan.next_available(link, cost) else {
                continue;
            };
            let arrive = depart + latency(link, depart);
            let better =
                arrive < best[next] || (arrive == best[next] && pred[next].is_some_and(|p| node < p));
            if better {
                best[next] = arrive;
                pred[next] = Some(node);
                heap.push(Entry {
                    cost: arrive,
                    node: next,
                });
            }
        }
    }
    if !best[dst].is_finite() {
        return None;
    }
    let mut nodes = vec![dst];
    let mut cur = dst;
    while let Some(p) = pred[cur] {
        nodes.push(p);
        cur = p;
    }
    nodes.reverse();
    let arrivals = nodes.iter().map(|&v| best[v]).collect();
    Some(TimedPath { nodes, arrivals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NoMask;
    use std::collections::HashSet;

    #[test]
    fn identity_and_triangle() {
        let tri = GraphSnapshot::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        assert_eq!(dijkstra(&tri, 1, 1, &NoMask, None), Some((vec![1], 0.0)));
        assert_eq!(dijkstra(&tri, 0, 2, &NoMask, None), Some((vec![0, 1, 2], 2.0)));
        let mut mask = HashSet::new();
        mask.insert(LinkId(0));
        assert_eq!(dijkstra(&tri, 0, 2, &mask, None), Some((vec![0, 2], 3.0)));
        mask.insert(LinkId(2));
        assert_eq!(dijkstra(&tri, 0, 2, &mask, None), None);
    }

    #[test]
    fn node_filter_blocks_transit() {
        let tri = GraphSnapshot::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let not_one = |v: usize| v != 1;
        assert_eq!(
            dijkstra(&tri, 0, 2, &NoMask, Some(&not_one)),
            Some((vec![0, 2], 3.0))
        );
    }

    #[test]
    fn forced_wait() {
        // 0 -(always)- 1 -(opens at 50)- 2, unit latencies.
        let plan = ContactPlan::new(
            3,
            vec![(0, 1), (1, 2)],
            vec![vec![(0.0, 1000.0)], vec![(50.0, 1000.0)]],
            1000.0,
        );
        let p = earliest_arrival(&plan, 0, 2, 0.0, |_, _| 1.0, |_| true).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2]);
        assert_eq!(p.arrival(), 51.0);
    }

    #[test]
    fn always_available_reduces_to_dijkstra() {
        let edges = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0), (2, 3, 0.5)];
        let snap = GraphSnapshot::from_edges(4, &edges);
        let plan = ContactPlan::new(
            4,
            edges.iter().map(|&(u, v, _)| (u, v)).collect(),
            vec![vec![(0.0, 100.0)]; edges.len()],
            100.0,
        );
        let p = earliest_arrival(&plan, 0, 3, 0.0, |l, _| edges[l.index()].2, |_| true).unwrap();
        let (path, cost) = dijkstra(&snap, 0, 3, &NoMask, None).unwrap();
        assert_eq!(p.nodes, path);
        assert_eq!(p.arrival(), cost);
    }
}
