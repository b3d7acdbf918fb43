//! Failure-knowledge scopes.
//!
//! * source: nobody knows anything beyond its own links.
//! * neighbor: both endpoints of a changed link alert every node they have a
//!   usable link to, instantly. When a link comes back up its endpoints swap
//!   the state of their incident links.
//! * segment: every border satellite serving a segment that contains the link
//!   learns of the change after the one-way latency from the nearer endpoint.
//!   Nodes read the knowledge of their nearest border satellite as it stood
//!   when the reply left it.
//! * global: the ground truth, instantly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routing::paths;
use crate::segmentation::SegmentPlan;
use crate::topology::{GraphSnapshot, Link, LinkId, LinkKind, NoMask, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Source,
    Neighbor,
    Segment,
    Global,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [
        Paradigm::Source,
        Paradigm::Neighbor,
        Paradigm::Segment,
        Paradigm::Global,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Source => "source",
            Paradigm::Neighbor => "neighbor",
            Paradigm::Segment => "segment",
            Paradigm::Global => "global",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Paradigm::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown paradigm `{s}` (expected source, neighbor, segment or global)"))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AwarenessError {
    #[error("no usable path from satellite {0} to any border satellite of its segment")]
    BorderUnreachable(usize),
}

/// A scheduled failure of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureEvent {
    pub link: LinkId,
    pub t_down: f64,
    pub t_up: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Notice {
    known_at: f64,
    changed_at: f64,
    down: bool,
}

/// What one border satellite has heard, with arrival times.
#[derive(Debug, Clone, Default)]
pub struct BorderKnowledge {
    notices: HashMap<LinkId, Vec<Notice>>,
}

const SETTLE_MARGIN_S: f64 = 30.0;

impl BorderKnowledge {
    fn record(&mut self, link: LinkId, notice: Notice, now: f64) {
        let list = self.notices.entry(link).or_default();
        list.push(notice);
        // Fold notices that have long since arrived into the newest of them.
        let settled = now - SETTLE_MARGIN_S;
        let latest_settled = list
            .iter()
            .filter(|n| n.known_at <= settled)
            .max_by(|a, b| a.changed_at.total_cmp(&b.changed_at))
            .copied();
        if let Some(keep) = latest_settled {
            list.retain(|n| n.known_at > settled);
            list.push(keep);
            if list.len() == 1 && !keep.down {
                self.notices.remove(&link);
            }
        }
    }

    fn state_as_of(list: &[Notice], tau: f64) -> bool {
        list.iter()
            .filter(|n| n.known_at <= tau)
            .max_by(|a, b| a.changed_at.total_cmp(&b.changed_at))
            .is_some_and(|n| n.down)
    }

    /// Links this border believed down at instant `tau`.
    pub fn down_as_of(&self, tau: f64) -> HashSet<LinkId> {
        self.notices
            .iter()
            .filter(|(_, list)| Self::state_as_of(list, tau))
            .map(|(&l, _)| l)
            .collect()
    }

    pub fn believes_down(&self, link: LinkId, tau: f64) -> bool {
        self.notices
            .get(&link)
            .is_some_and(|list| Self::state_as_of(list, tau))
    }

    /// Every link this border holds any notice about.
    pub fn links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.notices.keys().copied()
    }
}

/// Failure knowledge answered to a forwarding node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Knowledge {
    pub down: HashSet<LinkId>,
    /// Round-trip query cost (segment paradigm only).
    pub query_delay_s: f64,
}

#[derive(Debug, Clone)]
pub struct Awareness {
    paradigm: Paradigm,
    truth: Vec<bool>,
    truth_set: HashSet<LinkId>,
    neighbor: Vec<HashSet<LinkId>>,
    borders: BTreeMap<usize, BorderKnowledge>,
}

fn sat_endpoints(link: &Link) -> impl Iterator<Item = usize> {
    [link.a.sat(), link.b.sat()].into_iter().flatten()
}

impl Awareness {
    pub fn new(paradigm: Paradigm, link_count: usize, sat_count: usize, plan: Option<&SegmentPlan>) -> Self {
        let neighbor = if paradigm == Paradigm::Neighbor {
            vec![HashSet::new(); sat_count]
        } else {
            Vec::new()
        };
        let borders = match (paradigm, plan) {
            (Paradigm::Segment, Some(plan)) => plan
                .border_satellites()
                .into_iter()
                .map(|b| (b, BorderKnowledge::default()))
                .collect(),
            _ => BTreeMap::new(),
        };
        Self {
            paradigm,
            truth: vec![false; link_count],
            truth_set: HashSet::new(),
            neighbor,
            borders,
        }
    }

    pub fn paradigm(&self) -> Paradigm {
        self.paradigm
    }

    pub fn is_down(&self, link: LinkId) -> bool {
        self.truth[link.index()]
    }

    /// Ground-truth failed links.
    pub fn truth(&self) -> &HashSet<LinkId> {
        &self.truth_set
    }

    pub fn truth_mask(&self) -> &[bool] {
        &self.truth
    }

    pub fn neighbor_view(&self, sat: usize) -> Option<&HashSet<LinkId>> {
        self.neighbor.get(sat)
    }

    pub fn border_view(&self, sat: usize) -> Option<&BorderKnowledge> {
        self.borders.get(&sat)
    }

    /// Applies a ground-truth change at `t`. `usable` is the graph at `t`
    /// after the change.
    pub fn on_link_state_change(
        &mut self,
        links: &[Link],
        usable: &GraphSnapshot,
        plan: Option<&SegmentPlan>,
        link: LinkId,
        down: bool,
        t: f64,
    ) {
        let unfailed = || usable.clone();
        self.on_link_state_change_with(links, usable, unfailed, plan, link, down, t);
    }

    /// As [`Self::on_link_state_change`]; `unfailed` yields the graph at `t`
    /// with every failure lifted, used to reach borders cut off from the change.
    #[allow(clippy::too_many_arguments)]
    pub fn on_link_state_change_with(
        &mut self,
        links: &[Link],
        usable: &GraphSnapshot,
        unfailed: impl FnOnce() -> GraphSnapshot,
        plan: Option<&SegmentPlan>,
        link: LinkId,
        down: bool,
        t: f64,
    ) {
        self.truth[link.index()] = down;
        if down {
            self.truth_set.insert(link);
        } else {
            self.truth_set.remove(&link);
        }
        let l = links[link.index()];
        match self.paradigm {
            Paradigm::Source | Paradigm::Global => {}
            Paradigm::Neighbor => {
                let mut recipients: Vec<usize> = sat_endpoints(&l).collect();
                for e in sat_endpoints(&l) {
                    recipients.extend(usable.neighbors(e).iter().map(|edge| edge.to));
                }
                for r in recipients {
                    self.set_belief(r, link, down);
                }
                if !down && l.kind == LinkKind::Isl {
                    let (a, b) = (l.a.sat().unwrap(), l.b.sat().unwrap());
                    // Resync needs the recovered link to be structurally present.
                    if usable.edge(a, b).is_none() {
                        return;
                    }
                    for (from, to) in [(a, b), (b, a)] {
                        let node = NodeId::Sat(from as u32);
                        for (i, other) in links.iter().enumerate() {
                            if other.kind == LinkKind::Isl && other.touches(node) {
                                let id = LinkId(i as u32);
                                let state = self.truth[i];
                                self.set_belief(to, id, state);
                            }
                        }
                    }
                }
            }
            Paradigm::Segment => {
                let Some(plan) = plan else { return };
                let segments: Vec<u32> = sat_endpoints(&l).map(|s| plan.segment_of(s)).collect();
                let borders: Vec<usize> = self
                    .borders
                    .keys()
                    .copied()
                    .filter(|&b| {
                        plan.pairs_of_border(b)
                            .any(|(x, y)| segments.contains(&x) || segments.contains(&y))
                    })
                    .collect();
                let mut unfailed = Some(unfailed);
                let mut structural: Option<GraphSnapshot> = None;
                for b in borders {
                    let d = paths::shortest_distances(usable, b, &NoMask, None);
                    let mut delay = sat_endpoints(&l).map(|e| d[e]).fold(f64::INFINITY, f64::min);
                    if !delay.is_finite() {
                        // Cut off from the change: fall back to the unfailed graph.
                        if structural.is_none() {
                            structural = unfailed.take().map(|f| f());
                        }
                        let s = structural.as_ref().unwrap();
                        let d = paths::shortest_distances(s, b, &NoMask, None);
                        delay = sat_endpoints(&l).map(|e| d[e]).fold(f64::INFINITY, f64::min);
                    }
                    if !delay.is_finite() {
                        continue;
                    }
                    let notice = Notice {
                        known_at: t + delay,
                        changed_at: t,
                        down,
                    };
                    self.borders.get_mut(&b).unwrap().record(link, notice, t);
                }
            }
        }
    }

    fn set_belief(&mut self, sat: usize, link: LinkId, down: bool) {
        if down {
            self.neighbor[sat].insert(link);
        } else {
            self.neighbor[sat].remove(&link);
        }
    }

    /// Links `sat` believes down at `t` under the active paradigm.
    pub fn known_failures(
        &self,
        usable: &GraphSnapshot,
        plan: Option<&SegmentPlan>,
        sat: usize,
        t: f64,
    ) -> Result<Knowledge, AwarenessError> {
        match self.paradigm {
            Paradigm::Source => Ok(Knowledge::default()),
            Paradigm::Neighbor => Ok(Knowledge {
                down: self.neighbor[sat].clone(),
                query_delay_s: 0.0,
            }),
            Paradigm::Global => Ok(Knowledge {
                down: self.truth_set.clone(),
                query_delay_s: 0.0,
            }),
            Paradigm::Segment => {
                let Some(plan) = plan else {
                    return Ok(Knowledge::default());
                };
                let (border, one_way) = self.nearest_border(usable, plan, sat)?;
                let down = self.borders[&border].down_as_of(t - one_way);
                Ok(Knowledge {
                    down,
                    query_delay_s: 2.0 * one_way,
                })
            }
        }
    }

    /// Nearest border satellite serving `sat`'s segment and its one-way latency.
    pub fn nearest_border(
        &self,
        usable: &GraphSnapshot,
        plan: &SegmentPlan,
        sat: usize,
    ) -> Result<(usize, f64), AwarenessError> {
        let seg = plan.segment_of(sat);
        let mut borders: Vec<usize> = plan.borders_of_segment(seg).collect();
        borders.sort_unstable();
        borders.dedup();
        if borders.is_empty() {
            return Err(AwarenessError::BorderUnreachable(sat));
        }
        if borders.contains(&sat) {
            return Ok((sat, 0.0));
        }
        let d = paths::shortest_distances(usable, sat, &NoMask, None);
        borders
            .into_iter()
            .map(|b| (b, d[b]))
            .filter(|(_, x)| x.is_finite())
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .ok_or(AwarenessError::BorderUnreachable(sat))
    }

    /// Round trip to the nearest border satellite.
    pub fn signaling_delay(
        &self,
        usable: &GraphSnapshot,
        plan: &SegmentPlan,
        sat: usize,
    ) -> Result<f64, AwarenessError> {
        self.nearest_border(usable, plan, sat).map(|(_, d)| 2.0 * d)
    }
}
