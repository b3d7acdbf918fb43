//! Per-message routing: initial path planning, per-paradigm reroute decisions,
//! loop bookkeeping and the store-at-failed-link fallback.

pub mod paths;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::awareness::{Awareness, Paradigm};
use crate::segmentation::SegmentPlan;
use crate::topology::{ContactPlan, Either, GraphSnapshot, LinkId, LinkKind, LinkMask, NodeId, Topology};

/// How long a node waits before retrying when its knowledge says a link is
/// down but the link is in fact up, or when no gateway can be resolved.
pub const RETRY_S: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("no initial path")]
    NoInitialPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopPolicy {
    pub threshold: u32,
}

impl LoopPolicy {
    /// Revisit budget per constellation: 8 for Iridium, 12 otherwise.
    pub fn for_constellation(name: &str) -> Self {
        let threshold = if name == "iridium" { 8 } else { 12 };
        Self { threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    InFlight,
    Stored,
    Delivered,
    Dropped,
    NeverSent,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::InFlight => "in_flight",
            Status::Stored => "stored",
            Status::Delivered => "delivered",
            Status::Dropped => "dropped",
            Status::NeverSent => "never_sent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    LoopThreshold,
    Unroutable,
}

/// Segments to cross and the border satellite used for each crossing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WaypointPlan {
    pub segments: Vec<u32>,
    pub border_sats: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Message {
    pub id: u64,
    pub src: u32,
    pub dst: u32,
    pub t_emit: f64,
    /// Ground station, satellites, ground station.
    pub path: Vec<NodeId>,
    /// Index in `path` of the node currently holding the message.
    pub cursor: usize,
    pub waypoints: Option<WaypointPlan>,
    /// Current leg: index into `waypoints.border_sats`, or its length for the
    /// final leg to the destination gateway.
    pub leg: usize,
    pub visited: Vec<NodeId>,
    pub loop_detections: u32,
    pub reroutes: u32,
    pub signaling_delay_s: f64,
    pub status: Status,
    pub t_final: Option<f64>,
    pub stored_at: Option<(NodeId, LinkId)>,
    pub stored_since: Option<f64>,
    pub stored_time_s: f64,
    pub hops: u32,
    pub drop_reason: Option<DropReason>,
    pub cross_segment: Option<bool>,
}

impl Message {
    pub fn new(id: u64, src: u32, dst: u32, t_emit: f64) -> Self {
        Self {
            id,
            src,
            dst,
            t_emit,
            path: Vec::new(),
            cursor: 0,
            waypoints: None,
            leg: 0,
            visited: Vec::new(),
            loop_detections: 0,
            reroutes: 0,
            signaling_delay_s: 0.0,
            status: Status::InFlight,
            t_final: None,
            stored_at: None,
            stored_since: None,
            stored_time_s: 0.0,
            hops: 0,
            drop_reason: None,
            cross_segment: None,
        }
    }

    pub fn current(&self) -> NodeId {
        self.path[self.cursor]
    }

    /// Satellite the message is ultimately routed to.
    pub fn exit_gateway(&self) -> usize {
        self.path[self.path.len() - 2]
            .sat()
            .expect("exit gateway is a satellite")
    }

    fn leg_target(&self) -> Option<usize> {
        let w = self.waypoints.as_ref()?;
        Some(
            w.border_sats
                .get(self.leg)
                .copied()
                .unwrap_or_else(|| self.exit_gateway()),
        )
    }

    fn leg_segment(&self) -> Option<u32> {
        let w = self.waypoints.as_ref()?;
        w.segments.get(self.leg).copied()
    }
}

/// Loop bookkeeping on arrival. Returns true when the message must be dropped.
pub fn register_arrival(msg: &mut Message, node: NodeId, policy: LoopPolicy) -> bool {
    if msg.visited.contains(&node) {
        msg.loop_detections += 1;
    }
    msg.visited.push(node);
    msg.loop_detections > policy.threshold
}

/// Next step for a message held at a satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Forward {
        next: NodeId,
        link: LinkId,
        /// Time spent at the node before transmitting (query delay).
        dwell_s: f64,
    },
    StoreAt(LinkId),
    WaitUntil(f64),
    Drop(DropReason),
}

/// Everything a routing decision may read at one instant.
pub struct RouteCtx<'a> {
    pub paradigm: Paradigm,
    pub topology: &'a Topology,
    pub contacts: &'a ContactPlan,
    pub plan: Option<&'a SegmentPlan>,
    pub awareness: &'a Awareness,
    /// Every structurally present link at `t`, failures ignored.
    pub predicted: &'a GraphSnapshot,
    /// Ground truth at `t`.
    pub usable: &'a GraphSnapshot,
    pub t: f64,
}

impl RouteCtx<'_> {
    fn is_down(&self, link: LinkId) -> bool {
        self.awareness.is_down(link)
    }

    /// Failed links incident to `sat`; a node always sees its own links.
    fn own_failures(&self, sat: usize) -> HashSet<LinkId> {
        self.predicted
            .neighbors(sat)
            .iter()
            .map(|e| e.link)
            .filter(|&l| self.is_down(l))
            .collect()
    }

    /// Best currently usable gateway satellite of a ground station.
    pub fn gateway(&self, gst: u32) -> Option<usize> {
        self.topology
            .visible_sats(gst as usize, self.t)
            .iter()
            .find(|(_, l)| !self.is_down(*l))
            .map(|&(s, _)| s as usize)
    }

    /// Scoped knowledge at `sat`: (believed-down links, query delay). Without
    /// a reachable border only the node's own links are known.
    fn knowledge(&self, sat: usize) -> (HashSet<LinkId>, f64) {
        let (known, delay, _) = self.scoped_knowledge(sat);
        (known, delay)
    }

    fn scoped_knowledge(&self, sat: usize) -> (HashSet<LinkId>, f64, bool) {
        let mut down = match self.awareness.known_failures(self.usable, self.plan, sat, self.t) {
            Ok(k) => (k.down, k.query_delay_s, true),
            Err(_) => (HashSet::new(), 0.0, false),
        };
        down.0.extend(self.own_failures(sat));
        down
    }

    fn sats_to_path(&self, src: u32, sats: &[usize], dst: u32) -> Vec<NodeId> {
        let mut path = Vec::with_capacity(sats.len() + 2);
        path.push(NodeId::Gst(src));
        path.extend(sats.iter().map(|&s| NodeId::Sat(s as u32)));
        path.push(NodeId::Gst(dst));
        path
    }

    /// Earliest-arrival satellites from `from` to ground station `dst` over the
    /// contact plan; the exit satellite is the one whose downlink arrives first.
    fn lookahead(&self, from: usize, dst: u32, mask: &(impl LinkMask + ?Sized)) -> Option<Vec<usize>> {
        let topo = self.topology;
        let target = NodeId::Gst(dst);
        let mut nodes = paths::earliest_arrival(
            self.contacts,
            from,
            topo.sat_count() + dst as usize,
            self.t,
            |l, at| topo.latency(l, at),
            |l| {
                let link = topo.link(l);
                match link.kind {
                    LinkKind::Isl => !mask.contains(l),
                    LinkKind::Gsl => link.touches(target) && !self.is_down(l),
                }
            },
        )?
        .nodes;
        nodes.pop();
        Some(nodes)
    }

    /// Restricted Dijkstra for one segment leg.
    fn leg_path(
        &self,
        from: usize,
        to: usize,
        segment: u32,
        mask: &(impl LinkMask + ?Sized),
    ) -> Option<Vec<usize>> {
        let plan = self.plan?;
        let allowed = |v: usize| v == from || v == to || plan.segment_of(v) == segment;
        paths::dijkstra(self.predicted, from, to, mask, Some(&allowed)).map(|(p, _)| p)
    }

    /// Segment sequence and leg-by-leg path from `from` to `to`.
    fn segment_route(
        &self,
        from: usize,
        to: usize,
        mask: &(impl LinkMask + ?Sized),
    ) -> Option<(Vec<usize>, WaypointPlan)> {
        let plan = self.plan?;
        let (s_from, s_to) = (plan.segment_of(from), plan.segment_of(to));
        let mut segments = None;
        if s_from == s_to {
            if let Some(p) = self.leg_path(from, to, s_from, mask) {
                return Some((
                    p,
                    WaypointPlan {
                        segments: vec![s_from],
                        border_sats: vec![],
                    },
                ));
            }
        }
        if segments.is_none() {
            let (sats, _) = paths::dijkstra(self.predicted, from, to, mask, None)
                .or_else(|| paths::dijkstra(self.predicted, from, to, &crate::topology::NoMask, None))?;
            segments = Some(waypoints_from_path(plan, &sats)?);
        }
        let waypoints = segments?;
        let mut targets = waypoints.border_sats.clone();
        targets.push(to);
        let mut out = vec![from];
        let mut at = from;
        for (i, &target) in targets.iter().enumerate() {
            let seg = waypoints.segments[i];
            let leg = self
                .leg_path(at, target, seg, mask)
                .or_else(|| self.leg_path(at, target, seg, &crate::topology::NoMask))?;
            out.extend_from_slice(&leg[1..]);
            at = target;
        }
        Some((out, waypoints))
    }
}

/// Collapses a satellite path into the segments it crosses (cycles removed)
/// and picks the plan's border satellite for each crossing. Crossings between
/// segments without a designated border are expanded through intermediate
/// segments.
pub fn waypoints_from_path(plan: &SegmentPlan, sats: &[usize]) -> Option<WaypointPlan> {
    let mut seq: Vec<u32> = Vec::new();
    for &s in sats {
        let seg = plan.segment_of(s);
        if let Some(pos) = seq.iter().position(|&x| x == seg) {
            if pos + 1 != seq.len() {
                seq.truncate(pos + 1);
            }
        } else {
            seq.push(seg);
        }
    }
    let mut segments = vec![seq[0]];
    let mut border_sats = Vec::new();
    for w in seq.windows(2) {
        let hops = plan.segment_route(w[0], w[1])?;
        for h in hops.windows(2) {
            border_sats.push(plan.border(h[0], h[1])?);
            segments.push(h[1]);
        }
    }
    Some(WaypointPlan {
        segments,
        border_sats,
    })
}

/// A freshly planned route for a new message.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Vec<NodeId>,
    pub waypoints: Option<WaypointPlan>,
    pub cross_segment: Option<bool>,
}

/// Plans the route a ground station embeds in a new message.
pub fn plan_initial_route(ctx: &RouteCtx<'_>, src: u32, dst: u32) -> Result<Route, RouteError> {
    let gw_src = ctx.gateway(src).ok_or(RouteError::NoInitialPath)?;
    let (sats, waypoints) = match ctx.paradigm {
        Paradigm::Source => (ctx.lookahead(gw_src, dst, &crate::topology::NoMask), None),
        Paradigm::Global => (ctx.lookahead(gw_src, dst, ctx.awareness.truth_mask()), None),
        Paradigm::Neighbor => {
            let (known, _) = ctx.knowledge(gw_src);
            (ctx.lookahead(gw_src, dst, &known), None)
        }
        Paradigm::Segment => {
            let gw_dst = ctx.gateway(dst).ok_or(RouteError::NoInitialPath)?;
            let (known, _) = ctx.knowledge(gw_src);
            match ctx.segment_route(gw_src, gw_dst, &known) {
                Some((p, w)) => (Some(p), Some(w)),
                None => (None, None),
            }
        }
    };
    let sats = sats.ok_or(RouteError::NoInitialPath)?;
    let exit = *sats.last().unwrap();
    let cross_segment = ctx.plan.map(|p| p.segment_of(gw_src) != p.segment_of(exit));
    Ok(Route {
        path: ctx.sats_to_path(src, &sats, dst),
        waypoints,
        cross_segment,
    })
}

/// Decides what the satellite holding `msg` does with it at `ctx.t`.
pub fn check_and_reroute(ctx: &RouteCtx<'_>, msg: &mut Message) -> Decision {
    let node = msg.current().sat().expect("messages are only held by satellites");
    if let Some(w) = &msg.waypoints {
        let last = w.border_sats.len();
        while msg.leg < last && w.border_sats[msg.leg] == node {
            msg.leg += 1;
        }
    }
    let next = msg.path[msg.cursor + 1];
    if let NodeId::Gst(dst) = next {
        return final_hop(ctx, msg, node, dst);
    }
    let link = ctx
        .topology
        .link_between(msg.current(), next)
        .expect("consecutive path nodes share a link");

    if ctx.paradigm == Paradigm::Source {
        return if ctx.is_down(link) {
            Decision::StoreAt(link)
        } else {
            forward_or_wait(ctx, next, link, 0.0)
        };
    }

    let (known, query_delay, informed) = ctx.scoped_knowledge(node);
    let end = match (ctx.paradigm, msg.leg_target()) {
        (Paradigm::Segment, Some(target)) => msg.path[msg.cursor..]
            .iter()
            .position(|&n| n == NodeId::Sat(target as u32))
            .map_or(msg.path.len() - 2, |i| msg.cursor + i),
        _ => msg.path.len() - 2,
    };
    let blocked = (msg.cursor..end).find(|&j| {
        ctx.topology
            .link_between(msg.path[j], msg.path[j + 1])
            .is_some_and(|l| known.contains(&l))
    });
    let Some(j) = blocked else {
        return forward_or_wait(ctx, next, link, 0.0);
    };
    let failed = ctx.topology.link_between(msg.path[j], msg.path[j + 1]).unwrap();
    if !informed {
        // No border reachable: segment state is unknown, so hold the message.
        return unreroutable(ctx, failed);
    }

    let spliced = match ctx.paradigm {
        Paradigm::Neighbor => {
            let far = msg.path[j + 1].sat().unwrap();
            paths::dijkstra(ctx.predicted, node, far, &known, None).map(|(p, _)| {
                let mut path = msg.path[..msg.cursor].to_vec();
                path.extend(p.iter().map(|&s| NodeId::Sat(s as u32)));
                path.extend_from_slice(&msg.path[j + 2..]);
                path
            })
        }
        Paradigm::Global => {
            let exit = msg.exit_gateway();
            paths::dijkstra(ctx.predicted, node, exit, &known, None).map(|(p, _)| {
                let mut path = msg.path[..msg.cursor].to_vec();
                path.extend(p.iter().map(|&s| NodeId::Sat(s as u32)));
                path.push(NodeId::Gst(msg.dst));
                path
            })
        }
        Paradigm::Segment => {
            let target = msg.leg_target().unwrap_or_else(|| msg.exit_gateway());
            let segment = msg
                .leg_segment()
                .unwrap_or_else(|| ctx.plan.map_or(0, |p| p.segment_of(target)));
            ctx.leg_path(node, target, segment, &known).map(|p| {
                let mut path = msg.path[..msg.cursor].to_vec();
                path.extend(p.iter().map(|&s| NodeId::Sat(s as u32)));
                path.extend_from_slice(&msg.path[end + 1..]);
                path
            })
        }
        Paradigm::Source => unreachable!(),
    };

    match spliced {
        Some(path) if path.len() > msg.cursor + 1 => {
            msg.path = path;
            msg.reroutes += 1;
            let dwell = if ctx.paradigm == Paradigm::Segment {
                msg.signaling_delay_s += query_delay;
                query_delay
            } else {
                0.0
            };
            let next = msg.path[msg.cursor + 1];
            let link = ctx.topology.link_between(msg.current(), next).unwrap();
            forward_or_wait(ctx, next, link, dwell)
        }
        _ => unreroutable(ctx, failed),
    }
}

fn unreroutable(ctx: &RouteCtx<'_>, failed: LinkId) -> Decision {
    if ctx.is_down(failed) {
        Decision::StoreAt(failed)
    } else if ctx.contacts.next_available(failed, ctx.t).is_none() {
        Decision::Drop(DropReason::Unroutable)
    } else {
        // Believed down but actually up: knowledge is stale.
        Decision::WaitUntil(ctx.t + RETRY_S)
    }
}

fn forward_or_wait(ctx: &RouteCtx<'_>, next: NodeId, link: LinkId, dwell_s: f64) -> Decision {
    let depart = ctx.t + dwell_s;
    if ctx.topology.is_present(link, depart) {
        return Decision::Forward { next, link, dwell_s };
    }
    match ctx.contacts.next_available(link, depart) {
        Some(at) if at > ctx.t => Decision::WaitUntil(at),
        Some(_) => Decision::Forward { next, link, dwell_s },
        None => Decision::Drop(DropReason::Unroutable),
    }
}

fn final_hop(ctx: &RouteCtx<'_>, msg: &mut Message, node: usize, dst: u32) -> Decision {
    let gsl = ctx
        .topology
        .link_between(NodeId::Sat(node as u32), NodeId::Gst(dst));
    if let Some(l) = gsl {
        if !ctx.is_down(l) && ctx.topology.is_present(l, ctx.t) {
            return Decision::Forward {
                next: NodeId::Gst(dst),
                link: l,
                dwell_s: 0.0,
            };
        }
    }
    if ctx.paradigm == Paradigm::Source {
        let Some(l) = gsl else {
            return Decision::Drop(DropReason::Unroutable);
        };
        if ctx.is_down(l) {
            return Decision::StoreAt(l);
        }
        return match ctx.contacts.next_available(l, ctx.t) {
            Some(at) => Decision::WaitUntil(at.max(ctx.t + 1e-9)),
            None => Decision::Drop(DropReason::Unroutable),
        };
    }
    // The destination moved to another gateway while the message was in flight.
    let Some(gw) = ctx.gateway(dst) else {
        return Decision::WaitUntil(ctx.t + RETRY_S);
    };
    if gw == node {
        return Decision::WaitUntil(ctx.t + RETRY_S);
    }
    let (known, query_delay) = ctx.knowledge(node);
    let route = match ctx.paradigm {
        Paradigm::Segment => ctx.segment_route(node, gw, &known).map(|(p, w)| (p, Some(w))),
        _ => {
            let mask = Either(&known, ctx.awareness.truth_mask());
            let mask: &dyn LinkMask = if ctx.paradigm == Paradigm::Global {
                &mask
            } else {
                &known
            };
            paths::dijkstra(ctx.predicted, node, gw, mask, None).map(|(p, _)| (p, None))
        }
    };
    let Some((sats, waypoints)) = route else {
        return Decision::WaitUntil(ctx.t + RETRY_S);
    };
    let mut path = msg.path[..msg.cursor].to_vec();
    path.extend(sats.iter().map(|&s| NodeId::Sat(s as u32)));
    path.push(NodeId::Gst(dst));
    msg.path = path;
    msg.reroutes += 1;
    let mut dwell = 0.0;
    if ctx.paradigm == Paradigm::Segment {
        msg.waypoints = waypoints;
        msg.leg = 0;
        msg.signaling_delay_s += query_delay;
        dwell = query_delay;
    }
    let next = msg.path[msg.cursor + 1];
    let link = ctx.topology.link_between(msg.current(), next).unwrap();
    forward_or_wait(ctx, next, link, dwell)
}
