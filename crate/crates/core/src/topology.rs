//! Time-varying network graph: the +grid ISL mesh, opportunistic ground links,
//! sampled structural presence, snapshots and contact plans.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constellation::{line_of_sight, Constellation, GroundStationSet, Vec3};
use crate::routing::paths;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Sat(u32),
    Gst(u32),
}

impl NodeId {
    pub fn sat(self) -> Option<usize> {
        match self {
            NodeId::Sat(i) => Some(i as usize),
            NodeId::Gst(_) => None,
        }
    }

    pub fn is_sat(self) -> bool {
        matches!(self, NodeId::Sat(_))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Sat(i) => write!(f, "S{i}"),
            NodeId::Gst(i) => write!(f, "G{i}"),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_at(s.char_indices().nth(1).map_or(s.len(), |(i, _)| i));
        let index: u32 = rest.parse().map_err(|_| format!("bad node id `{s}`"))?;
        match kind {
            "S" => Ok(NodeId::Sat(index)),
            "G" => Ok(NodeId::Gst(index)),
            _ => Err(format!("bad node id `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Isl,
    Gsl,
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkKind::Isl => "isl",
            LinkKind::Gsl => "gsl",
        })
    }
}

/// An undirected link; `a < b` always.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub kind: LinkKind,
    /// Static +grid member (as opposed to a re-evaluated inter-shell pairing
    /// or a ground link).
    pub grid: bool,
}

impl Link {
    pub fn other(&self, n: NodeId) -> Option<NodeId> {
        if n == self.a {
            Some(self.b)
        } else if n == self.b {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn touches(&self, n: NodeId) -> bool {
        self.a == n || self.b == n
    }
}

/// A set of links excluded from a graph search.
pub trait LinkMask {
    fn contains(&self, link: LinkId) -> bool;
}

pub struct NoMask;

impl LinkMask for NoMask {
    fn contains(&self, _: LinkId) -> bool {
        false
    }
}

impl LinkMask for HashSet<LinkId> {
    fn contains(&self, link: LinkId) -> bool {
        HashSet::contains(self, &link)
    }
}

impl LinkMask for BTreeSet<LinkId> {
    fn contains(&self, link: LinkId) -> bool {
        BTreeSet::contains(self, &link)
    }
}

impl LinkMask for [bool] {
    fn contains(&self, link: LinkId) -> bool {
        self.get(link.index()).copied().unwrap_or(false)
    }
}

impl LinkMask for Vec<bool> {
    fn contains(&self, link: LinkId) -> bool {
        LinkMask::contains(self.as_slice(), link)
    }
}

impl<M: LinkMask + ?Sized> LinkMask for &M {
    fn contains(&self, link: LinkId) -> bool {
        (**self).contains(link)
    }
}

/// Union of two masks.
pub struct Either<'a, A: ?Sized, B: ?Sized>(pub &'a A, pub &'a B);

impl<A: LinkMask + ?Sized, B: LinkMask + ?Sized> LinkMask for Either<'_, A, B> {
    fn contains(&self, link: LinkId) -> bool {
        self.0.contains(link) || self.1.contains(link)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub link: LinkId,
    pub latency_s: f64,
}

/// Usable edges at one instant. Satellites are nodes `0..node_count`; ground
/// links are kept per station and never used for transit.
#[derive(Debug, Clone, Default)]
pub struct GraphSnapshot {
    pub time: f64,
    adj: Vec<Vec<Edge>>,
    gsl: Vec<Vec<Edge>>,
}

impl GraphSnapshot {
    /// Synthetic snapshot; link `i` is the `i`-th edge.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adj = vec![Vec::new(); node_count];
        for (i, &(u, v, w)) in edges.iter().enumerate() {
            let link = LinkId(i as u32);
            adj[u].push(Edge {
                to: v,
                link,
                latency_s: w,
            });
            adj[v].push(Edge {
                to: u,
                link,
                latency_s: w,
            });
        }
        Self {
            time: 0.0,
            adj,
            gsl: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, u: usize) -> &[Edge] {
        &self.adj[u]
    }

    pub fn gateways(&self, gst: usize) -> &[Edge] {
        self.gsl.get(gst).map_or(&[], Vec::as_slice)
    }

    /// Each usable ISL once, as (link, u, v, latency) with u < v.
    pub fn isl_edges(&self) -> impl Iterator<Item = (LinkId, usize, usize, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, es)| {
            es.iter()
                .filter(move |e| u < e.to)
                .map(move |e| (e.link, u, e.to, e.latency_s))
        })
    }

    pub fn isl_edge_count(&self) -> usize {
        self.isl_edges().count()
    }

    pub fn gsl_edge_count(&self) -> usize {
        self.gsl.iter().map(Vec::len).sum()
    }

    pub fn edge(&self, u: usize, v: usize) -> Option<&Edge> {
        self.adj.get(u)?.iter().find(|e| e.to == v)
    }

    /// Copy without the masked links.
    pub fn without(&self, mask: &(impl LinkMask + ?Sized)) -> Self {
        let keep = |es: &Vec<Edge>| es.iter().copied().filter(|e| !mask.contains(e.link)).collect();
        Self {
            time: self.time,
            adj: self.adj.iter().map(keep).collect(),
            gsl: self.gsl.iter().map(keep).collect(),
        }
    }
}

/// Shortest-path latency between every pair of nodes over usable ISLs;
/// `f64::INFINITY` where disconnected.
pub fn distance_matrix(snapshot: &GraphSnapshot) -> Vec<Vec<f64>> {
    (0..snapshot.node_count())
        .map(|s| paths::shortest_distances(snapshot, s, &NoMask, None))
        .collect()
}

/// Per-link availability windows `[start, end)`.
#[derive(Debug, Clone, Default)]
pub struct ContactPlan {
    pub horizon_s: f64,
    endpoints: Vec<(usize, usize)>,
    windows: Vec<Vec<(f64, f64)>>,
    adj: Vec<Vec<(usize, LinkId)>>,
}

impl ContactPlan {
    pub fn new(
        node_count: usize,
        endpoints: Vec<(usize, usize)>,
        windows: Vec<Vec<(f64, f64)>>,
        horizon_s: f64,
    ) -> Self {
        assert_eq!(endpoints.len(), windows.len());
        let mut adj = vec![Vec::new(); node_count];
        for (i, &(u, v)) in endpoints.iter().enumerate() {
            adj[u].push((v, LinkId(i as u32)));
            adj[v].push((u, LinkId(i as u32)));
        }
        Self {
            horizon_s,
            endpoints,
            windows,
            adj,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn link_count(&self) -> usize {
        self.endpoints.len()
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, LinkId)] {
        &self.adj[u]
    }

    pub fn endpoints(&self, link: LinkId) -> (usize, usize) {
        self.endpoints[link.index()]
    }

    pub fn windows(&self, link: LinkId) -> &[(f64, f64)] {
        &self.windows[link.index()]
    }

    /// Earliest instant `>= t` at which the link is available.
    pub fn next_available(&self, link: LinkId, t: f64) -> Option<f64> {
        let w = &self.windows[link.index()];
        let i = w.partition_point(|&(_, end)| end <= t);
        w.get(i).map(|&(start, _)| start.max(t))
    }

    pub fn is_available(&self, link: LinkId, t: f64) -> bool {
        self.next_available(link, t) == Some(t)
    }
}

/// Merges consecutive positive samples (taken every `tick_s` from 0) into
/// half-open windows, clipped to the horizon.
pub fn merge_samples(samples: &[bool], tick_s: f64, horizon_s: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (k, &present) in samples.iter().enumerate() {
        match (present, open) {
            (true, None) => open = Some(k),
            (false, Some(s)) => {
                out.push((s as f64 * tick_s, (k as f64 * tick_s).min(horizon_s)));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push((s as f64 * tick_s, (samples.len() as f64 * tick_s).min(horizon_s)));
    }
    out.retain(|(a, b)| b > a);
    out
}

/// The +grid: two in-plane ring neighbours and the nearest satellite in each
/// adjacent plane (seam included). Returned as sorted index pairs `(a, b)`, `a < b`.
pub fn build_isl_grid(constellation: &Constellation) -> Vec<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    let mut add = |a: usize, b: usize| {
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    };
    let positions = constellation.positions_at(0.0);
    for (shell_idx, shell) in constellation.spec.shells.iter().enumerate() {
        let planes = shell.plane_count;
        let slots = shell.sats_per_plane;
        for plane in 0..planes {
            for slot in 0..slots {
                let here = constellation.index_of(shell_idx, plane, slot);
                add(here, constellation.index_of(shell_idx, plane, (slot + 1) % slots));
            }
            if planes < 2 {
                continue;
            }
            // Slot shift that pairs slot 0 with its nearest neighbour in the
            // next plane; applying it to every slot keeps the pairing a bijection.
            let next = (plane + 1) % planes;
            let origin = positions[constellation.index_of(shell_idx, plane, 0)];
            let shift = (0..slots)
                .min_by(|&x, &y| {
                    let dx = origin.distance(positions[constellation.index_of(shell_idx, next, x)]);
                    let dy = origin.distance(positions[constellation.index_of(shell_idx, next, y)]);
                    dx.total_cmp(&dy).then(x.cmp(&y))
                })
                .unwrap_or(0);
            for slot in 0..slots {
                add(
                    constellation.index_of(shell_idx, plane, slot),
                    constellation.index_of(shell_idx, next, (slot + shift) % slots),
                );
            }
        }
    }
    pairs.into_iter().collect()
}

/// Structural model of a whole run: every link that ever exists, sampled
/// presence per tick, and the geometry needed to price edges at any instant.
#[derive(Debug, Clone)]
pub struct Topology {
    pub constellation: Constellation,
    pub stations: GroundStationSet,
    gst_pos: Vec<Vec3>,
    links: Vec<Link>,
    index: HashMap<(NodeId, NodeId), LinkId>,
    grid: Vec<LinkId>,
    tick_s: f64,
    horizon_s: f64,
    /// `[tick][sat]` → present ISLs.
    isl_adj: Vec<Vec<Vec<(u32, LinkId)>>>,
    /// `[tick][gst]` → visible satellites, highest elevation first.
    gst_vis: Vec<Vec<Vec<(u32, LinkId)>>>,
    sat_links: Vec<Vec<LinkId>>,
}

impl Topology {
    /// Samples structural presence every `tick_s` over `[0, horizon_s]`.
    pub fn build(
        constellation: Constellation,
        stations: GroundStationSet,
        horizon_s: f64,
        tick_s: f64,
    ) -> Self {
        assert!(tick_s > 0.0 && horizon_s >= 0.0);
        let n = constellation.len();
        let body = constellation.body;
        let gst_pos = stations.ecef(&body);
        let mut topo = Self {
            gst_pos,
            links: Vec::new(),
            index: HashMap::new(),
            grid: Vec::new(),
            tick_s,
            horizon_s,
            isl_adj: Vec::new(),
            gst_vis: Vec::new(),
            sat_links: vec![Vec::new(); n],
            constellation,
            stations,
        };
        for (a, b) in build_isl_grid(&topo.constellation) {
            let id = topo.intern(NodeId::Sat(a as u32), NodeId::Sat(b as u32), LinkKind::Isl, true);
            topo.grid.push(id);
        }
        let tick_count = (horizon_s / tick_s).ceil() as usize + 1;
        let radius = body.earth_radius_km;
        let max_range = topo.constellation.spec.isl_max_range_km;
        let mask_deg = topo.constellation.spec.gst_elevation_mask_deg;
        let sin_mask = mask_deg.to_radians().sin();
        let multi_shell = topo.constellation.shell_offsets.len() > 1;
        let gst_up: Vec<Vec3> = topo.gst_pos.iter().map(|p| *p * (1.0 / p.norm())).collect();

        for k in 0..tick_count {
            let t = k as f64 * tick_s;
            let pos = topo.constellation.positions_at(t);
            let in_range = |a: usize, b: usize| {
                line_of_sight(pos[a], pos[b], radius)
                    && max_range.is_none_or(|r| pos[a].distance(pos[b]) <= r)
            };
            let mut adj: Vec<Vec<(u32, LinkId)>> = vec![Vec::new(); n];
            for gi in 0..topo.grid.len() {
                let id = topo.grid[gi];
                let l = topo.links[id.index()];
                let (a, b) = (l.a.sat().unwrap(), l.b.sat().unwrap());
                if in_range(a, b) {
                    adj[a].push((b as u32, id));
                    adj[b].push((a as u32, id));
                }
            }
            if multi_shell {
                let shell_of: Vec<u32> = topo.constellation.satellites.iter().map(|s| s.shell).collect();
                let mut chosen = BTreeSet::new();
                for a in 0..n {
                    let nearest = (0..n).filter(|&b| shell_of[b] != shell_of[a]).min_by(|&x, &y| {
                        pos[a]
                            .distance(pos[x])
                            .total_cmp(&pos[a].distance(pos[y]))
                            .then(x.cmp(&y))
                    });
                    if let Some(b) = nearest {
                        if in_range(a, b) {
                            chosen.insert((a.min(b), a.max(b)));
                        }
                    }
                }
                for (a, b) in chosen {
                    let id = topo.intern(NodeId::Sat(a as u32), NodeId::Sat(b as u32), LinkKind::Isl, false);
                    adj[a].push((b as u32, id));
                    adj[b].push((a as u32, id));
                }
            }
            for list in &mut adj {
                list.sort_unstable();
            }
            let mut vis = Vec::with_capacity(topo.gst_pos.len());
            for (g, &up) in gst_up.iter().enumerate() {
                let gp = topo.gst_pos[g];
                let mut seen: Vec<(f64, u32)> = Vec::new();
                for (s, sp) in pos.iter().enumerate() {
                    let v = *sp - gp;
                    let along = v.dot(up);
                    if along <= 0.0 {
                        continue;
                    }
                    let sin_el = along / v.norm();
                    if sin_el >= sin_mask {
                        seen.push((sin_el, s as u32));
                    }
                }
                seen.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
                let list = seen
                    .into_iter()
                    .map(|(_, s)| {
                        let id = topo.intern(NodeId::Sat(s), NodeId::Gst(g as u32), LinkKind::Gsl, false);
                        (s, id)
                    })
                    .collect();
                vis.push(list);
            }
            topo.isl_adj.push(adj);
            topo.gst_vis.push(vis);
        }
        topo
    }

    fn intern(&mut self, a: NodeId, b: NodeId, kind: LinkKind, grid: bool) -> LinkId {
        let key = (a.min(b), a.max(b));
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link {
            a: key.0,
            b: key.1,
            kind,
            grid,
        });
        self.index.insert(key, id);
        for n in [a, b] {
            if let Some(s) = n.sat() {
                self.sat_links[s].push(id);
            }
        }
        id
    }

    pub fn sat_count(&self) -> usize {
        self.constellation.len()
    }

    pub fn gst_count(&self) -> usize {
        self.gst_pos.len()
    }

    pub fn tick_s(&self) -> f64 {
        self.tick_s
    }

    pub fn horizon_s(&self) -> f64 {
        self.horizon_s
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Static +grid ISLs.
    pub fn grid_links(&self) -> &[LinkId] {
        &self.grid
    }

    /// Every link (ISL or GSL) that is ever incident to satellite `sat`.
    pub fn links_of_sat(&self, sat: usize) -> &[LinkId] {
        &self.sat_links[sat]
    }

    pub fn tick_index(&self, t: f64) -> usize {
        ((t.max(0.0) / self.tick_s).floor() as usize).min(self.isl_adj.len() - 1)
    }

    pub fn node_position(&self, node: NodeId, t: f64) -> Vec3 {
        match node {
            NodeId::Sat(i) => self.constellation.satellites[i as usize].position_at(t),
            NodeId::Gst(g) => self.gst_pos[g as usize],
        }
    }

    /// Propagation delay across a link at instant `t`.
    pub fn latency(&self, link: LinkId, t: f64) -> f64 {
        let l = self.link(link);
        let d = self.node_position(l.a, t).distance(self.node_position(l.b, t));
        d / self.constellation.body.c_km_per_s
    }

    /// ISLs structurally present at `t` (ignores failures).
    pub fn isl_neighbors(&self, sat: usize, t: f64) -> &[(u32, LinkId)] {
        &self.isl_adj[self.tick_index(t)][sat]
    }

    /// Satellites above the elevation mask of `gst` at `t`, best first.
    pub fn visible_sats(&self, gst: usize, t: f64) -> &[(u32, LinkId)] {
        &self.gst_vis[self.tick_index(t)][gst]
    }

    pub fn is_present(&self, link: LinkId, t: f64) -> bool {
        let l = self.link(link);
        match l.kind {
            LinkKind::Isl => {
                let a = l.a.sat().unwrap();
                self.isl_neighbors(a, t).iter().any(|&(_, id)| id == link)
            }
            LinkKind::Gsl => {
                let NodeId::Gst(g) = l.b else { unreachable!() };
                self.visible_sats(g as usize, t).iter().any(|&(_, id)| id == link)
            }
        }
    }

    /// Usable graph at `t`: structurally present links minus `failed`.
    pub fn snapshot(&self, t: f64, failed: &(impl LinkMask + ?Sized)) -> GraphSnapshot {
        let k = self.tick_index(t);
        let c = self.constellation.body.c_km_per_s;
        let pos = self.constellation.positions_at(t);
        let adj = self.isl_adj[k]
            .iter()
            .enumerate()
            .map(|(u, list)| {
                list.iter()
                    .filter(|(_, id)| !failed.contains(*id))
                    .map(|&(v, link)| Edge {
                        to: v as usize,
                        link,
                        latency_s: pos[u].distance(pos[v as usize]) / c,
                    })
                    .collect()
            })
            .collect();
        let gsl = self.gst_vis[k]
            .iter()
            .enumerate()
            .map(|(g, list)| {
                list.iter()
                    .filter(|(_, id)| !failed.contains(*id))
                    .map(|&(s, link)| Edge {
                        to: s as usize,
                        link,
                        latency_s: pos[s as usize].distance(self.gst_pos[g]) / c,
                    })
                    .collect()
            })
            .collect();
        GraphSnapshot { time: t, adj, gsl }
    }

    /// Availability windows of every link over the sampled horizon. Nodes are
    /// satellites `0..n` followed by ground stations.
    pub fn contact_plan(&self) -> ContactPlan {
        let n = self.sat_count();
        let ticks = self.isl_adj.len();
        let mut samples = vec![vec![false; ticks]; self.links.len()];
        for (k, (isl, gst)) in self.isl_adj.iter().zip(&self.gst_vis).enumerate() {
            for list in isl {
                for &(_, id) in list {
                    samples[id.index()][k] = true;
                }
            }
            for list in gst {
                for &(_, id) in list {
                    samples[id.index()][k] = true;
                }
            }
        }
        let dense = |node: NodeId| match node {
            NodeId::Sat(i) => i as usize,
            NodeId::Gst(g) => n + g as usize,
        };
        let endpoints = self.links.iter().map(|l| (dense(l.a), dense(l.b))).collect();
        let horizon = ticks as f64 * self.tick_s;
        let windows = samples
            .iter()
            .map(|s| merge_samples(s, self.tick_s, horizon))
            .collect();
        ContactPlan::new(n + self.gst_count(), endpoints, windows, horizon)
    }
}

/// Edge list rows `nodeA,nodeB,kind,latency_s` for a snapshot.
pub fn dump_edges(topology: &Topology, snapshot: &GraphSnapshot) -> String {
    let mut out = String::from("nodeA,nodeB,kind,latency_s\n");
    for (link, _, _, lat) in snapshot.isl_edges() {
        let l = topology.link(link);
        out.push_str(&format!("{},{},{},{:.9}\n", l.a, l.b, l.kind, lat));
    }
    for g in 0..topology.gst_count() {
        for e in snapshot.gateways(g) {
            let l = topology.link(e.link);
            out.push_str(&format!("{},{},{},{:.9}\n", l.a, l.b, l.kind, e.latency_s));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRow {
    pub a: NodeId,
    pub b: NodeId,
    pub kind: LinkKind,
    pub latency_s: f64,
}

/// Parses an edge list written by [`dump_edges`].
pub fn parse_edge_list(text: &str) -> Result<Vec<EdgeRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("nodeA")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [a, b, kind, lat] = fields[..] else {
            return Err(format!("line {}: expected 4 fields", i + 1));
        };
        let kind = match kind {
            "isl" => LinkKind::Isl,
            "gsl" => LinkKind::Gsl,
            other => return Err(format!("line {}: unknown link kind `{other}`", i + 1)),
        };
        let latency_s: f64 = lat
            .parse()
            .map_err(|_| format!("line {}: bad latency `{lat}`", i + 1))?;
        if !(latency_s.is_finite() && latency_s > 0.0) {
            return Err(format!("line {}: latency must be positive", i + 1));
        }
        let a: NodeId = a.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        let b: NodeId = b.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        rows.push(EdgeRow {
            a,
            b,
            kind,
            latency_s,
        });
    }
    Ok(rows)
}
