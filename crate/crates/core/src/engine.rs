//! Deterministic discrete-event core.
//!
//! Events are processed in `(time, kind priority, sequence)` order. A run is
//! single-threaded and a pure function of its configuration.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use thiserror::Error;

use crate::awareness::{Awareness, FailureEvent, Paradigm};
use crate::config::{ConfigError, FailureModel, RunConfig};
use crate::constellation::{fibonacci_ground_stations, BodyModel, Constellation, ConstellationError};
use crate::metrics::{summarize, MessageRecord, RunMeta, RunSummary};
use crate::routing::{
    check_and_reroute, plan_initial_route, register_arrival, Decision, DropReason, LoopPolicy, Message,
    RouteCtx, Status,
};
use crate::scenario::{
    generate_traffic, random_failure_process, targeted_outage, Emission, RandomFailureSpec,
    TargetedFailureSpec, TrafficSpec,
};
use crate::segmentation::{plan_partition, SegmentPlan, SegmentationError};
use crate::topology::{ContactPlan, GraphSnapshot, LinkId, LinkMask, NoMask, NodeId, Topology};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Constellation(#[from] ConstellationError),
    #[error("partition: {0}")]
    Segmentation(#[from] SegmentationError),
}

/// Structures shared by every run over the same geometry and partition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub topology: Topology,
    pub contacts: ContactPlan,
    pub plan: SegmentPlan,
}

impl Prepared {
    pub fn build(cfg: &RunConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let constellation = Constellation::new(cfg.constellation_spec()?, BodyModel::EARTH)?;
        let stations = fibonacci_ground_stations(cfg.ground_stations, cfg.ground_station_seed);
        let topology = Topology::build(constellation, stations, cfg.horizon_s + cfg.drain_s, cfg.tick_s);
        let plan = plan_partition(&topology, cfg.segment_count, cfg.partition_seed(), 0.0)?;
        let contacts = topology.contact_plan();
        Ok(Self {
            topology,
            contacts,
            plan,
        })
    }

    /// Configurations that can share one `Prepared`.
    pub fn key(cfg: &RunConfig) -> String {
        format!(
            "{}|{:?}|{}|{}|{}|{}|{}|{}",
            cfg.constellation,
            cfg.shells,
            cfg.ground_stations,
            cfg.ground_station_seed,
            cfg.horizon_s + cfg.drain_s,
            cfg.tick_s,
            cfg.segment_count,
            cfg.partition_seed()
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MessageRecord>,
    pub summary: RunSummary,
    pub failures: Vec<FailureEvent>,
    pub events_processed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    LinkDown(LinkId),
    LinkUp(LinkId),
    Emit(usize),
    Arrive(usize),
    Release(usize),
    EndOfRun,
}

impl Kind {
    fn priority(self) -> u8 {
        match self {
            Kind::LinkDown(_) => 0,
            Kind::LinkUp(_) => 1,
            Kind::Emit(_) => 2,
            Kind::Arrive(_) => 3,
            Kind::Release(_) => 4,
            Kind::EndOfRun => 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    /// Reversed: the heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.priority().cmp(&self.kind.priority()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Where a message currently is; pending arrivals and storage are disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Place {
    Unborn,
    Pending,
    Held,
    Done,
}

/// Truth mask with one link overridden.
struct Toggled<'a> {
    base: &'a [bool],
    link: LinkId,
    down: bool,
}

impl LinkMask for Toggled<'_> {
    fn contains(&self, link: LinkId) -> bool {
        if link == self.link {
            self.down
        } else {
            self.base[link.index()]
        }
    }
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    prep: &'a Prepared,
    awareness: Awareness,
    policy: LoopPolicy,
    queue: BinaryHeap<Event>,
    seq: u64,
    clock: f64,
    down_count: Vec<u32>,
    stored: BTreeMap<LinkId, VecDeque<usize>>,
    messages: Vec<Message>,
    places: Vec<Place>,
    emissions: Vec<Emission>,
    generation: u64,
    predicted: Option<(f64, GraphSnapshot)>,
    usable: Option<(f64, u64, GraphSnapshot)>,
    empty: GraphSnapshot,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn ensure_snapshots(&mut self, t: f64) {
        if self.predicted.as_ref().is_none_or(|(pt, _)| *pt != t) {
            self.predicted = Some((t, self.prep.topology.snapshot(t, &NoMask)));
        }
        let stale = self
            .usable
            .as_ref()
            .is_none_or(|(ut, g, _)| *ut != t || *g != self.generation);
        if stale {
            let pred = &self.predicted.as_ref().unwrap().1;
            let usable = pred.without(self.awareness.truth_mask());
            self.usable = Some((t, self.generation, usable));
        }
    }

    fn finish(&mut self, i: usize, status: Status, t: f64, reason: Option<DropReason>) {
        let m = &mut self.messages[i];
        m.status = status;
        m.t_final = Some(t);
        m.drop_reason = reason;
        self.places[i] = Place::Done;
    }

    fn on_emit(&mut self, i: usize, t: f64) {
        let e = self.emissions[i];
        let mut msg = Message::new(i as u64, e.src, e.dst, t);
        self.ensure_snapshots(t);
        let ctx = RouteCtx {
            paradigm: self.cfg.paradigm,
            topology: &self.prep.topology,
            contacts: &self.prep.contacts,
            plan: Some(&self.prep.plan),
            awareness: &self.awareness,
            predicted: &self.predicted.as_ref().unwrap().1,
            usable: &self.usable.as_ref().unwrap().2,
            t,
        };
        match plan_initial_route(&ctx, e.src, e.dst) {
            Err(_) => {
                msg.status = Status::NeverSent;
                self.messages.push(msg);
                self.places[i] = Place::Done;
            }
            Ok(route) => {
                msg.path = route.path;
                msg.waypoints = route.waypoints;
                msg.cross_segment = route.cross_segment;
                let uplink = self
                    .prep
                    .topology
                    .link_between(msg.path[0], msg.path[1])
                    .expect("gateway is visible");
                msg.hops = 1;
                self.messages.push(msg);
                self.places[i] = Place::Pending;
                let at = t + self.prep.topology.latency(uplink, t);
                self.push(at, Kind::Arrive(i));
            }
        }
    }

    fn on_arrive(&mut self, i: usize, t: f64) {
        debug_assert_eq!(self.places[i], Place::Pending);
        let m = &mut self.messages[i];
        m.cursor += 1;
        let node = m.current();
        if let NodeId::Gst(g) = node {
            debug_assert_eq!(g, m.dst);
            self.finish(i, Status::Delivered, t, None);
            return;
        }
        if register_arrival(m, node, self.policy) {
            self.finish(i, Status::Dropped, t, Some(DropReason::LoopThreshold));
            return;
        }
        self.places[i] = Place::Held;
        self.decide(i, t);
    }

    fn on_release(&mut self, i: usize, t: f64) {
        debug_assert_eq!(self.places[i], Place::Held);
        let m = &mut self.messages[i];
        if let Some(since) = m.stored_since.take() {
            m.stored_time_s += t - since;
        }
        m.stored_at = None;
        m.status = Status::InFlight;
        self.decide(i, t);
    }

    fn decide(&mut self, i: usize, t: f64) {
        self.ensure_snapshots(t);
        let ctx = RouteCtx {
            paradigm: self.cfg.paradigm,
            topology: &self.prep.topology,
            contacts: &self.prep.contacts,
            plan: Some(&self.prep.plan),
            awareness: &self.awareness,
            predicted: &self.predicted.as_ref().unwrap().1,
            usable: &self.usable.as_ref().unwrap().2,
            t,
        };
        let msg = &mut self.messages[i];
        match check_and_reroute(&ctx, msg) {
            Decision::Forward { next, link, dwell_s } => {
                let depart = t + dwell_s;
                let at = depart + self.prep.topology.latency(link, depart);
                debug_assert_eq!(msg.path[msg.cursor + 1], next);
                msg.hops += 1;
                self.places[i] = Place::Pending;
                self.push(at, Kind::Arrive(i));
            }
            Decision::StoreAt(link) => {
                debug_assert!(self.awareness.is_down(link));
                msg.status = Status::Stored;
                msg.stored_at = Some((msg.current(), link));
                msg.stored_since = Some(t);
                self.stored.entry(link).or_default().push_back(i);
            }
            Decision::WaitUntil(until) => {
                msg.status = Status::Stored;
                msg.stored_since = Some(t);
                self.push(until, Kind::Release(i));
            }
            Decision::Drop(reason) => self.finish(i, Status::Dropped, t, Some(reason)),
        }
    }

    fn on_link_change(&mut self, link: LinkId, down: bool, t: f64) {
        let count = &mut self.down_count[link.index()];
        if down {
            *count += 1;
            if *count > 1 {
                return;
            }
        } else {
            *count -= 1;
            if *count > 0 {
                return;
            }
        }
        let topo = &self.prep.topology;
        let after;
        let usable = match self.cfg.paradigm {
            Paradigm::Neighbor | Paradigm::Segment => {
                self.ensure_snapshots(t);
                let mask = Toggled {
                    base: self.awareness.truth_mask(),
                    link,
                    down,
                };
                after = self.predicted.as_ref().unwrap().1.without(&mask);
                &after
            }
            Paradigm::Source | Paradigm::Global => &self.empty,
        };
        let predicted = self.predicted.as_ref().filter(|(pt, _)| *pt == t).map(|(_, s)| s);
        self.awareness.on_link_state_change_with(
            topo.links(),
            usable,
            || predicted.cloned().unwrap_or_else(|| topo.snapshot(t, &NoMask)),
            Some(&self.prep.plan),
            link,
            down,
            t,
        );
        self.generation += 1;
        if !down {
            if let Some(queue) = self.stored.remove(&link) {
                for i in queue {
                    self.push(t, Kind::Release(i));
                }
            }
        }
    }
}

/// Builds the shared structures and runs one configuration.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, EngineError> {
    let prep = Prepared::build(cfg)?;
    run_prepared(cfg, &prep)
}

/// Failure schedule of a run; identical across paradigms for the same seeds.
pub fn failure_schedule(cfg: &RunConfig, prep: &Prepared) -> Vec<FailureEvent> {
    let borders = prep.plan.border_satellites();
    match cfg.failure_model {
        FailureModel::None => Vec::new(),
        FailureModel::Random => {
            let spec = RandomFailureSpec {
                fraction: cfg.fraction,
                downtime_s: cfg.downtime_s,
                exclusions: borders,
                seed: cfg.failure_seed(),
            };
            let topo = &prep.topology;
            random_failure_process(&spec, topo.links(), topo.grid_links(), cfg.horizon_s)
        }
        FailureModel::Targeted => {
            let spec = TargetedFailureSpec {
                targets: borders,
                t_start_s: cfg.outage_start_s,
                duration_s: cfg.outage_duration_s,
            };
            targeted_outage(&spec, &prep.topology)
        }
    }
}

pub fn run_prepared(cfg: &RunConfig, prep: &Prepared) -> Result<RunOutput, EngineError> {
    cfg.validate()?;
    let topo = &prep.topology;
    let end = cfg.horizon_s + cfg.drain_s;
    let emissions = generate_traffic(
        &TrafficSpec {
            burst_length_s: cfg.burst_s,
            mean_rate_per_s: cfg.traffic_rate_per_s,
            horizon_s: cfg.horizon_s,
            seed: cfg.traffic_seed(),
        },
        topo.gst_count(),
    );
    let failures = failure_schedule(cfg, prep);
    let mut engine = Engine {
        cfg,
        prep,
        awareness: Awareness::new(
            cfg.paradigm,
            topo.links().len(),
            topo.sat_count(),
            Some(&prep.plan),
        ),
        policy: cfg.loop_policy(),
        queue: BinaryHeap::new(),
        seq: 0,
        clock: 0.0,
        down_count: vec![0; topo.links().len()],
        stored: BTreeMap::new(),
        messages: Vec::with_capacity(emissions.len()),
        places: vec![Place::Unborn; emissions.len()],
        emissions,
        generation: 0,
        predicted: None,
        usable: None,
        empty: GraphSnapshot::from_edges(0, &[]),
    };
    for f in &failures {
        engine.push(f.t_down, Kind::LinkDown(f.link));
        if f.t_up <= end {
            engine.push(f.t_up, Kind::LinkUp(f.link));
        }
    }
    for i in 0..engine.emissions.len() {
        let t = engine.emissions[i].t;
        engine.push(t, Kind::Emit(i));
    }
    engine.push(end, Kind::EndOfRun);

    let mut processed = 0u64;
    while let Some(ev) = engine.queue.pop() {
        debug_assert!(ev.time >= engine.clock);
        engine.clock = ev.time;
        processed += 1;
        match ev.kind {
            Kind::LinkDown(l) => engine.on_link_change(l, true, ev.time),
            Kind::LinkUp(l) => engine.on_link_change(l, false, ev.time),
            Kind::Emit(i) => engine.on_emit(i, ev.time),
            Kind::Arrive(i) => engine.on_arrive(i, ev.time),
            Kind::Release(i) => engine.on_release(i, ev.time),
            Kind::EndOfRun => break,
        }
    }
    for m in &mut engine.messages {
        if m.status == Status::Stored {
            if let Some(since) = m.stored_since.take() {
                m.stored_time_s += end - since;
            }
        }
    }

    let records: Vec<MessageRecord> = engine.messages.iter().map(MessageRecord::from_message).collect();
    let meta = RunMeta {
        paradigm: cfg.paradigm,
        constellation: cfg.constellation.clone(),
        failure_fraction: cfg.effective_fraction(),
        seed: cfg.seed,
        horizon_s: cfg.horizon_s,
        drain_s: cfg.drain_s,
        bin_s: cfg.bin_s,
    };
    let summary = summarize(&records, &meta);
    Ok(RunOutput {
        records,
        summary,
        failures,
        events_processed: processed,
    })
}
