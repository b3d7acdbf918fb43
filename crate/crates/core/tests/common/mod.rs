#![allow(dead_code)]

use leoroute::awareness::{Awareness, Paradigm};
use leoroute::constellation::{fibonacci_ground_stations, BodyModel, Constellation, ConstellationSpec};
use leoroute::routing::{check_and_reroute, register_arrival, Decision, LoopPolicy, Message, RouteCtx};
use leoroute::segmentation::{plan_partition, SegmentPlan};
use leoroute::topology::{ContactPlan, GraphSnapshot, LinkId, NoMask, NodeId, Topology};

/// Iridium geometry frozen at one instant with a manually driven awareness.
pub struct World {
    pub topo: Topology,
    pub contacts: ContactPlan,
    pub plan: SegmentPlan,
    pub awareness: Awareness,
    pub t: f64,
}

impl World {
    pub fn iridium(paradigm: Paradigm) -> Self {
        let c = Constellation::new(ConstellationSpec::iridium(), BodyModel::EARTH).unwrap();
        let topo = Topology::build(c, fibonacci_ground_stations(64, 0), 600.0, 10.0);
        let plan = plan_partition(&topo, 3, 1, 0.0).unwrap();
        let contacts = topo.contact_plan();
        let awareness = Awareness::new(paradigm, topo.links().len(), topo.sat_count(), Some(&plan));
        Self {
            topo,
            contacts,
            plan,
            awareness,
            t: 0.0,
        }
    }

    pub fn paradigm(&self) -> Paradigm {
        self.awareness.paradigm()
    }

    pub fn sat(&self, plane: u32, slot: u32) -> usize {
        self.topo.constellation.index_of(0, plane, slot)
    }

    pub fn link(&self, a: usize, b: usize) -> LinkId {
        self.topo
            .link_between(NodeId::Sat(a as u32), NodeId::Sat(b as u32))
            .expect("adjacent satellites")
    }

    pub fn predicted(&self) -> GraphSnapshot {
        self.topo.snapshot(self.t, &NoMask)
    }

    pub fn usable(&self) -> GraphSnapshot {
        self.topo.snapshot(self.t, self.awareness.truth_mask())
    }

    pub fn set(&mut self, link: LinkId, down: bool) {
        let mut mask = self.awareness.truth_mask().to_vec();
        mask[link.index()] = down;
        let after = self.topo.snapshot(self.t, &mask);
        let predicted = self.predicted();
        self.awareness.on_link_state_change_with(
            self.topo.links(),
            &after,
            || predicted,
            Some(&self.plan),
            link,
            down,
            self.t,
        );
    }

    pub fn with_ctx<R>(&self, f: impl FnOnce(&RouteCtx<'_>) -> R) -> R {
        let predicted = self.predicted();
        let usable = self.usable();
        let ctx = RouteCtx {
            paradigm: self.paradigm(),
            topology: &self.topo,
            contacts: &self.contacts,
            plan: Some(&self.plan),
            awareness: &self.awareness,
            predicted: &predicted,
            usable: &usable,
            t: self.t,
        };
        f(&ctx)
    }

    /// A message held at `sats[0]` with the embedded path `sats`.
    pub fn message(&self, sats: &[usize]) -> Message {
        let mut m = Message::new(0, 0, 1, self.t);
        m.path.push(NodeId::Gst(0));
        m.path.extend(sats.iter().map(|&s| NodeId::Sat(s as u32)));
        m.path.push(NodeId::Gst(1));
        m.cursor = 1;
        m.visited.push(m.path[1]);
        m
    }
}

#[derive(Debug, PartialEq)]
pub enum Outcome {
    /// Reached the last satellite of the path.
    Reached,
    Stored(LinkId),
    Waiting,
    Dropped,
    /// Stopped by the caller's hook.
    Paused,
}

/// Forwards hop by hop at a frozen instant until the message reaches its exit
/// satellite or stops. `hook` runs after every decision and may pause.
pub fn drive(
    world: &World,
    msg: &mut Message,
    policy: LoopPolicy,
    mut hook: impl FnMut(&Message, usize) -> bool,
) -> (Outcome, Vec<usize>) {
    let mut traversed = vec![msg.current().sat().unwrap()];
    loop {
        if msg.cursor == msg.path.len() - 2 {
            return (Outcome::Reached, traversed);
        }
        let node = msg.current().sat().unwrap();
        let decision = world.with_ctx(|ctx| check_and_reroute(ctx, msg));
        match decision {
            Decision::Forward { next, .. } => {
                msg.cursor += 1;
                let s = next.sat().unwrap();
                traversed.push(s);
                if register_arrival(msg, next, policy) {
                    return (Outcome::Dropped, traversed);
                }
            }
            Decision::StoreAt(l) => return (Outcome::Stored(l), traversed),
            Decision::WaitUntil(_) => return (Outcome::Waiting, traversed),
            Decision::Drop(_) => return (Outcome::Dropped, traversed),
        }
        if hook(msg, node) {
            return (Outcome::Paused, traversed);
        }
    }
}

pub fn uses_link(world: &World, traversed: &[usize], link: LinkId) -> bool {
    traversed.windows(2).any(|w| world.link(w[0], w[1]) == link)
}
