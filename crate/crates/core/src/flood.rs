//! Fault-free propagation of a single message under the protocol rules with
//! every Byzantine node silent. Silence is the worst case for delivery:
//! anything a Byzantine node sends only adds entries to its neighbors' sets,
//! and acceptance of a true message never depends on the absence of
//! entries. The closure computed here is therefore exactly the set of
//! correct nodes that accept the message in every fair execution (or a
//! subset of it when restricted to a window).

use std::collections::VecDeque;

use crate::nodeset::NodeSet;
use crate::topology::{NodeId, Topology};
use crate::zones::{ZoneIdx, ZoneSet};

pub(crate) struct Flood<'a> {
    topo: &'a Topology,
    zs: &'a ZoneSet,
    byz: &'a NodeSet,
    stride: usize,
    accepted: Vec<bool>,
    auth: Vec<u64>,
    window: Vec<u32>,
    stamp: u32,
    touched: Vec<NodeId>,
    relay: Vec<(NodeId, ZoneIdx)>,
    pending: VecDeque<NodeId>,
    scratch: Vec<(NodeId, usize)>,
}

/// Pairs (node, zone) that must each end up accepted or authorized.
#[derive(Default)]
pub(crate) struct Targets {
    open: Vec<(NodeId, ZoneIdx)>,
}

impl Targets {
    pub(crate) fn push(&mut self, node: NodeId, zone: ZoneIdx) {
        self.open.push((node, zone));
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    pub(crate) fn zones(&self) -> Vec<ZoneIdx> {
        let mut z: Vec<ZoneIdx> = self.open.iter().map(|&(_, z)| z).collect();
        z.sort_unstable();
        z.dedup();
        z
    }
}

impl<'a> Flood<'a> {
    pub(crate) fn new(topo: &'a Topology, zs: &'a ZoneSet, byz: &'a NodeSet) -> Self {
        let widest = topo.nodes().map(|p| zs.my_ctr(p).len()).max().unwrap_or(0);
        let stride = widest.div_ceil(64).max(1);
        let n = topo.len();
        Flood {
            topo,
            zs,
            byz,
            stride,
            accepted: vec![false; n],
            auth: vec![0; n * stride],
            window: vec![0; n],
            stamp: 0,
            touched: Vec::new(),
            relay: Vec::new(),
            pending: VecDeque::new(),
            scratch: Vec::new(),
        }
    }

    fn slot(&self, p: NodeId, z: ZoneIdx) -> Option<(usize, u64)> {
        let k = self.zs.my_ctr(p).binary_search(&z).ok()?;
        Some((p.index() * self.stride + k / 64, 1u64 << (k % 64)))
    }

    fn has_auth(&self, p: NodeId, z: ZoneIdx) -> bool {
        self.slot(p, z).is_some_and(|(w, bit)| self.auth[w] & bit != 0)
    }

    fn give_auth(&mut self, p: NodeId, z: ZoneIdx) -> bool {
        let Some((w, bit)) = self.slot(p, z) else {
            return false;
        };
        if self.auth[w] & bit != 0 {
            return false;
        }
        self.auth[w] |= bit;
        self.touched.push(p);
        self.relay.push((p, z));
        true
    }

    fn inside(&self, p: NodeId) -> bool {
        self.window[p.index()] == self.stamp
    }

    #[cfg(test)]
    pub(crate) fn accepted(&self, p: NodeId) -> bool {
        self.accepted[p.index()]
    }

    pub(crate) fn accepted_set(&self) -> NodeSet {
        NodeSet::from_nodes(
            self.topo.len(),
            self.topo.nodes().filter(|&p| self.accepted[p.index()]),
        )
    }

    fn reset(&mut self, source: NodeId, radius: Option<usize>) {
        for p in self.touched.drain(..) {
            self.accepted[p.index()] = false;
            let base = p.index() * self.stride;
            self.auth[base..base + self.stride].fill(0);
        }
        self.relay.clear();
        self.pending.clear();
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.window.fill(0);
            self.stamp = 1;
        }
        match radius {
            None => {
                for p in self.topo.nodes() {
                    if !self.byz.contains(p) {
                        self.window[p.index()] = self.stamp;
                    }
                }
            }
            Some(r) => {
                self.scratch.clear();
                self.scratch.push((source, 0));
                self.window[source.index()] = self.stamp;
                let mut k = 0;
                while k < self.scratch.len() {
                    let (p, d) = self.scratch[k];
                    k += 1;
                    if d == r {
                        continue;
                    }
                    for &q in self.topo.neighbors(p) {
                        if !self.byz.contains(q) && !self.inside(q) {
                            self.window[q.index()] = self.stamp;
                            self.scratch.push((q, d + 1));
                        }
                    }
                }
            }
        }
    }

    fn ready(&self, source: NodeId, p: NodeId) -> bool {
        let zs = self.zs;
        self.topo.neighbors(p).iter().any(|&q| {
            self.inside(q)
                && self.accepted[q.index()]
                && zs.my_ctr(p).iter().all(|&z| {
                    let zone = zs.zone(z);
                    !zone.core_contains(q) || zone.core_contains(source) || self.has_auth(p, z)
                })
        })
    }

    fn satisfied(&self, p: NodeId, z: ZoneIdx) -> bool {
        self.accepted[p.index()] || self.has_auth(p, z)
    }

    /// Propagates `source`'s message over correct nodes within `radius` hops
    /// (everywhere when `None`). Stops early once every target is satisfied;
    /// targets still open afterwards are left in `targets`.
    pub(crate) fn run(&mut self, source: NodeId, radius: Option<usize>, targets: &mut Targets) {
        self.reset(source, radius);
        self.accepted[source.index()] = true;
        self.touched.push(source);
        for &z in self.zs.my_ctr(source) {
            self.give_auth(source, z);
        }
        for &q in self.topo.neighbors(source) {
            if self.inside(q) {
                self.pending.push_back(q);
            }
        }
        let tracking = !targets.is_empty();
        let mut since_check = 0usize;
        loop {
            if tracking && since_check >= 16 {
                since_check = 0;
                targets.open.retain(|&(p, z)| !self.satisfied(p, z));
                if targets.is_empty() {
                    return;
                }
            }
            if let Some((y, z)) = self.relay.pop() {
                let zone = self.zs.zone(z);
                for &w in self.topo.neighbors(y) {
                    if self.inside(w) && zone.border_contains(w) && self.give_auth(w, z) {
                        self.pending.push_back(w);
                    }
                }
                continue;
            }
            let Some(y) = self.pending.pop_front() else {
                break;
            };
            if self.accepted[y.index()] || !self.ready(source, y) {
                continue;
            }
            since_check += 1;
            self.accepted[y.index()] = true;
            self.touched.push(y);
            for &z in self.zs.my_ctr(y) {
                self.give_auth(y, z);
            }
            for &q in self.topo.neighbors(y) {
                if self.inside(q) && !self.accepted[q.index()] {
                    self.pending.push_back(q);
                }
            }
        }
        targets.open.retain(|&(p, z)| !self.satisfied(p, z));
    }
}
