//! Omniscient-observer analysis: safe node sets from a zone cover of the
//! Byzantine nodes, communicating sets grown node by node, and their
//! intersection as the reliable set.

use std::collections::VecDeque;

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::flood::{Flood, Targets};
use crate::nodeset::NodeSet;
use crate::topology::{NodeId, Topology};
use crate::zones::{ControlZone, ZoneIdx, ZoneSet};

/// Default number of search steps granted to [`find_safe_cover`].
pub const DEFAULT_BUDGET: u64 = 10_000;

/// Zones whose cores hold every Byzantine node while the union of cores and
/// the union of borders stay disjoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SafeCover {
    pub zones: Vec<ZoneIdx>,
    pub cores: NodeSet,
    pub borders: NodeSet,
}

impl SafeCover {
    pub fn empty(node_count: usize) -> Self {
        SafeCover {
            zones: Vec::new(),
            cores: NodeSet::new(node_count),
            borders: NodeSet::new(node_count),
        }
    }

    pub fn from_zones(zs: &ZoneSet, node_count: usize, zones: Vec<ZoneIdx>) -> Self {
        let mut cover = SafeCover::empty(node_count);
        for &z in &zones {
            let zone = zs.zone(z);
            zone.core().iter().for_each(|&p| {
                cover.cores.insert(p);
            });
            zone.border().iter().for_each(|&p| {
                cover.borders.insert(p);
            });
        }
        cover.zones = zones;
        cover
    }

    /// Checks both cover conditions against `byz`.
    pub fn is_valid_for(&self, byz: &NodeSet) -> bool {
        self.cores.is_disjoint(&self.borders) && byz.is_subset(&self.cores)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisResult {
    pub safe: NodeSet,
    pub communicating: NodeSet,
    pub reliable: NodeSet,
    pub cover: Option<SafeCover>,
}

struct Tally {
    core: Vec<u16>,
    border: Vec<u16>,
}

impl Tally {
    fn new(n: usize) -> Self {
        Tally {
            core: vec![0; n],
            border: vec![0; n],
        }
    }

    fn fits(&self, zs: &ZoneSet, z: ZoneIdx) -> bool {
        let zone = zs.zone(z);
        zone.core().iter().all(|p| self.border[p.index()] == 0)
            && zone.border().iter().all(|p| self.core[p.index()] == 0)
    }

    fn apply(&mut self, zs: &ZoneSet, z: ZoneIdx, delta: i32) {
        let zone = zs.zone(z);
        for p in zone.core() {
            let c = &mut self.core[p.index()];
            *c = (*c as i32 + delta) as u16;
        }
        for p in zone.border() {
            let c = &mut self.border[p.index()];
            *c = (*c as i32 + delta) as u16;
        }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Heuristic search for a safe cover.
///
/// Candidates for a Byzantine node are the zones whose core contains it and
/// whose border holds no Byzantine node. Byzantine nodes whose candidate
/// footprints overlap are solved together by depth-first search over
/// candidates, smallest cores first, rejecting zones that would break
/// disjointness. `None` means the search failed within `budget` steps, not
/// that no cover exists.
pub fn find_safe_cover(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    budget: u64,
) -> Option<SafeCover> {
    let n = topo.len();
    let byz_nodes = byz.to_vec();
    if byz_nodes.is_empty() {
        return Some(SafeCover::empty(n));
    }

    let mut candidates: Vec<Vec<ZoneIdx>> = Vec::with_capacity(byz_nodes.len());
    for &b in &byz_nodes {
        let mut c: Vec<ZoneIdx> = zs
            .cores_containing(b)
            .iter()
            .copied()
            .filter(|&z| !zs.zone(z).border().iter().any(|&p| byz.contains(p)))
            .collect();
        if c.is_empty() {
            return None;
        }
        c.sort_by_key(|&z| (zs.zone(z).core().len(), z));
        candidates.push(c);
    }

    // Byzantine nodes interact only if some of their candidates touch.
    let mut uf = UnionFind((0..byz_nodes.len()).collect());
    let mut owner: FxHashMap<NodeId, usize> = FxHashMap::default();
    for (k, cands) in candidates.iter().enumerate() {
        for &z in cands {
            let zone = zs.zone(z);
            for &p in zone.core().iter().chain(zone.border()) {
                match owner.get(&p) {
                    Some(&other) => uf.union(k, other),
                    None => {
                        owner.insert(p, k);
                    }
                }
            }
        }
    }
    let mut clusters: FxHashMap<usize, Vec<usize>> = FxHashMap::default();
    for k in 0..byz_nodes.len() {
        let root = uf.find(k);
        clusters.entry(root).or_default().push(k);
    }
    let mut clusters: Vec<Vec<usize>> = clusters.into_values().collect();
    clusters.sort_by_key(|c| c[0]);

    let mut search = CoverSearch {
        zs,
        byz_nodes: &byz_nodes,
        candidates: &candidates,
        tally: Tally::new(n),
        chosen: Vec::new(),
        steps: 0,
        budget,
    };
    for cluster in &clusters {
        if !search.solve(cluster) {
            return None;
        }
    }
    let cover = SafeCover::from_zones(zs, n, search.chosen);
    debug_assert!(cover.is_valid_for(byz));
    Some(cover)
}

struct CoverSearch<'a> {
    zs: &'a ZoneSet,
    byz_nodes: &'a [NodeId],
    candidates: &'a [Vec<ZoneIdx>],
    tally: Tally,
    chosen: Vec<ZoneIdx>,
    steps: u64,
    budget: u64,
}

impl CoverSearch<'_> {
    fn solve(&mut self, cluster: &[usize]) -> bool {
        let Some(&k) = cluster
            .iter()
            .find(|&&k| self.tally.core[self.byz_nodes[k].index()] == 0)
        else {
            return true;
        };
        for &z in &self.candidates[k] {
            if self.steps >= self.budget {
                return false;
            }
            self.steps += 1;
            if !self.tally.fits(self.zs, z) {
                continue;
            }
            self.tally.apply(self.zs, z, 1);
            self.chosen.push(z);
            if self.solve(cluster) {
                return true;
            }
            self.chosen.pop();
            self.tally.apply(self.zs, z, -1);
        }
        false
    }
}

/// Result of the exact cover decision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exhaustive {
    Found(SafeCover),
    /// No subset of the zone set satisfies the cover conditions.
    NoCover,
    /// The search tree exceeded the node limit before deciding.
    Inconclusive { visited: u64 },
}

impl Exhaustive {
    pub fn found(&self) -> Option<&SafeCover> {
        match self {
            Exhaustive::Found(c) => Some(c),
            _ => None,
        }
    }
}

/// Exact decision over every subset of the zones whose core meets a
/// Byzantine node (other zones never help), by include/exclude enumeration
/// in zone order. A branch is cut as soon as the partial unions overlap or
/// a Byzantine node lands in the partial border union; both violations
/// survive every extension. `limit` caps the number of visited search nodes.
pub fn exhaustive_safe_cover(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    limit: u64,
) -> Exhaustive {
    let n = topo.len();
    if byz.is_empty() {
        return Exhaustive::Found(SafeCover::empty(n));
    }
    let zones: Vec<ZoneIdx> = zs
        .iter()
        .filter(|(_, z)| z.core().iter().any(|&p| byz.contains(p)))
        .map(|(k, _)| k)
        .collect();
    // last position in `zones` able to cover each Byzantine node
    let mut last_chance: FxHashMap<NodeId, usize> = FxHashMap::default();
    for (pos, &z) in zones.iter().enumerate() {
        for &p in zs.zone(z).core() {
            if byz.contains(p) {
                last_chance.insert(p, pos);
            }
        }
    }
    if byz.iter().any(|b| !last_chance.contains_key(&b)) {
        return Exhaustive::NoCover;
    }
    let mut e = Enumeration {
        zs,
        byz,
        zones: &zones,
        last_chance: &last_chance,
        cores: vec![0; n],
        borders: vec![0; n],
        chosen: Vec::new(),
        visited: 0,
        limit,
    };
    match e.descend(0) {
        Some(true) => Exhaustive::Found(SafeCover::from_zones(zs, n, e.chosen)),
        Some(false) => Exhaustive::NoCover,
        None => Exhaustive::Inconclusive { visited: e.visited },
    }
}

struct Enumeration<'a> {
    zs: &'a ZoneSet,
    byz: &'a NodeSet,
    zones: &'a [ZoneIdx],
    last_chance: &'a FxHashMap<NodeId, usize>,
    cores: Vec<u16>,
    borders: Vec<u16>,
    chosen: Vec<ZoneIdx>,
    visited: u64,
    limit: u64,
}

impl Enumeration<'_> {
    /// `Some(found)` when decided, `None` when the limit was hit.
    fn descend(&mut self, pos: usize) -> Option<bool> {
        self.visited += 1;
        if self.visited > self.limit {
            return None;
        }
        let uncovered_dead = self
            .byz
            .iter()
            .any(|b| self.cores[b.index()] == 0 && self.last_chance[&b] < pos);
        if uncovered_dead {
            return Some(false);
        }
        if pos == self.zones.len() {
            return Some(self.byz.iter().all(|b| self.cores[b.index()] > 0));
        }
        let z = self.zones[pos];
        let zone = self.zs.zone(z);
        let clash = zone.core().iter().any(|p| self.borders[p.index()] > 0)
            || zone
                .border()
                .iter()
                .any(|&p| self.cores[p.index()] > 0 || self.byz.contains(p));
        if !clash {
            zone.core().iter().for_each(|p| self.cores[p.index()] += 1);
            zone.border().iter().for_each(|p| self.borders[p.index()] += 1);
            self.chosen.push(z);
            let r = self.descend(pos + 1);
            if r != Some(false) {
                return r;
            }
            self.chosen.pop();
            zone.core().iter().for_each(|p| self.cores[p.index()] -= 1);
            zone.border().iter().for_each(|p| self.borders[p.index()] -= 1);
        }
        self.descend(pos + 1)
    }
}

/// Every node outside the cover's cores.
pub fn safe_set(topo: &Topology, cover: &SafeCover) -> Result<NodeSet> {
    if cover.cores.capacity() != topo.len() || cover.borders.capacity() != topo.len() {
        return Err(Error::invalid(
            "safe_set: cover was built for a different topology",
        ));
    }
    if !cover.cores.is_disjoint(&cover.borders) {
        return Err(Error::invalid(
            "safe_set: cover cores and borders intersect",
        ));
    }
    Ok(cover.cores.complement())
}

pub fn reliable_set(safe: &NodeSet, communicating: &NodeSet) -> NodeSet {
    safe.intersection(communicating)
}

enum Frontier<'r, R: Rng> {
    Fifo(VecDeque<NodeId>),
    Random(Vec<NodeId>, &'r mut R),
}

impl<R: Rng> Frontier<'_, R> {
    fn push(&mut self, p: NodeId) {
        match self {
            Frontier::Fifo(q) => q.push_back(p),
            Frontier::Random(v, _) => v.push(p),
        }
    }

    fn pop(&mut self) -> Option<NodeId> {
        match self {
            Frontier::Fifo(q) => q.pop_front(),
            Frontier::Random(v, rng) => {
                if v.is_empty() {
                    None
                } else {
                    let k = rng.gen_range(0..v.len());
                    Some(v.swap_remove(k))
                }
            }
        }
    }
}

/// How [`build_communicating_set_with`] decides whether a node may join.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GrowthRule {
    /// `v` joins when it accepts the seed's message in every execution and
    /// it dominates a member neighbor `u`: running `v`'s message near `v`,
    /// every correct border node next to the core of a zone with
    /// `u ∈ core(z)`, `v ∈ border(z)` either accepts it or obtains the
    /// authorization for `z`. From then on `v`'s message goes wherever
    /// `u`'s goes, so members accept each other's messages. Membership
    /// only grows and eligibility never shrinks, so the result does not
    /// depend on the order of admission.
    #[default]
    Sound,
    /// `v` joins when it has a member neighbor `u` and, for every zone with
    /// `u ∈ core(z)` and `v ∈ border(z)`, either the whole set lies inside
    /// `core(z)` or a path of correct nodes within `border(z)` joins `v` to a
    /// member. A Byzantine pair cutting such a border can strand `v`'s
    /// authorization away from members, so this rule may admit nodes whose
    /// messages are never accepted; it is kept for comparison.
    AsStated,
}

/// Communicating set containing `seed`, built with [`GrowthRule::Sound`].
pub fn build_communicating_set(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    seed: NodeId,
) -> Result<NodeSet> {
    build_communicating_set_with(topo, zs, byz, seed, GrowthRule::Sound)
}

/// Candidates are examined breadth-first from the seed.
pub fn build_communicating_set_with(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    seed: NodeId,
    rule: GrowthRule,
) -> Result<NodeSet> {
    grow(
        topo,
        zs,
        byz,
        seed,
        rule,
        Frontier::<rand::rngs::ThreadRng>::Fifo(VecDeque::new()),
    )
}

/// Same construction with candidates examined in random order.
pub fn build_communicating_set_shuffled(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    seed: NodeId,
    rule: GrowthRule,
    rng: &mut impl Rng,
) -> Result<NodeSet> {
    grow(topo, zs, byz, seed, rule, Frontier::Random(Vec::new(), rng))
}

fn grow<R: Rng>(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    seed: NodeId,
    rule: GrowthRule,
    mut frontier: Frontier<'_, R>,
) -> Result<NodeSet> {
    let n = topo.len();
    if !topo.contains(seed) || byz.capacity() != n {
        return Err(Error::invalid(
            "build_communicating_set: seed or Byzantine set does not match the topology",
        ));
    }
    if byz.contains(seed) {
        return Err(Error::invalid(
            "build_communicating_set: seed node must be correct",
        ));
    }
    let mut admission = match rule {
        GrowthRule::Sound => Admission::Sound(Dominance::new(topo, zs, byz, seed)),
        GrowthRule::AsStated => Admission::AsStated(Stated {
            early: Vec::new(),
            scratch: Vec::new(),
        }),
    };
    let mut g = Growth {
        topo,
        zs,
        byz,
        members: NodeSet::new(n),
        queued: NodeSet::new(n),
    };
    g.admit(seed, &mut admission, &mut frontier);
    while let Some(v) = frontier.pop() {
        g.queued.remove(v);
        if !g.members.contains(v) && admission.eligible(&g, v) {
            g.admit(v, &mut admission, &mut frontier);
        }
    }
    Ok(g.members)
}

struct Growth<'a> {
    topo: &'a Topology,
    zs: &'a ZoneSet,
    byz: &'a NodeSet,
    members: NodeSet,
    queued: NodeSet,
}

impl Growth<'_> {
    fn enqueue<R: Rng>(&mut self, p: NodeId, frontier: &mut Frontier<'_, R>) {
        if !self.members.contains(p) && !self.byz.contains(p) && self.queued.insert(p) {
            frontier.push(p);
        }
    }

    fn admit<R: Rng>(&mut self, v: NodeId, admission: &mut Admission<'_>, frontier: &mut Frontier<'_, R>) {
        self.members.insert(v);
        for &q in self.topo.neighbors(v) {
            self.enqueue(q, frontier);
        }
        if let Admission::AsStated(st) = admission {
            if st.early.len() <= EARLY_LIMIT {
                st.early.push(v);
            }
            // v is a new path endpoint on every border it belongs to
            for &z in self.zs.my_ctr(v) {
                for &w in self.zs.zone(z).border() {
                    self.enqueue(w, frontier);
                }
            }
        }
    }
}

#[allow(clippy::large_enum_variant)] // one per growth, never moved
enum Admission<'a> {
    Sound(Dominance<'a>),
    AsStated(Stated),
}

impl Admission<'_> {
    fn eligible(&mut self, g: &Growth<'_>, v: NodeId) -> bool {
        match self {
            Admission::Sound(d) => {
                d.followers.contains(v)
                    && (g
                        .topo
                        .neighbors(v)
                        .iter()
                        .any(|&u| g.members.contains(u) && d.dominates(v, u))
                        || d.reaches_followers(v))
            }
            Admission::AsStated(st) => st.eligible(g, v),
        }
    }
}

fn touches_core(topo: &Topology, zone: &ControlZone, y: NodeId) -> bool {
    topo.neighbors(y).iter().any(|&q| zone.core_contains(q))
}

struct Dominance<'a> {
    topo: &'a Topology,
    zs: &'a ZoneSet,
    byz: &'a NodeSet,
    flood: Flood<'a>,
    /// Correct nodes accepting the seed's message in every execution.
    followers: NodeSet,
    radius: usize,
    stranded: FxHashMap<NodeId, Vec<ZoneIdx>>,
    exact: FxHashMap<NodeId, bool>,
    scratch: Vec<NodeId>,
}

impl<'a> Dominance<'a> {
    fn new(topo: &'a Topology, zs: &'a ZoneSet, byz: &'a NodeSet, seed: NodeId) -> Self {
        let mut flood = Flood::new(topo, zs, byz);
        flood.run(seed, None, &mut Targets::default());
        let followers = flood.accepted_set();
        Dominance {
            topo,
            zs,
            byz,
            flood,
            followers,
            radius: zs.max_border_len() / 2 + 4,
            stranded: FxHashMap::default(),
            exact: FxHashMap::default(),
            scratch: Vec::new(),
        }
    }

    /// Exact fallback when domination is inconclusive: `v`'s message,
    /// flooded over the whole network, reaches every follower.
    fn reaches_followers(&mut self, v: NodeId) -> bool {
        if let Some(&known) = self.exact.get(&v) {
            return known;
        }
        self.flood.run(v, None, &mut Targets::default());
        let ok = self.followers.is_subset(&self.flood.accepted_set());
        self.exact.insert(v, ok);
        ok
    }

    fn dominates(&mut self, v: NodeId, u: NodeId) -> bool {
        let zs = self.zs;
        let stranded = self.stranded_zones(v);
        zs.cores_containing(u)
            .iter()
            .all(|&z| !zs.zone(z).border_contains(v) || !stranded.contains(&z))
    }

    /// Zones with `v` on the border next to the core for which some correct
    /// core-adjacent border node neither accepts `v`'s message nor obtains
    /// `v`'s authorization, judged by propagation within a window around
    /// `v`. Restricting propagation can only lose deliveries, so a zone not
    /// listed is served in every execution.
    fn stranded_zones(&mut self, v: NodeId) -> &[ZoneIdx] {
        if !self.stranded.contains_key(&v) {
            let (topo, zs, byz) = (self.topo, self.zs, self.byz);
            let mut targets = Targets::default();
            for &z in zs.my_ctr(v) {
                let zone = zs.zone(z);
                if !touches_core(topo, zone, v) || !zone.border().iter().any(|&y| byz.contains(y)) {
                    continue;
                }
                // v's own authorization covers its correct border component
                self.scratch.clear();
                self.scratch.push(v);
                let mut k = 0;
                while k < self.scratch.len() {
                    let p = self.scratch[k];
                    k += 1;
                    for &q in topo.neighbors(p) {
                        if zone.border_contains(q) && !byz.contains(q) && !self.scratch.contains(&q) {
                            self.scratch.push(q);
                        }
                    }
                }
                for &y in zone.border() {
                    if !byz.contains(y) && !self.scratch.contains(&y) && touches_core(topo, zone, y) {
                        targets.push(y, z);
                    }
                }
            }
            let stranded = if targets.is_empty() {
                Vec::new()
            } else {
                self.flood.run(v, Some(self.radius), &mut targets);
                targets.zones()
            };
            self.stranded.insert(v, stranded);
        }
        &self.stranded[&v]
    }
}

/// Largest set tracked for the "whole set inside one core" exemption.
const EARLY_LIMIT: usize = 64;

struct Stated {
    /// Members while the set is still small enough to fit inside a core.
    early: Vec<NodeId>,
    scratch: Vec<NodeId>,
}

impl Stated {
    fn set_inside_core(&self, zone: &ControlZone) -> bool {
        self.early.len() <= zone.core().len()
            && self.early.len() <= EARLY_LIMIT
            && self.early.iter().all(|&p| zone.core_contains(p))
    }

    fn border_path_to_member(&mut self, g: &Growth<'_>, zone: &ControlZone, v: NodeId) -> bool {
        self.scratch.clear();
        self.scratch.push(v);
        let mut k = 0;
        while k < self.scratch.len() {
            let p = self.scratch[k];
            k += 1;
            for &q in g.topo.neighbors(p) {
                if !zone.border_contains(q) || g.byz.contains(q) || self.scratch.contains(&q) {
                    continue;
                }
                if g.members.contains(q) {
                    return true;
                }
                self.scratch.push(q);
            }
        }
        false
    }

    fn eligible(&mut self, g: &Growth<'_>, v: NodeId) -> bool {
        'neighbor: for &u in g.topo.neighbors(v) {
            if !g.members.contains(u) {
                continue;
            }
            for &z in g.zs.cores_containing(u) {
                let zone = g.zs.zone(z);
                if !zone.border_contains(v) || self.set_inside_core(zone) {
                    continue;
                }
                if !self.border_path_to_member(g, zone, v) {
                    continue 'neighbor;
                }
            }
            return true;
        }
        false
    }
}

/// Cover search, safe set, communicating set from `origin`, and reliable set.
/// Without a cover no node is certified safe and the reliable set is empty.
pub fn analyze(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    origin: NodeId,
    budget: u64,
) -> Result<AnalysisResult> {
    let communicating = build_communicating_set(topo, zs, byz, origin)?;
    let cover = find_safe_cover(topo, zs, byz, budget);
    let safe = match &cover {
        Some(c) => safe_set(topo, c)?,
        None => NodeSet::new(topo.len()),
    };
    let reliable = reliable_set(&safe, &communicating);
    Ok(AnalysisResult {
        safe,
        communicating,
        reliable,
        cover,
    })
}
