//! Control zones: `(core, border)` pairs whose border is a connected node-cut
//! isolating the core, the square-zone family of a given order, and the
//! fragmentation of torus zones when the wrap edges are cut to form a grid.

use std::fmt::{self, Write as _};

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Coord, NodeId, Topology, TopologyKind};

/// Stable zone identifier: anchor of the parent square, its width and the
/// ordinal of the grid fragment (0 for unfragmented zones).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ZoneId {
    pub anchor: Coord,
    pub width: u32,
    pub fragment: u32,
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sqr({},{},{})#{}",
            self.anchor.i, self.anchor.j, self.width, self.fragment
        )
    }
}

/// Position of a zone inside its [`ZoneSet`]; this is what travels inside
/// authorization messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ZoneIdx(pub u32);

impl ZoneIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlZone {
    id: ZoneId,
    core: Box<[NodeId]>,
    border: Box<[NodeId]>,
}

impl ControlZone {
    /// Builds a zone from arbitrary node lists (sorted and deduplicated).
    /// Validity is not checked here; see [`validate_zone`].
    pub fn new(id: ZoneId, core: Vec<NodeId>, border: Vec<NodeId>) -> Self {
        ControlZone {
            id,
            core: sorted(core),
            border: sorted(border),
        }
    }

    pub fn id(&self) -> ZoneId {
        self.id
    }

    pub fn core(&self) -> &[NodeId] {
        &self.core
    }

    pub fn border(&self) -> &[NodeId] {
        &self.border
    }

    #[inline]
    pub fn core_contains(&self, p: NodeId) -> bool {
        self.core.binary_search(&p).is_ok()
    }

    #[inline]
    pub fn border_contains(&self, p: NodeId) -> bool {
        self.border.binary_search(&p).is_ok()
    }

    fn with_fragment(&self, fragment: u32, core: Vec<NodeId>, border: Vec<NodeId>) -> Self {
        ControlZone::new(
            ZoneId {
                fragment,
                ..self.id
            },
            core,
            border,
        )
    }
}

fn sorted(mut v: Vec<NodeId>) -> Box<[NodeId]> {
    v.sort_unstable();
    v.dedup();
    v.into_boxed_slice()
}

/// Square zone `Sqr(i0, j0, w)`: the `w x w` core strictly inside the
/// `(w+2) x (w+2)` square whose upper-left corner is `(i0, j0)`, bordered by
/// the square's `4(w+1)` perimeter nodes. Coordinates wrap modulo `N`.
pub fn square_zone(topo: &Topology, i0: i64, j0: i64, w: u32) -> Result<ControlZone> {
    let n = topo.side();
    if w == 0 {
        return Err(Error::invalid("square_zone: width w must be >= 1"));
    }
    if w + 2 > n {
        return Err(Error::invalid(format!(
            "square_zone: w + 2 = {} exceeds side length N = {n}; the border cannot be a node-cut",
            w + 2
        )));
    }
    let span = w as i64 + 1;
    let mut core = Vec::with_capacity((w * w) as usize);
    let mut border = Vec::with_capacity(4 * (w as usize + 1));
    for di in 0..=span {
        for dj in 0..=span {
            let p = topo.wrapped(i0 + di, j0 + dj);
            if di == 0 || di == span || dj == 0 || dj == span {
                border.push(p);
            } else {
                core.push(p);
            }
        }
    }
    let anchor = topo.coord(topo.wrapped(i0, j0));
    Ok(ControlZone::new(
        ZoneId {
            anchor,
            width: w,
            fragment: 0,
        },
        core,
        border,
    ))
}

/// Core and border disjoint, each connected, and the border isolates the core.
pub fn validate_zone(topo: &Topology, zone: &ControlZone) -> bool {
    if zone
        .core
        .iter()
        .chain(zone.border.iter())
        .any(|&p| !topo.contains(p))
    {
        return false;
    }
    let border: FxHashSet<NodeId> = zone.border.iter().copied().collect();
    if zone.core.iter().any(|p| border.contains(p)) {
        return false;
    }
    topo.induced_connected(&zone.core)
        && topo.induced_connected(&zone.border)
        && topo.isolates_unchecked(&border, &zone.core)
}

/// Connected components of `set` in `topo`, each sorted, ordered by their
/// smallest node.
fn components(topo: &Topology, set: &[NodeId]) -> Vec<Vec<NodeId>> {
    let members: FxHashSet<NodeId> = set.iter().copied().collect();
    let mut seen = FxHashSet::default();
    let mut out = Vec::new();
    let mut order: Vec<NodeId> = set.to_vec();
    order.sort_unstable();
    for start in order {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut k = 0;
        while k < comp.len() {
            let p = comp[k];
            k += 1;
            for &q in topo.neighbors(p) {
                if members.contains(&q) && seen.insert(q) {
                    comp.push(q);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Splits a torus zone along the grid's missing wrap edges.
///
/// Each grid-connected piece of the core is paired with the union of the
/// grid-connected border pieces adjacent to it; the grid boundary may close
/// the cut. Pieces that do not form a valid zone on `grid` are discarded.
pub fn fragment_zone(grid: &Topology, zone: &ControlZone) -> Vec<ControlZone> {
    let border_parts = components(grid, &zone.border);
    let mut out = Vec::new();
    for (ordinal, core_part) in components(grid, &zone.core).into_iter().enumerate() {
        let core_set: FxHashSet<NodeId> = core_part.iter().copied().collect();
        let mut border = Vec::new();
        for part in &border_parts {
            let touches = part
                .iter()
                .any(|&b| grid.neighbors(b).iter().any(|q| core_set.contains(q)));
            if touches {
                border.extend_from_slice(part);
            }
        }
        let fragment = zone.with_fragment(ordinal as u32, core_part, border);
        if validate_zone(grid, &fragment) {
            out.push(fragment);
        }
    }
    out
}

/// Indexed collection of control zones over one topology.
#[derive(Clone, Debug)]
pub struct ZoneSet {
    zones: Vec<ControlZone>,
    by_core: Vec<Vec<ZoneIdx>>,
    by_border: Vec<Vec<ZoneIdx>>,
    max_border: usize,
}

impl ZoneSet {
    /// Indexes `zones`, rejecting any zone that is not valid on `topo`.
    pub fn new(topo: &Topology, zones: Vec<ControlZone>) -> Result<Self> {
        if let Some(bad) = zones.iter().find(|z| !validate_zone(topo, z)) {
            return Err(Error::invalid(format!(
                "zone set: zone {} is not a valid control zone on this topology",
                bad.id
            )));
        }
        Ok(Self::index(topo.len(), zones))
    }

    pub fn empty(topo: &Topology) -> Self {
        Self::index(topo.len(), Vec::new())
    }

    fn index(node_count: usize, zones: Vec<ControlZone>) -> Self {
        let mut by_core = vec![Vec::new(); node_count];
        let mut by_border = vec![Vec::new(); node_count];
        let mut max_border = 0;
        for (k, z) in zones.iter().enumerate() {
            let idx = ZoneIdx(k as u32);
            for &p in z.core.iter() {
                by_core[p.index()].push(idx);
            }
            for &p in z.border.iter() {
                by_border[p.index()].push(idx);
            }
            max_border = max_border.max(z.border.len());
        }
        ZoneSet {
            zones,
            by_core,
            by_border,
            max_border,
        }
    }

    /// Protocol of order `W`: every square zone of width `1..=W` at every
    /// anchor. On a grid the torus family is fragmented by the edge-cut.
    pub fn order(topo: &Topology, order: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("ctr_order: order W must be >= 1"));
        }
        if order + 2 > topo.side() {
            return Err(Error::invalid(format!(
                "ctr_order: W + 2 = {} exceeds side length N = {}",
                order + 2,
                topo.side()
            )));
        }
        let n = topo.side() as i64;
        let mut zones = Vec::new();
        for w in 1..=order {
            for i0 in 1..=n {
                for j0 in 1..=n {
                    let z = square_zone(topo, i0, j0, w)?;
                    match topo.kind() {
                        TopologyKind::Torus => zones.push(z),
                        TopologyKind::Grid => zones.extend(fragment_zone(topo, &z)),
                        TopologyKind::Custom => {
                            if validate_zone(topo, &z) {
                                zones.push(z);
                            }
                        }
                    }
                }
            }
        }
        // Torus squares and grid fragments are valid by construction.
        debug_assert!(zones.iter().all(|z| validate_zone(topo, z)));
        Ok(Self::index(topo.len(), zones))
    }

    /// `N_Ctr`.
    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    /// `N_Border`: largest border cardinality (0 when empty).
    pub fn max_border_len(&self) -> usize {
        self.max_border
    }

    pub fn get(&self, z: ZoneIdx) -> Option<&ControlZone> {
        self.zones.get(z.index())
    }

    /// Panics if `z` is out of range.
    #[inline]
    pub fn zone(&self, z: ZoneIdx) -> &ControlZone {
        &self.zones[z.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ZoneIdx, &ControlZone)> {
        self.zones
            .iter()
            .enumerate()
            .map(|(k, z)| (ZoneIdx(k as u32), z))
    }

    pub fn find(&self, id: ZoneId) -> Option<ZoneIdx> {
        self.zones
            .iter()
            .position(|z| z.id == id)
            .map(|k| ZoneIdx(k as u32))
    }

    /// `myCtr(p)`: zones whose border contains `p`.
    #[inline]
    pub fn my_ctr(&self, p: NodeId) -> &[ZoneIdx] {
        self.by_border.get(p.index()).map_or(&[], Vec::as_slice)
    }

    /// Zones whose core contains `p`.
    #[inline]
    pub fn cores_containing(&self, p: NodeId) -> &[ZoneIdx] {
        self.by_core.get(p.index()).map_or(&[], Vec::as_slice)
    }

    /// One line per zone: `zone <id>: core=[i,j ...] border=[i,j ...]`.
    pub fn dump(&self, topo: &Topology) -> String {
        let mut out = String::new();
        let list = |nodes: &[NodeId]| {
            nodes
                .iter()
                .map(|&p| topo.coord(p).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        for z in &self.zones {
            let _ = writeln!(
                out,
                "zone {}: core=[{}] border=[{}]",
                z.id,
                list(&z.core),
                list(&z.border)
            );
        }
        out
    }
}
