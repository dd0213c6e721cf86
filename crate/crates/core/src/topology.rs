//! Torus and grid networks plus the connectivity primitives used to validate
//! control zones.
//!
//! Nodes carry a 1-based `(i, j)` coordinate and a dense linear index
//! `(i - 1) * N + (j - 1)`. Neighbor lists are ordered up, down, left, right.

use std::collections::VecDeque;
use std::fmt::{self, Write as _};

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node identifier (linear index into the `N x N` coordinate space).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        NodeId(index as u32)
    }
}

/// 1-based grid coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub i: u32,
    pub j: u32,
}

impl Coord {
    pub fn new(i: u32, j: u32) -> Self {
        Coord { i, j }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.i, self.j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Torus,
    Grid,
    /// Hand-built graph over the `N x N` coordinate space (tests, scenarios).
    Custom,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Torus => "torus",
            TopologyKind::Grid => "grid",
            TopologyKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "torus" => Ok(TopologyKind::Torus),
            "grid" => Ok(TopologyKind::Grid),
            other => Err(Error::invalid(format!(
                "topology: unknown kind {other:?} (expected torus or grid)"
            ))),
        }
    }
}

/// Undirected network over `N x N` coordinates, adjacency stored in CSR form.
#[derive(Clone, Debug)]
pub struct Topology {
    kind: TopologyKind,
    side: u32,
    offsets: Vec<u32>,
    neighbors: Vec<NodeId>,
}

impl Topology {
    /// `N x N` torus; wrap edges join opposite extremities. Requires `N >= 3`.
    pub fn torus(side: u32) -> Result<Self> {
        if side < 3 {
            return Err(Error::invalid(format!(
                "build_torus: side length N must be >= 3 (got {side})"
            )));
        }
        Ok(Self::lattice(TopologyKind::Torus, side))
    }

    /// `N x N` grid: the torus without its wrap edges. Requires `N >= 2`.
    pub fn grid(side: u32) -> Result<Self> {
        if side < 2 {
            return Err(Error::invalid(format!(
                "build_grid: side length N must be >= 2 (got {side})"
            )));
        }
        Ok(Self::lattice(TopologyKind::Grid, side))
    }

    pub fn build(kind: TopologyKind, side: u32) -> Result<Self> {
        match kind {
            TopologyKind::Torus => Self::torus(side),
            TopologyKind::Grid => Self::grid(side),
            TopologyKind::Custom => Err(Error::invalid(
                "build: custom topologies are built from an explicit edge list",
            )),
        }
    }

    /// Arbitrary undirected graph on the `N x N` coordinate space. Duplicate
    /// edges are merged; self loops are rejected.
    pub fn from_edges(side: u32, edges: &[(Coord, Coord)]) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("from_edges: side length must be >= 1"));
        }
        let n = (side * side) as usize;
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            let pa = node_in(side, a)?;
            let pb = node_in(side, b)?;
            if pa == pb {
                return Err(Error::invalid(format!("from_edges: self loop at ({a})")));
            }
            if !adj[pa.index()].contains(&pb) {
                adj[pa.index()].push(pb);
                adj[pb.index()].push(pa);
            }
        }
        Ok(Self::from_lists(TopologyKind::Custom, side, adj))
    }

    fn lattice(kind: TopologyKind, side: u32) -> Self {
        let n = side as i64;
        let wrap = kind == TopologyKind::Torus;
        let mut adj = Vec::with_capacity((side * side) as usize);
        for i in 1..=n {
            for j in 1..=n {
                let mut list = Vec::with_capacity(4);
                for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (mut ni, mut nj) = (i + di, j + dj);
                    if wrap {
                        ni = (ni - 1).rem_euclid(n) + 1;
                        nj = (nj - 1).rem_euclid(n) + 1;
                    } else if ni < 1 || ni > n || nj < 1 || nj > n {
                        continue;
                    }
                    list.push(NodeId(((ni - 1) * n + (nj - 1)) as u32));
                }
                adj.push(list);
            }
        }
        Self::from_lists(kind, side, adj)
    }

    fn from_lists(kind: TopologyKind, side: u32, adj: Vec<Vec<NodeId>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for list in adj {
            neighbors.extend(list);
            offsets.push(neighbors.len() as u32);
        }
        Topology {
            kind,
            side,
            offsets,
            neighbors,
        }
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    /// Side length `N`.
    pub fn side(&self) -> u32 {
        self.side
    }

    /// Number of nodes `n = N^2`.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> {
        (0..self.len()).map(NodeId::from_index)
    }

    #[inline]
    pub fn neighbors(&self, p: NodeId) -> &[NodeId] {
        let (a, b) = (self.offsets[p.index()], self.offsets[p.index() + 1]);
        &self.neighbors[a as usize..b as usize]
    }

    pub fn degree(&self, p: NodeId) -> usize {
        self.neighbors(p).len()
    }

    /// Maximal degree `d`.
    pub fn max_degree(&self) -> usize {
        self.nodes().map(|p| self.degree(p)).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors(a).contains(&b)
    }

    pub fn contains(&self, p: NodeId) -> bool {
        p.index() < self.len()
    }

    pub fn node(&self, c: Coord) -> Result<NodeId> {
        node_in(self.side, c)
    }

    pub fn node_at(&self, i: u32, j: u32) -> Result<NodeId> {
        self.node(Coord::new(i, j))
    }

    #[inline]
    pub fn coord(&self, p: NodeId) -> Coord {
        let idx = p.0;
        Coord {
            i: idx / self.side + 1,
            j: idx % self.side + 1,
        }
    }

    /// Node at `(i, j)` with both coordinates reduced modulo `N` into `1..=N`.
    pub fn wrapped(&self, i: i64, j: i64) -> NodeId {
        let n = self.side as i64;
        let wi = (i - 1).rem_euclid(n);
        let wj = (j - 1).rem_euclid(n);
        NodeId((wi * n + wj) as u32)
    }

    fn check_nodes(&self, op: &str, nodes: &[NodeId]) -> Result<()> {
        match nodes.iter().find(|p| !self.contains(**p)) {
            Some(p) => Err(Error::invalid(format!(
                "{op}: node index {} is not in the topology ({} nodes)",
                p.0,
                self.len()
            ))),
            None => Ok(()),
        }
    }

    /// True iff the subgraph induced by `set` is connected. Empty and
    /// singleton sets are connected.
    pub fn is_connected(&self, set: &[NodeId]) -> Result<bool> {
        self.check_nodes("is_connected", set)?;
        Ok(self.induced_connected(set))
    }

    pub(crate) fn induced_connected(&self, set: &[NodeId]) -> bool {
        let Some(&start) = set.first() else {
            return true;
        };
        let members: FxHashSet<NodeId> = set.iter().copied().collect();
        let mut seen = FxHashSet::default();
        seen.insert(start);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in self.neighbors(p) {
                if members.contains(&q) && seen.insert(q) {
                    queue.push_back(q);
                }
            }
        }
        seen.len() == members.len()
    }

    /// True iff, with `border` removed, no node of `core` can reach a node
    /// outside `core ∪ border`.
    pub fn isolates(&self, border: &[NodeId], core: &[NodeId]) -> Result<bool> {
        self.check_nodes("isolates", border)?;
        self.check_nodes("isolates", core)?;
        let border_set: FxHashSet<NodeId> = border.iter().copied().collect();
        if core.iter().any(|p| border_set.contains(p)) {
            return Err(Error::invalid("isolates: border and core must be disjoint"));
        }
        Ok(self.isolates_unchecked(&border_set, core))
    }

    pub(crate) fn isolates_unchecked(&self, border: &FxHashSet<NodeId>, core: &[NodeId]) -> bool {
        let core_set: FxHashSet<NodeId> = core.iter().copied().collect();
        let mut seen: FxHashSet<NodeId> = core_set.clone();
        let mut queue: VecDeque<NodeId> = core.iter().copied().collect();
        while let Some(p) = queue.pop_front() {
            for &q in self.neighbors(p) {
                if border.contains(&q) || !seen.insert(q) {
                    continue;
                }
                if !core_set.contains(&q) {
                    return false;
                }
                queue.push_back(q);
            }
        }
        true
    }

    /// Adjacency list dump, one line per node: `i,j: i1,j1 i2,j2 ...`.
    pub fn adjacency_dump(&self) -> String {
        let mut out = String::new();
        for p in self.nodes() {
            let _ = write!(out, "{}:", self.coord(p));
            for &q in self.neighbors(p) {
                let _ = write!(out, " {}", self.coord(q));
            }
            out.push('\n');
        }
        out
    }
}

fn node_in(side: u32, c: Coord) -> Result<NodeId> {
    if c.i < 1 || c.i > side || c.j < 1 || c.j > side {
        return Err(Error::invalid(format!(
            "node ({c}) is outside 1..={side} x 1..={side}"
        )));
    }
    Ok(NodeId((c.i - 1) * side + (c.j - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords(t: &Topology, p: NodeId) -> Vec<(u32, u32)> {
        let mut v: Vec<_> = t
            .neighbors(p)
            .iter()
            .map(|&q| {
                let c = t.coord(q);
                (c.i, c.j)
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn torus_three_is_four_regular() {
        let t = Topology::torus(3).unwrap();
        assert_eq!(t.len(), 9);
        assert!(t.nodes().all(|p| t.degree(p) == 4));
    }

    #[test]
    fn torus_hundred_has_ten_thousand_nodes() {
        let t = Topology::torus(100).unwrap();
        assert_eq!(t.len(), 10_000);
        assert_eq!(t.edge_count(), 20_000);
    }

    #[test]
    fn torus_four_corner_neighbors() {
        let t = Topology::torus(4).unwrap();
        let p = t.node_at(1, 1).unwrap();
        assert_eq!(coords(&t, p), vec![(1, 2), (1, 4), (2, 1), (4, 1)]);
    }

    #[test]
    fn neighbor_order_is_up_down_left_right() {
        let t = Topology::torus(5).unwrap();
        let p = t.node_at(3, 3).unwrap();
        let got: Vec<Coord> = t.neighbors(p).iter().map(|&q| t.coord(q)).collect();
        assert_eq!(
            got,
            vec![
                Coord::new(2, 3),
                Coord::new(4, 3),
                Coord::new(3, 2),
                Coord::new(3, 4)
            ]
        );
    }

    #[test]
    fn small_sides_rejected() {
        assert!(matches!(Topology::torus(2), Err(Error::InvalidParameter(_))));
        assert!(matches!(Topology::grid(1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn grid_corner_and_tiny_grid() {
        let g = Topology::grid(3).unwrap();
        let p = g.node_at(1, 1).unwrap();
        assert_eq!(coords(&g, p), vec![(1, 2), (2, 1)]);
        let g2 = Topology::grid(2).unwrap();
        assert_eq!(g2.len(), 4);
        assert!(g2.nodes().all(|p| g2.degree(p) == 2));
    }

    #[test]
    fn grid_is_edge_cut_of_torus() {
        let t = Topology::torus(100).unwrap();
        let g = Topology::grid(100).unwrap();
        assert_eq!(t.len(), g.len());
        for p in g.nodes() {
            for &q in g.neighbors(p) {
                assert!(t.are_neighbors(p, q));
            }
        }
        assert_eq!(t.edge_count() - g.edge_count(), 200);
    }

    #[test]
    fn connectivity_basics() {
        let g = Topology::grid(5).unwrap();
        let a = g.node_at(1, 1).unwrap();
        let b = g.node_at(1, 3).unwrap();
        assert!(g.is_connected(&[]).unwrap());
        assert!(g.is_connected(&[a]).unwrap());
        assert!(!g.is_connected(&[a, b]).unwrap());
        assert!(g.is_connected(&[NodeId(999)]).is_err());
    }

    #[test]
    fn perimeter_of_five_square_is_connected() {
        let t = Topology::torus(10).unwrap();
        let mut border = Vec::new();
        for i in 1..=5 {
            for j in 1..=5 {
                if i == 1 || i == 5 || j == 1 || j == 5 {
                    border.push(t.node_at(i, j).unwrap());
                }
            }
        }
        assert_eq!(border.len(), 16);
        assert!(t.is_connected(&border).unwrap());
    }

    fn ring_around(t: &Topology, i: i64, j: i64) -> Vec<NodeId> {
        let mut v = Vec::new();
        for di in -1..=1 {
            for dj in -1..=1 {
                if (di, dj) != (0, 0) {
                    v.push(t.wrapped(i + di, j + dj));
                }
            }
        }
        v
    }

    #[test]
    fn full_perimeter_isolates_and_gap_leaks() {
        let t = Topology::torus(10).unwrap();
        let core = [t.node_at(3, 3).unwrap()];
        let border = ring_around(&t, 3, 3);
        assert!(t.isolates(&border, &core).unwrap());
        // drop the node just above the core
        let gap: Vec<NodeId> = border
            .iter()
            .copied()
            .filter(|&p| p != t.node_at(2, 3).unwrap())
            .collect();
        assert!(!t.isolates(&gap, &core).unwrap());
    }

    #[test]
    fn grid_boundary_completes_isolation() {
        // L-shaped border around corner node (1,1) of a grid.
        let g = Topology::grid(6).unwrap();
        let core = [g.node_at(1, 1).unwrap()];
        let border = [
            g.node_at(1, 2).unwrap(),
            g.node_at(2, 2).unwrap(),
            g.node_at(2, 1).unwrap(),
        ];
        assert!(g.isolates(&border, &core).unwrap());
        assert!(g.is_connected(&border).unwrap());
    }

    #[test]
    fn isolates_rejects_overlap() {
        let t = Topology::torus(5).unwrap();
        let p = t.node_at(1, 1).unwrap();
        assert!(t.isolates(&[p], &[p]).is_err());
    }

    #[test]
    fn adjacency_dump_format() {
        let g = Topology::grid(2).unwrap();
        assert_eq!(
            g.adjacency_dump(),
            "1,1: 2,1 1,2\n1,2: 2,2 1,1\n2,1: 1,1 2,2\n2,2: 1,2 2,1\n"
        );
    }

    #[test]
    fn custom_single_node() {
        let t = Topology::from_edges(1, &[]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.max_degree(), 0);
    }
}
