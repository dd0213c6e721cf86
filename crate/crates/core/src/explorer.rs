//! Baseline: a message travels along several node-disjoint paths and the
//! receiver takes the majority, so it survives as long as a minority of the
//! paths carry a Byzantine node.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::nodeset::NodeSet;
use crate::topology::{NodeId, Topology};

/// Paths requested between two nodes.
pub const EXPLORER_PATHS: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplorerPaths {
    /// Each path runs from the source to the destination, both included.
    pub paths: Vec<Vec<NodeId>>,
    pub requested: usize,
}

impl ExplorerPaths {
    /// Fewer disjoint paths exist than were requested.
    pub fn is_degraded(&self) -> bool {
        self.paths.len() < self.requested
    }

    /// Paths whose interior nodes may fail while the majority still holds.
    pub fn tolerance(&self) -> usize {
        self.paths.len().saturating_sub(1) / 2
    }

    /// Paths with a Byzantine interior node.
    pub fn hit_count(&self, byz: &NodeSet) -> usize {
        self.paths
            .iter()
            .filter(|p| p[1..p.len() - 1].iter().any(|&q| byz.contains(q)))
            .count()
    }

    pub fn succeeds(&self, byz: &NodeSet) -> bool {
        !self.paths.is_empty() && self.hit_count(byz) <= self.tolerance()
    }
}

#[derive(Clone, Copy)]
struct Arc {
    to: u32,
    cost: i32,
}

/// Node-split flow network of a topology (vertex `2p` is `p`'s entry,
/// `2p + 1` its exit), built once and reused by every query.
pub struct PathFinder {
    n: usize,
    /// Forward arc `2k`, its residual twin `2k + 1`.
    arcs: Vec<Arc>,
    out: Vec<Vec<u32>>,
    /// Index of `p`'s entry-to-exit arc.
    split: Vec<u32>,
}

struct Search {
    cap: Vec<u8>,
    potential: Vec<i64>,
    dist: Vec<i64>,
    via: Vec<u32>,
    heap: BinaryHeap<Reverse<(i64, u32)>>,
}

impl PathFinder {
    pub fn new(topo: &Topology) -> Self {
        let n = topo.len();
        let mut arcs = Vec::with_capacity(2 * (n + 2 * topo.edge_count()));
        let mut out = vec![Vec::new(); 2 * n];
        let mut split = Vec::with_capacity(n);
        let mut add = |u: usize, v: usize, cost: i32| -> u32 {
            let e = arcs.len() as u32;
            out[u].push(e);
            arcs.push(Arc { to: v as u32, cost });
            out[v].push(e + 1);
            arcs.push(Arc { to: u as u32, cost: -cost });
            e
        };
        for p in topo.nodes() {
            let i = p.index();
            split.push(add(2 * i, 2 * i + 1, 0));
            for &q in topo.neighbors(p) {
                add(2 * i + 1, 2 * q.index(), 1);
            }
        }
        PathFinder { n, arcs, out, split }
    }

    /// Up to `k` internally node-disjoint paths from `a` to `b` of minimum
    /// total length, by successive shortest augmenting paths. Ties are
    /// broken by vertex index, so the result depends only on the inputs.
    pub fn paths(&self, topo: &Topology, a: NodeId, b: NodeId, k: usize) -> Result<ExplorerPaths> {
        if !topo.contains(a) || !topo.contains(b) || topo.len() != self.n {
            return Err(Error::invalid("disjoint_paths: endpoint outside the topology"));
        }
        if a == b {
            return Err(Error::invalid("disjoint_paths: endpoints must differ"));
        }
        let v = 2 * self.n;
        let mut cap: Vec<u8> = (0..self.arcs.len()).map(|e| (e % 2 == 0) as u8).collect();
        // the endpoints are not capacity-limited; their split arcs stay unused
        cap[self.split[a.index()] as usize] = 0;
        cap[self.split[b.index()] as usize] = 0;
        let mut s = Search {
            cap,
            potential: vec![0; v],
            dist: vec![i64::MAX; v],
            via: vec![u32::MAX; v],
            heap: BinaryHeap::new(),
        };
        let (src, dst) = (2 * a.index() + 1, 2 * b.index());
        let mut found = 0;
        while found < k && self.augment(&mut s, src, dst) {
            found += 1;
        }

        // Read the paths off the saturated forward arcs.
        let used = |e: u32| e.is_multiple_of(2) && s.cap[e as usize] == 0;
        let mut paths = Vec::with_capacity(found);
        for &e0 in &self.out[src] {
            if !used(e0) {
                continue;
            }
            let mut path = vec![a];
            let mut x = self.arcs[e0 as usize].to as usize;
            while x != dst {
                let p = x / 2;
                path.push(NodeId::from_index(p));
                let next = self.out[2 * p + 1]
                    .iter()
                    .copied()
                    .find(|&e| used(e))
                    .ok_or_else(|| Error::invalid("disjoint_paths: broken flow path"))?;
                x = self.arcs[next as usize].to as usize;
            }
            path.push(b);
            paths.push(path);
        }
        paths.sort_by(|p, q| p.len().cmp(&q.len()).then_with(|| p.cmp(q)));
        let result = ExplorerPaths { paths, requested: k };
        verify(topo, a, b, &result)?;
        Ok(result)
    }

    /// One Dijkstra pass on reduced costs, stopped once `dst` is settled;
    /// pushes a unit of flow along the path found.
    fn augment(&self, s: &mut Search, src: usize, dst: usize) -> bool {
        s.dist.fill(i64::MAX);
        s.heap.clear();
        s.dist[src] = 0;
        s.heap.push(Reverse((0, src as u32)));
        while let Some(Reverse((d, u))) = s.heap.pop() {
            let u = u as usize;
            if d > s.dist[u] {
                continue;
            }
            if u == dst {
                break;
            }
            for &e in &self.out[u] {
                if s.cap[e as usize] == 0 {
                    continue;
                }
                let arc = self.arcs[e as usize];
                let to = arc.to as usize;
                let nd = d + arc.cost as i64 + s.potential[u] - s.potential[to];
                if nd < s.dist[to] {
                    s.dist[to] = nd;
                    s.via[to] = e;
                    s.heap.push(Reverse((nd, arc.to)));
                }
            }
        }
        let reach = s.dist[dst];
        if reach == i64::MAX {
            return false;
        }
        // vertices not settled before dst get dst's distance; reduced costs stay non-negative
        for (p, &d) in s.potential.iter_mut().zip(&s.dist) {
            *p += d.min(reach);
        }
        let mut x = dst;
        while x != src {
            let e = s.via[x] as usize;
            s.cap[e] -= 1;
            s.cap[e ^ 1] += 1;
            x = self.arcs[e ^ 1].to as usize;
        }
        true
    }
}

/// Up to `k` internally node-disjoint paths of minimum total length.
/// Builds a [`PathFinder`] for the call; reuse one for repeated queries.
pub fn disjoint_paths(topo: &Topology, a: NodeId, b: NodeId, k: usize) -> Result<ExplorerPaths> {
    PathFinder::new(topo).paths(topo, a, b, k)
}

fn verify(topo: &Topology, a: NodeId, b: NodeId, r: &ExplorerPaths) -> Result<()> {
    let mut seen = NodeSet::new(topo.len());
    for path in &r.paths {
        let ok_ends = path.first() == Some(&a) && path.last() == Some(&b);
        let ok_steps = path.windows(2).all(|w| topo.are_neighbors(w[0], w[1]));
        if !ok_ends || !ok_steps {
            return Err(Error::invalid("disjoint_paths: constructed path is not a walk from source to destination"));
        }
        for &p in &path[1..path.len() - 1] {
            if !seen.insert(p) {
                return Err(Error::invalid("disjoint_paths: constructed paths share an interior node"));
            }
        }
    }
    Ok(())
}

/// Explorer-style delivery from `a` to `b` under Byzantine set `byz`.
pub fn explorer_delivers(
    finder: &PathFinder,
    topo: &Topology,
    a: NodeId,
    b: NodeId,
    byz: &NodeSet,
) -> Result<bool> {
    if byz.contains(a) || byz.contains(b) {
        return Ok(false);
    }
    Ok(finder.paths(topo, a, b, EXPLORER_PATHS)?.succeeds(byz))
}
