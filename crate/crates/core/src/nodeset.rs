use fixedbitset::FixedBitSet;

use crate::topology::NodeId;

/// Dense set of nodes of one topology, backed by a bitset over linear indices.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct NodeSet {
    bits: FixedBitSet,
}

impl NodeSet {
    pub fn new(node_count: usize) -> Self {
        NodeSet {
            bits: FixedBitSet::with_capacity(node_count),
        }
    }

    pub fn full(node_count: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(node_count);
        bits.insert_range(..);
        NodeSet { bits }
    }

    pub fn from_nodes(node_count: usize, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let mut set = NodeSet::new(node_count);
        for p in nodes {
            set.insert(p);
        }
        set
    }

    /// Number of nodes the set can address.
    pub fn capacity(&self) -> usize {
        self.bits.len()
    }

    /// Returns true if `p` was not already present.
    pub fn insert(&mut self, p: NodeId) -> bool {
        !self.bits.put(p.index())
    }

    pub fn remove(&mut self, p: NodeId) {
        self.bits.set(p.index(), false);
    }

    pub fn contains(&self, p: NodeId) -> bool {
        self.bits.contains(p.index())
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bits.ones().map(NodeId::from_index)
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        NodeSet {
            bits: &self.bits & &other.bits,
        }
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        self.bits.union_with(&other.bits);
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        let mut bits = self.bits.clone();
        bits.difference_with(&other.bits);
        NodeSet { bits }
    }

    /// Complement with respect to the addressable node range.
    pub fn complement(&self) -> NodeSet {
        let mut bits = self.bits.clone();
        bits.toggle_range(..);
        NodeSet { bits }
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.bits.is_disjoint(&other.bits)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn to_vec(&self) -> Vec<NodeId> {
        self.iter().collect()
    }
}

impl std::fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter().map(|p| p.index())).finish()
    }
}
