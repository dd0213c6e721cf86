//! Simulator and analysis toolkit for control-zone Byzantine-tolerant
//! broadcast on multihop networks.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod eval;
pub mod explorer;
mod flood;
pub mod nodeset;
pub mod protocol;
pub mod sim;
pub mod topology;
pub mod zones;

pub use error::{Error, Result};
pub use nodeset::NodeSet;
pub use topology::{Coord, NodeId, Topology, TopologyKind};
pub use zones::{ControlZone, ZoneId, ZoneIdx, ZoneSet};
