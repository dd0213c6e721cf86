//! Per-node protocol state machine: INIT, ENTER, DIFF and EXIT as pure
//! transitions over a [`NodeState`]. Scheduling lives in [`crate::sim`].
//!
//! Every [`Message`] returned by a transition is a broadcast: the caller
//! delivers one copy to each neighbor of the emitting node.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::topology::NodeId;
use crate::zones::{ZoneIdx, ZoneSet};

/// Broadcast value. Correct nodes default to their own linear index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Payload(pub u64);

/// Claim that `source` initially broadcast `payload`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StandardMessage {
    pub source: NodeId,
    pub payload: Payload,
}

/// Authorization for `(source, payload)` to leave the core of `zone`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AuthMessage {
    pub source: NodeId,
    pub payload: Payload,
    pub zone: ZoneIdx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    Standard(StandardMessage),
    Auth(AuthMessage),
}

impl Message {
    pub fn standard(source: NodeId, payload: Payload) -> Self {
        Message::Standard(StandardMessage { source, payload })
    }

    pub fn auth(source: NodeId, payload: Payload, zone: ZoneIdx) -> Self {
        Message::Auth(AuthMessage {
            source,
            payload,
            zone,
        })
    }

    pub fn is_auth(&self) -> bool {
        matches!(self, Message::Auth(_))
    }
}

/// Which receivers relay a fresh authorization.
///
/// Receivers only ever accept an authorization for `z` from a member of
/// `border(z)`, so relays by non-border nodes are dropped everywhere. The two
/// policies therefore reach the same states; they differ in traffic only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffPolicy {
    /// Only members of `border(z)` record and relay authorizations for `z`.
    #[default]
    BorderRelay,
    /// Every receiver records and relays, as in the literal DIFF rule.
    Verbatim,
}

/// Authorization naming a zone index outside the experiment's zone set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnknownZone(pub ZoneIdx);

/// Outcome of one delivery followed by the EXIT fixpoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Delivery {
    pub out: Vec<Message>,
    pub accepted: Vec<(NodeId, Payload)>,
    pub malformed: bool,
}

/// Messages emitted and pairs accepted by an EXIT pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Exit {
    pub out: Vec<Message>,
    pub accepted: Vec<(NodeId, Payload)>,
}

/// Everything a node knows about one `(s, m)` pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Entry {
    accepted: bool,
    /// Senders `q` of `(s, m, q)` entries in `Wait`.
    senders: Vec<NodeId>,
    /// Authorizations held, one bit per position in `myCtr`.
    auth: Bits,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Bits {
    low: u64,
    high: Vec<u64>,
}

impl Bits {
    fn get(&self, k: usize) -> bool {
        if k < 64 {
            self.low >> k & 1 == 1
        } else {
            self.high
                .get(k / 64 - 1)
                .is_some_and(|w| w >> (k % 64) & 1 == 1)
        }
    }

    /// Sets bit `k`; true when it was clear.
    fn set(&mut self, k: usize) -> bool {
        let word = if k < 64 {
            &mut self.low
        } else {
            let i = k / 64 - 1;
            if self.high.len() <= i {
                self.high.resize(i + 1, 0);
            }
            &mut self.high[i]
        };
        let bit = 1u64 << (k % 64);
        let fresh = *word & bit == 0;
        *word |= bit;
        fresh
    }

    fn count(&self) -> usize {
        self.low.count_ones() as usize + self.high.iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeState {
    id: NodeId,
    m0: Payload,
    my_ctr: Vec<ZoneIdx>,
    /// Per-pair `Acc` membership, `Wait` senders and `Auth` bits for zones
    /// of `myCtr`. Authorizations this node issued itself are recorded too,
    /// so that each `(s, m, z)` leaves the node at most once.
    pairs: FxHashMap<(NodeId, Payload), Entry>,
    /// Authorizations for zones outside `myCtr`; only the verbatim policy
    /// records these.
    foreign: FxHashSet<(NodeId, Payload, ZoneIdx)>,
    acc_count: usize,
}

impl NodeState {
    /// INIT: accept `(p, m0)`, broadcast it and one authorization per zone
    /// of `myCtr`.
    pub fn init(id: NodeId, m0: Payload, my_ctr: &[ZoneIdx]) -> (Self, Vec<Message>) {
        let mut state = NodeState {
            id,
            m0,
            my_ctr: my_ctr.to_vec(),
            pairs: FxHashMap::default(),
            foreign: FxHashSet::default(),
            acc_count: 0,
        };
        let mut out = Vec::with_capacity(1 + my_ctr.len());
        state.accept(id, m0, &mut out);
        (state, out)
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn m0(&self) -> Payload {
        self.m0
    }

    pub fn my_ctr(&self) -> &[ZoneIdx] {
        &self.my_ctr
    }

    pub fn has_accepted(&self, source: NodeId, payload: Payload) -> bool {
        self.pairs.get(&(source, payload)).is_some_and(|e| e.accepted)
    }

    pub fn has_auth(&self, source: NodeId, payload: Payload, zone: ZoneIdx) -> bool {
        match self.my_ctr.binary_search(&zone) {
            Ok(k) => self.pairs.get(&(source, payload)).is_some_and(|e| e.auth.get(k)),
            Err(_) => self.foreign.contains(&(source, payload, zone)),
        }
    }

    pub fn accepted_count(&self) -> usize {
        self.acc_count
    }

    /// Accepted pairs in sorted order.
    pub fn accepted(&self) -> Vec<(NodeId, Payload)> {
        let mut v: Vec<_> = self
            .pairs
            .iter()
            .filter(|(_, e)| e.accepted)
            .map(|(&k, _)| k)
            .collect();
        v.sort_unstable();
        v
    }

    /// Pending `(s, m, q)` triples in sorted order.
    pub fn waiting(&self) -> Vec<(NodeId, Payload, NodeId)> {
        let mut v: Vec<_> = self
            .pairs
            .iter()
            .flat_map(|(&(s, m), e)| e.senders.iter().map(move |&q| (s, m, q)))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn auth_len(&self) -> usize {
        self.pairs.values().map(|e| e.auth.count()).sum::<usize>() + self.foreign.len()
    }

    /// ENTER: ignore accepted pairs, otherwise remember `(s, m, q)`.
    /// Returns whether `Wait` changed.
    pub fn on_standard(&mut self, msg: StandardMessage, from: NodeId) -> bool {
        let e = self.pairs.entry((msg.source, msg.payload)).or_default();
        if e.accepted || e.senders.contains(&from) {
            return false;
        }
        e.senders.push(from);
        true
    }

    /// DIFF: record and relay a fresh authorization received from a member
    /// of the zone's border.
    pub fn on_auth(
        &mut self,
        msg: AuthMessage,
        from: NodeId,
        zs: &ZoneSet,
        policy: DiffPolicy,
    ) -> Result<Vec<Message>, UnknownZone> {
        Ok(if self.record_auth(msg, from, zs, policy)? {
            vec![Message::Auth(msg)]
        } else {
            Vec::new()
        })
    }

    /// DIFF without the allocation; true when the authorization is new and
    /// must be relayed.
    fn record_auth(
        &mut self,
        msg: AuthMessage,
        from: NodeId,
        zs: &ZoneSet,
        policy: DiffPolicy,
    ) -> Result<bool, UnknownZone> {
        let zone = zs.get(msg.zone).ok_or(UnknownZone(msg.zone))?;
        if !zone.border_contains(from) {
            return Ok(false);
        }
        Ok(match self.my_ctr.binary_search(&msg.zone) {
            Ok(k) => self
                .pairs
                .entry((msg.source, msg.payload))
                .or_default()
                .auth
                .set(k),
            Err(_) => {
                policy == DiffPolicy::Verbatim
                    && self.foreign.insert((msg.source, msg.payload, msg.zone))
            }
        })
    }

    /// EXIT condition for `(s, m, q)`: every zone of `myCtr` with
    /// `q ∈ core(z)` and `s ∉ core(z)` has authorized `(s, m)`.
    pub fn exit_ready(&self, zs: &ZoneSet, source: NodeId, payload: Payload, from: NodeId) -> bool {
        let empty = Bits::default();
        let bits = self.pairs.get(&(source, payload)).map_or(&empty, |e| &e.auth);
        Self::guard_open(&self.my_ctr, zs, source, from, bits)
    }

    fn guard_open(my_ctr: &[ZoneIdx], zs: &ZoneSet, s: NodeId, q: NodeId, bits: &Bits) -> bool {
        let source_cores = zs.cores_containing(s);
        zs.cores_containing(q).iter().all(|z| match my_ctr.binary_search(z) {
            Ok(k) => bits.get(k) || source_cores.binary_search(z).is_ok(),
            Err(_) => true,
        })
    }

    fn pair_ready(&self, zs: &ZoneSet, s: NodeId, e: &Entry) -> bool {
        !e.accepted
            && e
                .senders
                .iter()
                .any(|&q| Self::guard_open(&self.my_ctr, zs, s, q, &e.auth))
    }

    /// EXIT over the whole of `Wait`, iterated until nothing more is accepted.
    pub fn try_exit(&mut self, zs: &ZoneSet) -> Exit {
        let mut exit = Exit::default();
        loop {
            let ready = self
                .pairs
                .iter()
                .find_map(|(&(s, m), e)| self.pair_ready(zs, s, e).then_some((s, m)));
            let Some((s, m)) = ready else {
                return exit;
            };
            self.accept(s, m, &mut exit.out);
            exit.accepted.push((s, m));
        }
    }

    /// EXIT restricted to the entries of one pair. A delivery only changes
    /// `Wait`/`Auth` for its own pair, so this reaches the same fixpoint as
    /// [`NodeState::try_exit`].
    fn try_exit_pair(&mut self, zs: &ZoneSet, s: NodeId, m: Payload, exit: &mut Delivery) {
        let ready = self
            .pairs
            .get(&(s, m))
            .is_some_and(|e| self.pair_ready(zs, s, e));
        if ready {
            self.accept(s, m, &mut exit.out);
            exit.accepted.push((s, m));
        }
    }

    fn accept(&mut self, s: NodeId, m: Payload, out: &mut Vec<Message>) {
        let e = self.pairs.entry((s, m)).or_default();
        if e.accepted {
            return;
        }
        e.accepted = true;
        e.senders = Vec::new();
        self.acc_count += 1;
        out.push(Message::standard(s, m));
        for (k, &z) in self.my_ctr.iter().enumerate() {
            if e.auth.set(k) {
                out.push(Message::auth(s, m, z));
            }
        }
    }

    /// Handles one incoming message and runs EXIT to its fixpoint.
    pub fn deliver(
        &mut self,
        msg: Message,
        from: NodeId,
        zs: &ZoneSet,
        policy: DiffPolicy,
    ) -> Delivery {
        let mut d = Delivery::default();
        match msg {
            Message::Standard(sm) => {
                if self.on_standard(sm, from) {
                    self.try_exit_pair(zs, sm.source, sm.payload, &mut d);
                }
            }
            Message::Auth(am) => match self.record_auth(am, from, zs, policy) {
                Ok(relay) => {
                    if relay {
                        d.out.push(Message::Auth(am));
                        self.try_exit_pair(zs, am.source, am.payload, &mut d);
                    }
                }
                Err(UnknownZone(_)) => d.malformed = true,
            },
        }
        d
    }
}
