//! Asynchronous execution of the protocol under a seeded random scheduler.
//!
//! All in-flight envelopes sit in one pool; each step removes one uniformly
//! at random and delivers it. Byzantine nodes never run the protocol: they
//! inject scripted messages and drop everything they receive.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::nodeset::NodeSet;
use crate::protocol::{DiffPolicy, Message, NodeState, Payload};
use crate::topology::{NodeId, Topology};
use crate::zones::ZoneSet;

/// Offset added to forged payloads so they never collide with honest ones.
pub const FORGED_PAYLOAD_BASE: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub from: NodeId,
    pub to: NodeId,
    pub msg: Message,
}

/// One scripted broadcast from a Byzantine node to all of its neighbors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub msg: Message,
    pub repeat: u32,
    /// Step at which the copies enter the pool.
    pub at_step: u64,
}

impl Injection {
    pub fn now(msg: Message) -> Self {
        Injection {
            msg,
            repeat: 1,
            at_step: 0,
        }
    }
}

/// Behavior of one Byzantine node. Everything it receives is dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ByzantineScript {
    pub node: NodeId,
    pub actions: Vec<Injection>,
    /// Value treated as this node's own broadcast when auditing safety;
    /// without it, any payload attributed to this node is accepted as true.
    pub true_value: Option<Payload>,
}

impl ByzantineScript {
    pub fn silent(node: NodeId) -> Self {
        ByzantineScript {
            node,
            actions: Vec::new(),
            true_value: None,
        }
    }

    /// Claims that `victim` broadcast `fake`, and authorizes the claim on
    /// every zone whose border contains the Byzantine node.
    pub fn forging(zs: &ZoneSet, node: NodeId, victim: NodeId, fake: Payload) -> Self {
        let mut actions = vec![Injection::now(Message::standard(victim, fake))];
        actions.extend(
            zs.my_ctr(node)
                .iter()
                .map(|&z| Injection::now(Message::auth(victim, fake, z))),
        );
        ByzantineScript {
            node,
            actions,
            true_value: None,
        }
    }
}

/// One forging script per Byzantine node, each against a uniformly drawn
/// correct victim.
pub fn default_scripts(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    rng: &mut impl Rng,
) -> Vec<ByzantineScript> {
    let correct: Vec<NodeId> = topo.nodes().filter(|&p| !byz.contains(p)).collect();
    byz.iter()
        .map(|b| match correct.choose(rng) {
            Some(&victim) => {
                ByzantineScript::forging(zs, b, victim, Payload(FORGED_PAYLOAD_BASE + b.0 as u64))
            }
            None => ByzantineScript::silent(b),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    pub policy: DiffPolicy,
    /// Keep the full delivery log (needed for trace export).
    pub record_deliveries: bool,
    /// Initial value per node; defaults to the node's linear index.
    pub payloads: Option<Vec<Payload>>,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        SimConfig {
            seed,
            policy: DiffPolicy::default(),
            record_deliveries: true,
            payloads: None,
        }
    }

    pub fn summary(seed: u64) -> Self {
        SimConfig {
            record_deliveries: false,
            ..SimConfig::new(seed)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Acceptance {
    pub step: u64,
    pub node: NodeId,
    pub source: NodeId,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MessageCounts {
    pub standard: u64,
    pub auth: u64,
}

impl MessageCounts {
    pub fn total(&self) -> u64 {
        self.standard + self.auth
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub seed: u64,
    /// Delivery `k` happened at step `k`; empty unless recording was enabled.
    pub deliveries: Vec<Envelope>,
    pub acceptances: Vec<Acceptance>,
    /// Final state of every correct node (`None` for Byzantine nodes).
    pub states: Vec<Option<NodeState>>,
    /// Initial value of every correct node.
    pub m0: Vec<Option<Payload>>,
    pub byz_truth: Vec<(NodeId, Payload)>,
    pub sent: MessageCounts,
    /// Envelopes that originated from Byzantine scripts (included in `sent`).
    pub injected: u64,
    pub malformed: u64,
    pub steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SafetyViolation {
    pub step: u64,
    pub node: NodeId,
    pub source: NodeId,
    pub payload: Payload,
}

impl Trace {
    pub fn state(&self, p: NodeId) -> Option<&NodeState> {
        self.states.get(p.index()).and_then(Option::as_ref)
    }

    /// True iff `receiver` accepted the true message of `source`.
    pub fn delivered(&self, source: NodeId, receiver: NodeId) -> bool {
        match (self.m0[source.index()], self.state(receiver)) {
            (Some(m), Some(st)) => st.has_accepted(source, m),
            _ => false,
        }
    }

    /// Whether `(source, payload)` contradicts what `source` broadcast.
    pub fn is_false(&self, source: NodeId, payload: Payload) -> bool {
        match self.m0.get(source.index()).copied().flatten() {
            Some(m) => m != payload,
            None => self
                .byz_truth
                .iter()
                .any(|&(b, v)| b == source && v != payload),
        }
    }

    /// Writes the trace as line-delimited JSON: one delivery event per step,
    /// followed by the acceptances that delivery caused.
    pub fn write_ndjson(&self, topo: &Topology, zs: &ZoneSet, mut w: impl Write) -> Result<()> {
        let pos = |p: NodeId| {
            let c = topo.coord(p);
            [c.i, c.j]
        };
        let mut acc = self.acceptances.iter().peekable();
        for (step, env) in self.deliveries.iter().enumerate() {
            let step = step as u64;
            let line = match env.msg {
                Message::Standard(m) => json!({
                    "step": step, "from": pos(env.from), "to": pos(env.to),
                    "kind": "std", "s": pos(m.source), "m": m.payload.0,
                }),
                Message::Auth(m) => json!({
                    "step": step, "from": pos(env.from), "to": pos(env.to),
                    "kind": "auth", "s": pos(m.source), "m": m.payload.0, "z": m.zone.0,
                    "zone": zs.get(m.zone).map(|z| z.id().to_string()),
                }),
            };
            writeln!(w, "{line}")?;
            while let Some(a) = acc.next_if(|a| a.step == step) {
                write_acceptance(&mut w, a, pos)?;
            }
        }
        for a in acc {
            write_acceptance(&mut w, a, pos)?;
        }
        Ok(())
    }
}

fn write_acceptance(w: &mut impl Write, a: &Acceptance, pos: impl Fn(NodeId) -> [u32; 2]) -> Result<()> {
    let line = json!({
        "step": a.step, "kind": "accept", "node": pos(a.node),
        "s": pos(a.source), "m": a.payload.0,
    });
    writeln!(w, "{line}")?;
    Ok(())
}

/// Runs the protocol to quiescence with the default configuration.
pub fn run(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    scripts: &[ByzantineScript],
    seed: u64,
) -> Result<Trace> {
    run_with(topo, zs, byz, scripts, &SimConfig::new(seed))
}

struct Pool<'a> {
    topo: &'a Topology,
    envelopes: Vec<Envelope>,
    sent: MessageCounts,
}

impl Pool<'_> {
    fn broadcast(&mut self, from: NodeId, msg: Message) {
        for &to in self.topo.neighbors(from) {
            self.envelopes.push(Envelope { from, to, msg });
        }
        let k = self.topo.degree(from) as u64;
        if msg.is_auth() {
            self.sent.auth += k;
        } else {
            self.sent.standard += k;
        }
    }
}

pub fn run_with(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    scripts: &[ByzantineScript],
    cfg: &SimConfig,
) -> Result<Trace> {
    let n = topo.len();
    if byz.capacity() != n {
        return Err(Error::Config(format!(
            "run: Byzantine set addresses {} nodes but the topology has {n}",
            byz.capacity()
        )));
    }
    if let Some(s) = scripts.iter().find(|s| !byz.contains(s.node)) {
        return Err(Error::Config(format!(
            "run: script given for correct node ({}); scripts may only drive Byzantine nodes",
            topo.coord(s.node)
        )));
    }
    if let Some(p) = &cfg.payloads {
        if p.len() != n {
            return Err(Error::Config(format!(
                "run: {} initial payloads for {n} nodes",
                p.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pool = Pool {
        topo,
        envelopes: Vec::new(),
        sent: MessageCounts::default(),
    };
    let mut states: Vec<Option<NodeState>> = Vec::with_capacity(n);
    let mut m0 = Vec::with_capacity(n);
    let mut acceptances = Vec::new();
    for p in topo.nodes() {
        if byz.contains(p) {
            states.push(None);
            m0.push(None);
            continue;
        }
        let value = cfg
            .payloads
            .as_ref()
            .map_or(Payload(p.0 as u64), |v| v[p.index()]);
        let (st, out) = NodeState::init(p, value, zs.my_ctr(p));
        for msg in out {
            pool.broadcast(p, msg);
        }
        states.push(Some(st));
        m0.push(Some(value));
    }

    let mut injections: Vec<(u64, NodeId, Message, u32)> = scripts
        .iter()
        .flat_map(|s| {
            s.actions
                .iter()
                .map(move |a| (a.at_step, s.node, a.msg, a.repeat))
        })
        .collect();
    // stable: equal steps keep script order
    injections.sort_by_key(|&(at, ..)| at);
    let mut next_injection = 0;
    let mut injected = 0;
    let mut malformed = 0;
    let mut deliveries = Vec::new();
    let mut step: u64 = 0;

    loop {
        while let Some(&(at, node, msg, repeat)) = injections.get(next_injection) {
            if at > step {
                break;
            }
            for _ in 0..repeat {
                pool.broadcast(node, msg);
                injected += topo.degree(node) as u64;
            }
            next_injection += 1;
        }
        if pool.envelopes.is_empty() {
            match injections.get(next_injection) {
                Some(&(at, ..)) => {
                    step = step.max(at);
                    continue;
                }
                None => break,
            }
        }
        let k = rng.gen_range(0..pool.envelopes.len());
        let env = pool.envelopes.swap_remove(k);
        if cfg.record_deliveries {
            deliveries.push(env);
        }
        if let Some(st) = states[env.to.index()].as_mut() {
            let d = st.deliver(env.msg, env.from, zs, cfg.policy);
            if d.malformed {
                malformed += 1;
            }
            for (source, payload) in d.accepted {
                acceptances.push(Acceptance {
                    step,
                    node: env.to,
                    source,
                    payload,
                });
            }
            for msg in d.out {
                pool.broadcast(env.to, msg);
            }
        }
        step += 1;
    }

    Ok(Trace {
        seed: cfg.seed,
        deliveries,
        acceptances,
        states,
        m0,
        byz_truth: scripts
            .iter()
            .filter_map(|s| s.true_value.map(|v| (s.node, v)))
            .collect(),
        sent: pool.sent,
        injected,
        malformed,
        steps: step,
    })
}

/// Standard and authorization envelopes sent during the run.
pub fn message_counts(trace: &Trace) -> MessageCounts {
    trace.sent
}

/// Acceptances of false messages by nodes of `claimed_safe`.
pub fn check_safety(trace: &Trace, claimed_safe: &NodeSet) -> Vec<SafetyViolation> {
    trace
        .acceptances
        .iter()
        .filter(|a| claimed_safe.contains(a.node) && trace.is_false(a.source, a.payload))
        .map(|a| SafetyViolation {
            step: a.step,
            node: a.node,
            source: a.source,
            payload: a.payload,
        })
        .collect()
}

/// Pairs `(p, q)` of `members` where `q` never accepted `(p, p.m0)`.
pub fn missing_deliveries(trace: &Trace, members: &NodeSet) -> Vec<(NodeId, NodeId)> {
    let mut missing = Vec::new();
    for p in members.iter() {
        for q in members.iter() {
            if !trace.delivered(p, q) {
                missing.push((p, q));
            }
        }
    }
    missing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zones::square_zone;

    fn no_byz(t: &Topology) -> NodeSet {
        NodeSet::new(t.len())
    }

    #[test]
    fn liveness_on_small_torus() {
        let t = Topology::torus(4).unwrap();
        let zs = ZoneSet::order(&t, 1).unwrap();
        let tr = run(&t, &zs, &no_byz(&t), &[], 1).unwrap();
        for st in tr.states.iter().flatten() {
            assert_eq!(st.accepted_count(), 16);
        }
        assert!(missing_deliveries(&tr, &NodeSet::full(16)).is_empty());
        assert_eq!(tr.deliveries.len() as u64, tr.steps);
    }

    #[test]
    fn seeds_change_order_not_outcome() {
        let t = Topology::torus(4).unwrap();
        let zs = ZoneSet::order(&t, 1).unwrap();
        let a = run(&t, &zs, &no_byz(&t), &[], 1).unwrap();
        let b = run(&t, &zs, &no_byz(&t), &[], 2).unwrap();
        assert_ne!(a.deliveries, b.deliveries);
        for p in t.nodes() {
            assert_eq!(a.state(p).unwrap().accepted(), b.state(p).unwrap().accepted());
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let t = Topology::torus(5).unwrap();
        let zs = ZoneSet::order(&t, 2).unwrap();
        let byz = NodeSet::from_nodes(25, [t.node_at(3, 3).unwrap()]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scripts = default_scripts(&t, &zs, &byz, &mut rng);
        let a = run(&t, &zs, &byz, &scripts, 77).unwrap();
        let b = run(&t, &zs, &byz, &scripts, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn counters_match_log() {
        let t = Topology::torus(6).unwrap();
        let zs = ZoneSet::order(&t, 2).unwrap();
        let tr = run(&t, &zs, &no_byz(&t), &[], 3).unwrap();
        let auth = tr.deliveries.iter().filter(|e| e.msg.is_auth()).count() as u64;
        assert_eq!(tr.sent.auth, auth);
        assert_eq!(tr.sent.standard, tr.deliveries.len() as u64 - auth);
    }

    #[test]
    fn exact_counts_ten_torus_order_one() {
        let t = Topology::torus(10).unwrap();
        let zs = ZoneSet::order(&t, 1).unwrap();
        let tr = run_with(&t, &zs, &no_byz(&t), &[], &SimConfig::summary(5)).unwrap();
        let c = message_counts(&tr);
        assert_eq!(c.standard, 40_000);
        assert_eq!(c.auth, 320_000);
    }

    #[test]
    fn isolated_node_sends_nothing() {
        let t = Topology::from_edges(1, &[]).unwrap();
        let zs = ZoneSet::empty(&t);
        let tr = run(&t, &zs, &no_byz(&t), &[], 0).unwrap();
        assert_eq!(message_counts(&tr), MessageCounts::default());
    }

    #[test]
    fn verbatim_diff_reaches_same_states_with_more_traffic() {
        let t = Topology::torus(6).unwrap();
        let zs = ZoneSet::order(&t, 1).unwrap();
        let byz = NodeSet::from_nodes(36, [t.node_at(2, 2).unwrap()]);
        let victim = t.node_at(5, 5).unwrap();
        let scripts = [ByzantineScript::forging(&zs, t.node_at(2, 2).unwrap(), victim, Payload(999))];
        let border = run(&t, &zs, &byz, &scripts, 4).unwrap();
        let mut cfg = SimConfig::new(4);
        cfg.policy = DiffPolicy::Verbatim;
        let verbatim = run_with(&t, &zs, &byz, &scripts, &cfg).unwrap();
        for p in t.nodes() {
            assert_eq!(
                border.state(p).map(NodeState::accepted),
                verbatim.state(p).map(NodeState::accepted)
            );
        }
        assert!(verbatim.sent.auth > border.sent.auth);
        assert_eq!(verbatim.sent.standard, border.sent.standard);
    }

    #[test]
    fn script_on_correct_node_rejected() {
        let t = Topology::torus(4).unwrap();
        let zs = ZoneSet::empty(&t);
        let err = run(&t, &zs, &no_byz(&t), &[ByzantineScript::silent(NodeId(0))], 0);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn forger_inside_core_is_contained() {
        // Width-1 zone centered on the Byzantine node; the forged claim
        // about an outside node never gets authorized to leave.
        let t = Topology::torus(8).unwrap();
        let b = t.node_at(4, 4).unwrap();
        let zs = ZoneSet::new(&t, vec![square_zone(&t, 3, 3, 1).unwrap()]).unwrap();
        let byz = NodeSet::from_nodes(64, [b]);
        let victim = t.node_at(8, 8).unwrap();
        let mut script = ByzantineScript::silent(b);
        script.actions.push(Injection {
            msg: Message::standard(victim, Payload(12345)),
            repeat: 3,
            at_step: 10,
        });
        for seed in 0..20 {
            let tr = run(&t, &zs, &byz, &[script.clone()], seed).unwrap();
            let everyone_else = NodeSet::from_nodes(64, t.nodes().filter(|&p| p != b));
            assert!(check_safety(&tr, &everyone_else).is_empty());
            assert_eq!(tr.injected, 12);
        }
    }

    #[test]
    fn unprotected_neighbor_accepts_forgery() {
        // No zones at all: the forger's neighbor is deceived.
        let t = Topology::grid(3).unwrap();
        let zs = ZoneSet::empty(&t);
        let b = t.node_at(1, 1).unwrap();
        let byz = NodeSet::from_nodes(9, [b]);
        let victim = t.node_at(3, 3).unwrap();
        let script = ByzantineScript::forging(&zs, b, victim, Payload(4242));
        let tr = run(&t, &zs, &byz, &[script], 0).unwrap();
        let neighbor = NodeSet::from_nodes(9, [t.node_at(1, 2).unwrap()]);
        let v = check_safety(&tr, &neighbor);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].payload, Payload(4242));
        assert!(check_safety(&tr, &NodeSet::new(9)).is_empty());
    }

    #[test]
    fn byzantine_source_audited_only_when_declared() {
        let t = Topology::grid(3).unwrap();
        let zs = ZoneSet::empty(&t);
        let b = t.node_at(2, 2).unwrap();
        let byz = NodeSet::from_nodes(9, [b]);
        let mut script = ByzantineScript::silent(b);
        script.actions.push(Injection::now(Message::standard(b, Payload(7))));
        let everyone = NodeSet::full(9);
        let tr = run(&t, &zs, &byz, &[script.clone()], 0).unwrap();
        assert!(check_safety(&tr, &everyone).is_empty());
        script.true_value = Some(Payload(8));
        let tr = run(&t, &zs, &byz, &[script], 0).unwrap();
        assert_eq!(check_safety(&tr, &everyone).len(), 8);
    }

    #[test]
    fn delayed_injection_fast_forwards() {
        let t = Topology::grid(2).unwrap();
        let zs = ZoneSet::empty(&t);
        let b = NodeId(0);
        let byz = NodeSet::from_nodes(4, [b]);
        let mut script = ByzantineScript::silent(b);
        script.actions.push(Injection {
            msg: Message::standard(NodeId(3), Payload(50)),
            repeat: 1,
            at_step: 1_000,
        });
        let tr = run(&t, &zs, &byz, &[script], 0).unwrap();
        assert!(tr.steps > 1_000);
        assert!(tr.acceptances.iter().any(|a| a.payload == Payload(50)));
    }

    #[test]
    fn ndjson_export() {
        let t = Topology::torus(3).unwrap();
        let zs = ZoneSet::order(&t, 1).unwrap();
        let tr = run(&t, &zs, &no_byz(&t), &[], 0).unwrap();
        let mut buf = Vec::new();
        tr.write_ndjson(&t, &zs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let accepts = lines.iter().filter(|v| v["kind"] == "accept").count();
        assert_eq!(accepts, tr.acceptances.len());
        assert_eq!(lines.len(), tr.deliveries.len() + accepts);
        let first = &lines[0];
        assert!(first["from"].is_array() && first["s"].is_array());
        assert!(lines.iter().any(|v| v["kind"] == "auth" && v["z"].is_u64()));
    }
}
