use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zonecast::analysis::{
    analyze, build_communicating_set, build_communicating_set_shuffled, exhaustive_safe_cover,
    find_safe_cover, reliable_set, Exhaustive, GrowthRule, DEFAULT_BUDGET,
};
use zonecast::cli::parse_byz_list;
use zonecast::eval::{complexity_bound, estimate, ExperimentConfig, Method, Network};
use zonecast::sim::{check_safety, default_scripts, missing_deliveries, run_with, SimConfig};
use zonecast::{NodeId, NodeSet, Topology, TopologyKind, ZoneSet};

fn kind() -> impl Strategy<Value = TopologyKind> {
    prop_oneof![Just(TopologyKind::Torus), Just(TopologyKind::Grid)]
}

/// Topology, zone order and a Byzantine placement on it.
fn scenario(sides: std::ops::RangeInclusive<u32>, orders: std::ops::RangeInclusive<u32>, max_byz: usize)
    -> impl Strategy<Value = (Topology, ZoneSet, NodeSet)> {
    (kind(), sides, orders).prop_flat_map(move |(k, side, w)| {
        let n = (side * side) as usize;
        proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 0..=max_byz).prop_map(move |picks| {
            let topo = Topology::build(k, side).unwrap();
            let zs = ZoneSet::order(&topo, w).unwrap();
            let byz = NodeSet::from_nodes(n, picks.into_iter().map(NodeId::from_index));
            (topo, zs, byz)
        })
    })
}

fn first_correct(topo: &Topology, byz: &NodeSet) -> NodeId {
    topo.nodes().find(|&p| !byz.contains(p)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn neighbor_relation_is_symmetric(k in kind(), side in 3u32..12) {
        let t = Topology::build(k, side).unwrap();
        for p in t.nodes() {
            prop_assert!(!t.neighbors(p).contains(&p));
            for &q in t.neighbors(p) {
                prop_assert!(t.neighbors(q).contains(&p));
            }
        }
    }

    #[test]
    fn heuristic_cover_is_valid_and_agrees_with_exhaustive((topo, zs, byz) in scenario(5..=9, 1..=2, 4)) {
        let heuristic = find_safe_cover(&topo, &zs, &byz, DEFAULT_BUDGET);
        if let Some(c) = &heuristic {
            prop_assert!(c.is_valid_for(&byz));
        }
        match exhaustive_safe_cover(&topo, &zs, &byz, 1 << 22) {
            Exhaustive::Found(c) => prop_assert!(c.is_valid_for(&byz)),
            // a heuristic cover would contradict a proof of absence
            Exhaustive::NoCover => prop_assert!(heuristic.is_none()),
            Exhaustive::Inconclusive { .. } => {}
        }
    }

    #[test]
    fn reliable_is_safe_and_communicating((topo, zs, byz) in scenario(5..=9, 1..=2, 5)) {
        let origin = first_correct(&topo, &byz);
        let r = analyze(&topo, &zs, &byz, origin, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(&r.reliable, &reliable_set(&r.safe, &r.communicating));
        prop_assert!(r.reliable.is_subset(&r.safe));
        prop_assert!(r.reliable.is_subset(&r.communicating));
        prop_assert!(r.communicating.is_disjoint(&byz));
        prop_assert!(r.communicating.contains(origin));
        prop_assert!(r.safe.is_disjoint(&byz));
        if r.cover.is_none() {
            prop_assert!(r.safe.is_empty());
        }
    }

    #[test]
    fn sound_growth_ignores_admission_order(
        (topo, zs, byz) in scenario(5..=8, 1..=2, 5),
        shuffle_seed in any::<u64>(),
    ) {
        let origin = first_correct(&topo, &byz);
        let fifo = build_communicating_set(&topo, &zs, &byz, origin).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let shuffled =
            build_communicating_set_shuffled(&topo, &zs, &byz, origin, GrowthRule::Sound, &mut rng).unwrap();
        prop_assert_eq!(fifo, shuffled);
    }

    #[test]
    fn byz_list_round_trips(counts in proptest::collection::vec(0usize..500, 1..12)) {
        let text = counts.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        prop_assert_eq!(parse_byz_list(&text).unwrap(), counts);
    }

    #[test]
    fn byz_range_matches_step_by(lo in 0usize..50, len in 1usize..40, step in 1usize..7) {
        let hi = lo + len - 1;
        let want: Vec<usize> = (lo..=hi).step_by(step).collect();
        prop_assert_eq!(parse_byz_list(&format!("{lo}..={hi}:{step}")).unwrap(), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // The analysis claims hold against scripted Byzantine traffic, and the
    // total stays under the message ceiling.
    #[test]
    fn simulation_respects_analysis((topo, zs, byz) in scenario(5..=6, 1..=1, 2), seed in any::<u64>()) {
        let origin = first_correct(&topo, &byz);
        let r = analyze(&topo, &zs, &byz, origin, DEFAULT_BUDGET).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scripts = default_scripts(&topo, &zs, &byz, &mut rng);
        let trace = run_with(&topo, &zs, &byz, &scripts, &SimConfig::summary(seed)).unwrap();
        prop_assert!(missing_deliveries(&trace, &r.reliable).is_empty());
        prop_assert!(check_safety(&trace, &r.safe).is_empty());
        let correct = trace.sent.total() - trace.injected;
        let bound = complexity_bound(
            topo.len() as u64,
            topo.max_degree() as u64,
            zs.len() as u64,
            zs.max_border_len() as u64,
        );
        prop_assert!(correct as u128 <= bound);
    }

    #[test]
    fn pair_success_needs_a_cover(side in 8u32..12, n_byz in 0usize..12, seed in any::<u64>()) {
        let cfg = ExperimentConfig::new(TopologyKind::Torus, side, Method::Zones(2), n_byz, 30, seed);
        let net = Network::build(cfg.topology, cfg.side, cfg.method).unwrap();
        let e = estimate(&net, &cfg).unwrap();
        let p_exists = e.p_exists.unwrap();
        prop_assert!(e.p_hat <= p_exists);
        prop_assert!((0.0..=1.0).contains(&e.p_hat));
        prop_assert_eq!(e.mean_reliable_frac.is_some(), p_exists > 0.0);
    }
}
