//! Cross-module invariants checked against independent oracles: graph
//! reachability by plain DFS, valley-free deliveries by a path-shape
//! validator, solver output by a standalone constraint evaluator, and
//! schedule/defense behavior by property tests over randomized inputs.

use std::collections::BTreeSet;

use proptest::prelude::*;

use kirinlab_core::cones::{
    customer_cones, provider_funnels, restricted_fd, smfd_matrix, SmfdMatrix,
};
use kirinlab_core::deagg::{
    build_schedule, can_aggregate, count_subroutes, enumerate_subprefixes, verify_schedule,
    Aggregation, Ipv6Prefix, RouteAction, RouteEvent, SessionSpec,
};
use kirinlab_core::defense::{
    evaluate, DefenseConfig, LimitMode, PerBlockLimit, PerSessionLimit,
};
use kirinlab_core::ilp::{
    branch_and_bound_solve, brute_force_solve, build_peering_model, build_transit_model, Status,
    DEFAULT_BIG_M,
};
use kirinlab_core::propagation::{
    simulate, Injection, InjectionVia, SimulationConfig,
};
use kirinlab_core::rib::{route_size_lower_bound, RibSim, RouterProfile, Shedding};
use kirinlab_core::topology::{Asn, AsTopology, LanId, Relationship, SessionMatrix};

/// Random provider-to-customer DAG plus peer edges: provider indexes are
/// always lower than customer indexes, so no cycles.
fn arb_topology(max_nodes: usize) -> impl Strategy<Value = AsTopology> {
    (2..max_nodes).prop_flat_map(|n| {
        let pairs = (n * (n - 1)) / 2;
        proptest::collection::vec(0u8..3, pairs).prop_map(move |labels| {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    match labels[k] {
                        1 => edges.push((
                            Asn(i as u32 + 1),
                            Asn(j as u32 + 1),
                            Relationship::ProviderToCustomer,
                        )),
                        2 => edges.push((
                            Asn(i as u32 + 1),
                            Asn(j as u32 + 1),
                            Relationship::PeerToPeer,
                        )),
                        _ => {}
                    }
                    k += 1;
                }
            }
            AsTopology::from_edges(edges).expect("generated edges are consistent")
        })
    })
}

/// Reachability over provider-to-customer edges by plain DFS.
fn dfs_cone(topology: &AsTopology, owner: Asn) -> BTreeSet<Asn> {
    let mut seen = BTreeSet::from([owner]);
    let mut stack = vec![owner];
    while let Some(a) = stack.pop() {
        for &c in topology.customers_of(a) {
            if seen.insert(c) {
                stack.push(c);
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topology_round_trips_through_text(topology in arb_topology(10)) {
        let reloaded = AsTopology::load_relationships(&topology.to_relationship_lines()).unwrap();
        prop_assert_eq!(topology, reloaded);
    }

    #[test]
    fn relationships_are_antisymmetric(topology in arb_topology(10)) {
        for &(p, c) in topology.p2c_edges() {
            prop_assert!(!topology.p2c_edges().contains(&(c, p)));
            prop_assert!(!topology.p2p_edges().contains(&(p.min(c), p.max(c))));
        }
    }

    #[test]
    fn cones_match_dfs_reachability(topology in arb_topology(12)) {
        let cones = customer_cones(&topology);
        for &asn in topology.ases() {
            prop_assert_eq!(&cones.cone(asn).unwrap().members, &dfs_cone(&topology, asn));
        }
    }

    #[test]
    fn funnel_duality_holds(topology in arb_topology(12)) {
        let cones = customer_cones(&topology);
        let funnels = provider_funnels(&cones);
        for &a in topology.ases() {
            for &t in topology.ases() {
                let in_cone = cones.cone(a).unwrap().members.contains(&t);
                let in_funnel = funnels[&t].members.contains(&a);
                prop_assert_eq!(in_cone, in_funnel, "a={} t={}", a, t);
            }
        }
    }

    #[test]
    fn restricted_fd_is_bounded(topology in arb_topology(12), subset_bits in any::<u16>()) {
        let cones = customer_cones(&topology);
        let funnels = provider_funnels(&cones);
        let all: Vec<Asn> = topology.ases().iter().copied().collect();
        let subset: BTreeSet<Asn> = all
            .iter()
            .enumerate()
            .filter(|(i, _)| subset_bits & (1 << (i % 16)) != 0)
            .map(|(_, a)| *a)
            .collect();
        for funnel in funnels.values() {
            let fd = funnel.degree();
            prop_assert!(fd >= 1);
            let restricted = restricted_fd(funnel, &subset);
            prop_assert!(restricted <= fd.min(subset.len() as u64));
        }
    }

    #[test]
    fn smfd_grows_with_the_injection_set(topology in arb_topology(10), seed in any::<u64>()) {
        let ases: Vec<Asn> = topology.ases().iter().copied().collect();
        let sessions = SessionMatrix::from_entries(ases.iter().enumerate().map(|(i, &a)| {
            (a, LanId::from(if i % 2 == 0 { "L1" } else { "L2" }), (seed % 5) + 1)
        }));
        let cones = customer_cones(&topology);
        let funnels = provider_funnels(&cones);
        let small: BTreeSet<Asn> = ases.iter().take(ases.len() / 2).copied().collect();
        let large: BTreeSet<Asn> = ases.iter().copied().collect();
        let (f_small, _) = smfd_matrix(&funnels, &sessions, &small);
        let (f_large, _) = smfd_matrix(&funnels, &sessions, &large);
        for &a in &ases {
            for l in sessions.lan_ids() {
                prop_assert!(f_small.value(a, l) <= f_large.value(a, l));
            }
        }
    }
}

#[test]
fn session_matrix_total_equals_distinct_triplets() {
    // 24k synthetic triplets across 725 LANs, with planted duplicates.
    let mut csv = String::from("lan_id,asn,ipv6_address\n");
    let mut distinct = 0u64;
    for lan in 0..725 {
        let members = if lan % 3 == 0 { 34 } else { 33 };
        for m in 0..members {
            let line = format!("LAN{lan:03},{},2001:db8:{lan:x}::{:x}\n", 100 + (m % 40), m + 1);
            csv.push_str(&line);
            if lan % 10 == 0 && m % 7 == 0 {
                csv.push_str(&line); // duplicate triplet
            }
            distinct += 1;
        }
    }
    let lans = kirinlab_core::topology::load_peering_lans(&csv).unwrap();
    assert_eq!(lans.len(), 725);
    let total_members: usize = lans.iter().map(|l| l.members.len()).sum();
    assert_eq!(total_members as u64, distinct);
    let matrix = SessionMatrix::build(&lans);
    assert_eq!(matrix.total(), distinct);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn built_schedules_always_verify(
        parent_len in 40u8..=46,
        n_sessions in 1usize..6,
        limit in 0usize..40,
        extra in 0usize..40,
    ) {
        let parent = Ipv6Prefix::from_raw(0x2001_0db8u128 << 96, parent_len).unwrap();
        let mut sessions: Vec<SessionSpec> = (0..n_sessions)
            .map(|i| SessionSpec { id: format!("s{i}"), limit })
            .collect();
        sessions[0].limit += extra;
        if sessions.iter().all(|s| s.limit == 0) {
            return Ok(());
        }
        let schedule = build_schedule(parent, &sessions, &[Asn(65001), Asn(65002)], 48).unwrap();
        let report = verify_schedule(&schedule);
        prop_assert!(report.ok, "{:?}", report.violations);
        // Non-aggregatability, pairwise per session.
        for a in schedule.assignments.values() {
            for (i, p) in a.prefixes.iter().enumerate() {
                for q in &a.prefixes[i + 1..] {
                    prop_assert_eq!(can_aggregate(*p, *q), Aggregation::None);
                }
            }
        }
    }

    #[test]
    fn enumeration_count_matches_formula(parent_len in 16u8..=48, span in 0u8..=8) {
        let max_len = (parent_len + span).min(48).max(parent_len);
        let parent = Ipv6Prefix::from_raw(0x2a10_0000u128 << 96, parent_len).unwrap();
        let count = count_subroutes(parent, max_len).unwrap();
        let mut n = 0u128;
        for p in enumerate_subprefixes(parent, max_len).unwrap() {
            prop_assert!(parent.contains(&p));
            n += 1;
        }
        prop_assert_eq!(n, count);
    }
}

/// Standalone constraint evaluator, independent of the solver internals.
fn independently_feasible(model: &kirinlab_core::ilp::IlpModel, assignment: &[bool]) -> bool {
    model.constraints().iter().all(|con| {
        let lhs: i64 = con
            .terms
            .iter()
            .map(|&(v, c)| if assignment[v] { c } else { 0 })
            .sum();
        match con.cmp {
            kirinlab_core::ilp::Cmp::Le => lhs <= con.rhs,
            kirinlab_core::ilp::Cmp::Ge => lhs >= con.rhs,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solver_outputs_satisfy_all_constraints(
        weights in proptest::collection::vec(0u64..6, 9),
        l_max in 0u64..4,
        p_max in 0u64..4,
        n in 0u64..4,
        r in 1u64..4,
    ) {
        let entries: Vec<(Asn, LanId, u64)> = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (Asn((i / 3) as u32 + 1), LanId::from(format!("L{}", i % 3).as_str()), w))
            .collect();
        let sessions = SessionMatrix::from_entries(entries.clone());
        let transit = build_transit_model(&sessions, l_max, p_max, DEFAULT_BIG_M).unwrap();
        let sol = branch_and_bound_solve(&transit, f64::INFINITY, &mut || 0.0);
        prop_assert_eq!(sol.status, Status::Optimal);
        prop_assert!(independently_feasible(&transit, &sol.assignment));
        prop_assert_eq!(transit.objective_value(&sol.assignment), sol.objective_value);

        let smfd = SmfdMatrix::from_entries(entries, BTreeSet::new());
        let peering = build_peering_model(&smfd, n, r);
        let sol = branch_and_bound_solve(&peering, f64::INFINITY, &mut || 0.0);
        if sol.status != Status::Infeasible {
            prop_assert!(independently_feasible(&peering, &sol.assignment));
            prop_assert_eq!(peering.objective_value(&sol.assignment), sol.objective_value);
        } else {
            prop_assert_eq!(brute_force_solve(&peering, 24).unwrap().status, Status::Infeasible);
        }
    }

    #[test]
    fn transit_objective_is_monotone_in_budgets(
        weights in proptest::collection::vec(0u64..6, 9),
    ) {
        let sessions = SessionMatrix::from_entries(weights.iter().enumerate().map(|(i, &w)| {
            (Asn((i / 3) as u32 + 1), LanId::from(format!("L{}", i % 3).as_str()), w)
        }));
        let mut prev_row = Vec::new();
        for l_max in 0..=3u64 {
            let mut row = Vec::new();
            for p_max in 0..=3u64 {
                let model = build_transit_model(&sessions, l_max, p_max, DEFAULT_BIG_M).unwrap();
                let sol = branch_and_bound_solve(&model, f64::INFINITY, &mut || 0.0);
                row.push(sol.objective_value);
                if p_max > 0 {
                    prop_assert!(row[p_max as usize] >= row[p_max as usize - 1]);
                }
            }
            if !prev_row.is_empty() {
                for (a, b) in prev_row.iter().zip(&row) {
                    prop_assert!(b >= a);
                }
            }
            prev_row = row;
        }
    }
}

fn nth_prefix(i: u64) -> Ipv6Prefix {
    Ipv6Prefix::from_raw((0x2a10_cc40u128 << 96) | (i as u128) << 80, 48).unwrap()
}

fn bare_announce(session: &str, prefix: Ipv6Prefix, ts: u64, origin: u32) -> RouteEvent {
    RouteEvent {
        timestamp_secs: ts,
        session_id: session.into(),
        action: RouteAction::Announce,
        prefix,
        path: vec![kirinlab_core::deagg::AsPathSegment::sequence(vec![Asn(origin)])],
        large_communities: Vec::new(),
        origin: Asn(origin),
        atomic_aggregate: false,
        aggregator: None,
    }
}

fn bare_withdraw(session: &str, prefix: Ipv6Prefix, ts: u64) -> RouteEvent {
    RouteEvent {
        timestamp_secs: ts,
        session_id: session.into(),
        action: RouteAction::Withdraw,
        prefix,
        path: Vec::new(),
        large_communities: Vec::new(),
        origin: Asn(1),
        atomic_aggregate: false,
        aggregator: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Session-hunting fidelity: spreading disjoint prefixes across enough
    /// sessions keeps every announcement under the per-session limit.
    #[test]
    fn per_session_limits_only_force_session_hunting(
        limit in 1u64..20,
        k in 1u64..12,
        total in 1u64..200,
        mode_drop in any::<bool>(),
    ) {
        let mode = if mode_drop { LimitMode::Drop } else { LimitMode::Cap };
        let config = DefenseConfig {
            per_session: Some(PerSessionLimit { limit, mode }),
            ..DefenseConfig::default()
        };
        // The attacker respects the limit: at most `limit` per session.
        let sent = total.min(k * limit);
        let events: Vec<RouteEvent> = (0..sent)
            .map(|i| bare_announce(&format!("s{}", i % k), nth_prefix(i), i, 65001))
            .collect();
        let (_, stats) = evaluate(events, &config).unwrap();
        prop_assert_eq!(stats.accepted_routes, sent);
        prop_assert_eq!(stats.sessions_dropped, 0);
    }

    /// With capping, overfeeding caps the total at sessions times limit.
    #[test]
    fn cap_mode_total_is_min_of_total_and_k_times_limit(
        limit in 1u64..15,
        k in 1u64..8,
        total in 1u64..300,
    ) {
        let config = DefenseConfig {
            per_session: Some(PerSessionLimit { limit, mode: LimitMode::Cap }),
            ..DefenseConfig::default()
        };
        let events: Vec<RouteEvent> = (0..total)
            .map(|i| bare_announce(&format!("s{}", i % k), nth_prefix(i), i, 65001))
            .collect();
        let (_, stats) = evaluate(events, &config).unwrap();
        prop_assert_eq!(stats.accepted_routes, total.min(k * limit));
    }

    /// Per-block soundness: the distinct accepted prefixes inside any /29
    /// never exceed the cap, at any point in a random announce/withdraw
    /// stream.
    #[test]
    fn per_block_cap_is_never_exceeded(
        ops in proptest::collection::vec((any::<bool>(), 0u64..60, 0u64..5, 1u32..4), 1..400),
        cap in 1u64..8,
    ) {
        let config = DefenseConfig {
            per_block: Some(PerBlockLimit { block_len: 29, limit: cap }),
            ..DefenseConfig::default()
        };
        let mut shadow: std::collections::BTreeMap<Ipv6Prefix, std::collections::BTreeMap<Ipv6Prefix, u32>> =
            Default::default();
        let mut pipeline = kirinlab_core::defense::DefensePipeline::new(config);
        let mut sessions_held: std::collections::BTreeMap<(u32, Ipv6Prefix), ()> = Default::default();
        for (ts, (announce, pfx_idx, _origin_idx, session)) in ops.iter().enumerate() {
            let prefix = nth_prefix(*pfx_idx);
            let block = prefix.truncate(29).unwrap();
            let sid = format!("s{session}");
            let ev = if *announce {
                bare_announce(&sid, prefix, ts as u64, 65001)
            } else {
                bare_withdraw(&sid, prefix, ts as u64)
            };
            let decision = pipeline.push(&ev).unwrap();
            // Shadow bookkeeping from decisions alone.
            match (ev.action, decision.verdict.admits()) {
                (RouteAction::Announce, true) => {
                    if sessions_held.insert((*session, prefix), ()).is_none() {
                        *shadow.entry(block).or_default().entry(prefix).or_insert(0) += 1;
                    }
                }
                (RouteAction::Withdraw, _) => {
                    if sessions_held.remove(&(*session, prefix)).is_some() {
                        if let Some(m) = shadow.get_mut(&block) {
                            if let Some(c) = m.get_mut(&prefix) {
                                *c -= 1;
                                if *c == 0 { m.remove(&prefix); }
                            }
                        }
                    }
                }
                _ => {}
            }
            for prefixes in shadow.values() {
                prop_assert!((prefixes.len() as u64) <= cap);
            }
        }
    }

    /// Announce/withdraw pairs leave the RIB exactly where it started.
    #[test]
    fn rib_conservation(
        path_len in 1u64..255,
        comms in 0u64..255,
        baseline in 0u64..10_000,
    ) {
        let mut profile = RouterProfile::new("p", u64::MAX);
        profile.baseline_route_bytes = baseline;
        let mut sim = RibSim::new(profile, Shedding::None);
        let mut ev = bare_announce("s1", nth_prefix(0), 0, 42);
        ev.path = vec![kirinlab_core::deagg::AsPathSegment::sequence(
            (0..path_len).map(|i| Asn(i as u32 + 1)).collect(),
        )];
        ev.large_communities = (0..comms).map(|i| (1, i as u32, 2)).collect();
        sim.push(&ev).unwrap();
        prop_assert_eq!(
            sim.state().total_bytes,
            baseline + route_size_lower_bound(path_len, comms)
        );
        sim.push(&bare_withdraw("s1", nth_prefix(0), 1)).unwrap();
        prop_assert_eq!(sim.state().total_bytes, baseline);
    }
}

/// Path-shape oracle for valley-free deliveries: an AS is reachable from an
/// entry point iff some path of shape up*, one optional peer step, down*
/// leads to it (starting in the given phase).
fn valley_free_oracle(topology: &AsTopology, entry: Asn, entry_up: bool) -> BTreeSet<Asn> {
    #[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord)]
    enum Phase {
        Up,
        Down,
    }
    let mut seen: BTreeSet<(Asn, Phase)> = BTreeSet::new();
    let mut stack = vec![(entry, if entry_up { Phase::Up } else { Phase::Down })];
    while let Some((asn, phase)) = stack.pop() {
        if !seen.insert((asn, phase)) {
            continue;
        }
        if phase == Phase::Up {
            for &p in topology.providers_of(asn) {
                stack.push((p, Phase::Up));
            }
            for &p in topology.peers_of(asn) {
                stack.push((p, Phase::Down));
            }
        }
        for &c in topology.customers_of(asn) {
            stack.push((c, Phase::Down));
        }
    }
    seen.into_iter().map(|(a, _)| a).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulation_matches_the_path_shape_oracle(topology in arb_topology(12)) {
        let ases: Vec<Asn> = topology.ases().iter().copied().collect();
        for &entry in ases.iter().take(4) {
            let transit = simulate(
                &topology,
                &[Injection {
                    neighbor: entry,
                    via: InjectionVia::Transit,
                    session_id: "t".into(),
                    route_count: 1,
                }],
                &SimulationConfig::default(),
            )
            .unwrap();
            let reached: BTreeSet<Asn> = transit.per_as.keys().copied().collect();
            prop_assert_eq!(&reached, &valley_free_oracle(&topology, entry, true));

            let peer = simulate(
                &topology,
                &[Injection {
                    neighbor: entry,
                    via: InjectionVia::BilateralPeer,
                    session_id: "b".into(),
                    route_count: 1,
                }],
                &SimulationConfig::default(),
            )
            .unwrap();
            let reached: BTreeSet<Asn> = peer.per_as.keys().copied().collect();
            prop_assert_eq!(&reached, &valley_free_oracle(&topology, entry, false));
        }
    }

    /// On a topology where tier-1s form a peering clique and every AS sits
    /// in some tier-1 cone, a transit injection reaches every AS.
    #[test]
    fn transit_injections_propagate_globally_under_a_clique(
        fanout in 1usize..4,
        depth in 1usize..4,
        tier1s in 2usize..4,
    ) {
        let mut edges = Vec::new();
        for i in 0..tier1s {
            for j in (i + 1)..tier1s {
                edges.push((Asn(i as u32 + 1), Asn(j as u32 + 1), Relationship::PeerToPeer));
            }
        }
        // A provider chain tree under each tier-1.
        let mut next = tier1s as u32 + 1;
        for t in 0..tier1s {
            let mut frontier = vec![Asn(t as u32 + 1)];
            for _ in 0..depth {
                let mut new_frontier = Vec::new();
                for &p in &frontier {
                    for _ in 0..fanout {
                        let c = Asn(next);
                        next += 1;
                        edges.push((p, c, Relationship::ProviderToCustomer));
                        new_frontier.push(c);
                    }
                }
                frontier = new_frontier;
            }
        }
        let topology = AsTopology::from_edges(edges).unwrap();
        // Inject via a leaf's provider: pick the last AS's provider chain.
        let entry = *topology.ases().iter().last().unwrap();
        let report = simulate(
            &topology,
            &[Injection {
                neighbor: entry,
                via: InjectionVia::Transit,
                session_id: "t".into(),
                route_count: 1,
            }],
            &SimulationConfig::default(),
        )
        .unwrap();
        prop_assert_eq!(report.per_as.len(), topology.ases().len());
    }
}
