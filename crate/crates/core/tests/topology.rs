mod common;

use pcnroute::topology::{enumerate_paths, k_shortest_paths, EdgeId, NodeId, PathTable, PaymentGraph, TopologyError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph_strategy() -> impl Strategy<Value = PaymentGraph> {
    (3usize..=7, any::<u64>()).prop_map(|(n, seed)| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = r.random_range(n - 1..=n * (n - 1) / 2);
        common::random_graph(n, m, 5, &mut r)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_brute_force(g in graph_strategy(), a in 0u32..7, b in 0u32..7) {
        let n = g.node_count() as u32;
        let (i, j) = (NodeId(a % n), NodeId((a + 1 + b % (n - 1)) % n));
        let got = enumerate_paths(&g, i, j, g.node_count() - 1).unwrap();
        let mut expect = common::brute_paths(&g, i, j, g.node_count() - 1);
        // fewer hops first, then vertex sequence
        expect.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
        let got_nodes: Vec<Vec<NodeId>> = got.iter().map(|p| p.nodes().to_vec()).collect();
        prop_assert_eq!(got_nodes, expect);
    }

    #[test]
    fn hop_limit_keeps_short_paths_only(g in graph_strategy(), h in 1usize..4) {
        let (i, j) = (NodeId(0), NodeId(g.node_count() as u32 - 1));
        let expect = common::brute_paths(&g, i, j, h);
        if expect.is_empty() {
            prop_assert!(matches!(enumerate_paths(&g, i, j, h), Err(TopologyError::NoPathExists(..))));
            return Ok(());
        }
        let got = enumerate_paths(&g, i, j, h).unwrap();
        prop_assert_eq!(got.len(), expect.len());
        prop_assert!(got.iter().all(|p| p.hops() <= h));
    }

    #[test]
    fn path_table_caches_enumeration(g in graph_strategy()) {
        let mut table = PathTable::new(&g, None);
        let (i, j) = (NodeId(0), NodeId(1));
        let first = table.get(&g, i, j).unwrap();
        let second = table.get(&g, i, j).unwrap();
        prop_assert!(std::sync::Arc::ptr_eq(&first, &second));
        prop_assert_eq!(first.len(), common::brute_paths(&g, i, j, g.node_count() - 1).len());
    }
}

#[test]
fn k_shortest_matches_sorted_enumeration_on_random_graphs() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let g = common::random_graph(8, r.random_range(9..=16), 5, &mut r);
        let w: Vec<f64> = (0..g.edge_count()).map(|_| r.random_range(0.0..10.0)).collect();
        let weight = |e: EdgeId| w[e.index()];
        let (i, j) = (NodeId(0), NodeId(r.random_range(1..8)));
        let got = k_shortest_paths(&g, i, j, 5, weight).unwrap();
        let mut all: Vec<f64> = common::brute_paths(&g, i, j, 7)
            .iter()
            .map(|ns| ns.windows(2).map(|p| w[g.edge_between(p[0], p[1]).unwrap().index()]).sum())
            .collect();
        all.sort_by(f64::total_cmp);
        all.truncate(5);
        assert_eq!(got.len(), all.len());
        for ((p, reported), expect) in got.iter().zip(&all) {
            let cost: f64 = p.edges().iter().map(|&e| w[e.index()]).sum();
            assert!((cost - expect).abs() < 1e-9, "{cost} vs {expect}");
            assert!((cost - reported).abs() < 1e-9);
        }
        let mut distinct: Vec<Vec<NodeId>> = got.iter().map(|(p, _)| p.nodes().to_vec()).collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), got.len());
    }
}

#[test]
fn disconnected_edge_list_is_rejected() {
    let err = PaymentGraph::build(&[("A", "B", 5), ("C", "D", 5)]).unwrap_err();
    assert!(err.to_string().contains("disconnected"), "{err}");
}
