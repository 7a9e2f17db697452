mod common;

use std::collections::BTreeMap;

use pcnroute::fluid::{DemandMatrix, FluidSolution};
use pcnroute::ledger::{ChannelState, ServiceTiming};
use pcnroute::policy::{
    route_exact, route_fluid, route_waterfilling, Fate, FluidRouting, PolicyError, PolicyParams, Thresholds,
};
use pcnroute::topology::{NodeId, Path, PaymentGraph};
use pcnroute::workload::Transaction;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    g: PaymentGraph,
    state: ChannelState,
    txs: Vec<Transaction>,
}

/// Random graph, queues and one transaction per sampled ordered pair.
fn instance(seed: u64, max_q: u64, max_amount: u64) -> Instance {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.random_range(3..=6);
    let m = r.random_range(n - 1..=n * (n - 1) / 2);
    let g = common::random_graph(n, m, 4, &mut r);
    let q = (0..g.edge_count()).map(|_| r.random_range(0..=max_q)).collect();
    let state = ChannelState::from_queues(&g, q).unwrap();
    let mut txs = Vec::new();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i != j && r.random_bool(0.4) {
                txs.push(Transaction { src: NodeId(i), dst: NodeId(j), amount: r.random_range(1..=max_amount) });
            }
        }
    }
    Instance { g, state, txs }
}

/// `q - q' + δ/(2αc)(q + q')` summed along the vertex sequence.
fn oracle_weight(inst: &Instance, nodes: &[NodeId], delta: f64, alpha: f64) -> f64 {
    let mut total = 0.0;
    for w in nodes.windows(2) {
        let e = inst.g.edge_between(w[0], w[1]).unwrap();
        let (q, qr) = (inst.state.queue(e) as f64, inst.state.queue(e.reverse()) as f64);
        let c = inst.g.capacity(e) as f64;
        total += (q - qr) + delta / (2.0 * alpha * c) * (q + qr);
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exact_routes_every_pair_on_its_lightest_path(seed in any::<u64>(), delta in 0.01f64..1.0, alpha in 1.01f64..5.0) {
        let inst = instance(seed, 8, 3);
        let params = PolicyParams { m: inst.g.c_max() + 1, delta, alpha, ..PolicyParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dec = route_exact(&inst.g, &inst.state, &inst.txs, &params, &mut rng).unwrap();
        let mut expect: BTreeMap<Vec<NodeId>, u64> = BTreeMap::new();
        for tx in &inst.txs {
            let mut paths = common::brute_paths(&inst.g, tx.src, tx.dst, inst.g.node_count() - 1);
            paths.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
            let weights: Vec<f64> = paths.iter().map(|p| oracle_weight(&inst, p, delta, alpha)).collect();
            let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
            // earliest path in path order among the minimisers
            let best = weights.iter().position(|&w| w <= min + 1e-9).unwrap();
            *expect.entry(paths[best].clone()).or_default() += tx.amount;
        }
        let got: BTreeMap<Vec<NodeId>, u64> = dec.x.iter().map(|(p, &a)| (p.nodes().to_vec(), a)).collect();
        prop_assert_eq!(got, expect);
        prop_assert!(dec.outcomes.iter().all(|o| o.fate == Fate::OffChain));
        for (&e, &r) in &dec.r {
            prop_assert!(inst.state.queue(e) > params.m);
            prop_assert!(r >= 1);
        }
    }

    #[test]
    fn waterfilling_commits_whole_transactions(seed in any::<u64>(), drop in any::<bool>()) {
        let inst = instance(seed, 4, 6);
        let params = PolicyParams { delta: 0.5, drop_onchain: drop, ..PolicyParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dec = route_waterfilling(&inst.g, &inst.state, &inst.txs, &params, &mut rng).unwrap();
        let mut routed: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
        for (p, &a) in &dec.x {
            *routed.entry((p.source(), p.destination())).or_default() += a;
        }
        prop_assert_eq!(dec.outcomes.len(), inst.txs.len());
        for o in &dec.outcomes {
            let got = routed.get(&(o.src, o.dst)).copied().unwrap_or(0);
            match o.fate {
                Fate::OffChain => prop_assert_eq!(got, o.amount),
                Fate::OnChain => { prop_assert!(!drop); prop_assert_eq!(got, 0); }
                Fate::Rejected => prop_assert_eq!(got, 0),
            }
        }
        // committed flow never pushes a used edge past its capacity threshold
        let mut after = inst.state.clone();
        after.step(&inst.g, &dec.to_flows(&inst.g), ServiceTiming::PostArrival).unwrap();
        for p in dec.x.keys() {
            for &e in p.edges() {
                prop_assert!(after.queue(e) <= inst.g.capacity(e));
            }
        }
    }

    #[test]
    fn same_seed_gives_same_decision(seed in any::<u64>()) {
        let inst = instance(seed, 12, 3);
        let params = PolicyParams { m: inst.g.c_max() + 1, delta: 0.5, ..PolicyParams::default() };
        let a = route_exact(&inst.g, &inst.state, &inst.txs, &params, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = route_exact(&inst.g, &inst.state, &inst.txs, &params, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn fluid_fixture(rates: &[f64], lambda: f64) -> (PaymentGraph, DemandMatrix, FluidSolution, Vec<Path>) {
    let g = PaymentGraph::build(&[("A", "B", 5), ("B", "C", 5), ("A", "C", 5)]).unwrap();
    let n = |s: &str| g.node(s).unwrap();
    let paths = vec![
        Path::from_nodes(&g, vec![n("A"), n("C")]).unwrap(),
        Path::from_nodes(&g, vec![n("A"), n("B"), n("C")]).unwrap(),
    ];
    let mut demand = DemandMatrix::new();
    demand.insert_poisson(n("A"), n("C"), lambda).unwrap();
    let sol = FluidSolution {
        x: paths.iter().cloned().zip(rates.iter().copied()).collect(),
        mu: vec![0.0; g.edge_count()],
        beta: vec![0.0; g.edge_count()],
        objective: rates.iter().sum(),
        dual_objective: rates.iter().sum(),
        averaged_objective: rates.iter().sum(),
        averaged_residual: 0.0,
        converged: true,
        iterations: 0,
        polished: false,
        max_hops: 2,
    };
    (g, demand, sol, paths)
}

#[test]
fn fluid_splits_in_proportion_to_rates() {
    let (g, demand, sol, paths) = fluid_fixture(&[0.5, 0.5], 1.0);
    let routing = FluidRouting::new(&sol, &demand);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 10_000;
    let direct = (0..draws).filter(|_| routing.sample(paths[0].source(), paths[0].destination(), &mut rng) == Some(&paths[0])).count();
    let share = direct as f64 / draws as f64;
    assert!((share - 0.5).abs() <= 0.02, "direct share {share}");
    assert_eq!(g.name(paths[0].source()), "A");
}

#[test]
fn fluid_rejects_the_residual_mass() {
    let (g, demand, sol, _) = fluid_fixture(&[0.3, 0.3], 1.0);
    let routing = FluidRouting::new(&sol, &demand);
    let (a, c) = (g.node("A").unwrap(), g.node("C").unwrap());
    let state = ChannelState::new(&g);
    let txs = vec![Transaction { src: a, dst: c, amount: 1 }; 10_000];
    let params = PolicyParams { m: 10_000, thresholds: Some(Thresholds::Uniform), drop_onchain: true, ..PolicyParams::default() };
    let dec = route_fluid(&g, &state, &txs, Some(&routing), &params, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let rejected = dec.outcomes.iter().filter(|o| o.fate == Fate::Rejected).count() as f64 / txs.len() as f64;
    assert!((rejected - 0.4).abs() <= 0.02, "rejected share {rejected}");
}

#[test]
fn fluid_policy_requires_a_solution() {
    let (g, _, _, _) = fluid_fixture(&[0.5, 0.5], 1.0);
    let err = route_fluid(&g, &ChannelState::new(&g), &[], None, &PolicyParams::default(), &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(err.unwrap_err(), PolicyError::MissingFluidSolution);
}
