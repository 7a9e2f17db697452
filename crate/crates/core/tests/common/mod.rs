//! Helpers shared by the integration tests: random instances, an exact LP
//! oracle for the throughput program and independent constraint checks.

#![allow(dead_code)]

pub mod exact_lp;

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};
use pcnroute::fluid::DemandMatrix;
use pcnroute::topology::{EdgeId, NodeId, Path, PaymentGraph};
use rand::Rng;

/// Random connected graph on `n` vertices with `m` channels and capacities in `1..=cmax`.
pub fn random_graph<R: Rng>(n: usize, m: usize, cmax: i64, rng: &mut R) -> PaymentGraph {
    let mut present = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        present.insert((u, v));
        edges.push((u, v));
    }
    while edges.len() < m.min(n * (n - 1) / 2) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let (u, v) = (a.min(b), a.max(b));
        if u != v && present.insert((u, v)) {
            edges.push((u, v));
        }
    }
    let list: Vec<(String, String, i64)> =
        edges.into_iter().map(|(u, v)| (u.to_string(), v.to_string(), rng.random_range(1..=cmax))).collect();
    PaymentGraph::build(&list).unwrap()
}

/// All loopless vertex sequences from `i` to `j` with at most `max_hops`
/// edges, by plain recursion over adjacency lists.
pub fn brute_paths(g: &PaymentGraph, i: NodeId, j: NodeId, max_hops: usize) -> Vec<Vec<NodeId>> {
    fn go(g: &PaymentGraph, j: NodeId, left: usize, cur: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
        let u = *cur.last().unwrap();
        if u == j {
            out.push(cur.clone());
            return;
        }
        if left == 0 {
            return;
        }
        for &(v, _) in g.neighbors(u) {
            if !cur.contains(&v) {
                cur.push(v);
                go(g, j, left - 1, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(g, j, max_hops, &mut vec![i], &mut out);
    out
}

fn edges_of(g: &PaymentGraph, nodes: &[NodeId]) -> Vec<EdgeId> {
    nodes.windows(2).map(|w| g.edge_between(w[0], w[1]).unwrap()).collect()
}

/// Exact optimum of `max Σ x_p` subject to `Σ_{p∈P_ij} x_p ≤ λ_ij`,
/// `f_e + f_ē ≤ 2c` and `f_e = f_ē` for every directed edge.
pub fn throughput_optimum(g: &PaymentGraph, demand: &DemandMatrix, max_hops: usize) -> f64 {
    let pairs: Vec<((NodeId, NodeId), f64)> = demand.active().collect();
    let mut cols: Vec<(usize, Vec<EdgeId>)> = Vec::new();
    for (k, &((i, j), _)) in pairs.iter().enumerate() {
        for p in brute_paths(g, i, j, max_hops) {
            cols.push((k, edges_of(g, &p)));
        }
    }
    let n = cols.len();
    let mut a: Vec<Vec<BigRational>> = Vec::new();
    let mut b: Vec<BigRational> = Vec::new();
    for (k, &(_, rate)) in pairs.iter().enumerate() {
        a.push(cols.iter().map(|(kk, _)| if *kk == k { BigRational::one() } else { BigRational::zero() }).collect());
        b.push(exact_lp::rational(rate));
    }
    for e in g.edge_ids() {
        let r = e.reverse();
        let count = |es: &Vec<EdgeId>, x: EdgeId| es.iter().filter(|&&y| y == x).count() as i64;
        // capacity, written once per directed edge as in the model
        a.push(cols.iter().map(|(_, es)| exact_lp::int(count(es, e) + count(es, r))).collect());
        b.push(exact_lp::int(2 * g.capacity(e) as i64));
        // balance as two inequalities
        a.push(cols.iter().map(|(_, es)| exact_lp::int(count(es, e) - count(es, r))).collect());
        b.push(BigRational::zero());
    }
    let c = vec![BigRational::one(); n];
    let opt = exact_lp::maximize(&c, &a, &b).expect("throughput is bounded");
    exact_lp::to_f64(&opt)
}

/// Worst violation of the throughput-LP constraints by `x`.
pub fn violation(g: &PaymentGraph, demand: &DemandMatrix, x: &[(Path, f64)], exact_demand: bool) -> f64 {
    let mut worst = 0.0f64;
    let mut per_pair: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let mut load = vec![0.0; g.edge_count()];
    for (p, v) in x {
        worst = worst.max(-v);
        let nodes = p.nodes();
        *per_pair.entry((nodes[0], *nodes.last().unwrap())).or_default() += v;
        for e in edges_of(g, nodes) {
            load[e.index()] += v;
        }
    }
    for ((i, j), d) in demand.iter() {
        let got = per_pair.get(&(i, j)).copied().unwrap_or(0.0);
        let gap = if exact_demand { (got - d.rate).abs() } else { got - d.rate };
        worst = worst.max(gap);
    }
    for e in g.edge_ids() {
        let (f, fr) = (load[e.index()], load[e.reverse().index()]);
        worst = worst.max(f + fr - 2.0 * g.capacity(e) as f64);
        worst = worst.max((f - fr).abs());
    }
    worst
}

/// Demand with rates that are random multiples of 1/4 on a random subset of pairs.
pub fn quarter_demand<R: Rng>(n: usize, density: f64, max_quarters: u32, rng: &mut R) -> DemandMatrix {
    let mut d = DemandMatrix::new();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i != j && rng.random_bool(density) {
                let q = rng.random_range(1..=max_quarters);
                d.insert_poisson(NodeId(i), NodeId(j), q as f64 / 4.0).unwrap();
            }
        }
    }
    d
}
