//! Routing policies: MaxWeight over all paths, its k-shortest-path
//! approximation, packetised water-filling with atomic commit, and the
//! fluid-proportional baseline, plus the probabilistic on-chain rebalancer.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::fluid::{DemandMatrix, FluidSolution};
use crate::ledger::{service, ChannelState, LedgerError, ServiceTiming, SlotFlows, Tentative};
use crate::topology::{EdgeId, NodeId, Path, PathFinder, PathTable, PaymentGraph, TopologyError};
use crate::workload::Transaction;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy parameters: {0}")]
    InvalidParams(String),
    #[error("exact routing enumerates every path and is limited to {bound} vertices (graph has {vertices}); use the heuristic policy")]
    GraphTooLarge { vertices: usize, bound: usize },
    #[error("fluid policy needs a fluid solution")]
    MissingFluidSolution,
    #[error("invalid transaction: {0}")]
    InvalidTransaction(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Exact,
    Heuristic,
    Waterfilling,
    Fluid,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] =
        [PolicyKind::Exact, PolicyKind::Heuristic, PolicyKind::Waterfilling, PolicyKind::Fluid];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Exact => "exact",
            PolicyKind::Heuristic => "heuristic",
            PolicyKind::Waterfilling => "waterfilling",
            PolicyKind::Fluid => "fluid",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy '{s}' (valid: exact, heuristic, waterfilling, fluid)"))
    }
}

/// Distribution of the units moved on-chain when a queue exceeds its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RebalanceRule {
    /// One unit with probability δ.
    #[default]
    Bernoulli,
    /// `Binomial(n, δ/n)` units; same mean δ.
    Binomial { n: u32 },
}

impl FromStr for RebalanceRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "bernoulli" {
            return Ok(RebalanceRule::Bernoulli);
        }
        if let Some(n) = s.strip_prefix("binomial:") {
            let n: u32 = n.parse().map_err(|_| format!("bad trial count in '{s}'"))?;
            if n == 0 {
                return Err("binomial trial count must be positive".into());
            }
            return Ok(RebalanceRule::Binomial { n });
        }
        Err(format!("unknown rebalance rule '{s}' (bernoulli, binomial:<n>)"))
    }
}

/// How a policy finds the minimum-weight path for a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Exact on graphs within the vertex bound, heuristic otherwise.
    #[default]
    Auto,
    Exact,
    Heuristic,
}

impl FromStr for SearchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(SearchMode::Auto),
            "exact" => Ok(SearchMode::Exact),
            "heuristic" => Ok(SearchMode::Heuristic),
            other => Err(format!("unknown search mode '{other}' (auto, exact, heuristic)")),
        }
    }
}

/// Per-edge queue thresholds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Thresholds {
    /// The scalar `M` on every edge.
    Uniform,
    /// `M_e = c_e`.
    Capacity,
    /// Explicit value per directed edge.
    PerEdge(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub m: u64,
    /// `None` selects the policy default: capacity for water-filling,
    /// uniform `M` otherwise.
    pub thresholds: Option<Thresholds>,
    pub delta: f64,
    pub alpha: f64,
    pub k: usize,
    pub packet_size: u64,
    /// Reject transactions that would push a queue past its threshold
    /// instead of relying on on-chain rebalancing.
    pub drop_onchain: bool,
    pub rebalance: RebalanceRule,
    /// Hop cap for exhaustive path enumeration; `None` means `|V| - 1`.
    pub max_hops: Option<usize>,
    pub exact_vertex_bound: usize,
    pub search: SearchMode,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            m: 10,
            thresholds: None,
            delta: 0.1,
            alpha: 2.0,
            k: 1,
            packet_size: 1,
            drop_onchain: false,
            rebalance: RebalanceRule::Bernoulli,
            max_hops: None,
            exact_vertex_bound: 12,
            search: SearchMode::Auto,
        }
    }
}

impl PolicyParams {
    fn resolved_thresholds(&self, kind: PolicyKind) -> Thresholds {
        self.thresholds.clone().unwrap_or(match kind {
            PolicyKind::Waterfilling => Thresholds::Capacity,
            _ => Thresholds::Uniform,
        })
    }

    /// Checks the parameters for a policy on a graph.
    pub fn validate(&self, kind: PolicyKind, g: &PaymentGraph) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::InvalidParams(m));
        if !(self.delta >= 0.0 && self.delta <= 1.0) {
            return bad(format!("delta = {} must lie in [0, 1]", self.delta));
        }
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return bad(format!("alpha = {} must exceed 1", self.alpha));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.packet_size == 0 {
            return bad("packet_size must be at least 1".into());
        }
        if self.max_hops == Some(0) {
            return bad("max_hops must be at least 1".into());
        }
        if let RebalanceRule::Binomial { n } = self.rebalance {
            if n == 0 {
                return bad("binomial trial count must be positive".into());
            }
        }
        let thresholds = self.resolved_thresholds(kind);
        if let Thresholds::PerEdge(v) = &thresholds {
            if v.len() != g.edge_count() {
                return bad(format!("{} per-edge thresholds for {} edges", v.len(), g.edge_count()));
            }
        }
        let queue_rebalancing = matches!(kind, PolicyKind::Exact | PolicyKind::Heuristic) && !self.drop_onchain;
        if queue_rebalancing {
            match &thresholds {
                Thresholds::Uniform if self.m <= g.c_max() => {
                    return bad(format!("M = {} must exceed c_max = {} when rebalancing on-chain", self.m, g.c_max()));
                }
                Thresholds::PerEdge(v) => {
                    if let Some(e) = g.edge_ids().find(|e| v[e.index()] < g.capacity(*e)) {
                        return bad(format!("threshold {} on edge {} is below its capacity", v[e.index()], e.0));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// `w_(u,v) = z_(u,v) + δ/(2αc)·(q_(u,v) + q_(v,u))`.
pub fn edge_weight(state: &ChannelState, e: EdgeId, delta: f64, alpha: f64, g: &PaymentGraph) -> f64 {
    weight_of(state.queue(e), state.queue(e.reverse()), g.capacity(e), delta, alpha)
}

/// Edge weight from explicit queue values.
pub fn weight_of(q: u64, q_rev: u64, capacity: u64, delta: f64, alpha: f64) -> f64 {
    (q as f64 - q_rev as f64) + delta / (2.0 * alpha * capacity as f64) * (q + q_rev) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fate {
    /// Routed through the channels (possibly still queued).
    OffChain,
    /// Settled as a whole on the blockchain.
    OnChain,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TxOutcome {
    pub src: NodeId,
    pub dst: NodeId,
    pub amount: u64,
    pub fate: Fate,
}

/// What a policy did with one slot of arrivals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingDecision {
    pub x: BTreeMap<Path, u64>,
    pub r: BTreeMap<EdgeId, u64>,
    pub rejected: BTreeMap<(NodeId, NodeId), u64>,
    pub onchain: BTreeMap<(NodeId, NodeId), u64>,
    /// One entry per transaction, in processing order.
    pub outcomes: Vec<TxOutcome>,
}

impl RoutingDecision {
    /// Per-edge arrivals `y` and rebalancing `r` implied by the decision.
    pub fn to_flows(&self, g: &PaymentGraph) -> SlotFlows {
        let mut f = SlotFlows::new(g);
        for (p, &a) in &self.x {
            for &e in p.edges() {
                f.add_demand(e, a);
            }
        }
        for (&e, &r) in &self.r {
            f.add_rebalance(e, r);
        }
        f
    }

    pub fn routed_volume(&self) -> u64 {
        self.x.values().sum()
    }

    pub fn rebalanced_volume(&self) -> u64 {
        self.r.values().sum()
    }

    fn record(&mut self, tx: &Transaction, fate: Fate) {
        let key = (tx.src, tx.dst);
        match fate {
            Fate::OffChain => {}
            Fate::OnChain => *self.onchain.entry(key).or_default() += tx.amount,
            Fate::Rejected => *self.rejected.entry(key).or_default() += tx.amount,
        }
        self.outcomes.push(TxOutcome { src: tx.src, dst: tx.dst, amount: tx.amount, fate });
    }
}

/// Path probabilities of the fluid baseline, per pair.
#[derive(Debug, Clone, Default)]
pub struct FluidRouting {
    pairs: HashMap<(NodeId, NodeId), (f64, Vec<(Path, f64)>)>,
}

impl FluidRouting {
    pub fn new(solution: &FluidSolution, demand: &DemandMatrix) -> Self {
        let mut by_pair = solution.by_pair();
        let mut pairs = HashMap::new();
        for ((i, j), rate) in demand.active() {
            let mut rates = by_pair.remove(&(i, j)).unwrap_or_default();
            rates.sort_by(|a, b| a.0.cmp(&b.0));
            pairs.insert((i, j), (rate, rates));
        }
        FluidRouting { pairs }
    }

    /// Draws a path for pair `(i, j)` with probability `x_p / λ_ij`; `None`
    /// with the residual probability.
    pub fn sample<R: Rng + ?Sized>(&self, i: NodeId, j: NodeId, rng: &mut R) -> Option<&Path> {
        let (rate, rates) = self.pairs.get(&(i, j))?;
        let u: f64 = rng.random::<f64>() * rate;
        let mut acc = 0.0;
        for (p, v) in rates {
            acc += v;
            if u < acc {
                return Some(p);
            }
        }
        None
    }
}

/// Stateful router: owns path caches and search scratch for one run.
pub struct Router {
    kind: PolicyKind,
    params: PolicyParams,
    thresholds: Thresholds,
    timing: ServiceTiming,
    exact_search: bool,
    table: PathTable,
    finder: PathFinder,
    fluid: Option<FluidRouting>,
}

impl Router {
    pub fn new(
        kind: PolicyKind,
        params: PolicyParams,
        g: &PaymentGraph,
        timing: ServiceTiming,
    ) -> Result<Self, PolicyError> {
        params.validate(kind, g)?;
        let within = g.node_count() <= params.exact_vertex_bound;
        let exact_search = match kind {
            PolicyKind::Exact => {
                if !within {
                    return Err(PolicyError::GraphTooLarge {
                        vertices: g.node_count(),
                        bound: params.exact_vertex_bound,
                    });
                }
                true
            }
            PolicyKind::Heuristic | PolicyKind::Fluid => false,
            PolicyKind::Waterfilling => match params.search {
                SearchMode::Auto => within,
                SearchMode::Exact => {
                    if !within {
                        return Err(PolicyError::GraphTooLarge {
                            vertices: g.node_count(),
                            bound: params.exact_vertex_bound,
                        });
                    }
                    true
                }
                SearchMode::Heuristic => false,
            },
        };
        let thresholds = params.resolved_thresholds(kind);
        let table = PathTable::new(g, params.max_hops);
        Ok(Router { kind, params, thresholds, timing, exact_search, table, finder: PathFinder::new(), fluid: None })
    }

    /// Installs the fluid path probabilities used by the fluid policy.
    pub fn with_fluid(mut self, routing: FluidRouting) -> Self {
        self.fluid = Some(routing);
        self
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn threshold(&self, g: &PaymentGraph, e: EdgeId) -> u64 {
        match &self.thresholds {
            Thresholds::Uniform => self.params.m,
            Thresholds::Capacity => g.capacity(e),
            Thresholds::PerEdge(v) => v[e.index()],
        }
    }

    /// Routes one slot of transactions. `flows` is cleared and then holds
    /// the arrivals and rebalancing the decision implies.
    pub fn route<R: Rng + ?Sized>(
        &mut self,
        g: &PaymentGraph,
        state: &ChannelState,
        txs: &[Transaction],
        rng: &mut R,
        flows: &mut SlotFlows,
    ) -> Result<RoutingDecision, PolicyError> {
        flows.clear();
        for tx in txs {
            if tx.src == tx.dst || tx.amount == 0 || tx.src.index() >= g.node_count() || tx.dst.index() >= g.node_count() {
                return Err(PolicyError::InvalidTransaction(format!("{} -> {} amount {}", tx.src, tx.dst, tx.amount)));
            }
        }
        let mut order: Vec<&Transaction> = txs.iter().collect();
        order.sort_by_key(|t| (t.src, t.dst));
        match self.kind {
            PolicyKind::Exact | PolicyKind::Heuristic => self.route_maxweight(g, state, &order, rng, flows),
            PolicyKind::Waterfilling => self.route_waterfilling(g, state, &order, rng, flows),
            PolicyKind::Fluid => self.route_fluid(g, state, &order, rng, flows),
        }
    }

    /// Minimum-weight path under `weight`, exhaustive or k-shortest. Weights
    /// within [`lighter`]'s tolerance tie and go to the earlier path.
    fn best_path<F: Fn(EdgeId) -> f64>(
        table: &mut PathTable,
        finder: &mut PathFinder,
        exact: bool,
        k: usize,
        g: &PaymentGraph,
        i: NodeId,
        j: NodeId,
        weight: F,
    ) -> Result<Path, PolicyError> {
        if exact {
            let paths = table.get(g, i, j)?;
            let mut best: Option<(&Path, f64)> = None;
            for p in paths.iter() {
                let w = p.weight(&weight);
                if best.is_none_or(|(_, bw)| lighter(w, bw) == Ordering::Less) {
                    best = Some((p, w));
                }
            }
            Ok(best.expect("path sets are nonempty").0.clone())
        } else {
            let cands = finder.k_shortest(g, i, j, k, |e| weight(e).max(0.0))?;
            let mut best: Option<(Path, f64)> = None;
            for (p, _) in cands {
                let w = p.weight(&weight);
                let better = match &best {
                    None => true,
                    Some((bp, bw)) => lighter(w, *bw).then_with(|| p.cmp(bp)) == Ordering::Less,
                };
                if better {
                    best = Some((p, w));
                }
            }
            Ok(best.expect("k_shortest returns at least one path").0)
        }
    }

    fn route_maxweight<R: Rng + ?Sized>(
        &mut self,
        g: &PaymentGraph,
        state: &ChannelState,
        order: &[&Transaction],
        rng: &mut R,
        flows: &mut SlotFlows,
    ) -> Result<RoutingDecision, PolicyError> {
        let (delta, alpha) = (self.params.delta, self.params.alpha);
        let exact = self.kind == PolicyKind::Exact;
        let weight = |e: EdgeId| edge_weight(state, e, delta, alpha, g);
        let mut dec = RoutingDecision::default();
        // weights are frozen at slot start, so one path per pair suffices
        let mut chosen: HashMap<(NodeId, NodeId), Path> = HashMap::new();
        for tx in order {
            if !chosen.contains_key(&(tx.src, tx.dst)) {
                let p = Self::best_path(&mut self.table, &mut self.finder, exact, self.params.k, g, tx.src, tx.dst, weight)?;
                chosen.insert((tx.src, tx.dst), p);
            }
        }
        if !self.params.drop_onchain {
            for tx in order {
                let p = &chosen[&(tx.src, tx.dst)];
                for &e in p.edges() {
                    flows.add_demand(e, tx.amount);
                }
                *dec.x.entry(p.clone()).or_default() += tx.amount;
                dec.record(tx, Fate::OffChain);
            }
            self.rebalance(g, state, rng, flows, &mut dec);
            return Ok(dec);
        }
        let mut tent = Tentative::new(g, state, flows, self.timing);
        for tx in order {
            let p = &chosen[&(tx.src, tx.dst)];
            let cp = tent.checkpoint();
            tent.add_path(p.edges(), tx.amount);
            if p.edges().iter().any(|&e| tent.projected(e) > self.threshold(g, e)) {
                tent.rollback(cp);
                dec.record(tx, Fate::Rejected);
            } else {
                *dec.x.entry(p.clone()).or_default() += tx.amount;
                dec.record(tx, Fate::OffChain);
            }
        }
        Ok(dec)
    }

    /// Draws on-chain rebalancing for every queue above its threshold,
    /// judged on the slot-start state.
    fn rebalance<R: Rng + ?Sized>(
        &self,
        g: &PaymentGraph,
        state: &ChannelState,
        rng: &mut R,
        flows: &mut SlotFlows,
        dec: &mut RoutingDecision,
    ) {
        let delta = self.params.delta;
        let over: Vec<EdgeId> = state.positive_edges().filter(|&e| state.queue(e) > self.threshold(g, e)).collect();
        for e in over {
            let draw = match self.params.rebalance {
                RebalanceRule::Bernoulli => u64::from(rng.random_bool(delta)),
                RebalanceRule::Binomial { n } => {
                    Binomial::new(u64::from(n), delta / f64::from(n)).expect("valid binomial").sample(rng)
                }
            };
            if draw == 0 {
                continue;
            }
            let rev = e.reverse();
            let (q, q_rev) = (state.queue(e), state.queue(rev));
            let (y, y_rev) = (flows.demand(e), flows.demand(rev));
            let s = match self.timing {
                ServiceTiming::PreArrival => service(q, q_rev, g.capacity(e)),
                ServiceTiming::PostArrival => service(q + y, q_rev + y_rev, g.capacity(e)),
            };
            let r = draw.min(q + y - s);
            if r > 0 {
                flows.add_rebalance(e, r);
                *dec.r.entry(e).or_default() += r;
            }
        }
    }

    fn route_waterfilling<R: Rng + ?Sized>(
        &mut self,
        g: &PaymentGraph,
        state: &ChannelState,
        order: &[&Transaction],
        rng: &mut R,
        flows: &mut SlotFlows,
    ) -> Result<RoutingDecision, PolicyError> {
        let (delta, alpha) = (self.params.delta, self.params.alpha);
        let packet = self.params.packet_size;
        let mut dec = RoutingDecision::default();
        let thresholds: Vec<u64> = g.edge_ids().map(|e| self.threshold(g, e)).collect();
        let mut tent = Tentative::new(g, state, flows, self.timing);
        for tx in order {
            let cp = tent.checkpoint();
            let mut parts: BTreeMap<Path, u64> = BTreeMap::new();
            let mut left = tx.amount;
            while left > 0 {
                let size = left.min(packet);
                let weight = |e: EdgeId| {
                    let rev = e.reverse();
                    weight_of(tent.projected(e), tent.projected(rev), g.capacity(e), delta, alpha)
                };
                let p = Self::best_path(
                    &mut self.table,
                    &mut self.finder,
                    self.exact_search,
                    self.params.k,
                    g,
                    tx.src,
                    tx.dst,
                    weight,
                )?;
                tent.add_path(p.edges(), size);
                *parts.entry(p).or_default() += size;
                left -= size;
            }
            let within = parts
                .keys()
                .flat_map(|p| p.edges().iter())
                .all(|&e| tent.projected(e) <= thresholds[e.index()]);
            if within {
                for (p, a) in parts {
                    *dec.x.entry(p).or_default() += a;
                }
                dec.record(tx, Fate::OffChain);
            } else {
                tent.rollback(cp);
                let onchain = !self.params.drop_onchain && delta > 0.0 && rng.random_bool(delta);
                dec.record(tx, if onchain { Fate::OnChain } else { Fate::Rejected });
            }
        }
        Ok(dec)
    }

    fn route_fluid<R: Rng + ?Sized>(
        &mut self,
        g: &PaymentGraph,
        state: &ChannelState,
        order: &[&Transaction],
        rng: &mut R,
        flows: &mut SlotFlows,
    ) -> Result<RoutingDecision, PolicyError> {
        let fluid = self.fluid.as_ref().ok_or(PolicyError::MissingFluidSolution)?;
        let mut dec = RoutingDecision::default();
        let mut tent = Tentative::new(g, state, flows, self.timing);
        for tx in order {
            let Some(p) = fluid.sample(tx.src, tx.dst, rng) else {
                dec.record(tx, Fate::Rejected);
                continue;
            };
            let cp = tent.checkpoint();
            tent.add_path(p.edges(), tx.amount);
            if p.edges().iter().any(|&e| tent.projected(e) > self.threshold(g, e)) {
                tent.rollback(cp);
                dec.record(tx, Fate::Rejected);
            } else {
                *dec.x.entry(p.clone()).or_default() += tx.amount;
                dec.record(tx, Fate::OffChain);
            }
        }
        Ok(dec)
    }
}

fn one_shot<R: Rng + ?Sized>(
    kind: PolicyKind,
    g: &PaymentGraph,
    state: &ChannelState,
    txs: &[Transaction],
    params: &PolicyParams,
    rng: &mut R,
    fluid: Option<FluidRouting>,
) -> Result<RoutingDecision, PolicyError> {
    let mut router = Router::new(kind, params.clone(), g, ServiceTiming::default())?;
    if let Some(f) = fluid {
        router = router.with_fluid(f);
    }
    let mut flows = SlotFlows::new(g);
    router.route(g, state, txs, rng, &mut flows)
}

/// MaxWeight routing over every path (graphs within the vertex bound).
pub fn route_exact<R: Rng + ?Sized>(
    g: &PaymentGraph,
    state: &ChannelState,
    txs: &[Transaction],
    params: &PolicyParams,
    rng: &mut R,
) -> Result<RoutingDecision, PolicyError> {
    one_shot(PolicyKind::Exact, g, state, txs, params, rng, None)
}

/// MaxWeight routing restricted to the k shortest paths under clipped weights.
pub fn route_heuristic<R: Rng + ?Sized>(
    g: &PaymentGraph,
    state: &ChannelState,
    txs: &[Transaction],
    params: &PolicyParams,
    rng: &mut R,
) -> Result<RoutingDecision, PolicyError> {
    one_shot(PolicyKind::Heuristic, g, state, txs, params, rng, None)
}

/// Packetised water-filling with per-transaction commit or rollback.
pub fn route_waterfilling<R: Rng + ?Sized>(
    g: &PaymentGraph,
    state: &ChannelState,
    txs: &[Transaction],
    params: &PolicyParams,
    rng: &mut R,
) -> Result<RoutingDecision, PolicyError> {
    one_shot(PolicyKind::Waterfilling, g, state, txs, params, rng, None)
}

/// Fluid-proportional baseline.
pub fn route_fluid<R: Rng + ?Sized>(
    g: &PaymentGraph,
    state: &ChannelState,
    txs: &[Transaction],
    fluid: Option<&FluidRouting>,
    params: &PolicyParams,
    rng: &mut R,
) -> Result<RoutingDecision, PolicyError> {
    let fluid = fluid.ok_or(PolicyError::MissingFluidSolution)?;
    one_shot(PolicyKind::Fluid, g, state, txs, params, rng, Some(fluid.clone()))
}

/// Compares path weights, treating values within `1e-9` (relative to
/// `max(1, |b|)`) as equal so that summation order cannot break ties.
fn lighter(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= 1e-9 * b.abs().max(1.0) {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle(c: i64) -> PaymentGraph {
        PaymentGraph::build(&[("A", "B", c), ("B", "C", c), ("A", "C", c)]).unwrap()
    }

    fn tx(g: &PaymentGraph, s: &str, d: &str, amount: u64) -> Transaction {
        Transaction { src: g.node(s).unwrap(), dst: g.node(d).unwrap(), amount }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn weight_examples() {
        assert!((weight_of(3, 1, 5, 0.1, 2.0) - 2.02).abs() < 1e-12);
        assert_eq!(weight_of(0, 0, 5, 0.1, 2.0), 0.0);
        assert!((weight_of(1, 4, 5, 0.1, 2.0) + 2.975).abs() < 1e-12);
    }

    #[test]
    fn exact_prefers_direct_on_ties() {
        let g = triangle(5);
        let st = ChannelState::new(&g);
        let params = PolicyParams { m: 6, ..PolicyParams::default() };
        let d = route_exact(&g, &st, &[tx(&g, "A", "C", 2)], &params, &mut rng()).unwrap();
        let p = d.x.keys().next().unwrap();
        assert_eq!(g.describe(p), "A>C");
        assert_eq!(d.x[p], 2);
        assert!(d.r.is_empty());
    }

    #[test]
    fn exact_avoids_imbalanced_edge() {
        let g = triangle(5);
        let mut st = ChannelState::new(&g);
        st.set(g.edge_between(g.node("A").unwrap(), g.node("C").unwrap()).unwrap(), 4);
        let params = PolicyParams { m: 6, ..PolicyParams::default() };
        let d = route_exact(&g, &st, &[tx(&g, "A", "C", 1)], &params, &mut rng()).unwrap();
        assert_eq!(g.describe(d.x.keys().next().unwrap()), "A>B>C");
    }

    #[test]
    fn heuristic_with_clipped_negative_weight() {
        let g = triangle(5);
        let mut st = ChannelState::new(&g);
        let (a, c) = (g.node("A").unwrap(), g.node("C").unwrap());
        st.set(g.edge_between(c, a).unwrap(), 4);
        st.set(g.edge_between(a, c).unwrap(), 1);
        let params = PolicyParams { m: 6, k: 1, ..PolicyParams::default() };
        let d = route_heuristic(&g, &st, &[tx(&g, "A", "C", 1)], &params, &mut rng()).unwrap();
        assert_eq!(g.describe(d.x.keys().next().unwrap()), "A>C");
    }

    #[test]
    fn rebalancing_fires_only_above_threshold() {
        let g = PaymentGraph::build(&[("A", "B", 5)]).unwrap();
        let mut st = ChannelState::new(&g);
        st.set(EdgeId(0), 6);
        let params = PolicyParams { m: 6, delta: 1.0, ..PolicyParams::default() };
        let d = route_exact(&g, &st, &[], &params, &mut rng()).unwrap();
        assert!(d.r.is_empty());
        st.set(EdgeId(0), 7);
        let d = route_exact(&g, &st, &[], &params, &mut rng()).unwrap();
        assert_eq!(d.r.get(&EdgeId(0)), Some(&1));
    }

    #[test]
    fn rebalancing_frequency_matches_delta() {
        let g = PaymentGraph::build(&[("A", "B", 5)]).unwrap();
        let mut st = ChannelState::new(&g);
        st.set(EdgeId(0), 7);
        let params = PolicyParams { m: 6, delta: 0.5, ..PolicyParams::default() };
        let mut router = Router::new(PolicyKind::Exact, params, &g, ServiceTiming::default()).unwrap();
        let mut flows = SlotFlows::new(&g);
        let mut r = rng();
        let n = 10_000;
        let total: u64 =
            (0..n).map(|_| router.route(&g, &st, &[], &mut r, &mut flows).unwrap().rebalanced_volume()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn maxweight_needs_threshold_above_capacity() {
        let g = triangle(5);
        let params = PolicyParams { m: 5, ..PolicyParams::default() };
        assert!(params.validate(PolicyKind::Exact, &g).is_err());
        let drop = PolicyParams { drop_onchain: true, ..params.clone() };
        assert!(drop.validate(PolicyKind::Exact, &g).is_ok());
        assert!(params.validate(PolicyKind::Waterfilling, &g).is_ok());
        let bad_alpha = PolicyParams { alpha: 1.0, m: 6, ..PolicyParams::default() };
        assert!(bad_alpha.validate(PolicyKind::Heuristic, &g).is_err());
    }

    #[test]
    fn exact_refuses_large_graphs() {
        let edges: Vec<(String, String, i64)> =
            (0..13).map(|i| (i.to_string(), ((i + 1) % 14).to_string(), 5)).collect();
        let g = PaymentGraph::build(&edges).unwrap();
        let params = PolicyParams { m: 6, ..PolicyParams::default() };
        assert!(matches!(
            Router::new(PolicyKind::Exact, params, &g, ServiceTiming::default()),
            Err(PolicyError::GraphTooLarge { vertices: 14, bound: 12 })
        ));
    }

    #[test]
    fn waterfilling_splits_packets_across_paths() {
        let g = triangle(1);
        let st = ChannelState::new(&g);
        let params = PolicyParams { delta: 0.0, packet_size: 1, ..PolicyParams::default() };
        let d = route_waterfilling(&g, &st, &[tx(&g, "A", "C", 2)], &params, &mut rng()).unwrap();
        let used: Vec<String> = d.x.keys().map(|p| g.describe(p)).collect();
        assert_eq!(used, vec!["A>C", "A>B>C"]);
        assert_eq!(d.outcomes[0].fate, Fate::OffChain);
    }

    #[test]
    fn waterfilling_rejects_atomically() {
        let g = PaymentGraph::build(&[("A", "B", 1)]).unwrap();
        let st = ChannelState::new(&g);
        let params = PolicyParams { delta: 0.0, ..PolicyParams::default() };
        let d = route_waterfilling(&g, &st, &[tx(&g, "A", "B", 3)], &params, &mut rng()).unwrap();
        assert!(d.x.is_empty());
        assert_eq!(d.rejected.values().sum::<u64>(), 3);
        assert!(d.to_flows(&g).touched().is_empty());
    }

    #[test]
    fn fluid_without_solution_errors() {
        let g = triangle(1);
        let st = ChannelState::new(&g);
        let err = route_fluid(&g, &st, &[], None, &PolicyParams::default(), &mut rng()).unwrap_err();
        assert_eq!(err, PolicyError::MissingFluidSolution);
    }

    #[test]
    fn policy_names_parse() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        let err = "maxflow".parse::<PolicyKind>().unwrap_err();
        assert!(err.contains("waterfilling"));
        assert_eq!("binomial:4".parse::<RebalanceRule>().unwrap(), RebalanceRule::Binomial { n: 4 });
    }
}
