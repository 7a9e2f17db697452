//! Capacity region and fluid analysis: circulation and feasibility tests,
//! the throughput LP solved by projected dual descent, the drift inequality
//! checker and the steady-state queue bound.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::ledger::ChannelState;
use crate::lp::{LinearProgram, LpError, LpSolution, Relation};
use crate::policy::edge_weight;
use crate::topology::{EdgeId, NodeId, Path, PathTable, PaymentGraph, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum FluidError {
    #[error("invalid demand: {0}")]
    InvalidDemand(String),
    #[error("parameter violation: {0}")]
    ParameterViolation(String),
    #[error("demand matrix is outside the capacity region")]
    InfeasibleDemand,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Mean rate and variance of the per-slot arrivals of one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demand {
    pub rate: f64,
    pub variance: f64,
}

/// Sparse demand-rate matrix over ordered pairs `i != j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandMatrix {
    entries: BTreeMap<(NodeId, NodeId), Demand>,
}

impl DemandMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, i: NodeId, j: NodeId, rate: f64, variance: f64) -> Result<(), FluidError> {
        if i == j {
            return Err(FluidError::InvalidDemand(format!("diagonal entry {i}")));
        }
        if !(rate.is_finite() && rate >= 0.0 && variance.is_finite() && variance >= 0.0) {
            return Err(FluidError::InvalidDemand(format!(
                "rate {rate} / variance {variance} for {i}->{j} must be finite and nonnegative"
            )));
        }
        self.entries.insert((i, j), Demand { rate, variance });
        Ok(())
    }

    /// Inserts a Poisson pair, whose variance equals its rate.
    pub fn insert_poisson(&mut self, i: NodeId, j: NodeId, rate: f64) -> Result<(), FluidError> {
        self.insert(i, j, rate, rate)
    }

    pub fn rate(&self, i: NodeId, j: NodeId) -> f64 {
        self.entries.get(&(i, j)).map_or(0.0, |d| d.rate)
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> Option<Demand> {
        self.entries.get(&(i, j)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), Demand)> + '_ {
        self.entries.iter().map(|(&k, &d)| (k, d))
    }

    /// Pairs with a strictly positive rate, ascending.
    pub fn active(&self) -> impl Iterator<Item = ((NodeId, NodeId), f64)> + '_ {
        self.entries.iter().filter(|(_, d)| d.rate > 0.0).map(|(&k, d)| (k, d.rate))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_rate(&self) -> f64 {
        self.entries.values().map(|d| d.rate).sum()
    }

    pub fn total_variance(&self) -> f64 {
        self.entries.values().map(|d| d.variance).sum()
    }

    /// Multiplies every rate and variance by `factor` (variance scales like
    /// a Poisson rate).
    pub fn scaled(&self, factor: f64) -> DemandMatrix {
        let entries = self
            .entries
            .iter()
            .map(|(&k, d)| (k, Demand { rate: d.rate * factor, variance: d.variance * factor }))
            .collect();
        DemandMatrix { entries }
    }

    /// Reads `src,dst,rate[,variance]`; a missing variance means Poisson.
    pub fn read_csv<R: Read>(g: &PaymentGraph, reader: R) -> Result<Self, FluidError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut m = DemandMatrix::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| FluidError::Parse { line: idx as u64 + 1, message: e.to_string() })?;
            let line = rec.position().map_or(idx as u64 + 1, |p| p.line());
            if rec.len() < 3 {
                return Err(FluidError::Parse { line, message: "expected src,dst,rate[,variance]".into() });
            }
            let Ok(rate) = rec[2].parse::<f64>() else {
                if line == 1 {
                    continue; // header
                }
                return Err(FluidError::Parse { line, message: format!("bad rate '{}'", &rec[2]) });
            };
            let variance = match rec.get(3).filter(|s| !s.is_empty()) {
                Some(v) => v
                    .parse::<f64>()
                    .map_err(|_| FluidError::Parse { line, message: format!("bad variance '{v}'") })?,
                None => rate,
            };
            let i = g.require_node(&rec[0])?;
            let j = g.require_node(&rec[1])?;
            m.insert(i, j, rate, variance).map_err(|e| FluidError::Parse { line, message: e.to_string() })?;
        }
        Ok(m)
    }

    pub fn write_csv<W: Write>(&self, g: &PaymentGraph, writer: W) -> Result<(), FluidError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| FluidError::Io(e.to_string());
        w.write_record(["src", "dst", "rate", "variance"]).map_err(io)?;
        for (&(i, j), d) in &self.entries {
            w.write_record([g.name(i), g.name(j), &d.rate.to_string(), &d.variance.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| FluidError::Io(e.to_string()))
    }
}

/// True iff every vertex sends as much as it receives (absolute tolerance 1e-9).
pub fn check_circulation(demand: &DemandMatrix) -> bool {
    let mut net: BTreeMap<NodeId, f64> = BTreeMap::new();
    for ((i, j), d) in demand.iter() {
        *net.entry(i).or_default() += d.rate;
        *net.entry(j).or_default() -= d.rate;
    }
    net.values().all(|v| v.abs() <= 1e-9)
}

/// Path sets of the active pairs of a demand matrix.
fn active_paths(
    demand: &DemandMatrix,
    g: &PaymentGraph,
    paths: &mut PathTable,
) -> Result<Vec<((NodeId, NodeId), f64, Arc<Vec<Path>>)>, FluidError> {
    let mut out = Vec::new();
    for ((i, j), rate) in demand.active() {
        if i.index() >= g.node_count() || j.index() >= g.node_count() {
            return Err(FluidError::InvalidDemand(format!("pair {i}->{j} outside the graph")));
        }
        out.push(((i, j), rate, paths.get(g, i, j)?));
    }
    Ok(out)
}

/// Row layout shared by the path-formulated programs: one demand row per
/// active pair, then a capacity row and a balance row per channel.
struct Rows {
    pairs: usize,
    channels: usize,
}

impl Rows {
    fn capacity(&self, e: EdgeId) -> usize {
        self.pairs + e.channel()
    }

    fn balance(&self, e: EdgeId) -> usize {
        self.pairs + self.channels + e.channel()
    }

    fn column(&self, pair_row: usize, path: &Path) -> Vec<(usize, f64)> {
        let mut col = Vec::with_capacity(1 + 2 * path.hops());
        col.push((pair_row, 1.0));
        for &e in path.edges() {
            col.push((self.capacity(e), 1.0));
            col.push((self.balance(e), if e.is_forward() { 1.0 } else { -1.0 }));
        }
        col
    }
}

/// Builds rows from columns: `columns[k]` lists the row entries of variable k.
fn transpose(columns: &[Vec<(usize, f64)>], rows: usize) -> Vec<Vec<(usize, f64)>> {
    let mut out = vec![Vec::new(); rows];
    for (k, col) in columns.iter().enumerate() {
        for &(r, a) in col {
            out[r].push((k, a));
        }
    }
    out
}

/// Per-constraint violations of a path allocation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    /// `max |Σ_p x_p - λ_ij|` (or only the excess, for the throughput LP).
    pub demand: f64,
    /// `max [f_uv + f_vu - 2c]^+`.
    pub capacity: f64,
    /// `max |f_uv - f_vu|`.
    pub balance: f64,
    /// `max [-x_p]^+`.
    pub negativity: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.demand.max(self.capacity).max(self.balance).max(self.negativity)
    }
}

/// Directed edge loads `f_e = Σ_{p ∋ e} x_p`.
pub fn edge_loads(g: &PaymentGraph, x: &[(Path, f64)]) -> Vec<f64> {
    let mut f = vec![0.0; g.edge_count()];
    for (p, v) in x {
        for &e in p.edges() {
            f[e.index()] += v;
        }
    }
    f
}

/// Checks a path allocation against the demand, capacity and balance rows.
/// With `exact_demand` the demand rows are equalities, otherwise `≤ λ`.
pub fn allocation_residuals(
    g: &PaymentGraph,
    demand: &DemandMatrix,
    x: &[(Path, f64)],
    exact_demand: bool,
) -> Residuals {
    let mut res = Residuals::default();
    let mut per_pair: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    for (p, v) in x {
        res.negativity = res.negativity.max(-v);
        *per_pair.entry((p.source(), p.destination())).or_default() += v;
    }
    for ((i, j), d) in demand.iter() {
        let routed = per_pair.remove(&(i, j)).unwrap_or(0.0);
        let gap = if exact_demand { (routed - d.rate).abs() } else { (routed - d.rate).max(0.0) };
        res.demand = res.demand.max(gap);
    }
    for routed in per_pair.values() {
        res.demand = res.demand.max(routed.abs());
    }
    let f = edge_loads(g, x);
    for e in g.edge_ids().filter(|e| e.is_forward()) {
        let (a, b) = (f[e.index()], f[e.reverse().index()]);
        res.capacity = res.capacity.max(a + b - 2.0 * g.capacity(e) as f64);
        res.balance = res.balance.max((a - b).abs());
    }
    res
}

/// Dual witness that a demand matrix is outside the capacity region: with
/// `ζ_ij = -min_p Σ_{e∈p}(β_e + β_ē + γ_e - γ_ē)`, the value
/// `Σ λ_ij ζ_ij + 2 Σ_e c_e β_e` is negative while `β ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub zeta: BTreeMap<(NodeId, NodeId), f64>,
    /// Per directed edge, nonnegative.
    pub beta: Vec<f64>,
    /// Per directed edge.
    pub gamma: Vec<f64>,
    pub objective: f64,
}

impl Certificate {
    /// Writes `variable,u,v,value` rows, ending with the objective.
    pub fn write_csv<W: Write>(&self, g: &PaymentGraph, writer: W) -> Result<(), FluidError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| FluidError::Io(e.to_string());
        w.write_record(["variable", "u", "v", "value"]).map_err(io)?;
        for (&(i, j), z) in &self.zeta {
            w.write_record(["zeta", g.name(i), g.name(j), &z.to_string()]).map_err(io)?;
        }
        for e in g.edge_ids() {
            let d = g.edge(e);
            w.write_record(["beta", g.name(d.from), g.name(d.to), &self.beta[e.index()].to_string()])
                .map_err(io)?;
            w.write_record(["gamma", g.name(d.from), g.name(d.to), &self.gamma[e.index()].to_string()])
                .map_err(io)?;
        }
        w.write_record(["objective", "", "", &self.objective.to_string()]).map_err(io)?;
        w.flush().map_err(|e| FluidError::Io(e.to_string()))
    }
}

/// Path cost used by the certificate: `Σ_{e∈p}(β_e + β_ē + γ_e - γ_ē)`.
fn certificate_cost(p: &Path, beta: &[f64], gamma: &[f64]) -> f64 {
    p.edges()
        .iter()
        .map(|&e| {
            let r = e.reverse();
            beta[e.index()] + beta[r.index()] + gamma[e.index()] - gamma[r.index()]
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum CapacityCheck {
    /// Nonnegative path rates meeting every demand exactly.
    Feasible(Vec<(Path, f64)>),
    Infeasible(Certificate),
}

impl CapacityCheck {
    pub fn is_feasible(&self) -> bool {
        matches!(self, CapacityCheck::Feasible(_))
    }
}

/// Decides whether the demand can be split over paths so that every pair is
/// fully served, every channel carries at most `2c` and every channel is
/// balanced.
pub fn check_capacity_region(
    demand: &DemandMatrix,
    g: &PaymentGraph,
    paths: &mut PathTable,
) -> Result<CapacityCheck, FluidError> {
    let active = active_paths(demand, g, paths)?;
    let rows = Rows { pairs: active.len(), channels: g.channel_count() };
    let (sol, cols) = column_generation(g, &active, PathProgram::Throughput, first_paths(&active))?;
    let total: f64 = active.iter().map(|(_, rate, _)| rate).sum();
    if sol.objective >= total - 1e-9 * total.max(1.0) {
        let mut per_pair = vec![Vec::new(); active.len()];
        for (&(k, idx), &v) in cols.iter().zip(&sol.x) {
            if v > 1e-12 {
                per_pair[k].push((active[k].2[idx].clone(), v));
            }
        }
        let mut x = Vec::new();
        for (k, flows) in per_pair.into_iter().enumerate() {
            let served: f64 = flows.iter().map(|(_, v)| v).sum();
            let scale = if served > 0.0 { active[k].1 / served } else { 1.0 };
            x.extend(flows.into_iter().map(|(p, v)| (p, v * scale)));
        }
        x.sort_by(|a, b| a.0.cmp(&b.0));
        return Ok(CapacityCheck::Feasible(x));
    }
    // Optimal duals of the throughput program price every path at no less
    // than 1 - y_ij, so they separate with value at most optimum - Σλ < 0.
    let y = &sol.duals;
    let mut beta = vec![0.0; g.edge_count()];
    let mut gamma = vec![0.0; g.edge_count()];
    for e in g.edge_ids().filter(|e| e.is_forward()) {
        beta[e.index()] = y[rows.capacity(e)].max(0.0);
        gamma[e.index()] = y[rows.balance(e)];
    }
    let cert = build_certificate(&active, g, beta, gamma);
    if cert.objective < 0.0 {
        Ok(CapacityCheck::Infeasible(cert))
    } else {
        Err(FluidError::Numerical(format!(
            "throughput {} falls short of demand {total} but the duals do not separate (value {})",
            sol.objective, cert.objective
        )))
    }
}

fn build_certificate(
    active: &[((NodeId, NodeId), f64, Arc<Vec<Path>>)],
    g: &PaymentGraph,
    mut beta: Vec<f64>,
    mut gamma: Vec<f64>,
) -> Certificate {
    let scale = beta.iter().chain(gamma.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale > 0.0 {
        beta.iter_mut().for_each(|b| *b /= scale);
        gamma.iter_mut().for_each(|c| *c /= scale);
    }
    let mut zeta = BTreeMap::new();
    let mut objective = 0.0;
    for &(pair, rate, ref ps) in active {
        let min = ps.iter().map(|p| certificate_cost(p, &beta, &gamma)).fold(f64::INFINITY, f64::min);
        zeta.insert(pair, -min);
        objective += rate * -min;
    }
    for e in g.edge_ids() {
        objective += 2.0 * g.capacity(e) as f64 * beta[e.index()];
    }
    Certificate { zeta, beta, gamma, objective }
}

/// Step sizes and stopping rule of the dual descent.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidOptions {
    /// Inverse step for the balance multipliers; `None` picks `10·max(1, Σλ)`.
    pub m1: Option<f64>,
    /// Inverse step for the capacity multipliers; `None` as for `m1`.
    pub m2: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub window: usize,
    /// Re-solve the throughput LP exactly on the paths the descent used,
    /// adding improving paths until none is left.
    pub polish: bool,
}

impl Default for FluidOptions {
    fn default() -> Self {
        FluidOptions { m1: None, m2: None, max_iters: 20_000, tol: 1e-6, window: 2000, polish: true }
    }
}

/// Result of the throughput LP.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidSolution {
    /// Positive path rates in path order.
    pub x: Vec<(Path, f64)>,
    /// Balance multipliers per directed edge.
    pub mu: Vec<f64>,
    /// Capacity multipliers per directed edge, nonnegative.
    pub beta: Vec<f64>,
    /// `Σ_p x_p` of the returned rates.
    pub objective: f64,
    /// Dual value at the returned multipliers, an upper bound on the optimum.
    pub dual_objective: f64,
    /// Objective and worst constraint violation of the averaged descent iterate.
    pub averaged_objective: f64,
    pub averaged_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub polished: bool,
    pub max_hops: usize,
}

impl FluidSolution {
    /// Rates on the paths of one pair, in path order.
    pub fn pair_rates(&self, i: NodeId, j: NodeId) -> Vec<(&Path, f64)> {
        self.x
            .iter()
            .filter(|(p, _)| p.source() == i && p.destination() == j)
            .map(|(p, v)| (p, *v))
            .collect()
    }

    /// Index from pair to its `(path, rate)` list.
    pub fn by_pair(&self) -> HashMap<(NodeId, NodeId), Vec<(Path, f64)>> {
        let mut out: HashMap<(NodeId, NodeId), Vec<(Path, f64)>> = HashMap::new();
        for (p, v) in &self.x {
            out.entry((p.source(), p.destination())).or_default().push((p.clone(), *v));
        }
        out
    }

    /// Writes `path,rate` with paths rendered as `A>B>C`.
    pub fn write_paths_csv<W: Write>(&self, g: &PaymentGraph, writer: W) -> Result<(), FluidError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| FluidError::Io(e.to_string());
        w.write_record(["path", "rate"]).map_err(io)?;
        for (p, v) in &self.x {
            w.write_record([g.describe(p), v.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| FluidError::Io(e.to_string()))
    }

    /// Writes `u,v,mu,beta` per directed edge.
    pub fn write_duals_csv<W: Write>(&self, g: &PaymentGraph, writer: W) -> Result<(), FluidError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| FluidError::Io(e.to_string());
        w.write_record(["u", "v", "mu", "beta"]).map_err(io)?;
        for e in g.edge_ids() {
            let d = g.edge(e);
            w.write_record([
                g.name(d.from),
                g.name(d.to),
                &self.mu[e.index()].to_string(),
                &self.beta[e.index()].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| FluidError::Io(e.to_string()))
    }

    /// Reads a `path,rate` file written by [`FluidSolution::write_paths_csv`].
    /// Multipliers are left at zero.
    pub fn read_paths_csv<R: Read>(g: &PaymentGraph, reader: R) -> Result<FluidSolution, FluidError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut x = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx as u64 + 2;
            let rec = rec.map_err(|e| FluidError::Parse { line, message: e.to_string() })?;
            if rec.len() < 2 {
                return Err(FluidError::Parse { line, message: "expected path,rate".into() });
            }
            let p = g.parse_path(&rec[0]).map_err(|e| FluidError::Parse { line, message: e.to_string() })?;
            let v: f64 = rec[1]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| FluidError::Parse { line, message: format!("bad rate '{}'", &rec[1]) })?;
            x.push((p, v));
        }
        x.sort_by(|a, b| a.0.cmp(&b.0));
        let objective = x.iter().map(|(_, v)| v).sum();
        let max_hops = x.iter().map(|(p, _)| p.hops()).max().unwrap_or(1);
        Ok(FluidSolution {
            x,
            mu: vec![0.0; g.edge_count()],
            beta: vec![0.0; g.edge_count()],
            objective,
            dual_objective: f64::INFINITY,
            averaged_objective: objective,
            averaged_residual: 0.0,
            converged: true,
            iterations: 0,
            polished: false,
            max_hops,
        })
    }
}

/// `w_p = 1 + Σ_{e∈p}(-μ_e + μ_ē - β_e - β_ē)`.
fn path_value(p: &Path, mu: &[f64], beta: &[f64]) -> f64 {
    1.0 + p
        .edges()
        .iter()
        .map(|&e| {
            let r = e.reverse();
            -mu[e.index()] + mu[r.index()] - beta[e.index()] - beta[r.index()]
        })
        .sum::<f64>()
}

fn dual_value(
    g: &PaymentGraph,
    active: &[((NodeId, NodeId), f64, Arc<Vec<Path>>)],
    mu: &[f64],
    beta: &[f64],
) -> f64 {
    let mut d = 0.0;
    for (_, rate, ps) in active {
        let best = ps.iter().map(|p| path_value(p, mu, beta)).fold(0.0, f64::max);
        d += rate * best;
    }
    for e in g.edge_ids() {
        d += 2.0 * g.capacity(e) as f64 * beta[e.index()];
    }
    d
}

/// Maximises total routed rate `Σ_p x_p` subject to `Σ_{p∈P_ij} x_p ≤ λ_ij`,
/// channel capacity and channel balance, by projected dual descent on the
/// Lagrangian. The primal is recovered as the average of the recent per-iterate
/// extreme points, optionally polished by an exact solve.
pub fn fluid_solve(
    demand: &DemandMatrix,
    g: &PaymentGraph,
    paths: &mut PathTable,
    opts: &FluidOptions,
) -> Result<FluidSolution, FluidError> {
    let auto = 10.0 * demand.total_rate().max(1.0);
    let m1 = opts.m1.unwrap_or(auto);
    let m2 = opts.m2.unwrap_or(auto);
    if !(m1 > 0.0 && m2 > 0.0 && m1.is_finite() && m2.is_finite()) {
        return Err(FluidError::ParameterViolation("step sizes M1, M2 must be positive".into()));
    }
    if opts.window == 0 {
        return Err(FluidError::ParameterViolation("convergence window must be positive".into()));
    }
    let active = active_paths(demand, g, paths)?;
    let n_edges = g.edge_count();
    let mut mu = vec![0.0; n_edges];
    let mut beta = vec![0.0; n_edges];
    let mut best = (f64::INFINITY, mu.clone(), beta.clone());
    let mut history: Vec<f64> = Vec::new();
    let mut sum_x: Vec<Vec<f64>> = active.iter().map(|(_, _, ps)| vec![0.0; ps.len()]).collect();
    let mut load = vec![0.0; n_edges];
    let mut iterations = 0;
    let mut converged = active.is_empty();
    let mut averaged_from = 0;
    let mut prev_from = 0;
    let mut prev_x: Vec<Vec<f64>> = sum_x.clone();

    while !converged && iterations < opts.max_iters {
        // average over recent iterates only: the block since the last power
        // of two plus the block before it
        if iterations > 1 && iterations.is_power_of_two() {
            for (prev, cur) in prev_x.iter_mut().zip(sum_x.iter_mut()) {
                prev.copy_from_slice(cur);
                cur.iter_mut().for_each(|v| *v = 0.0);
            }
            averaged_from = prev_from;
            prev_from = iterations;
        }
        // inner maximisation: each pair on its best path if that path pays
        load.iter_mut().for_each(|f| *f = 0.0);
        let mut d = 0.0;
        for (k, (_, rate, ps)) in active.iter().enumerate() {
            let mut arg = None;
            let mut top = 0.0;
            for (idx, p) in ps.iter().enumerate() {
                let w = path_value(p, &mu, &beta);
                if w > top {
                    top = w;
                    arg = Some(idx);
                }
            }
            if let Some(idx) = arg {
                d += rate * top;
                sum_x[k][idx] += rate;
                for &e in ps[idx].edges() {
                    load[e.index()] += rate;
                }
            }
        }
        for e in g.edge_ids() {
            d += 2.0 * g.capacity(e) as f64 * beta[e.index()];
        }
        if d < best.0 {
            best = (d, mu.clone(), beta.clone());
        }
        history.push(best.0);
        iterations += 1;
        if history.len() > opts.window {
            let then = history[history.len() - 1 - opts.window];
            if then - best.0 < opts.tol * best.0.abs().max(1.0) {
                converged = true;
            }
        }
        // projected descent step
        let (old_mu, old_beta) = (mu.clone(), beta.clone());
        for e in g.edge_ids() {
            let (i, r) = (e.index(), e.reverse().index());
            mu[i] = old_mu[i] + (load[i] - load[r]) / m1;
            let cap = 2.0 * g.capacity(e) as f64;
            beta[i] = (old_beta[i] + (load[i] + load[r] - cap) / m2).max(0.0);
        }
    }

    for (prev, cur) in prev_x.iter().zip(sum_x.iter_mut()) {
        cur.iter_mut().zip(prev).for_each(|(c, p)| *c += p);
    }
    let n = (iterations - averaged_from).max(1) as f64;
    let mut averaged = Vec::new();
    for (k, (_, _, ps)) in active.iter().enumerate() {
        for (idx, p) in ps.iter().enumerate() {
            if sum_x[k][idx] > 0.0 {
                averaged.push((p.clone(), sum_x[k][idx] / n));
            }
        }
    }
    averaged.sort_by(|a, b| a.0.cmp(&b.0));
    let averaged_objective: f64 = averaged.iter().map(|(_, v)| v).sum();
    let averaged_residual = allocation_residuals(g, demand, &averaged, false).max();
    let (best_d, best_mu, best_beta) = best;
    let dual_objective = if best_d.is_finite() { best_d } else { 0.0 };

    let max_hops = paths.max_hops();
    if !opts.polish || active.is_empty() {
        return Ok(FluidSolution {
            objective: averaged_objective,
            x: averaged,
            mu: best_mu,
            beta: best_beta,
            dual_objective,
            averaged_objective,
            averaged_residual,
            converged,
            iterations,
            polished: false,
            max_hops,
        });
    }
    let seed: BTreeSet<(usize, usize)> = active
        .iter()
        .enumerate()
        .flat_map(|(k, (_, _, ps))| {
            let sx = &sum_x[k];
            (0..ps.len()).filter(move |&idx| sx[idx] > 0.0).map(move |idx| (k, idx))
        })
        .collect();
    let polished = polish(g, &active, seed)?;
    Ok(FluidSolution {
        objective: polished.x.iter().map(|(_, v)| v).sum(),
        x: polished.x,
        mu: polished.mu,
        beta: polished.beta,
        dual_objective: polished.dual_objective,
        averaged_objective,
        averaged_residual,
        converged,
        iterations,
        polished: true,
        max_hops,
    })
}

struct Polished {
    x: Vec<(Path, f64)>,
    mu: Vec<f64>,
    beta: Vec<f64>,
    dual_objective: f64,
}

/// Exact throughput LP by column generation, starting from the columns the
/// descent selected.
fn polish(
    g: &PaymentGraph,
    active: &[((NodeId, NodeId), f64, Arc<Vec<Path>>)],
    mut set: BTreeSet<(usize, usize)>,
) -> Result<Polished, FluidError> {
    let rows = Rows { pairs: active.len(), channels: g.channel_count() };
    set.extend(first_paths(active));
    let (sol, cols) = column_generation(g, active, PathProgram::Throughput, set)?;
    let y = &sol.duals;
    let mut x: Vec<(Path, f64)> = cols
        .iter()
        .zip(&sol.x)
        .filter(|(_, v)| **v > 1e-12)
        .map(|(&(k, idx), v)| (active[k].2[idx].clone(), *v))
        .collect();
    x.sort_by(|a, b| a.0.cmp(&b.0));
    let mut mu = vec![0.0; g.edge_count()];
    let mut beta = vec![0.0; g.edge_count()];
    for e in g.edge_ids().filter(|e| e.is_forward()) {
        let (cap, bal) = (y[rows.capacity(e)].max(0.0), y[rows.balance(e)]);
        beta[e.index()] = cap / 2.0;
        beta[e.reverse().index()] = cap / 2.0;
        mu[e.index()] = bal / 2.0;
        mu[e.reverse().index()] = -bal / 2.0;
    }
    let dual_objective = dual_value(g, active, &mu, &beta);
    Ok(Polished { x, mu, beta, dual_objective })
}

/// Objective of a path-formulated program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PathProgram {
    /// Maximise `Σ x_p` with `Σ_{p∈P_ij} x_p ≤ λ_ij`.
    Throughput,
    /// Maximise `θ` with `Σ_{p∈P_ij} x_p = θ·λ_ij`.
    Scale,
}

/// The first path of every active pair, a starting column set.
fn first_paths(active: &[((NodeId, NodeId), f64, Arc<Vec<Path>>)]) -> BTreeSet<(usize, usize)> {
    (0..active.len()).map(|k| (k, 0)).collect()
}

/// Solves a path program by column generation: the program restricted to
/// `set` is solved, every other path is priced against its duals, and the
/// most improving paths are added until none is left. Returns the final
/// solution and the `(pair, path index)` of its columns; for
/// [`PathProgram::Scale`] one extra last variable holds `θ`.
fn column_generation(
    g: &PaymentGraph,
    active: &[((NodeId, NodeId), f64, Arc<Vec<Path>>)],
    program: PathProgram,
    mut set: BTreeSet<(usize, usize)>,
) -> Result<(LpSolution, Vec<(usize, usize)>), FluidError> {
    let rows = Rows { pairs: active.len(), channels: g.channel_count() };
    let gain = match program {
        PathProgram::Throughput => 1.0,
        PathProgram::Scale => 0.0,
    };
    loop {
        let cols: Vec<(usize, usize)> = set.iter().copied().collect();
        let n = cols.len();
        let columns: Vec<Vec<(usize, f64)>> = cols.iter().map(|&(k, idx)| rows.column(k, &active[k].2[idx])).collect();
        let mut row_entries = transpose(&columns, rows.pairs + 2 * rows.channels);
        let mut lp = LinearProgram::new(n + usize::from(program == PathProgram::Scale));
        match program {
            PathProgram::Throughput => {
                for k in 0..n {
                    lp.set_objective(k, 1.0);
                }
                for (k, (_, rate, _)) in active.iter().enumerate() {
                    lp.add_row(std::mem::take(&mut row_entries[k]), Relation::Le, *rate);
                }
            }
            PathProgram::Scale => {
                lp.set_objective(n, 1.0);
                for (k, (_, rate, _)) in active.iter().enumerate() {
                    let mut entries = std::mem::take(&mut row_entries[k]);
                    entries.push((n, -rate));
                    lp.add_row(entries, Relation::Eq, 0.0);
                }
            }
        }
        for ch in 0..rows.channels {
            let e = EdgeId(2 * ch as u32);
            lp.add_row(std::mem::take(&mut row_entries[rows.capacity(e)]), Relation::Le, 2.0 * g.capacity(e) as f64);
        }
        for ch in 0..rows.channels {
            let e = EdgeId(2 * ch as u32);
            lp.add_row(std::mem::take(&mut row_entries[rows.balance(e)]), Relation::Eq, 0.0);
        }
        let sol = lp.maximize()?;
        let y = &sol.duals;
        let mut entering = Vec::new();
        for (k, (_, _, ps)) in active.iter().enumerate() {
            for (idx, p) in ps.iter().enumerate() {
                if set.contains(&(k, idx)) {
                    continue;
                }
                let cost: f64 = y[k]
                    + p.edges()
                        .iter()
                        .map(|&e| {
                            y[rows.capacity(e)] + if e.is_forward() { y[rows.balance(e)] } else { -y[rows.balance(e)] }
                        })
                        .sum::<f64>();
                if gain - cost > 1e-9 {
                    entering.push((gain - cost, k, idx));
                }
            }
        }
        if entering.is_empty() {
            return Ok((sol, cols));
        }
        entering.sort_by(|a, b| b.0.total_cmp(&a.0));
        for &(_, k, idx) in entering.iter().take(200) {
            set.insert((k, idx));
        }
    }
}

/// Left and right side of the drift inequality for one queue state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCheck {
    /// `Σ_ij λ_ij · min_{p∈P_ij} Σ_{e∈p} w_e`.
    pub lhs: f64,
    /// `Σ_e δ q_e / α`.
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates the min-weight drift inequality repeatedly for one demand
/// matrix, confirming once that the demand lies in the capacity region.
pub struct Lemma1Checker {
    active: Vec<((NodeId, NodeId), f64, Arc<Vec<Path>>)>,
}

impl Lemma1Checker {
    pub fn new(demand: &DemandMatrix, g: &PaymentGraph, paths: &mut PathTable) -> Result<Self, FluidError> {
        if !check_capacity_region(demand, g, paths)?.is_feasible() {
            return Err(FluidError::InfeasibleDemand);
        }
        Ok(Lemma1Checker { active: active_paths(demand, g, paths)? })
    }

    pub fn check(&self, state: &ChannelState, g: &PaymentGraph, delta: f64, alpha: f64) -> DriftCheck {
        let mut lhs = 0.0;
        for (_, rate, ps) in &self.active {
            let min = ps
                .iter()
                .map(|p| p.weight(|e| edge_weight(state, e, delta, alpha, g)))
                .fold(f64::INFINITY, f64::min);
            lhs += rate * min;
        }
        let rhs: f64 = g.edge_ids().map(|e| delta * state.queue(e) as f64 / alpha).sum();
        DriftCheck { lhs, rhs, holds: lhs <= rhs + 1e-9 }
    }
}

/// One-shot form of [`Lemma1Checker`].
pub fn lemma1_check(
    state: &ChannelState,
    demand: &DemandMatrix,
    g: &PaymentGraph,
    paths: &mut PathTable,
    delta: f64,
    alpha: f64,
) -> Result<DriftCheck, FluidError> {
    Ok(Lemma1Checker::new(demand, g, paths)?.check(state, g, delta, alpha))
}

/// Upper bound on the steady-state mean of `Σ_e q_e` under MaxWeight
/// routing with rebalancing probability `delta`. `|E|` and the capacity sum
/// run over directed edges.
pub fn theorem1_bound(
    g: &PaymentGraph,
    demand: &DemandMatrix,
    delta: f64,
    alpha: f64,
    m: f64,
) -> Result<f64, FluidError> {
    let c_max = g.c_max() as f64;
    let c_min = g.c_min() as f64;
    if !(m > c_max) {
        return Err(FluidError::ParameterViolation(format!("M = {m} must exceed c_max = {c_max}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(FluidError::ParameterViolation(format!("delta = {delta} must lie in (0, 1]")));
    }
    if !(alpha > 1.0) {
        return Err(FluidError::ParameterViolation(format!("alpha = {alpha} must exceed 1")));
    }
    if !(delta < m) {
        return Err(FluidError::ParameterViolation(format!("delta = {delta} must be below M = {m}")));
    }
    let e = g.edge_count() as f64;
    let sigma2 = demand.total_variance();
    let c2: f64 = g.edge_ids().map(|id| (g.capacity(id) as f64).powi(2)).sum();
    Ok((12.0 * e * sigma2 + 2.0 * c2) * alpha * c_max / (delta * delta)
        + 12.0 * e * alpha * c_max / delta
        + 4.0 * alpha * c_max * e * m / delta
        + c_max * e / c_min * m)
}

/// Largest `θ` such that `θ·Λ` lies in the capacity region.
pub fn max_scale_factor(demand: &DemandMatrix, g: &PaymentGraph, paths: &mut PathTable) -> Result<f64, FluidError> {
    let active = active_paths(demand, g, paths)?;
    if active.is_empty() {
        return Err(FluidError::InvalidDemand("demand matrix has no positive entry".into()));
    }
    let (sol, _) = column_generation(g, &active, PathProgram::Scale, first_paths(&active))?;
    Ok(sol.objective)
}
