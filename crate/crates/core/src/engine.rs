//! Simulation loop: arrivals → policy → ledger step, with metrics, audits,
//! stability diagnostics and parallel parameter sweeps.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fluid::{check_capacity_region, fluid_solve, DemandMatrix, FluidError, FluidOptions, FluidSolution, Lemma1Checker};
use crate::ledger::{ChannelState, LedgerError, ServiceTiming, SlotFlows};
use crate::policy::{Fate, FluidRouting, PolicyError, PolicyKind, PolicyParams, Router};
use crate::topology::{PathTable, PaymentGraph};
use crate::workload::{ArrivalSource, TraceSource, WorkloadError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("slot {t}: {source}")]
    NegativeQueue { t: u64, source: LedgerError, dump: String },
    #[error("audit failed: {0}")]
    Audit(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Where a run's arrivals come from.
#[derive(Debug, Clone)]
pub enum WorkloadSpec {
    /// Poisson arrivals at the given rates; with `one_per_slot` the
    /// transactions are flattened, shuffled and replayed one per slot.
    Poisson { demand: DemandMatrix, one_per_slot: bool },
    /// A loaded trace.
    Trace { source: Arc<TraceSource>, shuffle: bool },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub graph: Arc<PaymentGraph>,
    pub workload: WorkloadSpec,
    pub policy: PolicyKind,
    pub params: PolicyParams,
    pub horizon: u64,
    pub seed: u64,
    pub timing: ServiceTiming,
    /// Slots between time-series samples; 0 disables the series.
    pub sample_interval: u64,
    /// Fraction of initial slots excluded from steady-state averages.
    pub warmup_fraction: f64,
    /// Length in slots of the windowed success ratio.
    pub window: u64,
    pub fluid: FluidOptions,
    /// Hop cap for the fluid path sets; `None` means every loopless path.
    pub fluid_max_hops: Option<usize>,
    /// Pre-solved fluid rates; solved at startup when absent.
    pub fluid_solution: Option<Arc<FluidSolution>>,
    /// Slots between drift-inequality checks; 0 disables them.
    pub lemma1_interval: u64,
}

impl SimConfig {
    pub fn new(graph: Arc<PaymentGraph>, workload: WorkloadSpec, policy: PolicyKind, params: PolicyParams) -> Self {
        SimConfig {
            graph,
            workload,
            policy,
            params,
            horizon: 10_000,
            seed: 1,
            timing: ServiceTiming::default(),
            sample_interval: 1,
            warmup_fraction: 0.1,
            window: 1000,
            fluid: FluidOptions::default(),
            fluid_max_hops: None,
            fluid_solution: None,
            lemma1_interval: 100,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.horizon == 0 {
            return Err(EngineError::Config("horizon must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(EngineError::Config(format!("warmup fraction {} must lie in [0, 1)", self.warmup_fraction)));
        }
        if self.window == 0 {
            return Err(EngineError::Config("window must be at least 1".into()));
        }
        self.params.validate(self.policy, &self.graph)?;
        Ok(())
    }
}

/// One time-series sample, taken after the slot's step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: u64,
    pub offered: u64,
    pub success_ratio: f64,
    pub windowed_success_ratio: f64,
    pub total_queue: u64,
    pub avg_imbalance_per_edge: f64,
    pub onchain_volume: u64,
}

/// Outcome of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub policy: PolicyKind,
    pub horizon: u64,
    pub warmup: u64,
    pub offered_count: u64,
    pub offered_volume: u64,
    pub success_count: u64,
    pub success_volume: u64,
    pub onchain_count: u64,
    pub onchain_volume: u64,
    pub rejected_count: u64,
    pub rejected_volume: u64,
    /// Units moved by queue rebalancing over the whole run.
    pub rebalanced_volume: u64,
    /// `success_count / offered_count` over the whole run (0 if nothing offered).
    pub success_ratio: f64,
    /// Success ratio over the last `window` slots.
    pub windowed_success_ratio: f64,
    /// `Σ|z|` over channels at the horizon, divided by the channel count.
    pub avg_imbalance_per_edge: f64,
    /// On-chain units (rebalancing plus whole transactions) per slot after warm-up.
    pub onchain_rate: f64,
    /// Mean of `Σ q` over slots after warm-up.
    pub mean_total_queue: f64,
    pub final_total_queue: u64,
    /// Queue on every directed edge after the last slot.
    pub final_queues: Vec<u64>,
    pub lemma1_checks: u64,
    pub lemma1_failures: u64,
    /// Per-slot `Σ q` after warm-up, for batch-means errors.
    pub queue_trace: Vec<u64>,
    /// Per-slot on-chain units after warm-up.
    pub onchain_trace: Vec<u64>,
    pub series: Vec<Sample>,
    pub fluid_objective: Option<f64>,
    pub elapsed_secs: f64,
}

impl SimMetrics {
    /// Scalar metrics in a stable order, as written to metric CSVs.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("success_ratio", self.success_ratio),
            ("windowed_success_ratio", self.windowed_success_ratio),
            ("success_volume", self.success_volume as f64),
            ("offered_count", self.offered_count as f64),
            ("success_count", self.success_count as f64),
            ("onchain_count", self.onchain_count as f64),
            ("rejected_count", self.rejected_count as f64),
            ("offered_volume", self.offered_volume as f64),
            ("onchain_volume", self.onchain_volume as f64),
            ("rejected_volume", self.rejected_volume as f64),
            ("rebalanced_volume", self.rebalanced_volume as f64),
            ("avg_imbalance_per_edge", self.avg_imbalance_per_edge),
            ("onchain_rate", self.onchain_rate),
            ("mean_total_queue", self.mean_total_queue),
            ("final_total_queue", self.final_total_queue as f64),
            ("lemma1_checks", self.lemma1_checks as f64),
            ("lemma1_failures", self.lemma1_failures as f64),
        ];
        if let Some(f) = self.fluid_objective {
            v.push(("fluid_objective", f));
        }
        v
    }

    /// Writes `metric,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| EngineError::Io(e.to_string());
        w.write_record(["metric", "value"]).map_err(io)?;
        w.write_record(["policy", self.policy.name()]).map_err(io)?;
        w.write_record(["horizon", &self.horizon.to_string()]).map_err(io)?;
        for (k, v) in self.scalars() {
            w.write_record([k, &v.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| EngineError::Io(e.to_string()))
    }

    /// Writes the sampled time series.
    pub fn write_series_csv<W: Write>(&self, writer: W) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| EngineError::Io(e.to_string());
        w.write_record([
            "t",
            "offered",
            "success_ratio",
            "windowed_success_ratio",
            "total_queue",
            "avg_imbalance_per_edge",
            "onchain_volume",
        ])
        .map_err(io)?;
        for s in &self.series {
            w.write_record([
                s.t.to_string(),
                s.offered.to_string(),
                s.success_ratio.to_string(),
                s.windowed_success_ratio.to_string(),
                s.total_queue.to_string(),
                s.avg_imbalance_per_edge.to_string(),
                s.onchain_volume.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| EngineError::Io(e.to_string()))
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Demand rates implied by a trace: per-pair volume per slot.
fn trace_demand(g: &PaymentGraph, source: &TraceSource, slots: u64) -> Result<DemandMatrix, EngineError> {
    let mut sums: std::collections::BTreeMap<_, f64> = std::collections::BTreeMap::new();
    for t in &source.transactions {
        *sums.entry((t.tx.src, t.tx.dst)).or_default() += t.tx.amount as f64;
    }
    let mut m = DemandMatrix::new();
    for ((i, j), v) in sums {
        if i.index() < g.node_count() && j.index() < g.node_count() {
            m.insert_poisson(i, j, v / slots.max(1) as f64)?;
        }
    }
    Ok(m)
}

/// Runs one simulation.
pub fn run(config: &SimConfig) -> Result<SimMetrics, EngineError> {
    config.validate()?;
    let started = Instant::now();
    let g: &PaymentGraph = &config.graph;
    let mut workload_rng = ChaCha8Rng::seed_from_u64(config.seed);
    workload_rng.set_stream(1);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(config.seed);
    policy_rng.set_stream(2);

    let (mut source, demand) = match &config.workload {
        WorkloadSpec::Poisson { demand, one_per_slot } => {
            let src = if *one_per_slot {
                ArrivalSource::poisson_one_per_slot(demand, config.horizon, &mut workload_rng)
            } else {
                ArrivalSource::Poisson(demand.clone())
            };
            (src, Some(demand.clone()))
        }
        WorkloadSpec::Trace { source, shuffle } => {
            (ArrivalSource::Scheduled(source.batches(*shuffle, &mut workload_rng)), None)
        }
    };

    let mut router = Router::new(config.policy, config.params.clone(), g, config.timing)?;
    let mut fluid_objective = None;
    if config.policy == PolicyKind::Fluid {
        let demand = match (&demand, &config.workload) {
            (Some(d), _) => d.clone(),
            (None, WorkloadSpec::Trace { source, .. }) => trace_demand(g, source, config.horizon)?,
            _ => unreachable!(),
        };
        let solution = match &config.fluid_solution {
            Some(s) => s.clone(),
            None => {
                let mut table = PathTable::new(g, config.fluid_max_hops);
                Arc::new(fluid_solve(&demand, g, &mut table, &config.fluid)?)
            }
        };
        fluid_objective = Some(solution.objective);
        router = router.with_fluid(FluidRouting::new(&solution, &demand));
    }

    let lemma = match (&demand, config.lemma1_interval) {
        (Some(d), n) if n > 0 && g.node_count() <= config.params.exact_vertex_bound && !d.is_empty() => {
            let mut table = PathTable::new(g, config.params.max_hops);
            if check_capacity_region(d, g, &mut table)?.is_feasible() {
                Some(Lemma1Checker::new(d, g, &mut table)?)
            } else {
                log::warn!("demand lies outside the capacity region; drift checks disabled");
                None
            }
        }
        _ => None,
    };

    let warmup = (config.warmup_fraction * config.horizon as f64).floor() as u64;
    let mut state = ChannelState::new(g);
    let mut flows = SlotFlows::new(g);
    let mut m = SimMetrics {
        policy: config.policy,
        horizon: config.horizon,
        warmup,
        offered_count: 0,
        offered_volume: 0,
        success_count: 0,
        success_volume: 0,
        onchain_count: 0,
        onchain_volume: 0,
        rejected_count: 0,
        rejected_volume: 0,
        rebalanced_volume: 0,
        success_ratio: 0.0,
        windowed_success_ratio: 0.0,
        avg_imbalance_per_edge: 0.0,
        onchain_rate: 0.0,
        mean_total_queue: 0.0,
        final_total_queue: 0,
        final_queues: Vec::new(),
        lemma1_checks: 0,
        lemma1_failures: 0,
        queue_trace: Vec::with_capacity((config.horizon - warmup) as usize),
        onchain_trace: Vec::with_capacity((config.horizon - warmup) as usize),
        series: Vec::new(),
        fluid_objective,
        elapsed_secs: 0.0,
    };
    let mut window: VecDeque<(u64, u64)> = VecDeque::with_capacity(config.window as usize + 1);
    let (mut win_offered, mut win_success) = (0u64, 0u64);
    let (mut arrivals_total, mut served_total) = (0u64, 0u64);
    if let WorkloadSpec::Trace { source, .. } = &config.workload {
        if !source.transactions.iter().any(|t| t.tx.amount == 1) {
            log::warn!("trace has no unit-value transaction; the queue chain may not be irreducible");
        }
    }

    for t in 0..config.horizon {
        let batch = source.next_batch(t, &mut workload_rng);
        let dec = router.route(g, &state, &batch.entries, &mut policy_rng, &mut flows)?;
        let report = match state.step(g, &flows, config.timing) {
            Ok(r) => r,
            Err(e @ LedgerError::NegativeQueue { .. }) => {
                let mut buf = Vec::new();
                state.write_csv(g, &mut buf)?;
                return Err(EngineError::NegativeQueue { t, source: e, dump: String::from_utf8_lossy(&buf).into_owned() });
            }
            Err(e) => return Err(e.into()),
        };
        arrivals_total += report.arrivals;
        served_total += report.service_total;
        m.rebalanced_volume += report.rebalanced;

        let (mut slot_offered, mut slot_success, mut slot_onchain) = (0u64, 0u64, report.rebalanced);
        for o in &dec.outcomes {
            slot_offered += 1;
            m.offered_volume += o.amount;
            match o.fate {
                Fate::OffChain => {
                    slot_success += 1;
                    m.success_volume += o.amount;
                }
                Fate::OnChain => {
                    m.onchain_count += 1;
                    m.onchain_volume += o.amount;
                    slot_onchain += o.amount;
                }
                Fate::Rejected => {
                    m.rejected_count += 1;
                    m.rejected_volume += o.amount;
                }
            }
        }
        m.offered_count += slot_offered;
        m.success_count += slot_success;
        window.push_back((slot_offered, slot_success));
        win_offered += slot_offered;
        win_success += slot_success;
        if window.len() as u64 > config.window {
            let (o, s) = window.pop_front().unwrap();
            win_offered -= o;
            win_success -= s;
        }
        if t >= warmup {
            m.queue_trace.push(state.total());
            m.onchain_trace.push(slot_onchain);
        }
        if let Some(check) = &lemma {
            if (t + 1) % config.lemma1_interval == 0 {
                m.lemma1_checks += 1;
                if !check.check(&state, g, config.params.delta, config.params.alpha).holds {
                    m.lemma1_failures += 1;
                }
            }
        }
        if config.sample_interval > 0 && ((t + 1) % config.sample_interval == 0 || t + 1 == config.horizon) {
            m.series.push(Sample {
                t: t + 1,
                offered: m.offered_count,
                success_ratio: ratio(m.success_count, m.offered_count),
                windowed_success_ratio: ratio(win_success, win_offered),
                total_queue: state.total(),
                avg_imbalance_per_edge: state.total_abs_imbalance() as f64 / g.channel_count() as f64,
                onchain_volume: m.onchain_volume + m.rebalanced_volume,
            });
        }
    }

    // audits: queue units and transaction value
    if arrivals_total != served_total + m.rebalanced_volume + state.total() {
        return Err(EngineError::Audit(format!(
            "queue units: arrivals {arrivals_total} != served {served_total} + rebalanced {} + final {}",
            m.rebalanced_volume,
            state.total()
        )));
    }
    if m.offered_volume != m.success_volume + m.onchain_volume + m.rejected_volume {
        return Err(EngineError::Audit(format!(
            "transaction value: offered {} != off-chain {} + on-chain {} + rejected {}",
            m.offered_volume, m.success_volume, m.onchain_volume, m.rejected_volume
        )));
    }

    let steady = (config.horizon - warmup).max(1) as f64;
    m.success_ratio = ratio(m.success_count, m.offered_count);
    m.windowed_success_ratio = ratio(win_success, win_offered);
    m.avg_imbalance_per_edge = state.total_abs_imbalance() as f64 / g.channel_count() as f64;
    m.onchain_rate = m.onchain_trace.iter().sum::<u64>() as f64 / steady;
    m.mean_total_queue = m.queue_trace.iter().sum::<u64>() as f64 / steady;
    m.final_total_queue = state.total();
    m.final_queues = state.queues().to_vec();
    m.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(m)
}

/// Mean and batch-means standard error of a stationary series.
pub fn batch_means(values: &[u64], batches: usize) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<u64>() as f64 / values.len() as f64;
    let b = batches.max(2).min(values.len());
    let size = values.len() / b;
    if size == 0 || b < 2 {
        return (mean, 0.0);
    }
    let means: Vec<f64> =
        (0..b).map(|k| values[k * size..(k + 1) * size].iter().sum::<u64>() as f64 / size as f64).collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Stability summary of a run with on-chain rebalancing enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub mean_total_queue: f64,
    pub mean_total_queue_se: f64,
    pub bound: Option<f64>,
    pub within_bound: Option<bool>,
    pub onchain_rate: f64,
    pub onchain_se: f64,
    /// `δ·|E|` with `|E|` counting directed edges.
    pub onchain_limit: f64,
    /// `onchain_rate ≤ onchain_limit + 3·onchain_se`.
    pub onchain_within_limit: bool,
    /// `Σq(T) / T`, positive and stable when queues grow linearly.
    pub growth_slope: f64,
}

pub fn stability_diagnostic(metrics: &SimMetrics, g: &PaymentGraph, delta: f64, bound: Option<f64>) -> StabilityReport {
    let (mean_q, se_q) = batch_means(&metrics.queue_trace, 20);
    let (rate, se_r) = batch_means(&metrics.onchain_trace, 20);
    let limit = delta * g.edge_count() as f64;
    StabilityReport {
        mean_total_queue: mean_q,
        mean_total_queue_se: se_q,
        bound,
        within_bound: bound.map(|b| mean_q <= b),
        onchain_rate: rate,
        onchain_se: se_r,
        onchain_limit: limit,
        onchain_within_limit: rate <= limit + 3.0 * se_r,
        growth_slope: metrics.final_total_queue as f64 / metrics.horizon as f64,
    }
}

/// One point of a parameter grid as `(key, value)` pairs.
pub type GridPoint = Vec<(String, String)>;

/// Cartesian product of the axes, first axis varying slowest.
pub fn expand_grid(axes: &[(String, Vec<String>)]) -> Vec<GridPoint> {
    if axes.is_empty() || axes.iter().any(|(_, v)| v.is_empty()) {
        return Vec::new();
    }
    let mut out: Vec<GridPoint> = vec![Vec::new()];
    for (key, values) in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    out
}

/// Runs every grid point, at most `jobs` at a time; results keep grid order.
pub fn sweep<F>(grid: &[GridPoint], jobs: usize, make_config: F) -> Result<Vec<SimMetrics>, EngineError>
where
    F: Fn(&GridPoint) -> Result<SimConfig, EngineError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EngineError::Config(e.to_string()))?;
    pool.install(|| grid.par_iter().map(|p| make_config(p).and_then(|c| run(&c))).collect())
}

/// Tidy CSV: one row per grid point per metric.
pub fn write_sweep_csv<W: Write>(writer: W, grid: &[GridPoint], results: &[SimMetrics]) -> Result<(), EngineError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| EngineError::Io(e.to_string());
    let keys: Vec<&str> = grid.first().map(|p| p.iter().map(|(k, _)| k.as_str()).collect()).unwrap_or_default();
    let mut header: Vec<&str> = keys.clone();
    header.extend(["metric", "value"]);
    w.write_record(&header).map_err(io)?;
    for (point, metrics) in grid.iter().zip(results) {
        for (name, value) in metrics.scalars() {
            let mut row: Vec<String> = point.iter().map(|(_, v)| v.clone()).collect();
            row.push(name.to_string());
            row.push(value.to_string());
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| EngineError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeId;

    fn single(c: i64) -> Arc<PaymentGraph> {
        Arc::new(PaymentGraph::build(&[("A", "B", c)]).unwrap())
    }

    #[test]
    fn paired_demand_always_succeeds() {
        let g = single(2);
        let source = TraceSource {
            transactions: (0..200)
                .flat_map(|t| {
                    [(0u32, 1u32), (1, 0)].map(|(s, d)| crate::workload::TraceTransaction {
                        tx: crate::workload::Transaction { src: NodeId(s), dst: NodeId(d), amount: 1 },
                        raw_amount: 1.0,
                        slot: Some(t),
                    })
                })
                .collect(),
            summary: Default::default(),
        };
        let params = PolicyParams { m: 3, ..PolicyParams::default() };
        let mut cfg = SimConfig::new(
            g,
            WorkloadSpec::Trace { source: Arc::new(source), shuffle: false },
            PolicyKind::Exact,
            params,
        );
        cfg.horizon = 200;
        let m = run(&cfg).unwrap();
        assert_eq!(m.success_ratio, 1.0);
        assert_eq!(m.avg_imbalance_per_edge, 0.0);
        assert_eq!(m.final_total_queue, 0);
    }

    #[test]
    fn one_way_demand_saturates() {
        let g = single(1);
        let mut d = DemandMatrix::new();
        d.insert_poisson(NodeId(0), NodeId(1), 1.0).unwrap();
        let params = PolicyParams { m: 1, delta: 0.0, drop_onchain: true, ..PolicyParams::default() };
        let mut cfg = SimConfig::new(g, WorkloadSpec::Poisson { demand: d, one_per_slot: false }, PolicyKind::Exact, params);
        cfg.horizon = 2000;
        let m = run(&cfg).unwrap();
        assert!(m.success_ratio < 0.01, "{}", m.success_ratio);
    }

    #[test]
    fn runs_are_deterministic() {
        let g = Arc::new(PaymentGraph::build(&[("A", "B", 3), ("B", "C", 3), ("A", "C", 3)]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = crate::workload::gen_demand_matrix(3, 1.5, &mut rng).unwrap();
        let params = PolicyParams { m: 4, ..PolicyParams::default() };
        let mut cfg = SimConfig::new(g, WorkloadSpec::Poisson { demand: d, one_per_slot: false }, PolicyKind::Exact, params);
        cfg.horizon = 500;
        let (a, b) = (run(&cfg).unwrap(), run(&cfg).unwrap());
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn grid_expansion() {
        assert!(expand_grid(&[]).is_empty());
        let g = expand_grid(&[("a".into(), vec!["1".into(), "2".into()]), ("b".into(), vec!["x".into()])]);
        assert_eq!(g.len(), 2);
        assert_eq!(g[1], vec![("a".to_string(), "2".to_string()), ("b".to_string(), "x".to_string())]);
    }

    #[test]
    fn batch_means_of_constant_series() {
        let (m, se) = batch_means(&[5; 100], 10);
        assert_eq!((m, se), (5.0, 0.0));
    }
}
