//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pcnroute::engine::{self, EngineError, SimConfig, SimMetrics, WorkloadSpec};
use pcnroute::fluid::{self, check_capacity_region, CapacityCheck, DemandMatrix, FluidSolution};
use pcnroute::ledger::ChannelState;
use pcnroute::policy::{PolicyError, Thresholds};
use pcnroute::topology::{PathTable, PaymentGraph};
use pcnroute::workload::{self, ArrivalSource, TraceSource};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{
    ConfigError, DemandSource, GraphSource, Origin, RawConfig, Settings, ThresholdSetting, WorkloadSettings,
};
use crate::Common;

/// Usage errors exit with 1, data errors with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_)
            | EngineError::Policy(
                PolicyError::InvalidParams(_) | PolicyError::GraphTooLarge { .. } | PolicyError::MissingFluidSolution,
            ) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn data<E: std::fmt::Display>(context: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", context.display()))
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn load_raw(common: &Common) -> Result<RawConfig, CliError> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::new(PathBuf::new()),
    };
    for s in &common.set {
        raw.set_flag(s)?;
    }
    if let Some(seed) = common.seed {
        raw.insert("sim.seed", &seed.to_string(), Origin::Flag)?;
    }
    Ok(raw)
}

fn out_dir(common: &Common, settings: &Settings) -> Result<PathBuf, CliError> {
    let dir = common
        .out
        .clone()
        .or_else(|| settings.output_dir.clone())
        .or_else(|| std::env::var_os("PCNROUTE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(data(&dir))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(data(path))?))
}

fn load_graph(s: &Settings) -> Result<PaymentGraph, CliError> {
    let g = match &s.graph {
        GraphSource::File(p) => PaymentGraph::from_csv_path(p).map_err(data(p))?,
        GraphSource::Random { nodes, channels, capacity } => {
            workload::random_graph(*nodes, *channels, *capacity, &mut rng(s.seed, 3))
                .map_err(|e| CliError::Usage(format!("graph.random: {e}")))?
        }
    };
    match s.capacity {
        None => Ok(g),
        Some(c) => {
            let list: Vec<(String, String, i64)> = g
                .edge_ids()
                .filter(|e| e.is_forward())
                .map(|e| (g.name(g.edge(e).from).to_string(), g.name(g.edge(e).to).to_string(), c))
                .collect();
            PaymentGraph::build(&list).map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn load_demand(s: &Settings, g: &PaymentGraph) -> Result<DemandMatrix, CliError> {
    let WorkloadSettings::Poisson { demand, load, .. } = &s.workload else {
        return Err(CliError::Usage("this command needs workload.kind = poisson".into()));
    };
    let d = match demand {
        DemandSource::File(p) => DemandMatrix::read_csv(g, File::open(p).map_err(data(p))?).map_err(data(p))?,
        DemandSource::Generated { total_rate } => {
            workload::gen_demand_matrix(g.node_count(), *total_rate, &mut rng(s.seed, 4))
                .map_err(|e| CliError::Usage(format!("workload.total_rate: {e}")))?
        }
    };
    match load {
        None => Ok(d),
        Some(l) => {
            let mut table = PathTable::new(g, s.fluid_max_hops);
            let (scaled, _) =
                workload::scale_into_region(&d, g, &mut table, *l).map_err(|e| CliError::Data(e.to_string()))?;
            Ok(scaled)
        }
    }
}

/// Reads `u,v,threshold`; edges not listed keep the scalar `M`.
fn load_thresholds(path: &Path, g: &PaymentGraph, m: u64) -> Result<Vec<u64>, CliError> {
    let mut v = vec![m; g.edge_count()];
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(File::open(path).map_err(data(path))?);
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(data(path))?;
        let line = idx + 1;
        let err = |m: String| CliError::Data(format!("{}: line {line}: {m}", path.display()));
        if rec.len() < 3 {
            return Err(err("expected u,v,threshold".into()));
        }
        let Ok(t) = rec[2].parse::<u64>() else {
            if idx == 0 {
                continue;
            }
            return Err(err(format!("bad threshold '{}'", &rec[2])));
        };
        let (u, v_) = (g.require_node(&rec[0]).map_err(|e| err(e.to_string()))?, g.require_node(&rec[1]).map_err(|e| err(e.to_string()))?);
        let e = g.edge_between(u, v_).ok_or_else(|| err(format!("no channel {} - {}", &rec[0], &rec[1])))?;
        v[e.index()] = t;
    }
    Ok(v)
}

fn sim_config(s: &Settings) -> Result<SimConfig, CliError> {
    let g = Arc::new(load_graph(s)?);
    let spec = match &s.workload {
        WorkloadSettings::Poisson { one_per_slot, .. } => {
            WorkloadSpec::Poisson { demand: load_demand(s, &g)?, one_per_slot: *one_per_slot }
        }
        WorkloadSettings::Trace { file, amount_cap, amount_scale, shuffle } => {
            let name = file.display().to_string();
            let f = File::open(file).map_err(data(file))?;
            let trace: TraceSource = workload::read_transactions(&g, BufReader::new(f), &name, *amount_cap, *amount_scale)
                .map_err(|e| CliError::Data(e.to_string()))?;
            WorkloadSpec::Trace { source: Arc::new(trace), shuffle: *shuffle }
        }
    };
    let mut params = s.params.clone();
    params.thresholds = match &s.thresholds {
        None => None,
        Some(ThresholdSetting::Uniform) => Some(Thresholds::Uniform),
        Some(ThresholdSetting::Capacity) => Some(Thresholds::Capacity),
        Some(ThresholdSetting::File(p)) => Some(Thresholds::PerEdge(load_thresholds(p, &g, params.m)?)),
    };
    let fluid_solution = match &s.fluid_solution {
        None => None,
        Some(p) => {
            let f = File::open(p).map_err(data(p))?;
            Some(Arc::new(FluidSolution::read_paths_csv(&g, f).map_err(data(p))?))
        }
    };
    let mut cfg = SimConfig::new(g, spec, s.policy, params);
    cfg.horizon = s.horizon;
    cfg.seed = s.seed;
    cfg.timing = s.timing;
    cfg.sample_interval = s.sample_interval;
    cfg.warmup_fraction = s.warmup_fraction;
    cfg.window = s.window;
    cfg.lemma1_interval = s.lemma1_interval;
    cfg.fluid = s.fluid.clone();
    cfg.fluid_max_hops = s.fluid_max_hops;
    cfg.fluid_solution = fluid_solution;
    cfg.validate()?;
    Ok(cfg)
}

fn summary(m: &SimMetrics) -> String {
    format!("policy={} T={} success_ratio={:.6}", m.policy, m.horizon, m.success_ratio)
}

pub fn simulate(common: &Common) -> Result<String, CliError> {
    let raw = load_raw(common)?;
    let settings = Settings::from_raw(&raw)?;
    let dir = out_dir(common, &settings)?;
    let cfg = sim_config(&settings)?;
    let metrics = match engine::run(&cfg) {
        Ok(m) => m,
        Err(EngineError::NegativeQueue { t, source, dump }) => {
            let path = dir.join("negative_queue_state.csv");
            fs::write(&path, dump).map_err(data(&path))?;
            return Err(CliError::Data(format!("slot {t}: {source}; state written to {}", path.display())));
        }
        Err(e) => return Err(e.into()),
    };
    let path = dir.join("metrics.csv");
    metrics.write_csv(create(&path)?).map_err(data(&path))?;
    if settings.sample_interval > 0 {
        let path = dir.join("series.csv");
        metrics.write_series_csv(create(&path)?).map_err(data(&path))?;
    }
    let path = dir.join("final_state.csv");
    let state = ChannelState::from_queues(&cfg.graph, metrics.final_queues.clone()).map_err(data(&path))?;
    state.write_csv(&cfg.graph, create(&path)?).map_err(data(&path))?;
    Ok(summary(&metrics))
}

pub fn sweep(common: &Common, jobs: usize) -> Result<String, CliError> {
    let raw = load_raw(common)?;
    let settings = Settings::from_raw(&raw)?;
    let dir = out_dir(common, &settings)?;
    let axes = raw.sweep_axes();
    if axes.is_empty() {
        return Err(CliError::Usage("sweep needs at least one sweep.<key> entry".into()));
    }
    let grid = engine::expand_grid(&axes);
    let mut configs = Vec::with_capacity(grid.len());
    for point in &grid {
        let mut r = raw.clone();
        for (k, v) in point {
            r.insert(k, v, Origin::Grid)?;
        }
        configs.push(sim_config(&Settings::from_raw(&r)?)?);
    }
    let results = engine::sweep(&grid, jobs, |p| {
        let idx = grid.iter().position(|q| std::ptr::eq(q, p)).expect("point of this grid");
        Ok(configs[idx].clone())
    })?;
    let path = dir.join("sweep.csv");
    engine::write_sweep_csv(create(&path)?, &grid, &results).map_err(data(&path))?;
    let lo = results.iter().map(|m| m.success_ratio).fold(f64::INFINITY, f64::min);
    let hi = results.iter().map(|m| m.success_ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(format!("sweep runs={} T={} success_ratio={lo:.6}..{hi:.6}", results.len(), settings.horizon))
}

pub fn fluid_solve(common: &Common) -> Result<String, CliError> {
    let raw = load_raw(common)?;
    let settings = Settings::from_raw(&raw)?;
    let dir = out_dir(common, &settings)?;
    let g = load_graph(&settings)?;
    let demand = load_demand(&settings, &g)?;
    let mut table = PathTable::new(&g, settings.fluid_max_hops);
    let sol = fluid::fluid_solve(&demand, &g, &mut table, &settings.fluid).map_err(|e| CliError::Data(e.to_string()))?;
    let path = dir.join("fluid_paths.csv");
    sol.write_paths_csv(&g, create(&path)?).map_err(data(&path))?;
    let path = dir.join("fluid_duals.csv");
    sol.write_duals_csv(&g, create(&path)?).map_err(data(&path))?;
    Ok(format!(
        "fluid objective={:.6} dual={:.6} iterations={} converged={}",
        sol.objective, sol.dual_objective, sol.iterations, sol.converged
    ))
}

pub fn check_capacity(common: &Common) -> Result<String, CliError> {
    let raw = load_raw(common)?;
    let settings = Settings::from_raw(&raw)?;
    let dir = out_dir(common, &settings)?;
    let g = load_graph(&settings)?;
    let demand = load_demand(&settings, &g)?;
    let mut table = PathTable::new(&g, settings.fluid_max_hops);
    match check_capacity_region(&demand, &g, &mut table).map_err(|e| CliError::Data(e.to_string()))? {
        CapacityCheck::Feasible(x) => {
            let path = dir.join("allocation.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["path", "rate"]).map_err(data(&path))?;
            for (p, v) in &x {
                w.write_record([g.describe(p), v.to_string()]).map_err(data(&path))?;
            }
            w.flush().map_err(data(&path))?;
            Ok(format!("feasible allocation={}", path.display()))
        }
        CapacityCheck::Infeasible(cert) => {
            let path = dir.join("certificate.csv");
            cert.write_csv(&g, create(&path)?).map_err(data(&path))?;
            Ok(format!("infeasible certificate={}", path.display()))
        }
    }
}

const PATH_KEYS: &[&str] = &["policy.thresholds", "fluid.solution"];

pub fn gen_workload(common: &Common) -> Result<String, CliError> {
    let raw = load_raw(common)?;
    let settings = Settings::from_raw(&raw)?;
    let dir = out_dir(common, &settings)?;
    let g = load_graph(&settings)?;
    let demand = load_demand(&settings, &g)?;
    let transactions: Option<u64> = raw.parsed("workload.generate_transactions")?;

    let topo = dir.join("topology.csv");
    g.write_csv(create(&topo)?).map_err(data(&topo))?;
    let dem = dir.join("demand.csv");
    demand.write_csv(&g, create(&dem)?).map_err(data(&dem))?;

    let mut lines: Vec<(String, String)> = vec![
        ("graph.file".into(), "topology.csv".into()),
        ("workload.demand".into(), "demand.csv".into()),
    ];
    if let Some(n) = transactions {
        let txs = dir.join("transactions.csv");
        let mut w = csv::Writer::from_writer(create(&txs)?);
        w.write_record(["src", "dst", "amount"]).map_err(data(&txs))?;
        if let ArrivalSource::Scheduled(batches) = ArrivalSource::poisson_one_per_slot(&demand, n, &mut rng(settings.seed, 5)) {
            for tx in batches.iter().flatten() {
                w.write_record([g.name(tx.src), g.name(tx.dst), &tx.amount.to_string()]).map_err(data(&txs))?;
            }
        }
        w.flush().map_err(data(&txs))?;
        lines.push(("workload.kind".into(), "trace".into()));
        lines.push(("workload.transactions".into(), "transactions.csv".into()));
    } else {
        lines.push(("workload.kind".into(), "poisson".into()));
        if let WorkloadSettings::Poisson { one_per_slot: true, .. } = settings.workload {
            lines.push(("workload.one_per_slot".into(), "true".into()));
        }
    }
    for (k, v) in raw.iter() {
        if k.starts_with("graph.") || k.starts_with("workload.") || k.starts_with("output.") || k == "sim.seed" {
            continue;
        }
        let value = match raw.path(k) {
            Some(p) if PATH_KEYS.contains(&k) && !matches!(v, "uniform" | "capacity") => {
                fs::canonicalize(&p).unwrap_or(p).display().to_string()
            }
            _ => v.to_string(),
        };
        lines.push((k.to_string(), value));
    }
    lines.push(("sim.seed".into(), settings.seed.to_string()));

    let cfg_path = dir.join("workload.cfg");
    let mut w = create(&cfg_path)?;
    writeln!(w, "# generated by pcnroute gen-workload").map_err(data(&cfg_path))?;
    for (k, v) in &lines {
        writeln!(w, "{k} = {v}").map_err(data(&cfg_path))?;
    }
    w.flush().map_err(data(&cfg_path))?;
    Ok(format!(
        "wrote {} nodes={} channels={} total_rate={:.6}",
        cfg_path.display(),
        g.node_count(),
        g.channel_count(),
        demand.total_rate()
    ))
}
