//! Plain-text run configuration: one `namespace.key = value` entry per line,
//! `#` starts a comment. Relative paths resolve against the config file's
//! directory, as do sweep grid values; `--set` overrides resolve against the
//! working directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pcnroute::fluid::FluidOptions;
use pcnroute::ledger::ServiceTiming;
use pcnroute::policy::{PolicyKind, PolicyParams, RebalanceRule, SearchMode};
use thiserror::Error;

/// Every accepted key with a one-line description. `sweep.<key>` is
/// accepted for any key below except those under `sweep.` and `output.`.
pub const KEYS: &[(&str, &str)] = &[
    ("graph.file", "topology CSV `u,v,capacity`"),
    ("graph.random.nodes", "vertex count of a generated graph"),
    ("graph.random.channels", "channel count of a generated graph"),
    ("graph.random.capacity", "capacity of every generated channel"),
    ("graph.capacity", "overrides every channel capacity"),
    ("workload.kind", "`poisson` or `trace`"),
    ("workload.demand", "demand CSV `src,dst,rate[,variance]`"),
    ("workload.total_rate", "total rate of a generated doubly stochastic demand"),
    ("workload.load", "scale the demand to this fraction of the capacity region boundary"),
    ("workload.one_per_slot", "flatten Poisson arrivals to one transaction per slot"),
    ("workload.transactions", "trace CSV `src,dst,amount[,slot]`"),
    ("workload.amount_cap", "drop trace rows with a larger raw amount"),
    ("workload.amount_scale", "units per raw trace amount"),
    ("workload.shuffle", "shuffle trace order"),
    ("workload.generate_transactions", "gen-workload: also write this many transactions"),
    ("policy.kind", "`exact`, `heuristic`, `waterfilling` or `fluid`"),
    ("policy.m", "queue threshold M"),
    ("policy.thresholds", "`uniform`, `capacity` or a CSV `u,v,threshold`"),
    ("policy.delta", "on-chain rebalancing probability"),
    ("policy.alpha", "weight scaling, above 1"),
    ("policy.k", "heuristic path budget"),
    ("policy.packet_size", "water-filling packet size"),
    ("policy.drop_onchain", "reject instead of rebalancing on-chain"),
    ("policy.rebalance", "`bernoulli` or `binomial:<n>`"),
    ("policy.max_hops", "longest path considered"),
    ("policy.exact_vertex_bound", "largest graph the exact policy accepts"),
    ("policy.search", "water-filling path search: `auto`, `exact` or `heuristic`"),
    ("sim.horizon", "number of slots"),
    ("sim.seed", "seed of every random stream"),
    ("sim.service_timing", "`post_arrival` or `pre_arrival`"),
    ("sim.sample_interval", "slots between series samples, 0 disables"),
    ("sim.warmup_fraction", "leading fraction of slots left out of steady-state metrics"),
    ("sim.window", "slots in the windowed success ratio"),
    ("sim.lemma1_interval", "slots between drift checks, 0 disables"),
    ("fluid.m1", "inverse step for balance multipliers"),
    ("fluid.m2", "inverse step for capacity multipliers"),
    ("fluid.max_iters", "descent iteration limit"),
    ("fluid.tol", "relative stopping tolerance"),
    ("fluid.window", "stopping window in iterations"),
    ("fluid.polish", "finish with an exact solve"),
    ("fluid.max_hops", "longest path in the fluid program"),
    ("fluid.solution", "pre-solved path rates CSV `path,rate`"),
    ("output.dir", "output directory"),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: expected `key = value`")]
    Syntax { origin: Origin },
    #[error("{origin}: unknown key '{key}'")]
    UnknownKey { key: String, origin: Origin },
    #[error("{origin}: invalid value '{value}' for {key}: {message}")]
    InvalidValue { key: String, value: String, message: String, origin: Origin },
    #[error("missing required key {0}")]
    Missing(String),
    #[error("conflicting keys: {0}")]
    Conflict(String),
    #[error("{0}: {1}")]
    Io(String, String),
}

/// Where an entry came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
    Grid,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => write!(f, "--set"),
            Origin::Grid => write!(f, "sweep grid"),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

fn is_known(key: &str) -> bool {
    if let Some(rest) = key.strip_prefix("sweep.") {
        return !rest.starts_with("sweep.") && !rest.starts_with("output.") && KEYS.iter().any(|(k, _)| *k == rest);
    }
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Validated key/value entries plus the directory relative paths resolve against.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
    base: PathBuf,
}

impl RawConfig {
    pub fn new(base: PathBuf) -> Self {
        RawConfig { entries: BTreeMap::new(), base }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e.to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, base)
    }

    pub fn parse(text: &str, path: &Path, base: PathBuf) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::new(base);
        for (idx, raw) in text.lines().enumerate() {
            let origin = Origin::File { path: path.to_path_buf(), line: idx + 1 };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { origin });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { origin });
            }
            cfg.insert(key, v.trim(), origin)?;
        }
        Ok(cfg)
    }

    pub fn insert(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        if !is_known(key) {
            return Err(ConfigError::UnknownKey { key: key.to_string(), origin });
        }
        self.entries.insert(key.to_string(), Entry { value: value.to_string(), origin });
        Ok(())
    }

    /// Applies a `key=value` override from the command line.
    pub fn set_flag(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((k, v)) = assignment.split_once('=') else {
            return Err(ConfigError::Syntax { origin: Origin::Flag });
        };
        self.insert(k.trim(), v.trim(), Origin::Flag)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Entries in key order, for writing a config back out.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e.value.as_str()))
    }

    /// Sweep axes in key order, each value list split on commas.
    pub fn sweep_axes(&self) -> Vec<(String, Vec<String>)> {
        self.entries
            .iter()
            .filter_map(|(k, e)| {
                let key = k.strip_prefix("sweep.")?;
                Some((key.to_string(), e.value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()))
            })
            .collect()
    }

    fn invalid(&self, key: &str, message: String) -> ConfigError {
        let e = &self.entries[key];
        ConfigError::InvalidValue { key: key.to_string(), value: e.value.clone(), message, origin: e.origin.clone() }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| self.invalid(key, e.to_string())),
        }
    }

    pub fn flag(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(_) => Err(self.invalid(key, "expected true or false".into())),
        }
    }

    /// A path value, resolved against the directory of the entry's source.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let e = self.entries.get(key)?;
        let p = PathBuf::from(&e.value);
        Some(match e.origin {
            Origin::File { .. } | Origin::Grid if p.is_relative() => self.base.join(p),
            _ => p,
        })
    }

    pub fn check<T>(&self, key: &str, value: T, ok: impl Fn(&T) -> bool, what: &str) -> Result<T, ConfigError> {
        if ok(&value) {
            Ok(value)
        } else {
            Err(self.invalid(key, what.to_string()))
        }
    }
}

/// Where the channel graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Random { nodes: usize, channels: usize, capacity: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandSource {
    File(PathBuf),
    Generated { total_rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSettings {
    Poisson { demand: DemandSource, load: Option<f64>, one_per_slot: bool },
    Trace { file: PathBuf, amount_cap: f64, amount_scale: f64, shuffle: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSetting {
    Uniform,
    Capacity,
    File(PathBuf),
}

/// Typed view of a [`RawConfig`].
#[derive(Debug, Clone)]
pub struct Settings {
    pub graph: GraphSource,
    pub capacity: Option<i64>,
    pub workload: WorkloadSettings,
    pub policy: PolicyKind,
    pub params: PolicyParams,
    pub thresholds: Option<ThresholdSetting>,
    pub horizon: u64,
    pub seed: u64,
    pub timing: ServiceTiming,
    pub sample_interval: u64,
    pub warmup_fraction: f64,
    pub window: u64,
    pub lemma1_interval: u64,
    pub fluid: FluidOptions,
    pub fluid_max_hops: Option<usize>,
    pub fluid_solution: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Settings {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let positive_f = |x: &f64| *x > 0.0 && x.is_finite();
        let graph = match (raw.path("graph.file"), raw.contains("graph.random.nodes")) {
            (Some(_), true) => return Err(ConfigError::Conflict("graph.file and graph.random.nodes".into())),
            (Some(p), false) => GraphSource::File(p),
            (None, true) => {
                let nodes: usize = raw.parsed("graph.random.nodes")?.unwrap();
                let nodes = raw.check("graph.random.nodes", nodes, |n| *n >= 2, "need at least 2 vertices")?;
                let channels = raw.parsed("graph.random.channels")?.unwrap_or(nodes - 1);
                let capacity = raw.parsed("graph.random.capacity")?.unwrap_or(10);
                GraphSource::Random { nodes, channels, capacity }
            }
            (None, false) => return Err(ConfigError::Missing("graph.file or graph.random.nodes".into())),
        };
        let capacity = match raw.parsed::<i64>("graph.capacity")? {
            Some(c) => Some(raw.check("graph.capacity", c, |c| *c > 0, "must be positive")?),
            None => None,
        };

        let kind = raw.get("workload.kind").unwrap_or("poisson");
        let workload = match kind {
            "poisson" => {
                let demand = match (raw.path("workload.demand"), raw.parsed::<f64>("workload.total_rate")?) {
                    (Some(_), Some(_)) => {
                        return Err(ConfigError::Conflict("workload.demand and workload.total_rate".into()))
                    }
                    (Some(p), None) => DemandSource::File(p),
                    (None, Some(r)) => DemandSource::Generated {
                        total_rate: raw.check("workload.total_rate", r, positive_f, "must be positive")?,
                    },
                    (None, None) => return Err(ConfigError::Missing("workload.demand or workload.total_rate".into())),
                };
                let load = match raw.parsed::<f64>("workload.load")? {
                    Some(l) => Some(raw.check("workload.load", l, positive_f, "must be positive")?),
                    None => None,
                };
                WorkloadSettings::Poisson { demand, load, one_per_slot: raw.flag("workload.one_per_slot")?.unwrap_or(false) }
            }
            "trace" => WorkloadSettings::Trace {
                file: raw.path("workload.transactions").ok_or_else(|| ConfigError::Missing("workload.transactions".into()))?,
                amount_cap: raw.parsed("workload.amount_cap")?.unwrap_or(f64::INFINITY),
                amount_scale: raw.parsed("workload.amount_scale")?.unwrap_or(1.0),
                shuffle: raw.flag("workload.shuffle")?.unwrap_or(false),
            },
            _ => return Err(raw.invalid("workload.kind", "expected poisson or trace".into())),
        };

        let policy: PolicyKind = raw.parsed("policy.kind")?.unwrap_or(PolicyKind::Exact);
        let d = PolicyParams::default();
        let params = PolicyParams {
            m: raw.parsed("policy.m")?.unwrap_or(d.m),
            thresholds: None,
            delta: raw.parsed("policy.delta")?.unwrap_or(d.delta),
            alpha: raw.parsed("policy.alpha")?.unwrap_or(d.alpha),
            k: raw.parsed("policy.k")?.unwrap_or(d.k),
            packet_size: raw.parsed("policy.packet_size")?.unwrap_or(d.packet_size),
            drop_onchain: raw.flag("policy.drop_onchain")?.unwrap_or(d.drop_onchain),
            rebalance: raw.parsed::<RebalanceRule>("policy.rebalance")?.unwrap_or(d.rebalance),
            max_hops: raw.parsed("policy.max_hops")?.or(d.max_hops),
            exact_vertex_bound: raw.parsed("policy.exact_vertex_bound")?.unwrap_or(d.exact_vertex_bound),
            search: raw.parsed::<SearchMode>("policy.search")?.unwrap_or(d.search),
        };
        let thresholds = match raw.get("policy.thresholds") {
            None => None,
            Some("uniform") => Some(ThresholdSetting::Uniform),
            Some("capacity") => Some(ThresholdSetting::Capacity),
            Some(_) => Some(ThresholdSetting::File(raw.path("policy.thresholds").unwrap())),
        };

        let fd = FluidOptions::default();
        let fluid = FluidOptions {
            m1: raw.parsed("fluid.m1")?,
            m2: raw.parsed("fluid.m2")?,
            max_iters: raw.parsed("fluid.max_iters")?.unwrap_or(fd.max_iters),
            tol: raw.parsed("fluid.tol")?.unwrap_or(fd.tol),
            window: raw.parsed("fluid.window")?.unwrap_or(fd.window),
            polish: raw.flag("fluid.polish")?.unwrap_or(fd.polish),
        };
        Ok(Settings {
            graph,
            capacity,
            workload,
            policy,
            params,
            thresholds,
            horizon: raw.parsed("sim.horizon")?.unwrap_or(10_000),
            seed: raw.parsed("sim.seed")?.unwrap_or(1),
            timing: raw.parsed::<ServiceTiming>("sim.service_timing")?.unwrap_or_default(),
            sample_interval: raw.parsed("sim.sample_interval")?.unwrap_or(1),
            warmup_fraction: raw.parsed("sim.warmup_fraction")?.unwrap_or(0.1),
            window: raw.parsed("sim.window")?.unwrap_or(1000),
            lemma1_interval: raw.parsed("sim.lemma1_interval")?.unwrap_or(100),
            fluid,
            fluid_max_hops: raw.parsed("fluid.max_hops")?,
            fluid_solution: raw.path("fluid.solution"),
            output_dir: raw.path("output.dir"),
        })
    }
}
