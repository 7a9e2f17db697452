//! Demand matrices, Poisson arrival streams, random topologies and
//! transaction traces.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::fluid::{max_scale_factor, DemandMatrix, FluidError};
use crate::topology::{NodeId, PathTable, PaymentGraph, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("{file}: line {line}: {message}")]
    ParseError { file: String, line: u64, message: String },
    #[error("{file}: line {line}: unknown endpoint '{name}'")]
    UnknownEndpoint { file: String, line: u64, name: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
}

/// One payment request of `amount` units from `src` to `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transaction {
    pub src: NodeId,
    pub dst: NodeId,
    pub amount: u64,
}

/// Transactions arriving in slot `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransactionBatch {
    pub t: u64,
    pub entries: Vec<Transaction>,
}

/// Zero-diagonal `n × n` demand matrix with all row and column sums equal
/// to `total_rate / n`, obtained by iterative proportional fitting of a
/// random positive matrix. Vertices are `NodeId(0..n)`.
pub fn gen_demand_matrix<R: Rng + ?Sized>(n: usize, total_rate: f64, rng: &mut R) -> Result<DemandMatrix, WorkloadError> {
    if n < 2 {
        return Err(WorkloadError::InvalidArgument(format!("need at least 2 vertices, got {n}")));
    }
    if !(total_rate.is_finite() && total_rate >= 0.0) {
        return Err(WorkloadError::InvalidArgument(format!("total rate {total_rate} must be finite and nonnegative")));
    }
    let mut a = vec![vec![0.0f64; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                *v = rng.random_range(0.1..=1.0);
            }
        }
    }
    for _ in 0..10_000 {
        for row in a.iter_mut() {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let mut err = 0.0f64;
        for j in 0..n {
            let s: f64 = (0..n).map(|i| a[i][j]).sum();
            for row in a.iter_mut() {
                row[j] /= s;
            }
            err = err.max((s - 1.0).abs());
        }
        if err < 1e-10 {
            break;
        }
    }
    let per_row = total_rate / n as f64;
    let mut m = DemandMatrix::new();
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                m.insert_poisson(NodeId(i as u32), NodeId(j as u32), v * per_row)?;
            }
        }
    }
    Ok(m)
}

/// Scales `demand` to `load` times the largest multiple that still lies in
/// the capacity region. Returns the scaled matrix and that largest multiple.
pub fn scale_into_region(
    demand: &DemandMatrix,
    g: &PaymentGraph,
    paths: &mut PathTable,
    load: f64,
) -> Result<(DemandMatrix, f64), WorkloadError> {
    if !(load > 0.0 && load.is_finite()) {
        return Err(WorkloadError::InvalidArgument(format!("load factor {load} must be positive")));
    }
    let theta = max_scale_factor(demand, g, paths)?;
    Ok((demand.scaled(theta * load), theta))
}

/// Independent Poisson draws per pair; zero draws are omitted.
pub fn gen_arrivals<R: Rng + ?Sized>(demand: &DemandMatrix, t: u64, rng: &mut R) -> TransactionBatch {
    let mut entries = Vec::new();
    for ((i, j), rate) in demand.active() {
        let k = Poisson::new(rate).expect("positive finite rate").sample(rng) as u64;
        if k > 0 {
            entries.push(Transaction { src: i, dst: j, amount: k });
        }
    }
    TransactionBatch { t, entries }
}

/// Per-slot source of arrivals for a simulation run.
pub enum ArrivalSource {
    /// A fresh Poisson batch every slot.
    Poisson(DemandMatrix),
    /// A fixed list of per-slot batches; slots past the end are empty.
    Scheduled(Vec<Vec<Transaction>>),
}

impl ArrivalSource {
    /// Poisson batches flattened into single transactions, shuffled and
    /// replayed one per slot, for `horizon` slots.
    pub fn poisson_one_per_slot<R: Rng + ?Sized>(demand: &DemandMatrix, horizon: u64, rng: &mut R) -> Self {
        let mut txs = Vec::with_capacity(horizon as usize);
        if demand.total_rate() > 0.0 {
            let mut t = 0;
            while (txs.len() as u64) < horizon {
                txs.extend(gen_arrivals(demand, t, rng).entries);
                t += 1;
            }
        }
        txs.shuffle(rng);
        txs.truncate(horizon as usize);
        ArrivalSource::Scheduled(txs.into_iter().map(|t| vec![t]).collect())
    }

    pub fn next_batch<R: Rng + ?Sized>(&mut self, t: u64, rng: &mut R) -> TransactionBatch {
        match self {
            ArrivalSource::Poisson(d) => gen_arrivals(d, t, rng),
            ArrivalSource::Scheduled(batches) => TransactionBatch {
                t,
                entries: batches.get(t as usize).cloned().unwrap_or_default(),
            },
        }
    }
}

/// One transaction of a trace, with its optional slot assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceTransaction {
    pub tx: Transaction,
    pub raw_amount: f64,
    pub slot: Option<u64>,
}

/// Count, mean, median and max of the raw amounts kept from a trace.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TraceSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub dropped_over_cap: usize,
    pub dropped_zero: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSource {
    pub transactions: Vec<TraceTransaction>,
    pub summary: TraceSummary,
}

impl TraceSource {
    /// Per-slot batches: explicit slots when every row has one, otherwise
    /// one transaction per slot in file order (optionally shuffled).
    pub fn batches<R: Rng + ?Sized>(&self, shuffle: bool, rng: &mut R) -> Vec<Vec<Transaction>> {
        if !self.transactions.is_empty() && self.transactions.iter().all(|t| t.slot.is_some()) {
            let last = self.transactions.iter().filter_map(|t| t.slot).max().unwrap_or(0);
            let mut out = vec![Vec::new(); last as usize + 1];
            for t in &self.transactions {
                out[t.slot.unwrap() as usize].push(t.tx);
            }
            return out;
        }
        let mut txs: Vec<Transaction> = self.transactions.iter().map(|t| t.tx).collect();
        if shuffle {
            txs.shuffle(rng);
        }
        txs.into_iter().map(|t| vec![t]).collect()
    }
}

/// Streams a `src,dst,amount[,slot]` transaction file. Rows with a raw
/// amount above `amount_cap` or equal to zero are dropped; the rest are
/// converted to integer units as `round(amount · amount_scale)`, and rows
/// that round to zero units are dropped as well.
pub fn read_transactions<R: Read>(
    g: &PaymentGraph,
    reader: R,
    file: &str,
    amount_cap: f64,
    amount_scale: f64,
) -> Result<TraceSource, WorkloadError> {
    if !(amount_scale > 0.0 && amount_scale.is_finite()) {
        return Err(WorkloadError::InvalidArgument(format!("amount scale {amount_scale} must be positive")));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = TraceSource::default();
    let mut kept_raw = Vec::new();
    let parse_err = |line: u64, message: String| WorkloadError::ParseError { file: file.to_string(), line, message };
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(idx as u64 + 1, e.to_string()))?;
        let line = rec.position().map_or(idx as u64 + 1, |p| p.line());
        if rec.len() < 3 {
            return Err(parse_err(line, "expected src,dst,amount[,slot]".into()));
        }
        let raw: f64 = match rec[2].parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            Ok(v) => return Err(parse_err(line, format!("amount {v} must be finite and nonnegative"))),
            Err(_) if idx == 0 => continue, // header row
            Err(_) => return Err(parse_err(line, format!("bad amount '{}'", &rec[2]))),
        };
        let slot = match rec.get(3).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse::<u64>().map_err(|_| parse_err(line, format!("bad slot '{s}'")))?),
            None => None,
        };
        let endpoint = |name: &str| {
            g.node(name).ok_or_else(|| WorkloadError::UnknownEndpoint {
                file: file.to_string(),
                line,
                name: name.to_string(),
            })
        };
        let (src, dst) = (endpoint(&rec[0])?, endpoint(&rec[1])?);
        if src == dst {
            return Err(parse_err(line, format!("source and destination coincide ({})", &rec[0])));
        }
        if raw > amount_cap {
            out.summary.dropped_over_cap += 1;
            continue;
        }
        if raw == 0.0 {
            out.summary.dropped_zero += 1;
            continue;
        }
        kept_raw.push(raw);
        let amount = (raw * amount_scale).round() as u64;
        if amount == 0 {
            out.summary.dropped_zero += 1;
            continue;
        }
        out.transactions.push(TraceTransaction { tx: Transaction { src, dst, amount }, raw_amount: raw, slot });
    }
    out.summary.count = kept_raw.len();
    if !kept_raw.is_empty() {
        out.summary.mean = kept_raw.iter().sum::<f64>() / kept_raw.len() as f64;
        out.summary.max = kept_raw.iter().copied().fold(f64::MIN, f64::max);
        kept_raw.sort_by(f64::total_cmp);
        let n = kept_raw.len();
        out.summary.median =
            if n % 2 == 1 { kept_raw[n / 2] } else { 0.5 * (kept_raw[n / 2 - 1] + kept_raw[n / 2]) };
    }
    Ok(out)
}

/// Loads a topology CSV and a transaction CSV.
pub fn load_trace(
    topology_path: &FsPath,
    transactions_path: &FsPath,
    amount_cap: f64,
    amount_scale: f64,
) -> Result<(PaymentGraph, TraceSource), WorkloadError> {
    let g = PaymentGraph::from_csv_path(topology_path)?;
    let name = transactions_path.display().to_string();
    let f = File::open(transactions_path).map_err(|e| WorkloadError::Io(name.clone(), e.to_string()))?;
    let trace = read_transactions(&g, BufReader::new(f), &name, amount_cap, amount_scale)?;
    Ok((g, trace))
}

/// Connected random graph on vertices `0..n` with `channels` channels of
/// the given capacity: a random spanning tree plus uniformly chosen extra
/// channels.
pub fn random_graph<R: Rng + ?Sized>(n: usize, channels: usize, capacity: i64, rng: &mut R) -> Result<PaymentGraph, WorkloadError> {
    if n < 2 {
        return Err(WorkloadError::InvalidArgument("need at least 2 vertices".into()));
    }
    let max = n * (n - 1) / 2;
    if channels < n - 1 || channels > max {
        return Err(WorkloadError::InvalidArgument(format!(
            "{channels} channels cannot form a simple connected graph on {n} vertices"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut present = std::collections::HashSet::new();
    let mut edges = Vec::with_capacity(channels);
    for k in 1..n {
        let u = order[k];
        let v = order[rng.random_range(0..k)];
        present.insert((u.min(v), u.max(v)));
        edges.push((u, v));
    }
    while edges.len() < channels {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && present.insert((u.min(v), u.max(v))) {
            edges.push((u, v));
        }
    }
    let list: Vec<(String, String, i64)> =
        edges.into_iter().map(|(u, v)| (u.to_string(), v.to_string(), capacity)).collect();
    Ok(PaymentGraph::build(&list)?)
}

/// Random transactions between uniformly chosen distinct endpoints with
/// amounts in `1..=max_amount`.
pub fn synthetic_transactions<R: Rng + ?Sized>(g: &PaymentGraph, count: usize, max_amount: u64, rng: &mut R) -> Vec<Transaction> {
    let n = g.node_count() as u32;
    (0..count)
        .map(|_| {
            let src = rng.random_range(0..n);
            let mut dst = rng.random_range(0..n - 1);
            if dst >= src {
                dst += 1;
            }
            Transaction { src: NodeId(src), dst: NodeId(dst), amount: rng.random_range(1..=max_amount.max(1)) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::check_circulation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_vertex_matrix_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = gen_demand_matrix(2, 3.0, &mut rng).unwrap();
        assert!((m.rate(NodeId(0), NodeId(1)) - 1.5).abs() < 1e-12);
        assert!((m.rate(NodeId(1), NodeId(0)) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn generated_matrices_are_circulations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let m = gen_demand_matrix(5, 4.0, &mut rng).unwrap();
            assert!(check_circulation(&m));
            for i in 0..5u32 {
                let row: f64 = (0..5u32).map(|j| m.rate(NodeId(i), NodeId(j))).sum();
                let col: f64 = (0..5u32).map(|j| m.rate(NodeId(j), NodeId(i))).sum();
                assert!((row - col).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn arrivals_are_positive_and_deterministic() {
        let mut m = DemandMatrix::new();
        m.insert_poisson(NodeId(0), NodeId(1), 2.0).unwrap();
        let a = gen_arrivals(&m, 0, &mut ChaCha8Rng::seed_from_u64(3));
        let b = gen_arrivals(&m, 0, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.entries.iter().all(|t| t.amount >= 1));
        assert!(gen_arrivals(&DemandMatrix::new(), 0, &mut ChaCha8Rng::seed_from_u64(3)).entries.is_empty());
    }

    #[test]
    fn trace_cap_filter() {
        let g = PaymentGraph::build(&[("a", "b", 10), ("b", "c", 10)]).unwrap();
        let csv = "src,dst,amount\na,b,5\nb,c,501\nc,a,2.4\n";
        let t = read_transactions(&g, csv.as_bytes(), "t.csv", 500.0, 1.0).unwrap();
        assert_eq!(t.transactions.len(), 2);
        assert_eq!(t.summary.dropped_over_cap, 1);
        assert_eq!(t.transactions[1].tx.amount, 2);
        assert!((t.summary.median - 3.7).abs() < 1e-12);
        let empty = read_transactions(&g, "".as_bytes(), "e.csv", 500.0, 1.0).unwrap();
        assert!(empty.transactions.is_empty());
    }

    #[test]
    fn trace_errors_carry_line_numbers() {
        let g = PaymentGraph::build(&[("a", "b", 10)]).unwrap();
        let err = read_transactions(&g, "a,b,1\na,b,x\n".as_bytes(), "t.csv", 500.0, 1.0).unwrap_err();
        assert!(matches!(err, WorkloadError::ParseError { line: 2, .. }), "{err:?}");
        let err = read_transactions(&g, "a,z,1\n".as_bytes(), "t.csv", 500.0, 1.0).unwrap_err();
        assert!(matches!(err, WorkloadError::UnknownEndpoint { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn random_graph_has_requested_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_graph(10, 17, 5, &mut rng).unwrap();
        assert_eq!((g.node_count(), g.channel_count()), (10, 17));
        assert!(random_graph(10, 8, 5, &mut rng).is_err());
    }

    #[test]
    fn one_per_slot_stream_has_horizon_length() {
        let mut m = DemandMatrix::new();
        m.insert_poisson(NodeId(0), NodeId(1), 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut src = ArrivalSource::poisson_one_per_slot(&m, 50, &mut rng);
        for t in 0..50 {
            assert_eq!(src.next_batch(t, &mut rng).entries.len(), 1);
        }
        assert!(src.next_batch(50, &mut rng).entries.is_empty());
    }
}
