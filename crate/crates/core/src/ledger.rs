//! Two-sided queue state and its one-slot dynamics.
//!
//! Each directed edge `(u, v)` holds `q_(u,v)`, the value of outstanding
//! payment requests from `u` to `v`. Within a slot the order is: arrivals are
//! enqueued, paired service is taken (from post-arrival queues by default),
//! then on-chain rebalancing is subtracted.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use thiserror::Error;

use crate::topology::{EdgeId, PaymentGraph, TopologyError};

/// Which queue values the paired service sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ServiceTiming {
    /// `s = min(q_uv, q_vu, c)` on queues at the start of the slot.
    PreArrival,
    /// `s = min(q_uv + y_uv, q_vu + y_vu, c)`.
    #[default]
    PostArrival,
}

impl std::str::FromStr for ServiceTiming {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre_arrival" => Ok(ServiceTiming::PreArrival),
            "post_arrival" => Ok(ServiceTiming::PostArrival),
            other => Err(format!("unknown service timing '{other}' (pre_arrival, post_arrival)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("rebalancing {rebalance} on edge {edge} exceeds available {available}; queue would go negative")]
    NegativeQueue { edge: u32, rebalance: u64, available: u64 },
    #[error("flow vector sized for {got} edges, graph has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("value conservation violated: before {before}, arrivals {arrivals}, served {served}, rebalanced {rebalanced}, after {after}")]
    Conservation { before: u64, arrivals: u64, served: u64, rebalanced: u64, after: u64 },
    #[error("state dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Paired service on one channel.
pub fn service(q_uv: u64, q_vu: u64, capacity: u64) -> u64 {
    q_uv.min(q_vu).min(capacity)
}

/// Per-slot arrivals `y` and rebalancing `r`, stored densely with a list of
/// touched edges so a buffer can be reused across slots on large graphs.
#[derive(Debug, Clone)]
pub struct SlotFlows {
    y: Vec<u64>,
    r: Vec<u64>,
    mark: Vec<bool>,
    touched: Vec<EdgeId>,
}

impl SlotFlows {
    pub fn new(g: &PaymentGraph) -> Self {
        let n = g.edge_count();
        SlotFlows { y: vec![0; n], r: vec![0; n], mark: vec![false; n], touched: Vec::new() }
    }

    fn touch(&mut self, e: EdgeId) {
        if !self.mark[e.index()] {
            self.mark[e.index()] = true;
            self.touched.push(e);
        }
    }

    pub fn add_demand(&mut self, e: EdgeId, amount: u64) {
        self.y[e.index()] += amount;
        self.touch(e);
    }

    /// Undoes a previous [`SlotFlows::add_demand`].
    pub fn remove_demand(&mut self, e: EdgeId, amount: u64) {
        self.y[e.index()] -= amount;
    }

    pub fn add_rebalance(&mut self, e: EdgeId, amount: u64) {
        self.r[e.index()] += amount;
        self.touch(e);
    }

    pub fn demand(&self, e: EdgeId) -> u64 {
        self.y[e.index()]
    }

    pub fn rebalance(&self, e: EdgeId) -> u64 {
        self.r[e.index()]
    }

    pub fn touched(&self) -> &[EdgeId] {
        &self.touched
    }

    pub fn total_demand(&self) -> u64 {
        self.touched.iter().map(|e| self.y[e.index()]).sum()
    }

    pub fn total_rebalance(&self) -> u64 {
        self.touched.iter().map(|e| self.r[e.index()]).sum()
    }

    pub fn clear(&mut self) {
        for e in self.touched.drain(..) {
            self.y[e.index()] = 0;
            self.r[e.index()] = 0;
            self.mark[e.index()] = false;
        }
    }

    /// Builds flows from dense per-edge vectors.
    pub fn from_dense(g: &PaymentGraph, y: &[u64], r: &[u64]) -> Result<Self, LedgerError> {
        for v in [y, r] {
            if v.len() != g.edge_count() {
                return Err(LedgerError::SizeMismatch { expected: g.edge_count(), got: v.len() });
            }
        }
        let mut f = SlotFlows::new(g);
        for e in g.edge_ids() {
            if y[e.index()] > 0 {
                f.add_demand(e, y[e.index()]);
            }
            if r[e.index()] > 0 {
                f.add_rebalance(e, r[e.index()]);
            }
        }
        Ok(f)
    }
}

/// Per-channel service and totals from one transition.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepReport {
    /// `(edge, s)` for the forward edge of every channel with nonzero service;
    /// the reverse edge receives the same amount.
    pub served: Vec<(EdgeId, u64)>,
    pub arrivals: u64,
    /// Sum of service over directed edges (twice the per-channel amounts).
    pub service_total: u64,
    pub rebalanced: u64,
    pub total_before: u64,
    pub total_after: u64,
}

/// Outstanding-request queues for every directed edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelState {
    q: Vec<u64>,
    positive: BTreeSet<EdgeId>,
    total: u64,
}

impl ChannelState {
    pub fn new(g: &PaymentGraph) -> Self {
        ChannelState { q: vec![0; g.edge_count()], positive: BTreeSet::new(), total: 0 }
    }

    pub fn from_queues(g: &PaymentGraph, q: Vec<u64>) -> Result<Self, LedgerError> {
        if q.len() != g.edge_count() {
            return Err(LedgerError::SizeMismatch { expected: g.edge_count(), got: q.len() });
        }
        let positive = q
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, _)| EdgeId(i as u32))
            .collect();
        let total = q.iter().sum();
        Ok(ChannelState { q, positive, total })
    }

    pub fn queue(&self, e: EdgeId) -> u64 {
        self.q[e.index()]
    }

    pub fn queues(&self) -> &[u64] {
        &self.q
    }

    pub fn set(&mut self, e: EdgeId, value: u64) {
        let old = std::mem::replace(&mut self.q[e.index()], value);
        self.total = self.total - old + value;
        if value > 0 {
            self.positive.insert(e);
        } else {
            self.positive.remove(&e);
        }
    }

    /// `Σ q` over all directed edges.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Edges with a nonempty queue, ascending.
    pub fn positive_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.positive.iter().copied()
    }

    /// `z_(u,v) = q_(u,v) - q_(v,u)`.
    pub fn imbalance(&self, e: EdgeId) -> i64 {
        self.q[e.index()] as i64 - self.q[e.reverse().index()] as i64
    }

    /// Sum of `|z|` over channels (each channel counted once).
    pub fn total_abs_imbalance(&self) -> u64 {
        let mut sum = 0;
        for &e in &self.positive {
            let z = self.imbalance(e);
            if z > 0 {
                sum += z as u64;
            }
        }
        sum
    }

    /// Applies one slot of arrivals, service and rebalancing.
    ///
    /// On error the state is left untouched.
    pub fn step(
        &mut self,
        g: &PaymentGraph,
        flows: &SlotFlows,
        timing: ServiceTiming,
    ) -> Result<StepReport, LedgerError> {
        if flows.y.len() != self.q.len() {
            return Err(LedgerError::SizeMismatch { expected: self.q.len(), got: flows.y.len() });
        }
        // channels that may change: touched ones plus any with both sides queued
        let mut channels: Vec<EdgeId> = flows
            .touched()
            .iter()
            .chain(self.positive.iter().filter(|e| self.q[e.reverse().index()] > 0))
            .map(|&e| if e.is_forward() { e } else { e.reverse() })
            .collect();
        channels.sort_unstable();
        channels.dedup();

        let mut updates = Vec::with_capacity(channels.len());
        let mut report = StepReport { total_before: self.total, ..StepReport::default() };
        for &fwd in &channels {
            let rev = fwd.reverse();
            let (q_f, q_r) = (self.q[fwd.index()], self.q[rev.index()]);
            let (y_f, y_r) = (flows.y[fwd.index()], flows.y[rev.index()]);
            let (r_f, r_r) = (flows.r[fwd.index()], flows.r[rev.index()]);
            let c = g.capacity(fwd);
            let s = match timing {
                ServiceTiming::PreArrival => service(q_f, q_r, c),
                ServiceTiming::PostArrival => service(q_f + y_f, q_r + y_r, c),
            };
            let avail_f = q_f + y_f - s;
            let avail_r = q_r + y_r - s;
            if r_f > avail_f {
                return Err(LedgerError::NegativeQueue { edge: fwd.0, rebalance: r_f, available: avail_f });
            }
            if r_r > avail_r {
                return Err(LedgerError::NegativeQueue { edge: rev.0, rebalance: r_r, available: avail_r });
            }
            if s > 0 {
                report.served.push((fwd, s));
            }
            report.arrivals += y_f + y_r;
            report.service_total += 2 * s;
            report.rebalanced += r_f + r_r;
            updates.push((fwd, avail_f - r_f, avail_r - r_r));
        }
        for (fwd, nf, nr) in updates {
            self.set(fwd, nf);
            self.set(fwd.reverse(), nr);
        }
        report.total_after = self.total;
        if report.total_before + report.arrivals
            != report.total_after + report.service_total + report.rebalanced
        {
            return Err(LedgerError::Conservation {
                before: report.total_before,
                arrivals: report.arrivals,
                served: report.service_total,
                rebalanced: report.rebalanced,
                after: report.total_after,
            });
        }
        Ok(report)
    }

    /// Writes `u,v,q_uv` for every directed edge.
    pub fn write_csv<W: Write>(&self, g: &PaymentGraph, writer: W) -> Result<(), LedgerError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| LedgerError::Dump(e.to_string());
        w.write_record(["u", "v", "q_uv"]).map_err(err)?;
        for e in g.edge_ids() {
            let d = g.edge(e);
            w.write_record([g.name(d.from), g.name(d.to), &self.q[e.index()].to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| LedgerError::Dump(e.to_string()))
    }

    /// Reads a dump written by [`ChannelState::write_csv`]; edges not listed stay at zero.
    pub fn read_csv<R: Read>(g: &PaymentGraph, reader: R) -> Result<Self, LedgerError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut state = ChannelState::new(g);
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| LedgerError::Dump(format!("line {line}: {e}")))?;
            if rec.len() < 3 {
                return Err(LedgerError::Dump(format!("line {line}: expected u,v,q_uv")));
            }
            let u = g.require_node(&rec[0])?;
            let v = g.require_node(&rec[1])?;
            let e = g
                .edge_between(u, v)
                .ok_or_else(|| LedgerError::Dump(format!("line {line}: no channel {}-{}", &rec[0], &rec[1])))?;
            let q: u64 = rec[2]
                .parse()
                .map_err(|_| LedgerError::Dump(format!("line {line}: bad queue value '{}'", &rec[2])))?;
            state.set(e, q);
        }
        Ok(state)
    }
}

/// Queue values a slot would end with if it closed now with the arrivals
/// collected so far and no rebalancing. Policies use it to evaluate
/// tentative allocations; [`Tentative::rollback`] restores a checkpoint.
pub struct Tentative<'a> {
    g: &'a PaymentGraph,
    base: &'a ChannelState,
    flows: &'a mut SlotFlows,
    timing: ServiceTiming,
    journal: Vec<(EdgeId, u64)>,
}

impl<'a> Tentative<'a> {
    pub fn new(
        g: &'a PaymentGraph,
        base: &'a ChannelState,
        flows: &'a mut SlotFlows,
        timing: ServiceTiming,
    ) -> Self {
        Tentative { g, base, flows, timing, journal: Vec::new() }
    }

    /// Projected end-of-slot queue on `e`.
    pub fn projected(&self, e: EdgeId) -> u64 {
        let rev = e.reverse();
        let (q, q_rev) = (self.base.queue(e), self.base.queue(rev));
        let (y, y_rev) = (self.flows.demand(e), self.flows.demand(rev));
        let c = self.g.capacity(e);
        let s = match self.timing {
            ServiceTiming::PreArrival => service(q, q_rev, c),
            ServiceTiming::PostArrival => service(q + y, q_rev + y_rev, c),
        };
        q + y - s
    }

    pub fn add_path(&mut self, edges: &[EdgeId], amount: u64) {
        for &e in edges {
            self.flows.add_demand(e, amount);
            self.journal.push((e, amount));
        }
    }

    pub fn checkpoint(&self) -> usize {
        self.journal.len()
    }

    pub fn rollback(&mut self, checkpoint: usize) {
        while self.journal.len() > checkpoint {
            let (e, amount) = self.journal.pop().unwrap();
            self.flows.remove_demand(e, amount);
        }
    }

    pub fn flows(&self) -> &SlotFlows {
        self.flows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> PaymentGraph {
        PaymentGraph::build(&[("u", "v", 5)]).unwrap()
    }

    fn run(q: (u64, u64), y: (u64, u64), r: (u64, u64)) -> Result<(u64, u64, StepReport), LedgerError> {
        let g = pair();
        let mut st = ChannelState::from_queues(&g, vec![q.0, q.1]).unwrap();
        let flows = SlotFlows::from_dense(&g, &[y.0, y.1], &[r.0, r.1]).unwrap();
        let rep = st.step(&g, &flows, ServiceTiming::PostArrival)?;
        Ok((st.queue(EdgeId(0)), st.queue(EdgeId(1)), rep))
    }

    #[test]
    fn service_is_min() {
        assert_eq!(service(3, 5, 4), 3);
        assert_eq!(service(0, 7, 4), 0);
        assert_eq!(service(9, 8, 4), 4);
        assert_eq!(service(5, 3, 4), service(3, 5, 4));
    }

    #[test]
    fn step_examples() {
        assert_eq!(run((4, 4), (0, 0), (0, 0)).unwrap().0, 0);
        let (a, b, rep) = run((10, 2), (0, 0), (0, 0)).unwrap();
        assert_eq!((a, b), (8, 0));
        assert_eq!(rep.served, vec![(EdgeId(0), 2)]);
        let (a, b, rep) = run((7, 7), (3, 0), (1, 0)).unwrap();
        assert_eq!((a, b), (4, 2));
        assert_eq!(rep.served, vec![(EdgeId(0), 5)]);
    }

    #[test]
    fn over_rebalancing_leaves_state_untouched() {
        let g = pair();
        let mut st = ChannelState::from_queues(&g, vec![2, 2]).unwrap();
        let before = st.clone();
        let flows = SlotFlows::from_dense(&g, &[0, 0], &[1, 0]).unwrap();
        let err = st.step(&g, &flows, ServiceTiming::PostArrival).unwrap_err();
        assert!(matches!(err, LedgerError::NegativeQueue { edge: 0, .. }));
        assert_eq!(st, before);
    }

    #[test]
    fn pre_arrival_timing_ignores_current_arrivals() {
        let g = pair();
        let mut st = ChannelState::new(&g);
        let flows = SlotFlows::from_dense(&g, &[3, 3], &[0, 0]).unwrap();
        st.step(&g, &flows, ServiceTiming::PreArrival).unwrap();
        assert_eq!(st.queues(), &[3, 3]);
        let mut st = ChannelState::new(&g);
        st.step(&g, &flows, ServiceTiming::PostArrival).unwrap();
        assert_eq!(st.queues(), &[0, 0]);
    }

    #[test]
    fn imbalance_is_antisymmetric() {
        let g = pair();
        for (a, b, z) in [(3, 1, 2), (0, 0, 0), (1, 4, -3)] {
            let st = ChannelState::from_queues(&g, vec![a, b]).unwrap();
            assert_eq!(st.imbalance(EdgeId(0)), z);
            assert_eq!(st.imbalance(EdgeId(1)), -z);
        }
    }

    #[test]
    fn tentative_rollback_restores_flows() {
        let g = pair();
        let st = ChannelState::new(&g);
        let mut flows = SlotFlows::new(&g);
        let mut t = Tentative::new(&g, &st, &mut flows, ServiceTiming::PostArrival);
        t.add_path(&[EdgeId(0)], 2);
        let cp = t.checkpoint();
        t.add_path(&[EdgeId(1)], 1);
        assert_eq!(t.projected(EdgeId(0)), 1);
        t.rollback(cp);
        assert_eq!(t.projected(EdgeId(0)), 2);
        assert_eq!(t.projected(EdgeId(1)), 0);
    }

    #[test]
    fn dump_round_trip() {
        let g = PaymentGraph::build(&[("A", "B", 2), ("B", "C", 3)]).unwrap();
        let st = ChannelState::from_queues(&g, vec![1, 0, 4, 2]).unwrap();
        let mut buf = Vec::new();
        st.write_csv(&g, &mut buf).unwrap();
        let back = ChannelState::read_csv(&g, buf.as_slice()).unwrap();
        assert_eq!(back, st);
    }
}
