//! Payment graph and path machinery.
//!
//! Every channel is stored as two directed edges with ids `2k` and `2k + 1`,
//! so the reverse of an edge is `id ^ 1`. Vertex ids are opaque strings that
//! are mapped to dense indices at construction; indices follow the natural
//! order of the names (numeric when every name is an integer), which makes
//! comparisons on index sequences agree with comparisons on the names.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path as FsPath;
use std::sync::Arc;

use thiserror::Error;

/// Dense vertex index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Dense directed-edge index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The opposite direction of the same channel.
    pub fn reverse(self) -> EdgeId {
        EdgeId(self.0 ^ 1)
    }

    /// Index of the undirected channel this edge belongs to.
    pub fn channel(self) -> usize {
        (self.0 >> 1) as usize
    }

    /// True for the direction listed first in the input.
    pub fn is_forward(self) -> bool {
        self.0 & 1 == 0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("edge list is empty")]
    Empty,
    #[error("duplicate channel {0} - {1}")]
    DuplicateEdge(String, String),
    #[error("channel {0} - {1} has non-positive capacity {2}")]
    NonPositiveCapacity(String, String, i64),
    #[error("self loop on {0}")]
    SelfLoop(String),
    #[error("graph is disconnected: {0} of {1} vertices reachable from {2}")]
    DisconnectedGraph(usize, usize, String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("no path from {0} to {1}")]
    NoPathExists(String, String),
    #[error("source and destination coincide ({0})")]
    SameEndpoints(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("edge weight {weight} on edge {edge} is negative or not finite")]
    InvalidWeight { edge: u32, weight: f64 },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectedEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub capacity: u64,
}

/// Connected graph of agents and bidirectional, symmetric-capacity channels.
#[derive(Debug, Clone)]
pub struct PaymentGraph {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<DirectedEdge>,
    /// Outgoing `(neighbor, edge)` lists sorted by neighbor.
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    lookup: HashMap<(NodeId, NodeId), EdgeId>,
    c_max: u64,
    c_min: u64,
}

fn natural_order(names: &mut [String]) {
    if names.iter().all(|n| n.parse::<u64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<u64>().unwrap());
    } else {
        names.sort();
    }
}

impl PaymentGraph {
    /// Builds a graph from undirected `(u, v, capacity)` channels; both
    /// directions are materialised.
    pub fn build<S: AsRef<str>>(channels: &[(S, S, i64)]) -> Result<Self, TopologyError> {
        if channels.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut names: Vec<String> = channels
            .iter()
            .flat_map(|(u, v, _)| [u.as_ref().to_string(), v.as_ref().to_string()])
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        natural_order(&mut names);
        let index: HashMap<String, NodeId> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), NodeId(i as u32)))
            .collect();

        let mut edges = Vec::with_capacity(channels.len() * 2);
        let mut lookup = HashMap::with_capacity(channels.len() * 2);
        let mut adjacency = vec![Vec::new(); names.len()];
        for (u, v, cap) in channels {
            let (u, v) = (u.as_ref(), v.as_ref());
            if u == v {
                return Err(TopologyError::SelfLoop(u.to_string()));
            }
            if *cap <= 0 {
                return Err(TopologyError::NonPositiveCapacity(u.into(), v.into(), *cap));
            }
            let (a, b) = (index[u], index[v]);
            if lookup.contains_key(&(a, b)) {
                return Err(TopologyError::DuplicateEdge(u.into(), v.into()));
            }
            let fwd = EdgeId(edges.len() as u32);
            edges.push(DirectedEdge { from: a, to: b, capacity: *cap as u64 });
            edges.push(DirectedEdge { from: b, to: a, capacity: *cap as u64 });
            lookup.insert((a, b), fwd);
            lookup.insert((b, a), fwd.reverse());
            adjacency[a.index()].push((b, fwd));
            adjacency[b.index()].push((a, fwd.reverse()));
        }
        for list in &mut adjacency {
            list.sort();
        }
        let c_max = edges.iter().map(|e| e.capacity).max().unwrap_or(0);
        let c_min = edges.iter().map(|e| e.capacity).min().unwrap_or(0);
        let graph = PaymentGraph { names, index, edges, adjacency, lookup, c_max, c_min };
        graph.check_connected()?;
        Ok(graph)
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let n = self.names.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    count += 1;
                    stack.push(v.index());
                }
            }
        }
        if count != n {
            return Err(TopologyError::DisconnectedGraph(count, n, self.names[0].clone()));
        }
        Ok(())
    }

    /// Reads a topology CSV (`u,v,capacity`, header optional).
    pub fn from_csv_path(path: &FsPath) -> Result<Self, TopologyError> {
        let file = std::fs::File::open(path)
            .map_err(|e| TopologyError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, TopologyError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut channels: Vec<(String, String, i64)> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 1;
            let rec = rec.map_err(|e| TopologyError::Parse { line, message: e.to_string() })?;
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            if rec.len() < 3 {
                return Err(TopologyError::Parse {
                    line,
                    message: format!("expected u,v,capacity but found {} fields", rec.len()),
                });
            }
            let cap = match rec[2].parse::<i64>() {
                Ok(c) => c,
                Err(_) if i == 0 => continue, // header
                Err(_) => {
                    return Err(TopologyError::Parse {
                        line,
                        message: format!("capacity '{}' is not an integer", &rec[2]),
                    })
                }
            };
            channels.push((rec[0].to_string(), rec[1].to_string(), cap));
        }
        Self::build(&channels)
    }

    /// Writes the channel list as `u,v,capacity`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["u", "v", "capacity"])?;
        for e in self.edge_ids().filter(|e| e.is_forward()) {
            let d = self.edge(e);
            w.write_record([self.name(d.from), self.name(d.to), &d.capacity.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    /// Number of directed edges, i.e. twice the number of channels.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn channel_count(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn c_max(&self) -> u64 {
        self.c_max
    }

    pub fn c_min(&self) -> u64 {
        self.c_min
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v.index()]
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn require_node(&self, name: &str) -> Result<NodeId, TopologyError> {
        self.node(name).ok_or_else(|| TopologyError::UnknownVertex(name.to_string()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len() as u32).map(NodeId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len() as u32).map(EdgeId)
    }

    pub fn edge(&self, e: EdgeId) -> DirectedEdge {
        self.edges[e.index()]
    }

    pub fn capacity(&self, e: EdgeId) -> u64 {
        self.edges[e.index()].capacity
    }

    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        self.lookup.get(&(u, v)).copied()
    }

    /// Outgoing `(neighbor, edge)` pairs in ascending neighbor order.
    pub fn neighbors(&self, u: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[u.index()]
    }

    /// Human-readable rendering of a path (`A>B>C`).
    pub fn describe(&self, path: &Path) -> String {
        path.nodes().iter().map(|&v| self.name(v)).collect::<Vec<_>>().join(">")
    }

    /// Parses an `A>B>C` path rendering back into a [`Path`].
    pub fn parse_path(&self, text: &str) -> Result<Path, TopologyError> {
        let nodes = text
            .split('>')
            .map(|s| self.require_node(s.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        Path::from_nodes(self, nodes)
    }
}

/// A loopless walk from a source to a destination.
///
/// Paths are ordered by hop count first and then lexicographically by vertex
/// index sequence. This is the tie-break used everywhere a choice between
/// equal-weight paths has to be made.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
}

impl Path {
    /// Validates that `nodes` describes a loopless walk in `g`.
    pub fn from_nodes(g: &PaymentGraph, nodes: Vec<NodeId>) -> Result<Self, TopologyError> {
        if nodes.len() < 2 {
            return Err(TopologyError::InvalidArgument("a path needs at least two vertices".into()));
        }
        let mut seen = HashSet::with_capacity(nodes.len());
        for &v in &nodes {
            if v.index() >= g.node_count() {
                return Err(TopologyError::UnknownVertex(v.to_string()));
            }
            if !seen.insert(v) {
                return Err(TopologyError::InvalidArgument(format!(
                    "vertex {} repeats in path",
                    g.name(v)
                )));
            }
        }
        let edges = nodes
            .windows(2)
            .map(|w| {
                g.edge_between(w[0], w[1]).ok_or_else(|| {
                    TopologyError::InvalidArgument(format!(
                        "no channel {} - {}",
                        g.name(w[0]),
                        g.name(w[1])
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Path { nodes, edges })
    }

    fn from_parts(nodes: Vec<NodeId>, edges: Vec<EdgeId>) -> Self {
        debug_assert_eq!(nodes.len(), edges.len() + 1);
        Path { nodes, edges }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }

    pub fn contains_edge(&self, e: EdgeId) -> bool {
        self.edges.contains(&e)
    }

    /// Sum of `weight` over the edges, accumulated source to destination.
    pub fn weight<F: Fn(EdgeId) -> f64>(&self, weight: F) -> f64 {
        self.edges.iter().fold(0.0, |acc, &e| acc + weight(e))
    }

    /// Structural check: consecutive edges chain, endpoints match, no vertex repeats.
    pub fn is_valid_in(&self, g: &PaymentGraph) -> bool {
        if self.nodes.len() != self.edges.len() + 1 || self.edges.is_empty() {
            return false;
        }
        let distinct: HashSet<_> = self.nodes.iter().collect();
        if distinct.len() != self.nodes.len() {
            return false;
        }
        self.edges.iter().enumerate().all(|(i, &e)| {
            e.index() < g.edge_count() && {
                let d = g.edge(e);
                d.from == self.nodes[i] && d.to == self.nodes[i + 1]
            }
        })
    }
}

impl Ord for Path {
    fn cmp(&self, other: &Self) -> Ordering {
        self.nodes
            .len()
            .cmp(&other.nodes.len())
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

impl PartialOrd for Path {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_endpoints(g: &PaymentGraph, i: NodeId, j: NodeId) -> Result<(), TopologyError> {
    for v in [i, j] {
        if v.index() >= g.node_count() {
            return Err(TopologyError::UnknownVertex(v.to_string()));
        }
    }
    if i == j {
        return Err(TopologyError::SameEndpoints(g.name(i).to_string()));
    }
    Ok(())
}

/// Every loopless path from `i` to `j` with at most `max_hops` edges, in
/// path order (hop count, then vertex sequence).
pub fn enumerate_paths(
    g: &PaymentGraph,
    i: NodeId,
    j: NodeId,
    max_hops: usize,
) -> Result<Vec<Path>, TopologyError> {
    check_endpoints(g, i, j)?;
    if max_hops == 0 {
        return Err(TopologyError::InvalidArgument("max_hops must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut on_path = vec![false; g.node_count()];
    let mut nodes = vec![i];
    let mut edges = Vec::new();
    on_path[i.index()] = true;
    dfs(g, j, max_hops, &mut on_path, &mut nodes, &mut edges, &mut out);
    if out.is_empty() {
        return Err(TopologyError::NoPathExists(g.name(i).into(), g.name(j).into()));
    }
    out.sort();
    Ok(out)
}

fn dfs(
    g: &PaymentGraph,
    target: NodeId,
    max_hops: usize,
    on_path: &mut [bool],
    nodes: &mut Vec<NodeId>,
    edges: &mut Vec<EdgeId>,
    out: &mut Vec<Path>,
) {
    let u = *nodes.last().unwrap();
    for &(v, e) in g.neighbors(u) {
        if on_path[v.index()] {
            continue;
        }
        nodes.push(v);
        edges.push(e);
        if v == target {
            out.push(Path::from_parts(nodes.clone(), edges.clone()));
        } else if edges.len() < max_hops {
            on_path[v.index()] = true;
            dfs(g, target, max_hops, on_path, nodes, edges, out);
            on_path[v.index()] = false;
        }
        nodes.pop();
        edges.pop();
    }
}

/// Lazily enumerated path sets `P_ij`, shared between callers.
#[derive(Debug, Clone)]
pub struct PathTable {
    max_hops: usize,
    table: HashMap<(NodeId, NodeId), Arc<Vec<Path>>>,
}

impl PathTable {
    /// `max_hops = None` means `|V| - 1`, i.e. every loopless path.
    pub fn new(g: &PaymentGraph, max_hops: Option<usize>) -> Self {
        let max_hops = max_hops.unwrap_or(g.node_count().saturating_sub(1)).max(1);
        PathTable { max_hops, table: HashMap::new() }
    }

    pub fn max_hops(&self) -> usize {
        self.max_hops
    }

    pub fn get(&mut self, g: &PaymentGraph, i: NodeId, j: NodeId) -> Result<Arc<Vec<Path>>, TopologyError> {
        if let Some(p) = self.table.get(&(i, j)) {
            return Ok(p.clone());
        }
        let paths = Arc::new(enumerate_paths(g, i, j, self.max_hops)?);
        self.table.insert((i, j), paths.clone());
        Ok(paths)
    }

    /// Read-only lookup of an already enumerated pair.
    pub fn cached(&self, i: NodeId, j: NodeId) -> Option<&Arc<Vec<Path>>> {
        self.table.get(&(i, j))
    }

    pub fn total_paths(&self) -> usize {
        self.table.values().map(|p| p.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Key {
    weight: f64,
    hops: u32,
}

impl Key {
    fn cmp_total(&self, other: &Key) -> Ordering {
        self.weight.total_cmp(&other.weight).then(self.hops.cmp(&other.hops))
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    key: Key,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (weight, hops, node)
        other.key.cmp_total(&self.key).then_with(|| other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable scratch space for shortest-path searches. Arrays are reset by
/// bumping a generation stamp, so repeated searches on large graphs do not
/// pay for clearing them.
#[derive(Debug, Default)]
pub struct PathFinder {
    stamp: u32,
    seen: Vec<u32>,
    settled: Vec<u32>,
    banned: Vec<u32>,
    dist: Vec<Key>,
    heap: BinaryHeap<HeapEntry>,
    // lower bounds on the distance to the current target, for guided spurs
    bound: Vec<Key>,
    pred: Vec<(NodeId, EdgeId)>,
}

impl PathFinder {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        if self.seen.len() < n {
            self.seen.resize(n, 0);
            self.settled.resize(n, 0);
            self.banned.resize(n, 0);
            self.dist.resize(n, Key { weight: f64::INFINITY, hops: u32::MAX });
            self.pred.resize(n, (NodeId(0), EdgeId(0)));
        }
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.settled.iter_mut().for_each(|s| *s = 0);
            self.banned.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        self.heap.clear();
    }

    /// Minimum-(weight, hops) path from `from` to `to` avoiding banned
    /// vertices and edges, lexicographically smallest among ties. Weights
    /// must already be validated as nonnegative.
    fn spur<F: Fn(EdgeId) -> f64>(
        &mut self,
        g: &PaymentGraph,
        from: NodeId,
        to: NodeId,
        banned_nodes: &[NodeId],
        banned_edges: &[EdgeId],
        weight: &F,
    ) -> Result<Option<Path>, TopologyError> {
        self.reset(g.node_count());
        let stamp = self.stamp;
        for v in banned_nodes {
            self.banned[v.index()] = stamp;
        }
        // reverse search from the destination
        self.seen[to.index()] = stamp;
        self.dist[to.index()] = Key { weight: 0.0, hops: 0 };
        self.heap.push(HeapEntry { key: Key { weight: 0.0, hops: 0 }, node: to });
        let mut reached = false;
        while let Some(HeapEntry { key, node }) = self.heap.pop() {
            if self.settled[node.index()] == stamp {
                continue;
            }
            self.settled[node.index()] = stamp;
            if node == from {
                reached = true;
                break;
            }
            for &(pred, out) in g.neighbors(node) {
                // edge pred -> node
                let e = out.reverse();
                if self.banned[pred.index()] == stamp
                    || self.settled[pred.index()] == stamp
                    || banned_edges.contains(&e)
                {
                    continue;
                }
                let w = weight(e);
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(TopologyError::InvalidWeight { edge: e.0, weight: w });
                }
                let cand = Key { weight: w + key.weight, hops: key.hops + 1 };
                let p = pred.index();
                if self.seen[p] != stamp || cand.cmp_total(&self.dist[p]) == Ordering::Less {
                    self.seen[p] = stamp;
                    self.dist[p] = cand;
                    self.heap.push(HeapEntry { key: cand, node: pred });
                }
            }
        }
        if !reached {
            return Ok(None);
        }
        // walk forward choosing the smallest neighbor that lies on an optimal path
        let mut nodes = vec![from];
        let mut edges = Vec::new();
        let mut u = from;
        while u != to {
            let du = self.dist[u.index()];
            let next = g.neighbors(u).iter().find(|&&(v, e)| {
                self.settled[v.index()] == stamp
                    && self.banned[v.index()] != stamp
                    && !banned_edges.contains(&e)
                    && {
                        let dv = self.dist[v.index()];
                        dv.hops + 1 == du.hops && weight(e) + dv.weight == du.weight
                    }
            });
            let &(v, e) = next.expect("settled predecessor chain is consistent");
            nodes.push(v);
            edges.push(e);
            u = v;
        }
        Ok(Some(Path::from_parts(nodes, edges)))
    }

    /// Records lower bounds on the distance to the target of the last
    /// unrestricted [`Self::spur`] search that reached `from`. Settled vertices
    /// carry their exact distance; every other vertex is at least as far as
    /// `from`. Banning vertices or edges only lengthens paths, so the bounds
    /// stay valid for later searches towards the same target.
    fn capture_bounds(&mut self, n: usize, from: NodeId) {
        let frontier = self.dist[from.index()];
        self.bound.clear();
        self.bound.extend((0..n).map(|v| if self.settled[v] == self.stamp { self.dist[v] } else { frontier }));
    }

    /// Forward A* variant of [`Self::spur`] guided by the bounds from
    /// [`Self::capture_bounds`]. Returns a minimum-(weight, hops) path; ties
    /// are broken deterministically but not by vertex sequence.
    fn spur_guided<F: Fn(EdgeId) -> f64>(
        &mut self,
        g: &PaymentGraph,
        from: NodeId,
        to: NodeId,
        banned_nodes: &[NodeId],
        banned_edges: &[EdgeId],
        weight: &F,
    ) -> Result<Option<Path>, TopologyError> {
        self.reset(g.node_count());
        let stamp = self.stamp;
        for v in banned_nodes {
            self.banned[v.index()] = stamp;
        }
        self.seen[from.index()] = stamp;
        self.dist[from.index()] = Key { weight: 0.0, hops: 0 };
        self.heap.push(HeapEntry { key: self.bound[from.index()], node: from });
        let mut reached = false;
        while let Some(HeapEntry { node, .. }) = self.heap.pop() {
            if self.settled[node.index()] == stamp {
                continue;
            }
            self.settled[node.index()] = stamp;
            if node == to {
                reached = true;
                break;
            }
            let key = self.dist[node.index()];
            for &(next, e) in g.neighbors(node) {
                let v = next.index();
                if self.banned[v] == stamp || self.settled[v] == stamp || banned_edges.contains(&e) {
                    continue;
                }
                let w = weight(e);
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(TopologyError::InvalidWeight { edge: e.0, weight: w });
                }
                let cand = Key { weight: key.weight + w, hops: key.hops + 1 };
                if self.seen[v] != stamp || cand.cmp_total(&self.dist[v]) == Ordering::Less {
                    self.seen[v] = stamp;
                    self.dist[v] = cand;
                    self.pred[v] = (node, e);
                    let h = self.bound[v];
                    let f = Key { weight: cand.weight + h.weight, hops: cand.hops + h.hops };
                    self.heap.push(HeapEntry { key: f, node: next });
                }
            }
        }
        if !reached {
            return Ok(None);
        }
        let mut nodes = vec![to];
        let mut edges = Vec::new();
        let mut u = to;
        while u != from {
            let (p, e) = self.pred[u.index()];
            nodes.push(p);
            edges.push(e);
            u = p;
        }
        nodes.reverse();
        edges.reverse();
        Ok(Some(Path::from_parts(nodes, edges)))
    }

    /// Yen's k shortest loopless paths under a nonnegative edge weight.
    ///
    /// Results are ascending in weight, ties going to the earlier path in
    /// path order among the candidates examined; fewer than `k` paths are
    /// returned when fewer exist.
    pub fn k_shortest<F: Fn(EdgeId) -> f64>(
        &mut self,
        g: &PaymentGraph,
        i: NodeId,
        j: NodeId,
        k: usize,
        weight: F,
    ) -> Result<Vec<(Path, f64)>, TopologyError> {
        check_endpoints(g, i, j)?;
        if k == 0 {
            return Err(TopologyError::InvalidArgument("k must be at least 1".into()));
        }
        let first = self
            .spur(g, i, j, &[], &[], &weight)?
            .ok_or_else(|| TopologyError::NoPathExists(g.name(i).into(), g.name(j).into()))?;
        let w0 = first.weight(&weight);
        if k > 1 {
            self.capture_bounds(g.node_count(), i);
        }
        let mut found: Vec<(Path, f64)> = vec![(first, w0)];
        let mut candidates: Vec<(Path, f64)> = Vec::new();
        let mut known: HashSet<Vec<NodeId>> = HashSet::new();
        known.insert(found[0].0.nodes.clone());

        while found.len() < k {
            let prev = found.last().unwrap().0.clone();
            for idx in 0..prev.hops() {
                let root = &prev.nodes[..=idx];
                let spur_node = prev.nodes[idx];
                let banned_edges: Vec<EdgeId> = found
                    .iter()
                    .filter(|(p, _)| p.nodes.len() > idx + 1 && &p.nodes[..=idx] == root)
                    .map(|(p, _)| p.edges[idx])
                    .collect();
                let banned_nodes = &prev.nodes[..idx];
                if let Some(spur) = self.spur_guided(g, spur_node, j, banned_nodes, &banned_edges, &weight)? {
                    let mut nodes = root.to_vec();
                    nodes.extend_from_slice(&spur.nodes[1..]);
                    if known.contains(&nodes) {
                        continue;
                    }
                    let mut edges = prev.edges[..idx].to_vec();
                    edges.extend_from_slice(&spur.edges);
                    let path = Path::from_parts(nodes, edges);
                    let w = path.weight(&weight);
                    known.insert(path.nodes.clone());
                    candidates.push((path, w));
                }
            }
            if candidates.is_empty() {
                break;
            }
            let best = candidates
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
                .map(|(idx, _)| idx)
                .unwrap();
            found.push(candidates.swap_remove(best));
        }
        Ok(found)
    }
}

/// Convenience wrapper around [`PathFinder::k_shortest`].
pub fn k_shortest_paths<F: Fn(EdgeId) -> f64>(
    g: &PaymentGraph,
    i: NodeId,
    j: NodeId,
    k: usize,
    weight: F,
) -> Result<Vec<(Path, f64)>, TopologyError> {
    PathFinder::new().k_shortest(g, i, j, k, weight)
}
