//! Vehicle-to-vehicle communication graph.
//!
//! An edge `(j, i)` means vehicle `j` sends its estimate and measurement to
//! vehicle `i`. The inclusive neighbourhood of `i` is `{i}` plus every sender
//! into `i`, and the consensus weights follow the Metropolis rule so that
//! every row of `W` sums to one with a positive self-weight.
//!
//! Node ids are 0-based inside the crate and 1-based in every text format.
//! A failed vehicle keeps its id and is marked inactive; `W`, the
//! neighbourhoods and everything downstream are indexed by the compact
//! position of a vehicle among the active ones.

mod connectivity;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

pub use connectivity::{
    connectivity, edge_disjoint_paths, is_strongly_connected, node_disjoint_paths,
    SurvivabilityReport,
};

use crate::error::{Error, Result};
use crate::matlib::Matrix;

pub type Edge = (usize, usize);

#[derive(Clone, Debug)]
pub struct CommNetwork {
    n: usize,
    active: Vec<bool>,
    edges: BTreeSet<Edge>,
    weights: Matrix,
    neighborhoods: Vec<Vec<usize>>,
}

impl CommNetwork {
    /// Builds the network and its Metropolis weights over `n` vehicles.
    pub fn new(n: usize, edges: &[Edge]) -> Result<Self> {
        build_weights(edges, n)
    }

    fn build(n: usize, active: Vec<bool>, edges: BTreeSet<Edge>) -> Result<Self> {
        for &(from, to) in &edges {
            if from >= n || to >= n {
                return Err(Error::Network(format!(
                    "edge {}->{} references a vehicle outside 1..={n}",
                    from + 1,
                    to + 1
                )));
            }
            if from == to {
                return Err(Error::Network(format!(
                    "self-loop on vehicle {}; self-weights are derived, not listed",
                    from + 1
                )));
            }
            if !active[from] || !active[to] {
                return Err(Error::Network(format!(
                    "edge {}->{} touches an inactive vehicle",
                    from + 1,
                    to + 1
                )));
            }
        }
        let ids: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        let mut compact = vec![usize::MAX; n];
        for (c, &id) in ids.iter().enumerate() {
            compact[id] = c;
        }
        let m = ids.len();

        let mut neighborhoods: Vec<Vec<usize>> = (0..m).map(|c| vec![c]).collect();
        let mut sym: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
        for &(from, to) in &edges {
            let (f, t) = (compact[from], compact[to]);
            neighborhoods[t].push(f);
            sym[t].insert(f);
            sym[f].insert(t);
        }
        for nb in &mut neighborhoods {
            nb.sort_unstable();
            nb.dedup();
        }
        let degree: Vec<usize> = sym.iter().map(BTreeSet::len).collect();

        let mut weights = Matrix::zeros(m, m);
        for i in 0..m {
            let mut off = 0.0;
            for &j in neighborhoods[i].iter().filter(|&&j| j != i) {
                let w = 1.0 / (1.0 + degree[i].max(degree[j]) as f64);
                weights[(i, j)] = w;
                off += w;
            }
            weights[(i, i)] = 1.0 - off;
        }

        Ok(CommNetwork {
            n,
            active,
            edges,
            weights,
            neighborhoods,
        })
    }

    /// Total number of vehicle ids, failed ones included.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_active(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.active.get(id).copied().unwrap_or(false)
    }

    /// Ids of the active vehicles in compact order.
    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.active[i]).collect()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    /// Edges in compact indices.
    pub fn compact_edges(&self) -> Vec<Edge> {
        let ids = self.active_nodes();
        let pos = |id: usize| ids.binary_search(&id).expect("edge endpoint is active");
        self.edges.iter().map(|&(f, t)| (pos(f), pos(t))).collect()
    }

    /// Row-stochastic consensus matrix over the active vehicles.
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Inclusive neighbourhood of the active vehicle at compact index `i`.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    pub fn neighborhoods(&self) -> &[Vec<usize>] {
        &self.neighborhoods
    }

    pub fn min_out_degree(&self) -> usize {
        let ids = self.active_nodes();
        ids.iter()
            .map(|&id| self.edges.iter().filter(|&&(f, _)| f == id).count())
            .min()
            .unwrap_or(0)
    }

    /// Same vehicles with every edge made bidirectional.
    pub fn symmetrized(&self) -> Result<CommNetwork> {
        let mut edges = self.edges.clone();
        for &(f, t) in &self.edges {
            edges.insert((t, f));
        }
        CommNetwork::build(self.n, self.active.clone(), edges)
    }

    /// Edge list in the text format accepted by [`parse_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(f, t) in &self.edges {
            if f < t && self.edges.contains(&(t, f)) {
                out.push_str(&format!("{} {} bidir\n", f + 1, t + 1));
            } else if !self.edges.contains(&(t, f)) {
                out.push_str(&format!("{} {} dir\n", f + 1, t + 1));
            }
        }
        out
    }
}

/// Metropolis weights on the given directed edges.
///
/// `w_ij = 1 / (1 + max(d_i, d_j))` for every sender `j` into `i`, where `d`
/// counts distinct neighbours in either direction, and `w_ii` takes the
/// remainder of the row. Self-loops are rejected because the self-weight is
/// always derived.
pub fn build_weights(edges: &[Edge], n: usize) -> Result<CommNetwork> {
    CommNetwork::build(n, vec![true; n], edges.iter().copied().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultKind {
    Link { from: usize, to: usize },
    Node(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fault {
    pub kind: FaultKind,
    /// Step at which the fault takes effect (before that step's prediction).
    pub time: usize,
}

impl Fault {
    pub fn link(from: usize, to: usize, time: usize) -> Self {
        Fault {
            kind: FaultKind::Link { from, to },
            time,
        }
    }

    pub fn node(id: usize, time: usize) -> Self {
        Fault {
            kind: FaultKind::Node(id),
            time,
        }
    }

    /// Short label without the time, e.g. `link 1->3` or `node 3`.
    pub fn label(&self) -> String {
        match self.kind {
            FaultKind::Link { from, to } => format!("link {}->{}", from + 1, to + 1),
            FaultKind::Node(id) => format!("node {}", id + 1),
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @{}", self.label(), self.time)
    }
}

impl FromStr for Fault {
    type Err = Error;

    /// `link i->j @k` or `node i @k`, 1-based ids.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad fault spec {s:?}; expected \"link i->j @k\" or \"node i @k\""));
        let (what, when) = s.split_once('@').ok_or_else(bad)?;
        let time: usize = when.trim().parse().map_err(|_| bad())?;
        let mut toks = what.split_whitespace();
        let kind = toks.next().ok_or_else(bad)?;
        let target = toks.next().ok_or_else(bad)?;
        if toks.next().is_some() {
            return Err(bad());
        }
        let id = |t: &str| -> Result<usize> {
            match t.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(bad()),
            }
        };
        match kind {
            "link" => {
                let (a, b) = target.split_once("->").ok_or_else(bad)?;
                Ok(Fault::link(id(a)?, id(b)?, time))
            }
            "node" => Ok(Fault::node(id(target)?, time)),
            _ => Err(bad()),
        }
    }
}

/// Network after the fault; weights are rebuilt on the surviving graph.
pub fn apply_fault(net: &CommNetwork, fault: &Fault) -> Result<CommNetwork> {
    match fault.kind {
        FaultKind::Link { from, to } => {
            let mut edges = net.edges.clone();
            if !edges.remove(&(from, to)) {
                return Err(Error::Network(format!(
                    "cannot remove link {}->{}: not in the network",
                    from + 1,
                    to + 1
                )));
            }
            CommNetwork::build(net.n, net.active.clone(), edges)
        }
        FaultKind::Node(id) => {
            if !net.is_active(id) {
                return Err(Error::Network(format!(
                    "cannot remove vehicle {}: not an active node",
                    id + 1
                )));
            }
            let mut active = net.active.clone();
            active[id] = false;
            let edges = net
                .edges
                .iter()
                .copied()
                .filter(|&(f, t)| f != id && t != id)
                .collect();
            CommNetwork::build(net.n, active, edges)
        }
    }
}

/// Parses `i j [bidir|dir]` lines (1-based; `bidir` when omitted).
/// Blank lines and `#` comments are skipped.
pub fn parse_edge_list(text: &str) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        edges.extend(parse_edge_line(line).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("line {}: {msg}", no + 1)),
            other => other,
        })?);
    }
    Ok(edges)
}

pub(crate) fn parse_edge_line(line: &str) -> Result<Vec<Edge>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let id = |t: &str| -> Result<usize> {
        match t.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(Error::Parse(format!("bad vehicle id {t:?}"))),
        }
    };
    let (a, b, mode) = match toks.as_slice() {
        [a, b] => (id(a)?, id(b)?, "bidir"),
        [a, b, m] => (id(a)?, id(b)?, *m),
        _ => return Err(Error::Parse(format!("expected \"i j [bidir|dir]\", got {line:?}"))),
    };
    match mode {
        "bidir" => Ok(vec![(a, b), (b, a)]),
        "dir" => Ok(vec![(a, b)]),
        other => Err(Error::Parse(format!("unknown edge mode {other:?}"))),
    }
}

/// Bidirectional ring `1–2–…–n–1`, plus the chord `1–3` when `n >= 4`.
pub fn default_topology(n: usize) -> Vec<Edge> {
    let mut edges = Vec::new();
    let mut both = |a: usize, b: usize| {
        edges.push((a, b));
        edges.push((b, a));
    };
    match n {
        0 | 1 => {}
        2 => both(0, 1),
        _ => {
            for i in 0..n {
                both(i, (i + 1) % n);
            }
            if n >= 4 {
                both(0, 2);
            }
        }
    }
    let set: BTreeSet<Edge> = edges.into_iter().collect();
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_sums(w: &Matrix) -> Vec<f64> {
        (0..w.rows()).map(|i| w.row(i).iter().sum()).collect()
    }

    #[test]
    fn two_node_weights() {
        let net = build_weights(&[(0, 1), (1, 0)], 2).unwrap();
        assert_eq!(net.weights(), &Matrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]));
    }

    #[test]
    fn isolated_node() {
        let net = build_weights(&[], 1).unwrap();
        assert_eq!(net.weights(), &Matrix::from_rows(&[&[1.0]]));
    }

    #[test]
    fn ring_weights() {
        let edges: Vec<Edge> = (0..4).flat_map(|i| [(i, (i + 1) % 4), ((i + 1) % 4, i)]).collect();
        let net = build_weights(&edges, 4).unwrap();
        for (i, s) in row_sums(net.weights()).into_iter().enumerate() {
            assert!((s - 1.0).abs() < 1e-12);
            assert!((net.weights()[(i, i)] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn self_loops_and_out_of_range_rejected() {
        assert!(build_weights(&[(1, 1)], 2).is_err());
        assert!(build_weights(&[(0, 4)], 2).is_err());
    }

    #[test]
    fn weights_follow_directed_support() {
        let net = build_weights(&[(0, 1), (1, 2), (2, 0)], 3).unwrap();
        let w = net.weights();
        for i in 0..3 {
            for j in 0..3 {
                let in_nb = net.neighborhood(i).contains(&j);
                assert_eq!(w[(i, j)] > 0.0, in_nb, "w[{i},{j}]");
            }
        }
        assert_eq!(net.neighborhood(1), &[0, 1]);
    }

    #[test]
    fn default_topology_shape() {
        let edges = default_topology(4);
        assert_eq!(edges.len(), 10);
        assert!(edges.contains(&(0, 2)) && edges.contains(&(2, 0)));
        let net = CommNetwork::new(4, &edges).unwrap();
        assert_eq!(net.neighborhood(0), &[0, 1, 2, 3]);
        assert_eq!(net.neighborhood(1), &[0, 1, 2]);
        // degrees 3, 2, 3, 2
        assert!((net.weights()[(1, 0)] - 0.25).abs() < 1e-15);
        assert!((net.weights()[(1, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn link_fault() {
        let net = CommNetwork::new(4, &default_topology(4)).unwrap();
        let after = apply_fault(&net, &Fault::link(0, 2, 0)).unwrap();
        assert_eq!(after.n_active(), 4);
        assert!(!after.edges().contains(&(0, 2)));
        assert!(after.edges().contains(&(2, 0)));
        assert!(is_strongly_connected(&after));
        assert!(apply_fault(&after, &Fault::link(0, 2, 0)).is_err());
    }

    #[test]
    fn node_fault_keeps_ids() {
        let net = CommNetwork::new(4, &default_topology(4)).unwrap();
        let after = apply_fault(&net, &Fault::node(2, 0)).unwrap();
        assert_eq!(after.n(), 4);
        assert_eq!(after.active_nodes(), vec![0, 1, 3]);
        assert_eq!(after.weights().shape(), (3, 3));
        assert!(is_strongly_connected(&after));
        for s in row_sums(after.weights()) {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(apply_fault(&after, &Fault::node(2, 0)).is_err());
    }

    #[test]
    fn removing_only_edge_disconnects() {
        let net = build_weights(&[(0, 1)], 2).unwrap();
        let after = apply_fault(&net, &Fault::link(0, 1, 0)).unwrap();
        assert!(!is_strongly_connected(&after));
    }

    #[test]
    fn fault_grammar() {
        assert_eq!("link 1->3 @0".parse::<Fault>().unwrap(), Fault::link(0, 2, 0));
        assert_eq!("node 3 @12".parse::<Fault>().unwrap(), Fault::node(2, 12));
        assert_eq!(Fault::link(0, 2, 5).to_string(), "link 1->3 @5");
        assert!("link 1-3 @0".parse::<Fault>().is_err());
        assert!("node 0 @1".parse::<Fault>().is_err());
        assert!("node 2".parse::<Fault>().is_err());
    }

    #[test]
    fn edge_list_format() {
        let edges = parse_edge_list("# ring\n1 2 bidir\n2 3 dir\n3 1\n").unwrap();
        assert_eq!(edges, vec![(0, 1), (1, 0), (1, 2), (2, 0), (0, 2)]);
        assert!(parse_edge_list("1 2 sideways").is_err());
        assert!(parse_edge_list("0 2").is_err());
        let net = CommNetwork::new(3, &edges).unwrap();
        let again = parse_edge_list(&net.to_edge_list()).unwrap();
        let a: BTreeSet<Edge> = edges.into_iter().collect();
        let b: BTreeSet<Edge> = again.into_iter().collect();
        assert_eq!(a, b);
    }
}
