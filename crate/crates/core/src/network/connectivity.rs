//! Strong connectivity and κ-connectivity of the directed communication
//! graph. Link and node connectivity are computed as unit-capacity maximum
//! flows (Menger), the node version on the split graph where every vehicle
//! becomes an `in → out` arc of capacity one.

use std::collections::VecDeque;

use super::CommNetwork;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SurvivabilityReport {
    pub kappa_node: usize,
    pub kappa_link: usize,
    pub strongly_connected: bool,
}

/// Every active vehicle reaches every other along directed edges.
/// Equivalent to irreducibility of `W`.
pub fn is_strongly_connected(net: &CommNetwork) -> bool {
    let m = net.n_active();
    if m <= 1 {
        return true;
    }
    let edges = net.compact_edges();
    let mut fwd = vec![Vec::new(); m];
    let mut bwd = vec![Vec::new(); m];
    for &(f, t) in &edges {
        fwd[f].push(t);
        bwd[t].push(f);
    }
    reaches_all(&fwd) && reaches_all(&bwd)
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Link and node connectivity of the directed graph on the active vehicles.
pub fn connectivity(net: &CommNetwork) -> Result<SurvivabilityReport> {
    let m = net.n_active();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "connectivity needs at least two active vehicles, have {m}"
        )));
    }
    let edges = net.compact_edges();
    let mut adjacent = vec![vec![false; m]; m];
    for &(f, t) in &edges {
        adjacent[f][t] = true;
    }

    let mut kappa_link = usize::MAX;
    let mut kappa_node = m - 1;
    for s in 0..m {
        for t in 0..m {
            if s == t {
                continue;
            }
            kappa_link = kappa_link.min(edge_disjoint_paths(m, &edges, s, t));
            if !adjacent[s][t] {
                kappa_node = kappa_node.min(node_disjoint_paths(m, &edges, s, t));
            }
        }
    }
    Ok(SurvivabilityReport {
        kappa_node,
        kappa_link,
        strongly_connected: is_strongly_connected(net),
    })
}

/// Maximum number of edge-disjoint directed paths from `s` to `t`.
pub fn edge_disjoint_paths(n: usize, edges: &[(usize, usize)], s: usize, t: usize) -> usize {
    let mut cap = vec![vec![0i32; n]; n];
    for &(f, to) in edges {
        cap[f][to] += 1;
    }
    max_flow(cap, s, t)
}

/// Maximum number of internally node-disjoint directed paths from `s` to `t`
/// (`s → t` must not be an edge for this to equal a vertex cut).
pub fn node_disjoint_paths(n: usize, edges: &[(usize, usize)], s: usize, t: usize) -> usize {
    // vertex v splits into v_in = v and v_out = n + v
    let big = n as i32 + 1;
    let mut cap = vec![vec![0i32; 2 * n]; 2 * n];
    for v in 0..n {
        cap[v][n + v] = if v == s || v == t { big } else { 1 };
    }
    for &(f, to) in edges {
        cap[n + f][to] += 1;
    }
    max_flow(cap, s, n + t)
}

/// Edmonds–Karp on a dense capacity matrix.
fn max_flow(mut cap: Vec<Vec<i32>>, s: usize, t: usize) -> usize {
    let n = cap.len();
    let mut flow = 0usize;
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for v in 0..n {
                if parent[v] == usize::MAX && cap[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[t] == usize::MAX {
            return flow;
        }
        let mut bottleneck = i32::MAX;
        let mut v = t;
        while v != s {
            let u = parent[v];
            bottleneck = bottleneck.min(cap[u][v]);
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = parent[v];
            cap[u][v] -= bottleneck;
            cap[v][u] += bottleneck;
            v = u;
        }
        flow += bottleneck as usize;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{apply_fault, build_weights, default_topology, Fault};

    fn bidir(pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
        pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
    }

    #[test]
    fn directed_cycle_is_strongly_connected() {
        let net = build_weights(&[(0, 1), (1, 2), (2, 3), (3, 0)], 4).unwrap();
        assert!(is_strongly_connected(&net));
    }

    #[test]
    fn chain_is_not() {
        let net = build_weights(&[(0, 1), (1, 2)], 3).unwrap();
        assert!(!is_strongly_connected(&net));
        let rep = connectivity(&net).unwrap();
        assert_eq!(rep.kappa_link, 0);
        assert_eq!(rep.kappa_node, 0);
        assert!(!rep.strongly_connected);
        assert_eq!(edge_disjoint_paths(3, &[(0, 1), (1, 2)], 2, 0), 0);
    }

    #[test]
    fn default_minus_link_stays_connected() {
        let net = build_weights(&default_topology(4), 4).unwrap();
        let after = apply_fault(&net, &Fault::link(0, 2, 0)).unwrap();
        assert!(is_strongly_connected(&after));
    }

    #[test]
    fn complete_graph_on_four() {
        let pairs: Vec<(usize, usize)> =
            (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).collect();
        let net = build_weights(&bidir(&pairs), 4).unwrap();
        let rep = connectivity(&net).unwrap();
        assert_eq!((rep.kappa_node, rep.kappa_link), (3, 3));
    }

    #[test]
    fn ring_on_four() {
        let net = build_weights(&bidir(&[(0, 1), (1, 2), (2, 3), (3, 0)]), 4).unwrap();
        let rep = connectivity(&net).unwrap();
        assert_eq!((rep.kappa_node, rep.kappa_link), (2, 2));
        assert!(rep.strongly_connected);
    }

    #[test]
    fn default_scenario_survives_single_failures() {
        let net = build_weights(&default_topology(4), 4).unwrap();
        let rep = connectivity(&net).unwrap();
        assert_eq!((rep.kappa_node, rep.kappa_link), (2, 2));
        for &(f, t) in net.edges() {
            let after = apply_fault(&net, &Fault::link(f, t, 0)).unwrap();
            assert!(is_strongly_connected(&after), "link {f}->{t}");
        }
        for id in 0..4 {
            let after = apply_fault(&net, &Fault::node(id, 0)).unwrap();
            assert!(is_strongly_connected(&after), "node {id}");
        }
    }

    #[test]
    fn needs_two_nodes() {
        let net = build_weights(&[], 1).unwrap();
        assert!(connectivity(&net).is_err());
        assert!(is_strongly_connected(&net));
    }
}
