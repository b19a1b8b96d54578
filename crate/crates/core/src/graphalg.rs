//! Graph algorithms on the digraph of a network: length-3 trails, 2-cycles,
//! weak components, acyclicity and topological order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{Edge, NetworkSystem, NodeId, NodePair, Permutation};

/// Which of the three admissible shapes a length-3 trail `j→p→q→i` has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Situation {
    /// `j, p, q, i` all distinct: a directed path.
    S1,
    /// `p = i`: the trail runs `j→i→q→i` through the 2-cycle `i↔q`.
    S2,
    /// `q = j`: the trail runs `j→p→j→i` through the 2-cycle `j↔p`.
    S3,
}

/// A sequence of edges where each edge starts where the previous one ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trail {
    pub edges: Vec<Edge>,
}

impl Trail {
    /// Consecutive edges chain, no edge repeats, and every edge exists in `sys`
    /// with the recorded weight.
    pub fn is_valid_in(&self, sys: &NetworkSystem) -> bool {
        let chained = self.edges.windows(2).all(|w| w[0].target == w[1].source);
        let distinct = self
            .edges
            .iter()
            .enumerate()
            .all(|(k, e)| self.edges[..k].iter().all(|f| f.pair() != e.pair()));
        let present = self.edges.iter().all(|e| e.weight != 0.0 && sys.weight(e.pair()) == e.weight);
        chained && distinct && present
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// A length-3 trail `{(j,p), (p,q), (q,i)}` supporting joint control of `(j,i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JointTrail {
    pub j: NodeId,
    pub p: NodeId,
    pub q: NodeId,
    pub i: NodeId,
    pub situation: Situation,
}

impl JointTrail {
    /// Tags `j→p→q→i` with its situation, or `None` when the walk is not an
    /// admissible trail shape (self-loop edge, repeated edge, `i = j`, or a
    /// shape outside S1–S3). Edge existence is not checked here.
    pub fn classify(j: NodeId, p: NodeId, q: NodeId, i: NodeId) -> Option<JointTrail> {
        if i == j || p == j || q == p || i == q {
            return None;
        }
        let situation = if p == i && q == j {
            // (j,i),(i,j),(j,i) repeats an edge
            return None;
        } else if p == i {
            Situation::S2
        } else if q == j {
            Situation::S3
        } else {
            Situation::S1
        };
        Some(JointTrail { j, p, q, i, situation })
    }

    pub fn target(&self) -> NodePair {
        NodePair { source: self.j, target: self.i }
    }

    /// The first and last edges of the trail; these receive the vibrations.
    pub fn drivers(&self) -> [NodePair; 2] {
        [NodePair { source: self.j, target: self.p }, NodePair { source: self.q, target: self.i }]
    }

    pub fn edges(&self) -> [NodePair; 3] {
        [
            NodePair { source: self.j, target: self.p },
            NodePair { source: self.p, target: self.q },
            NodePair { source: self.q, target: self.i },
        ]
    }

    pub fn trail(&self, sys: &NetworkSystem) -> Trail {
        Trail {
            edges: self
                .edges()
                .iter()
                .map(|&e| Edge { source: e.source, target: e.target, weight: sys.weight(e) })
                .collect(),
        }
    }

    /// All three edges exist in `sys` and the shape is admissible.
    pub fn is_valid_in(&self, sys: &NetworkSystem) -> bool {
        JointTrail::classify(self.j, self.p, self.q, self.i) == Some(*self)
            && self.edges().iter().all(|&e| sys.has_edge(e))
    }
}

/// Every admissible trail `{(j,p),(p,q),(q,i)}` in the graph, ordered by `(p, q)`.
pub fn trails_of_length3(sys: &NetworkSystem, j: NodeId, i: NodeId) -> Vec<JointTrail> {
    let n = sys.n();
    let a = sys.matrix();
    let mut out = Vec::new();
    if i == j {
        return out;
    }
    for p in 0..n {
        // edge (j,p) has weight a_pj
        if a[(p, j.idx())] == 0.0 {
            continue;
        }
        for q in 0..n {
            if a[(q, p)] == 0.0 || a[(i.idx(), q)] == 0.0 {
                continue;
            }
            if let Some(t) = JointTrail::classify(j, NodeId::from_idx(p), NodeId::from_idx(q), i) {
                out.push(t);
            }
        }
    }
    out
}

/// Whether the existing edge `e` has its opposite edge too (self-loops never do).
pub fn in_two_cycle(sys: &NetworkSystem, e: NodePair) -> Result<bool> {
    if e.source.get() > sys.n() || e.target.get() > sys.n() || !sys.has_edge(e) {
        return Err(Error::EdgeNotFound(e));
    }
    Ok(!e.is_self_loop() && sys.has_edge(e.reversed()))
}

/// Acyclicity of the directed graph. Self-loops count as cycles unless
/// `ignore_self_loops` is set.
pub fn is_dag(sys: &NetworkSystem, ignore_self_loops: bool) -> bool {
    if !ignore_self_loops && (0..sys.n()).any(|k| sys.matrix()[(k, k)] != 0.0) {
        return false;
    }
    let edges: Vec<NodePair> = sys.edges().iter().map(Edge::pair).collect();
    kahn_order(sys.n(), &edges).is_some()
}

/// Acyclicity of an arbitrary edge list on `n` nodes, self-loops ignored.
pub fn is_dag_edges(n: usize, edges: &[NodePair]) -> bool {
    kahn_order(n, edges).is_some()
}

/// Relabeling that puts every off-diagonal edge below the diagonal, i.e.
/// sources get smaller labels than targets.
pub fn topological_order(sys: &NetworkSystem) -> Result<Permutation> {
    let edges: Vec<NodePair> = sys.edges().iter().map(Edge::pair).collect();
    let order = kahn_order(sys.n(), &edges).ok_or(Error::NotADag)?;
    let mut image = vec![0; sys.n()];
    for (rank, &node) in order.iter().enumerate() {
        image[node] = rank;
    }
    Ok(Permutation::from_image(image))
}

// Kahn's algorithm with a smallest-index-first queue so the order is deterministic.
fn kahn_order(n: usize, edges: &[NodePair]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in edges.iter().filter(|e| !e.is_self_loop()) {
        out[e.source.idx()].push(e.target.idx());
        indeg[e.target.idx()] += 1;
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&k| indeg[k] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(k) = ready.pop_first() {
        order.push(k);
        for &t in &out[k] {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                ready.insert(t);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Off-diagonal edges lying on at least one directed cycle, in `(source, target)` order.
pub fn cycle_edges(sys: &NetworkSystem) -> Vec<NodePair> {
    let n = sys.n();
    let reach = reachability(sys);
    let mut out: Vec<NodePair> = sys
        .edges()
        .iter()
        .map(Edge::pair)
        .filter(|e| !e.is_self_loop() && reach[e.target.idx()][e.source.idx()])
        .collect();
    out.sort();
    debug_assert!(out.iter().all(|e| e.source.get() <= n));
    out
}

fn reachability(sys: &NetworkSystem) -> Vec<Vec<bool>> {
    let n = sys.n();
    let a = sys.matrix();
    let mut reach = vec![vec![false; n]; n];
    for (s, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![s];
        row[s] = true;
        while let Some(k) = stack.pop() {
            for t in 0..n {
                if t != k && a[(t, k)] != 0.0 && !row[t] {
                    row[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    reach
}

/// Assignment of touched nodes to weakly connected components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentPartition {
    pub assignment: BTreeMap<NodeId, usize>,
    pub count: usize,
}

impl ComponentPartition {
    pub fn component_of(&self, node: NodeId) -> Option<usize> {
        self.assignment.get(&node).copied()
    }

    /// Splits `edges` by the component of their endpoints, components ordered
    /// by their smallest node.
    pub fn group(&self, edges: &[NodePair]) -> Vec<Vec<NodePair>> {
        let mut groups = vec![Vec::new(); self.count];
        for e in edges {
            groups[self.assignment[&e.source]].push(*e);
        }
        groups
    }
}

/// Weakly connected components of the subgraph formed by `edges`.
pub fn weak_components(edges: &[NodePair], n: usize) -> ComponentPartition {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut touched = vec![false; n];
    for e in edges {
        let (a, b) = (e.source.idx(), e.target.idx());
        touched[a] = true;
        touched[b] = true;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut label: BTreeMap<usize, usize> = BTreeMap::new();
    let mut assignment = BTreeMap::new();
    for k in (0..n).filter(|&k| touched[k]) {
        let root = find(&mut parent, k);
        let next = label.len();
        let c = *label.entry(root).or_insert(next);
        assignment.insert(NodeId::from_idx(k), c);
    }
    ComponentPartition { assignment, count: label.len() }
}

/// No node is both the head of one edge and the tail of another, so the
/// longest trail inside `edges` has at most one edge. Self-loops fail.
pub fn longest_trail_at_most_1(edges: &[NodePair]) -> bool {
    edges.iter().all(|e| !e.is_self_loop() && !edges.iter().any(|f| f.source == e.target))
}
