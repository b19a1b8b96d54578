//! Network data model: the coupling matrix, its digraph view, sign graphs,
//! node permutations and the JSON file format.
//!
//! Orientation follows one rule throughout the crate: the edge `(j, i)` goes
//! from node `j` to node `i` and carries the weight `a_ij = A[i][j]`, i.e. the
//! rate at which `x_j` drives `ẋ_i`.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(usize);

impl NodeId {
    /// Panics on 0; node numbers start at 1.
    pub fn new(index: usize) -> Self {
        assert!(index >= 1, "node ids are 1-based");
        NodeId(index)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based array index.
    pub fn idx(self) -> usize {
        self.0 - 1
    }

    pub fn from_idx(idx: usize) -> Self {
        NodeId(idx + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An ordered node pair `(source, target)`, whether or not the edge exists.
///
/// Ordering is lexicographic in (source, target). Serialized as `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "(usize, usize)", into = "(usize, usize)")]
pub struct NodePair {
    pub source: NodeId,
    pub target: NodeId,
}

impl NodePair {
    /// `NodePair::new(j, i)` is the edge from `j` to `i` (1-based).
    pub fn new(source: usize, target: usize) -> Self {
        NodePair { source: NodeId::new(source), target: NodeId::new(target) }
    }

    pub fn from_idx(source: usize, target: usize) -> Self {
        NodePair { source: NodeId::from_idx(source), target: NodeId::from_idx(target) }
    }

    /// Matrix position `(row, col)` of the weight, zero-based: `(i-1, j-1)`.
    pub fn pos(self) -> (usize, usize) {
        (self.target.idx(), self.source.idx())
    }

    /// The pair whose weight sits at zero-based matrix position `(row, col)`.
    pub fn at_pos(row: usize, col: usize) -> Self {
        NodePair::from_idx(col, row)
    }

    pub fn reversed(self) -> Self {
        NodePair { source: self.target, target: self.source }
    }

    pub fn is_self_loop(self) -> bool {
        self.source == self.target
    }

    /// Row-major order of the matrix position, `(i, j)` lexicographic.
    pub fn row_major_key(self) -> (usize, usize) {
        self.pos()
    }
}

impl TryFrom<(usize, usize)> for NodePair {
    type Error = String;

    fn try_from((s, t): (usize, usize)) -> std::result::Result<Self, String> {
        if s == 0 || t == 0 {
            return Err(format!("node ids are 1-based, got ({s},{t})"));
        }
        Ok(NodePair::new(s, t))
    }
}

impl From<NodePair> for (usize, usize) {
    fn from(p: NodePair) -> Self {
        (p.source.get(), p.target.get())
    }
}

impl fmt::Display for NodePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.source, self.target)
    }
}

/// An existing edge with its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub weight: f64,
}

impl Edge {
    pub fn pair(&self) -> NodePair {
        NodePair { source: self.source, target: self.target }
    }
}

/// The linear network `ẋ = A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSystem {
    a: DMatrix<f64>,
}

impl NetworkSystem {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::Validation(format!(
                "coupling matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if let Some(v) = a.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite entry {v}")));
        }
        Ok(NetworkSystem { a })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("rows must all have length n".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n, n))
    }

    /// Builds `A` from weighted edges; duplicates, zero weights and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("n must be at least 1".into()));
        }
        let mut a = DMatrix::zeros(n, n);
        let mut seen = vec![false; n * n];
        for e in edges {
            let (s, t) = (e.source.get(), e.target.get());
            if s == 0 || t == 0 || s > n || t > n {
                return Err(Error::Validation(format!("edge ({s},{t}) is out of range for n = {n}")));
            }
            if e.weight == 0.0 {
                return Err(Error::Validation(format!("edge ({s},{t}) has zero weight")));
            }
            let (r, c) = e.pair().pos();
            if std::mem::replace(&mut seen[r * n + c], true) {
                return Err(Error::Validation(format!("duplicate edge ({s},{t})")));
            }
            a[(r, c)] = e.weight;
        }
        Self::new(a)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    /// Weight of `pair` (zero when the edge is absent).
    pub fn weight(&self, pair: NodePair) -> f64 {
        self.a[pair.pos()]
    }

    pub fn has_edge(&self, pair: NodePair) -> bool {
        pair.source.get() <= self.n() && pair.target.get() <= self.n() && self.weight(pair) != 0.0
    }

    /// Nonzero entries as edges, row-major over `(i, j)`.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.a[(i, j)];
                if w != 0.0 {
                    out.push(Edge { source: NodeId::from_idx(j), target: NodeId::from_idx(i), weight: w });
                }
            }
        }
        out
    }

    pub fn sign_graph(&self) -> SignGraph {
        SignGraph::of(&self.a)
    }

    /// Relabels nodes: node `k` becomes node `p(k)`, so `A' = P A P⁻¹`.
    pub fn permute(&self, p: &Permutation) -> Result<NetworkSystem> {
        if p.len() != self.n() {
            return Err(Error::InvalidPermutation(format!(
                "permutation has length {}, network has {} nodes",
                p.len(),
                self.n()
            )));
        }
        Ok(NetworkSystem { a: p.apply(&self.a) })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(s)?;
        let edges: Vec<Edge> = file
            .edges
            .iter()
            .map(|e| {
                if e.from == 0 || e.to == 0 {
                    return Err(Error::Validation(format!("edge ({},{}) uses node 0; ids are 1-based", e.from, e.to)));
                }
                Ok(Edge { source: NodeId(e.from), target: NodeId(e.to), weight: e.weight })
            })
            .collect::<Result<_>>()?;
        Self::from_edges(file.n, &edges)
    }

    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            n: self.n(),
            edges: self
                .edges()
                .into_iter()
                .map(|e| EdgeRecord { from: e.source.get(), to: e.target.get(), weight: e.weight })
                .collect(),
        };
        to_precise_json(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// Reads a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSystem> {
    NetworkSystem::load(path)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    n: usize,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    from: usize,
    to: usize,
    weight: f64,
}

/// Pretty JSON whose floats always carry 17 significant digits.
pub(crate) fn to_precise_json<T: Serialize>(value: &T) -> String {
    struct Precise(serde_json::ser::PrettyFormatter<'static>);

    impl serde_json::ser::Formatter for Precise {
        fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
            write!(w, "{v:.16e}")
        }
        fn begin_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
            self.0.begin_array(w)
        }
        fn end_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
            self.0.end_array(w)
        }
        fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
            self.0.begin_array_value(w, first)
        }
        fn end_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
            self.0.end_array_value(w)
        }
        fn begin_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
            self.0.begin_object(w)
        }
        fn end_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
            self.0.end_object(w)
        }
        fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
            self.0.begin_object_key(w, first)
        }
        fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
            self.0.begin_object_value(w)
        }
        fn end_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
            self.0.end_object_value(w)
        }
    }

    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Entrywise sign pattern of a real matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignGraph {
    s: DMatrix<i8>,
}

impl SignGraph {
    pub fn of(m: &DMatrix<f64>) -> Self {
        SignGraph { s: m.map(|v| sign(&v)) }
    }

    pub fn from_matrix(s: DMatrix<i8>) -> Result<Self> {
        if s.iter().any(|v| !(-1..=1).contains(v)) {
            return Err(Error::Validation("sign matrix entries must be -1, 0 or +1".into()));
        }
        if s.nrows() != s.ncols() {
            return Err(Error::Validation("sign matrix must be square".into()));
        }
        Ok(SignGraph { s })
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<i8> {
        &self.s
    }

    /// Sign of the weight on `pair`.
    pub fn get(&self, pair: NodePair) -> i8 {
        self.s[pair.pos()]
    }

    /// Every nonzero sign of `self` also appears, with the same sign, in `other`.
    pub fn is_subgraph_of(&self, other: &SignGraph) -> bool {
        self.n() == other.n() && self.s.iter().zip(other.s.iter()).all(|(a, b)| *a == 0 || a == b)
    }

    /// Rows as nested vectors, for JSON output.
    pub fn to_rows(&self) -> Vec<Vec<i8>> {
        (0..self.n()).map(|i| self.s.row(i).iter().copied().collect()).collect()
    }
}

impl Serialize for SignGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

fn sign(v: &f64) -> i8 {
    if *v > 0.0 {
        1
    } else if *v < 0.0 {
        -1
    } else {
        0
    }
}

/// A relabeling of the nodes. `image[k]` is the new zero-based index of old
/// node `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    /// `ordering[k-1]` is the new (1-based) label of node `k`.
    pub fn new(ordering: &[usize]) -> Result<Self> {
        let n = ordering.len();
        let mut hit = vec![false; n];
        let mut image = Vec::with_capacity(n);
        for &v in ordering {
            if v == 0 || v > n || std::mem::replace(&mut hit[v - 1], true) {
                return Err(Error::InvalidPermutation(format!("{ordering:?} is not a bijection on 1..={n}")));
            }
            image.push(v - 1);
        }
        Ok(Permutation { image })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { image: (0..n).collect() }
    }

    /// Transposition of nodes `a` and `b` (1-based).
    pub fn swap(n: usize, a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 || a > n || b > n {
            return Err(Error::InvalidPermutation(format!("swap({a},{b}) out of range for n = {n}")));
        }
        let mut image: Vec<usize> = (0..n).collect();
        image.swap(a - 1, b - 1);
        Ok(Permutation { image })
    }

    pub(crate) fn from_image(image: Vec<usize>) -> Self {
        Permutation { image }
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    /// New label of `node`.
    pub fn map(&self, node: NodeId) -> NodeId {
        NodeId::from_idx(self.image[node.idx()])
    }

    /// 1-based ordering, the inverse of [`Permutation::new`].
    pub fn ordering(&self) -> Vec<usize> {
        self.image.iter().map(|v| v + 1).collect()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (k, &v) in self.image.iter().enumerate() {
            inv[v] = k;
        }
        Permutation { image: inv }
    }

    /// `P M P⁻¹`: entry `(i, j)` moves to `(p(i), p(j))`.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.len();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(self.image[i], self.image[j])] = m[(i, j)];
            }
        }
        out
    }
}
