//! Per-edge modifiability: which edges can be pushed up or down, removed or
//! created by vibrations, and through which driver edges.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphalg::{trails_of_length3, JointTrail, Situation};
use crate::netcore::{NetworkSystem, NodeId, NodePair, SignGraph};

/// Ways an existing edge can be functionally removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovableClass {
    /// Same-signed 2-cycle: a vibration on the edge itself cancels it.
    Direct,
    /// Through a length-3 path with all nodes distinct.
    PathEnabled,
    /// Through a length-3 trail passing a 2-cycle at either end.
    TwoCycleEnabled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeClassification {
    pub edge: NodePair,
    pub weight: f64,
    pub exists: bool,
    pub direct_increasable: bool,
    pub direct_decreasable: bool,
    pub joint_controllable: bool,
    /// All admissible length-3 trails from source to target.
    pub witnesses: Vec<JointTrail>,
    pub removable: BTreeSet<RemovableClass>,
    pub creatable: bool,
}

impl EdgeClassification {
    pub fn directly_modifiable(&self) -> bool {
        self.direct_increasable || self.direct_decreasable
    }

    /// Witnesses that are directed paths (all four nodes distinct).
    pub fn path_witnesses(&self) -> impl Iterator<Item = &JointTrail> {
        self.witnesses.iter().filter(|w| w.situation == Situation::S1)
    }

    /// Direction allowed by direct control: +1, −1, or 0 when not direct.
    pub fn uni_sign(&self) -> i8 {
        match (self.direct_increasable, self.direct_decreasable) {
            (true, false) => 1,
            (false, true) => -1,
            _ => 0,
        }
    }
}

/// Classifies the ordered pair `(j, i)`, `i ≠ j`, edge or not.
pub fn classify_edge(sys: &NetworkSystem, j: NodeId, i: NodeId) -> Result<EdgeClassification> {
    let n = sys.n();
    if j.get() > n || i.get() > n {
        return Err(Error::Validation(format!("pair ({j},{i}) out of range for n = {n}")));
    }
    if i == j {
        return Err(Error::Validation(format!("self-loop ({j},{i}) cannot be classified")));
    }
    let edge = NodePair { source: j, target: i };
    let a_ij = sys.weight(edge);
    let a_ji = sys.weight(edge.reversed());
    let exists = a_ij != 0.0;
    let witnesses = trails_of_length3(sys, j, i);
    let has = |s: Situation| witnesses.iter().any(|w| w.situation == s);

    let mut removable = BTreeSet::new();
    if exists {
        if a_ji != 0.0 && (a_ij > 0.0) == (a_ji > 0.0) {
            removable.insert(RemovableClass::Direct);
        }
        if has(Situation::S1) {
            removable.insert(RemovableClass::PathEnabled);
        }
        if has(Situation::S2) || has(Situation::S3) {
            removable.insert(RemovableClass::TwoCycleEnabled);
        }
    }
    Ok(EdgeClassification {
        edge,
        weight: a_ij,
        exists,
        direct_increasable: exists && a_ji < 0.0,
        direct_decreasable: exists && a_ji > 0.0,
        joint_controllable: exists && !witnesses.is_empty(),
        creatable: !exists && has(Situation::S1),
        witnesses,
        removable,
    })
}

/// Classification of every ordered pair plus the derived edge sets and the
/// unidirectional / bidirectional modifiability graphs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModifiabilityReport {
    pub n: usize,
    /// Directly increasable edges.
    pub e_inc: Vec<NodePair>,
    pub e_dec: Vec<NodePair>,
    /// Jointly controllable edges.
    pub e_ctr: Vec<NodePair>,
    pub e_cre: Vec<NodePair>,
    pub e_rmv_dir: Vec<NodePair>,
    pub e_rmv_pat: Vec<NodePair>,
    pub e_rmv_cyc: Vec<NodePair>,
    pub c_uni: SignGraph,
    #[serde(serialize_with = "ser_rows")]
    pub c_bid: DMatrix<u8>,
    /// Pairs that are edges or creatable, ordered by `(source, target)`.
    pub classifications: Vec<EdgeClassification>,
    #[serde(skip)]
    all: Vec<EdgeClassification>,
}

fn ser_rows<S: serde::Serializer>(m: &DMatrix<u8>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<u8>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

impl ModifiabilityReport {
    /// Classification of the pair `(j, i)`; `None` for self-loops.
    pub fn get(&self, pair: NodePair) -> Option<&EdgeClassification> {
        if pair.is_self_loop() || pair.source.get() > self.n || pair.target.get() > self.n {
            return None;
        }
        let (j, i) = (pair.source.idx(), pair.target.idx());
        let k = j * (self.n - 1) + if i > j { i - 1 } else { i };
        self.all.get(k)
    }

    /// `c^uni` entry for the pair: +1 increasable, −1 decreasable, 0 neither.
    pub fn uni_sign(&self, pair: NodePair) -> i8 {
        if pair.is_self_loop() {
            0
        } else {
            self.c_uni.get(pair)
        }
    }

    /// Whether the pair is an edge of the bidirectionally modifiable graph.
    pub fn in_bid(&self, pair: NodePair) -> bool {
        !pair.is_self_loop() && self.c_bid[pair.pos()] == 1
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Classifies all pairs of distinct nodes.
pub fn build_report(sys: &NetworkSystem) -> ModifiabilityReport {
    let n = sys.n();
    let mut all = Vec::with_capacity(n * n.saturating_sub(1));
    for j in 0..n {
        for i in (0..n).filter(|&i| i != j) {
            all.push(classify_edge(sys, NodeId::from_idx(j), NodeId::from_idx(i)).expect("indices in range"));
        }
    }
    let collect = |f: &dyn Fn(&EdgeClassification) -> bool| -> Vec<NodePair> {
        all.iter().filter(|c| f(c)).map(|c| c.edge).collect()
    };
    let e_inc = collect(&|c| c.direct_increasable);
    let e_dec = collect(&|c| c.direct_decreasable);
    let e_ctr = collect(&|c| c.joint_controllable);
    let e_cre = collect(&|c| c.creatable);
    let e_rmv_dir = collect(&|c| c.removable.contains(&RemovableClass::Direct));
    let e_rmv_pat = collect(&|c| c.removable.contains(&RemovableClass::PathEnabled));
    let e_rmv_cyc = collect(&|c| c.removable.contains(&RemovableClass::TwoCycleEnabled));

    let mut uni = DMatrix::<i8>::zeros(n, n);
    let mut bid = DMatrix::<u8>::zeros(n, n);
    for c in &all {
        uni[c.edge.pos()] = c.uni_sign();
        if c.joint_controllable || c.creatable {
            bid[c.edge.pos()] = 1;
        }
    }
    let classifications = all.iter().filter(|c| c.exists || c.creatable).cloned().collect();
    ModifiabilityReport {
        n,
        e_inc,
        e_dec,
        e_ctr,
        e_cre,
        e_rmv_dir,
        e_rmv_pat,
        e_rmv_cyc,
        c_uni: SignGraph::from_matrix(uni).expect("signs are in range"),
        c_bid: bid,
        classifications,
        all,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverMode {
    Direct,
    Joint,
    Create,
}

impl std::fmt::Display for DriverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DriverMode::Direct => "directly modified",
            DriverMode::Joint => "jointly modified",
            DriverMode::Create => "created",
        })
    }
}

/// Candidate driver sets for the target in the given mode, deduplicated and
/// in witness order.
pub fn driver_sets_for(sys: &NetworkSystem, target: NodePair, mode: DriverMode) -> Result<Vec<Vec<NodePair>>> {
    let c = classify_edge(sys, target.source, target.target)?;
    let not = || Error::NotModifiable { edge: target, action: mode.to_string() };
    let witnesses: Vec<&JointTrail> = match mode {
        DriverMode::Direct => {
            return if c.directly_modifiable() { Ok(vec![vec![target]]) } else { Err(not()) };
        }
        DriverMode::Joint if c.joint_controllable => c.witnesses.iter().collect(),
        DriverMode::Create if c.creatable => c.path_witnesses().collect(),
        _ => return Err(not()),
    };
    let mut out: Vec<Vec<NodePair>> = Vec::new();
    for w in witnesses {
        let mut set = w.drivers().to_vec();
        set.sort();
        set.dedup();
        if !out.contains(&set) {
            out.push(set);
        }
    }
    Ok(out)
}
