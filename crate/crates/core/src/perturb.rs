//! Which weight changes `Δ` vibrations can realize, how to split them into
//! independently driven clusters, which edge sets can be removed, and a
//! search for stabilizing changes.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::avg::averaged_closed_form;
use crate::error::{Error, Result};
use crate::graphalg::{cycle_edges, is_dag_edges, longest_trail_at_most_1, trails_of_length3, weak_components, JointTrail, Situation};
use crate::modanalysis::{build_report, ModifiabilityReport};
use crate::netcore::{NetworkSystem, NodeId, NodePair};
use crate::numerics::spectral_abscissa;
use crate::synth::{compose_plan, VibrationPlan};

/// Desired change `δ_ij` of every averaged weight `ā_ij`, off the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMatrix {
    delta: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbationRecord {
    i: usize,
    j: usize,
    delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbationFile {
    entries: Vec<PerturbationRecord>,
}

impl PerturbationMatrix {
    pub fn new(delta: DMatrix<f64>) -> Result<Self> {
        if !delta.is_square() || delta.nrows() == 0 {
            return Err(Error::Validation(format!("perturbation must be square and non-empty, got {:?}", delta.shape())));
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("perturbation has non-finite entries".into()));
        }
        if let Some(k) = (0..delta.nrows()).find(|&k| delta[(k, k)] != 0.0) {
            return Err(Error::Validation(format!("perturbation has a diagonal entry at node {}", k + 1)));
        }
        Ok(PerturbationMatrix { delta })
    }

    pub fn zeros(n: usize) -> Self {
        PerturbationMatrix { delta: DMatrix::zeros(n, n) }
    }

    /// Builds `Δ` from `(edge, δ)` pairs; repeated edges are rejected.
    pub fn from_entries(n: usize, entries: &[(NodePair, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("perturbation needs at least one node".into()));
        }
        let mut m = Self::zeros(n);
        let mut seen = BTreeSet::new();
        for &(e, d) in entries {
            if e.source.get() > n || e.target.get() > n {
                return Err(Error::Validation(format!("edge {e} out of range for n = {n}")));
            }
            if e.is_self_loop() {
                return Err(Error::Validation(format!("self-loop {e} cannot be perturbed")));
            }
            if !d.is_finite() {
                return Err(Error::Validation(format!("non-finite change on {e}")));
            }
            if !seen.insert(e) {
                return Err(Error::Validation(format!("edge {e} listed twice")));
            }
            m.delta[e.pos()] = d;
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.delta.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn get(&self, edge: NodePair) -> f64 {
        self.delta[edge.pos()]
    }

    /// Copy with `δ` on `edge` replaced.
    pub fn with(&self, edge: NodePair, delta: f64) -> Self {
        let mut m = self.clone();
        m.delta[edge.pos()] = delta;
        m
    }

    /// Nonzero entries in `(source, target)` order: the edges of `𝒢_Δ`.
    pub fn support(&self) -> Vec<TargetChange> {
        let n = self.n();
        let mut out = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let d = self.delta[(i, j)];
                if d != 0.0 {
                    out.push(TargetChange { edge: NodePair::from_idx(j, i), delta: d });
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.delta.iter().all(|&v| v == 0.0)
    }

    fn to_file(&self) -> PerturbationFile {
        let n = self.n();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.delta[(i, j)] != 0.0 {
                    entries.push(PerturbationRecord { i: i + 1, j: j + 1, delta: self.delta[(i, j)] });
                }
            }
        }
        PerturbationFile { entries }
    }

    fn from_file(f: PerturbationFile, n: usize) -> Result<Self> {
        let mut pairs = Vec::with_capacity(f.entries.len());
        for r in f.entries {
            if r.i == 0 || r.j == 0 {
                return Err(Error::Validation("node ids are 1-based".into()));
            }
            pairs.push((NodePair::new(r.j, r.i), r.delta));
        }
        Self::from_entries(n, &pairs)
    }

    /// Parses `{"entries": [{"i", "j", "delta"}]}` for a network of `n` nodes.
    pub fn from_json_str(s: &str, n: usize) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?, n)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("perturbation serializes")
    }

    pub fn load(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, n)
    }
}

impl Serialize for PerturbationMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

/// Requested change `delta` of the averaged weight of `edge`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetChange {
    pub edge: NodePair,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    SingleDirect,
    SingleJoint,
    MultiDirect,
    MultiJointFanIn,
    MultiJointFanOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyClass {
    /// All entries of the cluster vibrate at one frequency.
    Shared,
    /// Each entry gets its own frequency.
    PerEdgeIncommensurable,
}

/// How a removable edge set is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalCase {
    /// Single edge, same-signed reverse edge.
    Direct,
    /// Single edge, through a directed path of length 3.
    Path,
    /// Single edge, through a length-3 trail passing a 2-cycle.
    TwoCycle,
    /// Several directly removable edges, no trail longer than 1.
    AllDirect,
    /// A fan whose only 2-cycle edge is itself removed.
    InnerAnchor,
    /// A fan without 2-cycle edges, steered by a kept 2-cycle edge.
    OuterAnchor,
}

/// A group of target changes realized by one vibration design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub kind: ClusterKind,
    pub targets: Vec<TargetChange>,
    /// Edges that receive vibrations.
    pub drivers: Vec<NodePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<NodePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<JointTrail>,
    pub frequency_class: FrequencyClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removal: Option<RemovalCase>,
    /// Overrides the free amplitude of a joint design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_amplitude: Option<f64>,
}

impl Cluster {
    fn base(kind: ClusterKind, targets: Vec<TargetChange>, drivers: Vec<NodePair>, class: FrequencyClass) -> Self {
        Cluster {
            kind,
            targets,
            drivers,
            anchor: None,
            witness: None,
            frequency_class: class,
            removal: None,
            lead_amplitude: None,
        }
    }

    pub fn single_direct(t: TargetChange) -> Self {
        Self::base(ClusterKind::SingleDirect, vec![t], vec![t.edge], FrequencyClass::Shared)
    }

    pub fn single_joint(t: TargetChange, witness: JointTrail) -> Self {
        let mut drivers = witness.drivers().to_vec();
        drivers.sort();
        drivers.dedup();
        Cluster { witness: Some(witness), ..Self::base(ClusterKind::SingleJoint, vec![t], drivers, FrequencyClass::Shared) }
    }

    pub fn multi_direct(targets: Vec<TargetChange>) -> Self {
        let drivers = targets.iter().map(|t| t.edge).collect();
        Self::base(ClusterKind::MultiDirect, targets, drivers, FrequencyClass::PerEdgeIncommensurable)
    }

    /// Fan around `anchor`; the kind follows from whether the targets share
    /// the anchor's source or its target.
    pub fn multi_joint(targets: Vec<TargetChange>, anchor: NodePair) -> Self {
        let kind = if targets.iter().all(|t| t.edge.source == anchor.source) {
            ClusterKind::MultiJointFanOut
        } else {
            ClusterKind::MultiJointFanIn
        };
        let drivers = targets.iter().map(|t| t.edge).collect();
        Cluster { anchor: Some(anchor), ..Self::base(kind, targets, drivers, FrequencyClass::Shared) }
    }

    fn removing(mut self, case: RemovalCase) -> Self {
        self.removal = Some(case);
        self
    }

    pub fn min_target(&self) -> Option<NodePair> {
        self.targets.iter().map(|t| t.edge).min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    AlreadyStable,
    Structural,
    Decomposition,
    LineSearch,
    Greedy,
}

/// A perturbation, its clusters and the spectral abscissa of the averaged
/// network they produce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationPlan {
    pub n: usize,
    pub delta: PerturbationMatrix,
    pub clusters: Vec<Cluster>,
    pub certificate: f64,
    pub method: SearchMethod,
    /// Edges the plan removes (structural plans only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<NodePair>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    n: usize,
    delta: PerturbationFile,
    clusters: Vec<Cluster>,
    certificate: f64,
    method: SearchMethod,
    #[serde(default)]
    removed: Vec<NodePair>,
}

impl StabilizationPlan {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawPlan = serde_json::from_str(s)?;
        Ok(StabilizationPlan {
            n: raw.n,
            delta: PerturbationMatrix::from_file(raw.delta, raw.n)?,
            clusters: raw.clusters,
            certificate: raw.certificate,
            method: raw.method,
            removed: raw.removed,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Vibrations realizing the clusters.
    pub fn vibrations(&self, sys: &NetworkSystem, epsilon: f64) -> Result<VibrationPlan> {
        compose_plan(sys, &self.clusters, epsilon)
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn unrealizable(msg: impl Into<String>) -> Error {
    Error::Unrealizable(msg.into())
}

// ---------------------------------------------------------------------------
// per-cluster conditions

/// All ways to realize one target change on its own, direct before joint.
fn single_candidates(sys: &NetworkSystem, r: &ModifiabilityReport, t: TargetChange) -> std::result::Result<Vec<Cluster>, String> {
    let e = t.edge;
    let uni = r.uni_sign(e);
    if uni != 0 {
        return if uni == sign(t.delta) {
            Ok(vec![Cluster::single_direct(t)])
        } else {
            Err(format!("{e} can only be {} directly", if uni > 0 { "increased" } else { "decreased" }))
        };
    }
    if !r.in_bid(e) {
        return Err(format!("{e} is neither directly nor jointly modifiable"));
    }
    if sys.has_edge(e.reversed()) {
        return Err(format!("{e} has a reverse edge, so joint control would create side effects"));
    }
    let mut out: Vec<Cluster> = Vec::new();
    for w in trails_of_length3(sys, e.source, e.target) {
        if w.drivers().iter().all(|&d| r.uni_sign(d) == 0) {
            let c = Cluster::single_joint(t, w);
            if !out.iter().any(|o| o.drivers == c.drivers) {
                out.push(c);
            }
        }
    }
    if out.is_empty() {
        return Err(format!("every length-3 trail to {e} has a driver in a 2-cycle"));
    }
    Ok(out)
}

fn multi_direct_of(r: &ModifiabilityReport, targets: &[TargetChange]) -> std::result::Result<Cluster, String> {
    if targets.len() < 2 {
        return Err("a multi-edge cluster needs at least two targets".into());
    }
    for t in targets {
        let uni = r.uni_sign(t.edge);
        if uni == 0 {
            return Err(format!("{} is not directly modifiable", t.edge));
        }
        if uni != sign(t.delta) {
            return Err(format!("{} cannot change in that direction", t.edge));
        }
    }
    let edges: Vec<NodePair> = targets.iter().map(|t| t.edge).collect();
    if !longest_trail_at_most_1(&edges) {
        return Err("the target edges form a trail longer than 1".into());
    }
    Ok(Cluster::multi_direct(targets.to_vec()))
}

fn multi_joint_of(sys: &NetworkSystem, r: &ModifiabilityReport, targets: &[TargetChange]) -> std::result::Result<Cluster, String> {
    if targets.len() < 2 {
        return Err("a multi-edge cluster needs at least two targets".into());
    }
    if let Some(t) = targets.iter().find(|t| !sys.has_edge(t.edge)) {
        return Err(format!("{} is not an edge", t.edge));
    }
    let cyc: Vec<&TargetChange> = targets.iter().filter(|t| sys.has_edge(t.edge.reversed())).collect();
    let anchor = match cyc.as_slice() {
        [a] => **a,
        [] => return Err("no target edge lies in a 2-cycle".into()),
        _ => return Err(format!("{} target edges lie in 2-cycles, exactly one is allowed", cyc.len())),
    };
    if r.uni_sign(anchor.edge) != sign(anchor.delta) {
        return Err(format!("anchor {} cannot change in that direction", anchor.edge));
    }
    let fan_out = targets.iter().all(|t| t.edge.source == anchor.edge.source);
    let fan_in = targets.iter().all(|t| t.edge.target == anchor.edge.target);
    if !fan_out && !fan_in {
        return Err(format!("targets neither all leave {} nor all enter {}", anchor.edge.source, anchor.edge.target));
    }
    Ok(Cluster::multi_joint(targets.to_vec(), anchor.edge))
}

/// A single nonzero entry realizable on its own: directly when the edge is
/// in a 2-cycle and the sign fits, jointly when the edge has no reverse and
/// a length-3 path with drivers outside every 2-cycle exists.
///
/// `Ok(None)` for `Δ = 0`.
pub fn check_single(sys: &NetworkSystem, delta: &PerturbationMatrix) -> Result<Option<Cluster>> {
    check_dims(sys, delta)?;
    let support = delta.support();
    match support.as_slice() {
        [] => Ok(None),
        [t] => {
            let r = build_report(sys);
            let mut c = single_candidates(sys, &r, *t).map_err(unrealizable)?;
            Ok(Some(c.swap_remove(0)))
        }
        other => Err(Error::NotSingleEdge(other.len())),
    }
}

/// Like [`check_single`] but with the joint driver pair fixed by `witness`.
pub fn check_single_joint(sys: &NetworkSystem, delta: &PerturbationMatrix, witness: &JointTrail) -> Result<Cluster> {
    check_dims(sys, delta)?;
    let support = delta.support();
    let [t] = support.as_slice() else {
        return Err(Error::NotSingleEdge(support.len()));
    };
    if witness.target() != t.edge || !witness.is_valid_in(sys) {
        return Err(Error::InvalidWitness(format!("{:?} is not a trail to {}", witness.edges(), t.edge)));
    }
    let r = build_report(sys);
    if !r.in_bid(t.edge) {
        return Err(unrealizable(format!("{} is not jointly modifiable", t.edge)));
    }
    if sys.has_edge(t.edge.reversed()) {
        return Err(unrealizable(format!("{} has a reverse edge, so joint control would create side effects", t.edge)));
    }
    if let Some(d) = witness.drivers().into_iter().find(|&d| r.uni_sign(d) != 0) {
        return Err(unrealizable(format!("driver {d} lies in a 2-cycle")));
    }
    Ok(Cluster::single_joint(*t, *witness))
}

/// Several direct changes at separate frequencies.
pub fn check_multi_direct(sys: &NetworkSystem, delta: &PerturbationMatrix) -> Result<Cluster> {
    check_dims(sys, delta)?;
    multi_direct_of(&build_report(sys), &delta.support()).map_err(unrealizable)
}

/// A fan of changes sharing one frequency, steered by its single 2-cycle edge.
pub fn check_multi_joint(sys: &NetworkSystem, delta: &PerturbationMatrix) -> Result<Cluster> {
    check_dims(sys, delta)?;
    multi_joint_of(sys, &build_report(sys), &delta.support()).map_err(unrealizable)
}

fn check_dims(sys: &NetworkSystem, delta: &PerturbationMatrix) -> Result<()> {
    if sys.n() != delta.n() {
        return Err(Error::Validation(format!("network has {} nodes, perturbation {}", sys.n(), delta.n())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// decomposition

/// Largest support searched exhaustively.
const EXHAUSTIVE_SUPPORT: usize = 10;

/// Splits `Δ` into clusters with disjoint driver sets, using as few clusters
/// as possible for small supports and a largest-fan-first heuristic above.
///
/// The result is re-checked end to end: the synthesized vibrations must
/// average to exactly `A + Δ`.
pub fn decompose(sys: &NetworkSystem, delta: &PerturbationMatrix) -> Result<Vec<Cluster>> {
    check_dims(sys, delta)?;
    let support = delta.support();
    if support.is_empty() {
        return Ok(Vec::new());
    }
    let r = build_report(sys);
    let target = sys.matrix() + delta.matrix();
    let accept = |cs: &[Cluster]| realizes(sys, cs, &target);
    if support.len() <= EXHAUSTIVE_SUPPORT {
        decompose_exhaustive(sys, &r, &support, &accept)
    } else {
        let cs = decompose_greedy(sys, &r, &support)?;
        if accept(&cs) {
            Ok(cs)
        } else {
            Err(unrealizable("the greedy decomposition does not average to A + Δ"))
        }
    }
}

/// The clusters' joint vibrations are nilpotent and average to `target`.
fn realizes(sys: &NetworkSystem, clusters: &[Cluster], target: &DMatrix<f64>) -> bool {
    let Ok(plan) = compose_plan(sys, clusters, 1.0) else {
        return false;
    };
    let Ok(avg) = averaged_closed_form(sys, &plan) else {
        return false;
    };
    let scale = 1f64.max(target.amax()).max(sys.matrix().amax());
    (avg.a_bar - target).amax() <= 1e-9 * scale
}

fn decompose_exhaustive(
    sys: &NetworkSystem,
    r: &ModifiabilityReport,
    support: &[TargetChange],
    accept: &dyn Fn(&[Cluster]) -> bool,
) -> Result<Vec<Cluster>> {
    let m = support.len();
    let full = (1usize << m) - 1;
    let mut cands: Vec<Vec<Cluster>> = vec![Vec::new(); full + 1];
    let mut single_reason: Vec<String> = vec![String::new(); m];
    for mask in 1..=full {
        let ts: Vec<TargetChange> = (0..m).filter(|b| mask >> b & 1 == 1).map(|b| support[b]).collect();
        if ts.len() == 1 {
            match single_candidates(sys, r, ts[0]) {
                Ok(c) => cands[mask] = c,
                Err(why) => single_reason[mask.trailing_zeros() as usize] = why,
            }
        } else {
            cands[mask].extend(multi_direct_of(r, &ts));
            cands[mask].extend(multi_joint_of(sys, r, &ts));
        }
    }
    for b in 0..m {
        if !(1..=full).any(|mask| mask >> b & 1 == 1 && !cands[mask].is_empty()) {
            return Err(unrealizable(format!("{}: {}", support[b].edge, single_reason[b])));
        }
    }

    fn dfs(
        cands: &[Vec<Cluster>],
        full: usize,
        covered: usize,
        used: &mut BTreeSet<NodePair>,
        chosen: &mut Vec<Cluster>,
        depth: usize,
        accept: &dyn Fn(&[Cluster]) -> bool,
    ) -> bool {
        if covered == full {
            return accept(chosen);
        }
        if depth == 0 {
            return false;
        }
        let low = (!covered & full).trailing_zeros();
        let free = !covered & full;
        // submasks of the uncovered bits that contain the lowest one
        let mut sub = free;
        let mut masks = Vec::new();
        while sub > 0 {
            if sub >> low & 1 == 1 && !cands[sub].is_empty() {
                masks.push(sub);
            }
            sub = (sub - 1) & free;
        }
        masks.sort_by_key(|&s| std::cmp::Reverse(s.count_ones()));
        for s in masks {
            for c in &cands[s] {
                if c.drivers.iter().any(|d| used.contains(d)) {
                    continue;
                }
                used.extend(c.drivers.iter().copied());
                chosen.push(c.clone());
                if dfs(cands, full, covered | s, used, chosen, depth - 1, accept) {
                    return true;
                }
                chosen.pop();
                for d in &c.drivers {
                    used.remove(d);
                }
            }
        }
        false
    }

    for depth in 1..=m {
        let mut chosen = Vec::new();
        if dfs(&cands, full, 0, &mut BTreeSet::new(), &mut chosen, depth, accept) {
            return Ok(chosen);
        }
    }
    Err(unrealizable("no decomposition into clusters with disjoint drivers averages to A + Δ"))
}

fn decompose_greedy(sys: &NetworkSystem, r: &ModifiabilityReport, support: &[TargetChange]) -> Result<Vec<Cluster>> {
    let mut left: Vec<TargetChange> = support.to_vec();
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut fans: Vec<Vec<TargetChange>> = Vec::new();
        for v in 1..=sys.n() {
            let v = NodeId::new(v);
            for f in [
                left.iter().filter(|t| t.edge.source == v).copied().collect::<Vec<_>>(),
                left.iter().filter(|t| t.edge.target == v).copied().collect(),
            ] {
                if f.len() >= 2 {
                    fans.push(f);
                }
            }
        }
        fans.sort_by_key(|f| (std::cmp::Reverse(f.len()), f[0].edge));
        let free = |c: &Cluster, used: &BTreeSet<NodePair>| c.drivers.iter().all(|d| !used.contains(d));
        let picked = fans
            .iter()
            .flat_map(|f| [multi_joint_of(sys, r, f).ok(), multi_direct_of(r, f).ok()])
            .flatten()
            .find(|c| free(c, &used));
        let c = match picked {
            Some(c) => c,
            None => {
                let t = left[0];
                single_candidates(sys, r, t)
                    .map_err(|why| unrealizable(format!("{}: {why}", t.edge)))?
                    .into_iter()
                    .find(|c| free(c, &used))
                    .ok_or_else(|| unrealizable(format!("{}: every driver set is already in use", t.edge)))?
            }
        };
        used.extend(c.drivers.iter().copied());
        left.retain(|t| !c.targets.iter().any(|u| u.edge == t.edge));
        out.push(c);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// removable edge sets

/// Cluster that cancels every edge of `set`. Weights of other edges may
/// change, but the averaged graph must be exactly the original graph minus
/// `set`.
pub fn check_removable_set(sys: &NetworkSystem, set: &[NodePair]) -> Result<Cluster> {
    let mut e1 = set.to_vec();
    e1.sort();
    e1.dedup();
    if e1.is_empty() {
        return Err(Error::Validation("nothing to remove".into()));
    }
    for &e in &e1 {
        if e.source.get() > sys.n() || e.target.get() > sys.n() || !sys.has_edge(e) {
            return Err(Error::EdgeNotFound(e));
        }
        if e.is_self_loop() {
            return Err(Error::Validation(format!("self-loop {e} cannot be removed")));
        }
    }
    let r = build_report(sys);
    let mut last = String::from("no removal pattern applies");
    for c in removal_candidates(sys, &r, &e1) {
        match removal_effect(sys, &c, &e1) {
            Ok(()) => return Ok(c),
            Err(why) => last = why,
        }
    }
    Err(unrealizable(last))
}

fn removal_candidates(sys: &NetworkSystem, r: &ModifiabilityReport, e1: &[NodePair]) -> Vec<Cluster> {
    let cancel = |e: NodePair| TargetChange { edge: e, delta: -sys.weight(e) };
    let targets: Vec<TargetChange> = e1.iter().map(|&e| cancel(e)).collect();
    let direct = |e: NodePair| r.get(e).is_some_and(|c| c.removable.contains(&crate::modanalysis::RemovableClass::Direct));
    let in_cycle = |e: NodePair| sys.has_edge(e.reversed());
    let mut out = Vec::new();
    if let [e] = e1 {
        let t = targets[0];
        if direct(*e) {
            out.push(Cluster::single_direct(t).removing(RemovalCase::Direct));
        }
        for w in trails_of_length3(sys, e.source, e.target) {
            let case = if w.situation == Situation::S1 { RemovalCase::Path } else { RemovalCase::TwoCycle };
            out.push(Cluster::single_joint(t, w).removing(case));
        }
        return out;
    }
    if e1.iter().all(|&e| direct(e)) && longest_trail_at_most_1(e1) {
        out.push(Cluster::multi_direct(targets.clone()).removing(RemovalCase::AllDirect));
    }
    let cyc: Vec<NodePair> = e1.iter().copied().filter(|&e| in_cycle(e)).collect();
    let j0 = e1[0].source;
    let i0 = e1[0].target;
    let fan_out = e1.iter().all(|e| e.source == j0);
    let fan_in = e1.iter().all(|e| e.target == i0);
    if let [a] = cyc.as_slice() {
        if direct(*a) && (fan_out || fan_in) {
            out.push(Cluster::multi_joint(targets.clone(), *a).removing(RemovalCase::InnerAnchor));
        }
    }
    if cyc.is_empty() && (fan_out || fan_in) {
        let n = sys.n();
        let anchors: Vec<NodePair> = (1..=n)
            .map(NodeId::new)
            .map(|v| if fan_out { NodePair { source: j0, target: v } } else { NodePair { source: v, target: i0 } })
            .filter(|&a| !a.is_self_loop() && sys.has_edge(a) && in_cycle(a) && !e1.contains(&a))
            .collect();
        for a in anchors {
            let nudge = TargetChange { edge: a, delta: f64::from(r.uni_sign(a)) * 0.5 * sys.weight(a).abs() };
            let mut ts = targets.clone();
            ts.push(nudge);
            ts.sort_by_key(|t| t.edge);
            out.push(Cluster::multi_joint(ts, a).removing(RemovalCase::OuterAnchor));
        }
    }
    out
}

/// Averaged graph of the cluster, compared with `E ∖ removed`.
fn removal_effect(sys: &NetworkSystem, c: &Cluster, removed: &[NodePair]) -> std::result::Result<(), String> {
    let plan = compose_plan(sys, std::slice::from_ref(c), 1.0).map_err(|e| e.to_string())?;
    let avg = averaged_closed_form(sys, &plan).map_err(|e| e.to_string())?;
    support_matches(sys, &avg.a_bar, removed)
}

fn support_matches(sys: &NetworkSystem, a_bar: &DMatrix<f64>, removed: &[NodePair]) -> std::result::Result<(), String> {
    let a = sys.matrix();
    let tol = 1e-9 * 1f64.max(a.amax());
    let n = sys.n();
    for i in 0..n {
        for j in 0..n {
            let e = NodePair::at_pos(i, j);
            let want = a[(i, j)] != 0.0 && !removed.contains(&e);
            let got = a_bar[(i, j)].abs() > tol;
            if want && !got {
                return Err(format!("{e} would vanish"));
            }
            if !want && got {
                return Err(if a[(i, j)] == 0.0 { format!("{e} would be created") } else { format!("{e} would survive") });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// stabilization

/// Largest number of cycle edges for which every feedback edge set is tried.
const EXHAUSTIVE_CYCLE_EDGES: usize = 12;

fn assumption_holds(sys: &NetworkSystem) -> Result<()> {
    let a = sys.matrix();
    match (0..sys.n()).find(|&k| a[(k, k)] >= 0.0) {
        Some(k) => Err(Error::AssumptionViolated { node: k + 1, value: a[(k, k)] }),
        None => Ok(()),
    }
}

struct Candidate {
    removed: Vec<NodePair>,
    clusters: Vec<Cluster>,
    energy: f64,
    certificate: f64,
}

/// Removes a feedback edge set through removable clusters so that the
/// averaged graph is a DAG; with negative self-loops everywhere the averaged
/// network is then stable.
///
/// Ties between feedback sets of equal size go to fewer clusters, then lower
/// vibration energy `Σ (u/β)²`, then earlier matrix positions.
pub fn structural_stabilizable(sys: &NetworkSystem) -> Result<StabilizationPlan> {
    assumption_holds(sys)?;
    let n = sys.n();
    let cycles = cycle_edges(sys);
    if cycles.is_empty() {
        return Ok(StabilizationPlan {
            n,
            delta: PerturbationMatrix::zeros(n),
            clusters: Vec::new(),
            certificate: spectral_abscissa(sys.matrix())?,
            method: SearchMethod::Structural,
            removed: Vec::new(),
        });
    }
    let all: Vec<NodePair> = sys.edges().iter().map(|e| e.pair()).filter(|e| !e.is_self_loop()).collect();
    let r = build_report(sys);
    let mut memo: HashMap<Vec<NodePair>, Option<Vec<Cluster>>> = HashMap::new();

    let best = if cycles.len() <= EXHAUSTIVE_CYCLE_EDGES {
        let m = cycles.len();
        let mut found = None;
        for k in 1..=m {
            let mut best: Option<Candidate> = None;
            for mask in (1usize..1 << m).filter(|s| s.count_ones() as usize == k) {
                let f: Vec<NodePair> = (0..m).filter(|b| mask >> b & 1 == 1).map(|b| cycles[b]).collect();
                let rest: Vec<NodePair> = all.iter().copied().filter(|e| !f.contains(e)).collect();
                if !is_dag_edges(n, &rest) {
                    continue;
                }
                if let Some(c) = removal_plan(sys, &r, &f, &mut memo) {
                    if best.as_ref().is_none_or(|b| better(&c, b)) {
                        best = Some(c);
                    }
                }
            }
            if best.is_some() {
                found = best;
                break;
            }
        }
        found
    } else {
        let f = greedy_feedback(sys, &all);
        removal_plan(sys, &r, &f, &mut memo)
    };
    let best = best.ok_or_else(|| Error::NotFound("no removable feedback edge set".into()))?;
    let mut delta = PerturbationMatrix::zeros(n);
    for t in best.clusters.iter().flat_map(|c| &c.targets) {
        delta.delta[t.edge.pos()] = t.delta;
    }
    Ok(StabilizationPlan {
        n,
        delta,
        clusters: best.clusters,
        certificate: best.certificate,
        method: SearchMethod::Structural,
        removed: best.removed,
    })
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    let key = |c: &Candidate| {
        let mut pos: Vec<_> = c.removed.iter().map(|e| e.row_major_key()).collect();
        pos.sort();
        (c.removed.len(), c.clusters.len(), pos)
    };
    let (ka, kb) = (key(a), key(b));
    if (ka.0, ka.1) != (kb.0, kb.1) {
        return (ka.0, ka.1) < (kb.0, kb.1);
    }
    if (a.energy - b.energy).abs() > 1e-12 * a.energy.max(b.energy).max(1.0) {
        return a.energy < b.energy;
    }
    ka.2 < kb.2
}

/// Removal clusters for `f`, grouped by weak components, validated jointly.
fn removal_plan(
    sys: &NetworkSystem,
    r: &ModifiabilityReport,
    f: &[NodePair],
    memo: &mut HashMap<Vec<NodePair>, Option<Vec<Cluster>>>,
) -> Option<Candidate> {
    let groups = weak_components(f, sys.n()).group(f);
    let mut clusters = Vec::new();
    for g in groups {
        let cs = memo.entry(g.clone()).or_insert_with(|| split_removable(sys, r, &g)).clone()?;
        clusters.extend(cs);
    }
    let plan = compose_plan(sys, &clusters, 1.0).ok()?;
    let avg = averaged_closed_form(sys, &plan).ok()?;
    support_matches(sys, &avg.a_bar, f).ok()?;
    let certificate = spectral_abscissa(&avg.a_bar).ok()?;
    if certificate >= 0.0 {
        return None;
    }
    let energy = plan.entries.iter().map(|e| e.ratio() * e.ratio()).sum();
    let mut removed = f.to_vec();
    removed.sort();
    Some(Candidate { removed, clusters, energy, certificate })
}

/// The group as one removable cluster, or failing that the fewest removable
/// pieces.
fn split_removable(sys: &NetworkSystem, r: &ModifiabilityReport, g: &[NodePair]) -> Option<Vec<Cluster>> {
    let valid = |set: &[NodePair]| -> Option<Cluster> {
        removal_candidates(sys, r, set).into_iter().find(|c| removal_effect(sys, c, set).is_ok())
    };
    if let Some(c) = valid(g) {
        return Some(vec![c]);
    }
    let m = g.len();
    if m > 8 {
        return None;
    }
    let full = (1usize << m) - 1;
    let pieces: Vec<Option<Cluster>> = (0..=full)
        .map(|mask| {
            if mask == 0 || mask == full {
                return None;
            }
            let set: Vec<NodePair> = (0..m).filter(|b| mask >> b & 1 == 1).map(|b| g[b]).collect();
            valid(&set)
        })
        .collect();
    fn go(pieces: &[Option<Cluster>], full: usize, covered: usize, depth: usize, out: &mut Vec<Cluster>) -> bool {
        if covered == full {
            return true;
        }
        if depth == 0 {
            return false;
        }
        let free = !covered & full;
        let low = free.trailing_zeros();
        let mut sub = free;
        while sub > 0 {
            if sub >> low & 1 == 1 {
                if let Some(c) = &pieces[sub] {
                    let clash = out.iter().any(|o| o.drivers.iter().any(|d| c.drivers.contains(d)));
                    if !clash {
                        out.push(c.clone());
                        if go(pieces, full, covered | sub, depth - 1, out) {
                            return true;
                        }
                        out.pop();
                    }
                }
            }
            sub = (sub - 1) & free;
        }
        false
    }
    (2..=m).find_map(|d| {
        let mut out = Vec::new();
        go(&pieces, full, 0, d, &mut out).then_some(out)
    })
}

/// Breaks cycles one edge at a time, preferring singly removable edges.
fn greedy_feedback(sys: &NetworkSystem, all: &[NodePair]) -> Vec<NodePair> {
    let n = sys.n();
    let mut rest = all.to_vec();
    let mut f = Vec::new();
    loop {
        let current = NetworkSystem::from_edges(
            n,
            &rest.iter().map(|&e| crate::netcore::Edge { source: e.source, target: e.target, weight: sys.weight(e) }).collect::<Vec<_>>(),
        )
        .expect("subgraph is valid");
        let cyc = cycle_edges(&current);
        if cyc.is_empty() {
            break;
        }
        let pick = cyc
            .iter()
            .copied()
            .find(|&e| check_removable_set(sys, &[e]).is_ok())
            .unwrap_or(cyc[0]);
        rest.retain(|&e| e != pick);
        f.push(pick);
    }
    f
}

/// Knobs for [`search_stabilizing_delta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Spectral abscissa evaluations allowed in total.
    pub budget: usize,
    /// A plan counts as stabilizing once its certificate is below `−margin`.
    pub margin: f64,
    /// `|δ|` is searched up to this multiple of the largest `|a_ij|`.
    pub bound_factor: f64,
    pub grid_points: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: 20_000, margin: 1e-6, bound_factor: 10.0, grid_points: 41 }
    }
}

struct Budget {
    left: usize,
}

impl Budget {
    fn eval(&mut self, m: &DMatrix<f64>) -> Option<f64> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        spectral_abscissa(m).ok()
    }
}

/// Edges worth a one-dimensional search, with the admissible `δ` range.
fn searchable_edges(sys: &NetworkSystem, r: &ModifiabilityReport, bound: f64) -> Vec<(NodePair, f64, f64)> {
    let n = sys.n();
    let mut out = Vec::new();
    for j in 1..=n {
        for i in (1..=n).filter(|&i| i != j) {
            let e = NodePair::new(j, i);
            match r.uni_sign(e) {
                1 => out.push((e, 0.0, bound)),
                -1 => out.push((e, -bound, 0.0)),
                _ => {
                    let probe = TargetChange { edge: e, delta: 1.0 };
                    if single_candidates(sys, r, probe).is_ok() {
                        out.push((e, -bound, bound));
                    }
                }
            }
        }
    }
    out
}

/// Grid scan followed by golden-section refinement around the best point.
fn line_search(base: &DMatrix<f64>, edge: NodePair, lo: f64, hi: f64, opts: &SearchOptions, budget: &mut Budget) -> Option<(f64, f64)> {
    let pos = edge.pos();
    let f = |d: f64, budget: &mut Budget| {
        let mut m = base.clone();
        m[pos] += d;
        budget.eval(&m)
    };
    let g = opts.grid_points.max(3);
    let xs: Vec<f64> = (0..g).map(|k| lo + (hi - lo) * k as f64 / (g - 1) as f64).collect();
    let tiny = 1e-12 * (hi - lo);
    let mut best: Option<(usize, f64)> = None;
    for (k, &x) in xs.iter().enumerate() {
        if x.abs() <= tiny {
            continue;
        }
        let v = f(x, budget)?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((k, v));
        }
    }
    let (k, mut fb) = best?;
    let mut xb = xs[k];
    let (mut a, mut b) = (xs[k.saturating_sub(1)], xs[(k + 1).min(g - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c, budget)?, f(d, budget)?);
    for _ in 0..40 {
        if (b - a).abs() <= 1e-9 * (hi - lo) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c, budget)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d, budget)?;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v < fb && x.abs() > tiny {
            xb = x;
            fb = v;
        }
    }
    Some((xb, fb))
}

/// Looks for a realizable `Δ` that makes `A + Δ` Hurwitz: nothing if `A`
/// already is, then the structural route when every self-loop is negative,
/// then a line search over single edges, then a greedy extension to several
/// edges.
pub fn search_stabilizing_delta(sys: &NetworkSystem, opts: &SearchOptions) -> Result<StabilizationPlan> {
    let n = sys.n();
    let a = sys.matrix();
    let abscissa = spectral_abscissa(a)?;
    if abscissa < 0.0 {
        return Ok(StabilizationPlan {
            n,
            delta: PerturbationMatrix::zeros(n),
            clusters: Vec::new(),
            certificate: abscissa,
            method: SearchMethod::AlreadyStable,
            removed: Vec::new(),
        });
    }
    if assumption_holds(sys).is_ok() {
        if let Ok(p) = structural_stabilizable(sys) {
            if p.certificate < -opts.margin {
                return Ok(p);
            }
        }
    }
    let r = build_report(sys);
    let bound = opts.bound_factor * a.amax().max(f64::MIN_POSITIVE);
    let edges = searchable_edges(sys, &r, bound);
    if edges.is_empty() {
        return Err(Error::NotFound("no edge can be modified".into()));
    }
    let mut budget = Budget { left: opts.budget };
    let exhausted = || Error::NotFound("search budget exhausted".into());

    let mut best: Option<(NodePair, f64, f64)> = None;
    for &(e, lo, hi) in &edges {
        let (d, v) = line_search(a, e, lo, hi, opts, &mut budget).ok_or_else(exhausted)?;
        if best.is_none_or(|(_, _, b)| v < b) {
            best = Some((e, d, v));
        }
    }
    let (e, d, v) = best.expect("at least one edge searched");
    let mut delta = PerturbationMatrix::zeros(n).with(e, d);
    let mut current = v;
    if current < -opts.margin {
        if let Ok(plan) = finish(sys, &delta, SearchMethod::LineSearch) {
            return Ok(plan);
        }
    }

    loop {
        let base = a + delta.matrix();
        let mut step: Option<(NodePair, f64, f64)> = None;
        for &(e, lo, hi) in &edges {
            if delta.get(e) != 0.0 {
                continue;
            }
            let Some((d, v)) = line_search(&base, e, lo, hi, opts, &mut budget) else {
                break;
            };
            if v < current - 1e-9 && step.is_none_or(|(_, _, b)| v < b) && decompose(sys, &delta.with(e, d)).is_ok() {
                step = Some((e, d, v));
            }
        }
        let Some((e, d, v)) = step else {
            return Err(if budget.left == 0 { exhausted() } else { Error::NotFound("no realizable improvement left".into()) });
        };
        delta = delta.with(e, d);
        current = v;
        if current < -opts.margin {
            return finish(sys, &delta, SearchMethod::Greedy);
        }
    }
}

fn finish(sys: &NetworkSystem, delta: &PerturbationMatrix, method: SearchMethod) -> Result<StabilizationPlan> {
    let clusters = decompose(sys, delta)?;
    let plan = compose_plan(sys, &clusters, 1.0)?;
    let a_bar = averaged_closed_form(sys, &plan)?.a_bar;
    Ok(StabilizationPlan {
        n: sys.n(),
        delta: delta.clone(),
        clusters,
        certificate: spectral_abscissa(&a_bar)?,
        method,
        removed: Vec::new(),
    })
}

/// Plan for a given perturbation: its decomposition and the abscissa of the
/// averaged network.
pub fn plan_for(sys: &NetworkSystem, delta: &PerturbationMatrix) -> Result<StabilizationPlan> {
    finish(sys, delta, SearchMethod::Decomposition)
}
