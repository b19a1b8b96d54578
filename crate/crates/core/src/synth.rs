//! Sinusoidal vibration design: amplitudes and frequencies that realize a
//! requested change of the averaged edge weights.
//!
//! An entry `u sin(βs)` at matrix position `(i, j)` vibrates the edge `(j, i)`.
//! All designs use the ratio `u/β`; the frequency is a free parameter.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphalg::{JointTrail, Situation};
use crate::netcore::{NetworkSystem, NodeId, NodePair};
use crate::perturb::{Cluster, ClusterKind, TargetChange};

/// One sinusoid `u sin(β s + φ)` placed at `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationEntry {
    #[serde(rename = "i")]
    pub row: NodeId,
    #[serde(rename = "j")]
    pub col: NodeId,
    #[serde(rename = "u")]
    pub amplitude: f64,
    #[serde(rename = "beta")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub cluster: usize,
}

impl VibrationEntry {
    /// Entry vibrating `edge` with amplitude `u` at frequency `beta`.
    pub fn on(edge: NodePair, amplitude: f64, frequency: f64) -> Self {
        VibrationEntry { row: edge.target, col: edge.source, amplitude, frequency, phase: 0.0, cluster: 0 }
    }

    /// The vibrated edge `(col, row)`.
    pub fn edge(&self) -> NodePair {
        NodePair { source: self.col, target: self.row }
    }

    pub fn pos(&self) -> (usize, usize) {
        (self.row.idx(), self.col.idx())
    }

    /// `u / β`, the quantity every design formula fixes.
    pub fn ratio(&self) -> f64 {
        self.amplitude / self.frequency
    }

    pub fn value(&self, s: f64) -> f64 {
        self.amplitude * (self.frequency * s + self.phase).sin()
    }
}

/// Vibration matrix `V(s)` as a list of sinusoids, plus the timescale `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationPlan {
    pub epsilon: f64,
    pub entries: Vec<VibrationEntry>,
    /// Intended changes, recorded so that side effects can be told apart.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetChange>,
}

impl VibrationPlan {
    pub fn new(epsilon: f64, entries: Vec<VibrationEntry>) -> Result<Self> {
        let plan = VibrationPlan { epsilon, entries, targets: Vec::new() };
        plan.check_numbers()?;
        Ok(plan)
    }

    pub fn empty(epsilon: f64) -> Self {
        VibrationPlan { epsilon, entries: Vec::new(), targets: Vec::new() }
    }

    fn check_numbers(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        for e in &self.entries {
            if !(e.frequency > 0.0 && e.frequency.is_finite()) {
                return Err(Error::Validation(format!("frequency at ({},{}) must be positive", e.row, e.col)));
            }
            if !e.amplitude.is_finite() || !e.phase.is_finite() {
                return Err(Error::Validation(format!("non-finite amplitude or phase at ({},{})", e.row, e.col)));
            }
        }
        Ok(())
    }

    /// Checks numbers, index ranges and that only existing edges are vibrated.
    pub fn validate_for(&self, sys: &NetworkSystem) -> Result<()> {
        self.check_numbers()?;
        for e in &self.entries {
            if e.row.get() > sys.n() || e.col.get() > sys.n() {
                return Err(Error::Validation(format!("entry ({},{}) out of range for n = {}", e.row, e.col, sys.n())));
            }
            if !sys.has_edge(e.edge()) {
                return Err(Error::Validation(format!(
                    "entry ({},{}) vibrates the absent edge {}",
                    e.row,
                    e.col,
                    e.edge()
                )));
            }
        }
        Ok(())
    }

    /// Writes `V(s)` into `out`.
    pub fn v_into(&self, s: f64, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for e in &self.entries {
            out[e.pos()] += e.value(s);
        }
    }

    pub fn v_at(&self, n: usize, s: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        self.v_into(s, &mut m);
        m
    }

    pub fn max_frequency(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.frequency).reduce(f64::max)
    }

    pub fn min_frequency(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.frequency).reduce(f64::min)
    }

    /// Rows of the vibrated positions never appear as columns, so `N(s)² = 0`.
    pub fn is_nilpotent(&self) -> bool {
        let rows: BTreeSet<_> = self.entries.iter().filter(|e| e.amplitude != 0.0).map(|e| e.row).collect();
        self.entries.iter().filter(|e| e.amplitude != 0.0).all(|e| !rows.contains(&e.col))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let plan: VibrationPlan = serde_json::from_str(s)?;
        plan.check_numbers()?;
        Ok(plan)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Frequencies `1, √2, √3, √5, √7, √11, …`: pairwise ratios are irrational.
#[derive(Debug, Clone, Default)]
pub struct FrequencyLadder {
    next: usize,
    last_prime: u64,
}

impl FrequencyLadder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next unused frequency.
    pub fn take(&mut self) -> f64 {
        self.next += 1;
        if self.next == 1 {
            return 1.0;
        }
        let mut c = self.last_prime.max(1) + 1;
        while !(2..c).take_while(|d| d * d <= c).all(|d| !c.is_multiple_of(d)) {
            c += 1;
        }
        self.last_prime = c;
        (c as f64).sqrt()
    }
}

fn expect_edge(sys: &NetworkSystem, edge: NodePair) -> Result<()> {
    if edge.source.get() > sys.n() || edge.target.get() > sys.n() || !sys.has_edge(edge) {
        return Err(Error::EdgeNotFound(edge));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Validation(format!("frequency must be positive, got {beta}")));
    }
    Ok(())
}

/// Changes the averaged weight of `edge` by `delta` with a single vibration on
/// the edge itself. Needs the opposite edge, negative for increases and
/// positive for decreases.
pub fn design_direct(sys: &NetworkSystem, edge: NodePair, delta: f64, beta: f64) -> Result<VibrationEntry> {
    check_beta(beta)?;
    expect_edge(sys, edge)?;
    let a_ji = sys.weight(edge.reversed());
    if edge.is_self_loop() || a_ji == 0.0 {
        return Err(Error::NotDirect(edge));
    }
    if delta != 0.0 && (delta > 0.0) == (a_ji > 0.0) {
        return Err(Error::WrongDirection { edge, sign: if delta > 0.0 { 1 } else { -1 } });
    }
    let ratio = (2.0 * delta.abs() / a_ji.abs()).sqrt();
    Ok(VibrationEntry::on(edge, ratio * beta, beta))
}

/// Cancels the averaged weight of `edge`; needs a same-signed opposite edge.
pub fn design_direct_removal(sys: &NetworkSystem, edge: NodePair, beta: f64) -> Result<VibrationEntry> {
    check_beta(beta)?;
    expect_edge(sys, edge)?;
    let (a_ij, a_ji) = (sys.weight(edge), sys.weight(edge.reversed()));
    if edge.is_self_loop() || a_ij * a_ji <= 0.0 {
        return Err(Error::NotDirectlyRemovable(edge));
    }
    Ok(VibrationEntry::on(edge, beta * (2.0 * a_ij / a_ji).sqrt(), beta))
}

/// Free parameter of the joint designs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JointOptions {
    /// Amplitude of the driver fixed before solving for the other one:
    /// `u_pj` for all-distinct paths and for `q = j`, `u_iq` for `p = i`.
    pub lead_amplitude: Option<f64>,
}

/// Changes the averaged weight of the existing edge `edge` through the two
/// driver edges of `witness`, both vibrating at `beta`.
pub fn design_joint(
    sys: &NetworkSystem,
    edge: NodePair,
    witness: &JointTrail,
    delta: f64,
    beta: f64,
    opts: &JointOptions,
) -> Result<[VibrationEntry; 2]> {
    expect_edge(sys, edge)?;
    joint_entries(sys, edge, witness, delta, beta, opts)
}

/// Creates the absent edge `pair` with averaged weight `delta` through an
/// all-distinct path witness.
pub fn design_creation(
    sys: &NetworkSystem,
    pair: NodePair,
    witness: &JointTrail,
    delta: f64,
    beta: f64,
    opts: &JointOptions,
) -> Result<[VibrationEntry; 2]> {
    if sys.has_edge(pair) {
        return Err(Error::EdgeAlreadyExists(pair));
    }
    if witness.situation != Situation::S1 {
        return Err(Error::InvalidWitness(format!("creating {pair} needs a path with distinct nodes")));
    }
    joint_entries(sys, pair, witness, delta, beta, opts)
}

fn joint_entries(
    sys: &NetworkSystem,
    edge: NodePair,
    w: &JointTrail,
    delta: f64,
    beta: f64,
    opts: &JointOptions,
) -> Result<[VibrationEntry; 2]> {
    check_beta(beta)?;
    if w.target() != edge {
        return Err(Error::InvalidWitness(format!("witness ends at {}, not {edge}", w.target())));
    }
    if !w.is_valid_in(sys) {
        return Err(Error::InvalidWitness(format!("{:?} is not a trail of the network", w.edges())));
    }
    let [d1, d2] = w.drivers();
    let b2 = beta * beta;
    if delta == 0.0 {
        return Ok([VibrationEntry::on(d1, 0.0, beta), VibrationEntry::on(d2, 0.0, beta)]);
    }
    let (u1, u2) = match w.situation {
        Situation::S1 => {
            // δ = −(1/2β²) u_iq a_qp u_pj
            let a_qp = sys.weight(w.edges()[1]);
            let u_pj = opts.lead_amplitude.unwrap_or(beta * (2.0 * (delta / a_qp).abs()).sqrt());
            if u_pj == 0.0 {
                return Err(Error::NoRealSolution(edge));
            }
            (u_pj, -2.0 * b2 * delta / (a_qp * u_pj))
        }
        Situation::S2 => {
            // drivers (j,i) and (q,i); fix u_iq, solve for u_ij
            let a_qi = sys.weight(w.edges()[1]);
            let a_ji = sys.weight(edge.reversed());
            let u_iq = opts.lead_amplitude.unwrap_or_else(|| default_lead(delta, a_qi, a_ji, beta));
            (solve_target_amplitude(edge, a_ji, a_qi * u_iq, delta, beta)?, u_iq)
        }
        Situation::S3 => {
            // drivers (j,p) and (j,i); fix u_pj, solve for u_ij
            let a_jp = sys.weight(w.edges()[1]);
            let a_ji = sys.weight(edge.reversed());
            let u_pj = opts.lead_amplitude.unwrap_or_else(|| default_lead(delta, a_jp, a_ji, beta));
            (u_pj, solve_target_amplitude(edge, a_ji, a_jp * u_pj, delta, beta)?)
        }
    };
    Ok([VibrationEntry::on(d1, u1, beta), VibrationEntry::on(d2, u2, beta)])
}

// Large enough that the quadratic always has real roots, and at least the
// amplitude the linear case would need.
fn default_lead(delta: f64, a_loop: f64, a_ji: f64, beta: f64) -> f64 {
    let linear = (2.0 * delta.abs() / a_loop.abs()).sqrt();
    let real_roots = (16.0 * (delta * a_ji).abs()).sqrt() / a_loop.abs();
    beta * linear.max(real_roots)
}

/// Root of `a_ji u² + b u + 2β²δ = 0` with the smallest magnitude, positive on ties.
fn solve_target_amplitude(edge: NodePair, a_ji: f64, b: f64, delta: f64, beta: f64) -> Result<f64> {
    let c = 2.0 * beta * beta * delta;
    if a_ji == 0.0 {
        if b == 0.0 {
            return Err(Error::NoRealSolution(edge));
        }
        return Ok(-c / b);
    }
    let disc = b * b - 4.0 * a_ji * c;
    if disc < 0.0 {
        return Err(Error::NoRealSolution(edge));
    }
    if b == 0.0 {
        return Ok((-c / a_ji).sqrt());
    }
    // stable form: q = −(b + sgn(b)√D)/2, roots q/a and c/q
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = (q / a_ji, c / q);
    Ok(if r1.abs() < r2.abs() || (r1.abs() == r2.abs() && r1 > 0.0) { r1 } else { r2 })
}

/// One entry per target at its own frequency, `u/β = √(−2δ/a_ji)`.
pub fn design_multi_direct(sys: &NetworkSystem, targets: &[TargetChange], frequencies: &[f64]) -> Result<Vec<VibrationEntry>> {
    if targets.len() != frequencies.len() {
        return Err(Error::Validation("one frequency per target is required".into()));
    }
    targets
        .iter()
        .zip(frequencies)
        .map(|(t, &beta)| {
            check_beta(beta)?;
            expect_edge(sys, t.edge)?;
            let a_ji = sys.weight(t.edge.reversed());
            let rad = -2.0 * t.delta / a_ji;
            if t.edge.is_self_loop() || a_ji == 0.0 || rad < 0.0 || rad.is_nan() {
                return Err(Error::NegativeRadicand(t.edge));
            }
            Ok(VibrationEntry::on(t.edge, beta * rad.sqrt(), beta))
        })
        .collect()
}

/// Shared-frequency fan design around `anchor`, which must lie in a 2-cycle
/// and carry a nonzero change.
pub fn design_multi_joint(sys: &NetworkSystem, targets: &[TargetChange], anchor: NodePair, beta: f64) -> Result<Vec<VibrationEntry>> {
    check_beta(beta)?;
    let d0 = targets
        .iter()
        .find(|t| t.edge == anchor)
        .map(|t| t.delta)
        .ok_or_else(|| Error::Validation(format!("anchor {anchor} is not among the targets")))?;
    if d0 == 0.0 {
        return Err(Error::ZeroAnchorDelta(anchor));
    }
    let a0 = sys.weight(anchor.reversed());
    let rad = -2.0 * d0 / a0;
    if a0 == 0.0 || !(rad > 0.0) {
        return Err(Error::NegativeRadicand(anchor));
    }
    let w0 = rad.sqrt();
    let scale = (-2.0 * a0 / d0).sqrt();
    targets
        .iter()
        .map(|t| {
            expect_edge(sys, t.edge)?;
            let ratio = if t.edge == anchor { w0 } else { -(t.delta / a0) * scale };
            Ok(VibrationEntry::on(t.edge, beta * ratio, beta))
        })
        .collect()
}

/// Entries realizing one cluster; frequencies are drawn from `ladder`.
pub fn design_cluster(sys: &NetworkSystem, cluster: &Cluster, ladder: &mut FrequencyLadder) -> Result<Vec<VibrationEntry>> {
    let opts = JointOptions { lead_amplitude: cluster.lead_amplitude };
    match cluster.kind {
        ClusterKind::SingleDirect => {
            let t = single_target(cluster)?;
            Ok(vec![design_direct(sys, t.edge, t.delta, ladder.take())?])
        }
        ClusterKind::SingleJoint => {
            let t = single_target(cluster)?;
            let w = cluster
                .witness
                .ok_or_else(|| Error::InvalidWitness(format!("joint cluster for {} carries no witness", t.edge)))?;
            let beta = ladder.take();
            let entries = if sys.has_edge(t.edge) {
                design_joint(sys, t.edge, &w, t.delta, beta, &opts)?
            } else {
                design_creation(sys, t.edge, &w, t.delta, beta, &opts)?
            };
            Ok(entries.to_vec())
        }
        ClusterKind::MultiDirect => {
            let freqs: Vec<f64> = cluster.targets.iter().map(|_| ladder.take()).collect();
            design_multi_direct(sys, &cluster.targets, &freqs)
        }
        ClusterKind::MultiJointFanIn | ClusterKind::MultiJointFanOut => {
            let anchor = cluster.anchor.ok_or_else(|| Error::Validation("fan cluster without anchor".into()))?;
            design_multi_joint(sys, &cluster.targets, anchor, ladder.take())
        }
    }
}

fn single_target(cluster: &Cluster) -> Result<TargetChange> {
    match cluster.targets.as_slice() {
        [t] => Ok(*t),
        other => Err(Error::NotSingleEdge(other.len())),
    }
}

/// Merges the cluster designs into one plan. Clusters are visited in order of
/// their smallest target edge; each takes fresh frequencies from one ladder,
/// so different clusters never share a frequency.
pub fn compose_plan(sys: &NetworkSystem, clusters: &[Cluster], epsilon: f64) -> Result<VibrationPlan> {
    let mut seen = BTreeSet::new();
    for c in clusters {
        for d in &c.drivers {
            if !seen.insert(*d) {
                return Err(Error::DriverConflict(*d));
            }
        }
    }
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by_key(|&k| clusters[k].targets.iter().map(|t| t.edge).min());
    let mut ladder = FrequencyLadder::new();
    let mut entries = Vec::new();
    for (id, &k) in order.iter().enumerate() {
        let mut es = design_cluster(sys, &clusters[k], &mut ladder)?;
        for e in &mut es {
            e.cluster = id;
        }
        entries.extend(es);
    }
    let mut plan = VibrationPlan::new(epsilon, entries)?;
    plan.targets = order.iter().flat_map(|&k| clusters[k].targets.iter().copied()).collect();
    plan.validate_for(sys)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avg::{averaged_closed_form, averaged_numeric, NumericOptions};
    use crate::fixtures;
    use crate::graphalg::trails_of_length3;
    use crate::perturb::decompose;

    fn p(s: usize, t: usize) -> NodePair {
        NodePair::new(s, t)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ladder_values() {
        let mut l = FrequencyLadder::new();
        let got: Vec<f64> = (0..7).map(|_| l.take()).collect();
        let want = [1.0, 2f64.sqrt(), 3f64.sqrt(), 5f64.sqrt(), 7f64.sqrt(), 11f64.sqrt(), 13f64.sqrt()];
        assert_eq!(got, want);
    }

    #[test]
    fn direct_design_on_four_node_network() {
        let sys = fixtures::four_node_unstable();
        let e = design_direct(&sys, p(1, 4), 8.0, 1.0).unwrap();
        assert_eq!((e.row.get(), e.col.get(), e.amplitude, e.frequency), (4, 1, 4.0, 1.0));
        assert_eq!(design_direct(&sys, p(1, 4), 0.0, 1.0).unwrap().amplitude, 0.0);
        assert!(matches!(design_direct(&sys, p(1, 4), -1.0, 1.0), Err(Error::WrongDirection { .. })));
        assert!(matches!(design_direct(&sys, p(1, 2), 1.0, 1.0), Err(Error::NotDirect(_))));
        assert!(matches!(design_direct(&sys, p(3, 2), 1.0, 1.0), Err(Error::EdgeNotFound(_))));
    }

    #[test]
    fn direct_design_half_weight() {
        let sys = NetworkSystem::from_rows(&[&[-1.0, -0.5], &[1.0, -1.0]]).unwrap();
        let e = design_direct(&sys, p(1, 2), 1.0, 1.0).unwrap();
        assert_eq!(e.ratio(), 2.0);
        let plan = VibrationPlan::new(0.1, vec![e]).unwrap();
        let num = averaged_numeric(&sys, &plan, &NumericOptions::default()).unwrap();
        assert!(close(num.a_bar[(1, 0)] - 1.0, 1.0, 1e-6));
    }

    #[test]
    fn removal_designs() {
        let sys = fixtures::structural_five_node();
        let e = design_direct_removal(&sys, p(2, 1), 1.0).unwrap();
        assert!(close(e.amplitude, 2f64.sqrt(), 1e-15));
        assert_eq!((e.row.get(), e.col.get()), (1, 2));

        let sys2 = NetworkSystem::from_rows(&[&[-1.0, 2.0], &[1.0, -1.0]]).unwrap();
        // (2,1) has weight a_12 = 2, opposite a_21 = 1
        let e = design_direct_removal(&sys2, p(2, 1), 1.0).unwrap();
        assert_eq!(e.ratio(), 2.0);
        let num = averaged_numeric(&sys2, &VibrationPlan::new(0.1, vec![e]).unwrap(), &NumericOptions::default()).unwrap();
        assert!(num.a_bar[(0, 1)].abs() < 1e-6);

        let bad = NetworkSystem::from_rows(&[&[-1.0, 1.0], &[-1.0, -1.0]]).unwrap();
        assert!(matches!(design_direct_removal(&bad, p(2, 1), 1.0), Err(Error::NotDirectlyRemovable(_))));
    }

    #[test]
    fn joint_design_reproduces_published_amplitudes() {
        let sys = fixtures::four_node_unstable();
        let w = trails_of_length3(&sys, NodeId::new(1), NodeId::new(4))
            .into_iter()
            .find(|w| w.situation == Situation::S1)
            .unwrap();
        let [a, b] = design_joint(&sys, p(1, 4), &w, 8.0, 1.0, &JointOptions::default()).unwrap();
        assert_eq!((a.row.get(), a.col.get(), a.amplitude), (2, 1, 4.0));
        assert_eq!((b.row.get(), b.col.get(), b.amplitude), (4, 3, -4.0));
        let forced = design_joint(&sys, p(1, 4), &w, 8.0, 1.0, &JointOptions { lead_amplitude: Some(4.0) }).unwrap();
        assert_eq!(forced[1].amplitude, -4.0);
        let zero = design_joint(&sys, p(1, 4), &w, 0.0, 1.0, &JointOptions::default()).unwrap();
        assert!(zero.iter().all(|e| e.amplitude == 0.0));
    }

    #[test]
    fn loop_at_target_with_no_reverse_edge_is_linear() {
        // target (1,2), trail 1→2→3→2, a_12 = 0
        let sys = NetworkSystem::from_rows(&[&[-1.0, 0.0, 0.0], &[1.0, -1.0, 1.5], &[0.0, 2.0, -1.0]]).unwrap();
        let w = JointTrail::classify(NodeId::new(1), NodeId::new(2), NodeId::new(3), NodeId::new(2)).unwrap();
        assert_eq!(w.situation, Situation::S2);
        let opts = JointOptions { lead_amplitude: Some(1.0) };
        let [e_ij, e_iq] = design_joint(&sys, p(1, 2), &w, 0.6, 1.0, &opts).unwrap();
        // u_ij = −2β²δ/(a_qi u_iq), a_qi = weight of (2,3) = 2
        assert!(close(e_ij.amplitude, -2.0 * 0.6 / (2.0 * 1.0), 1e-15));
        assert_eq!(e_iq.amplitude, 1.0);
        let plan = VibrationPlan::new(0.1, vec![e_ij, e_iq]).unwrap();
        let cf = averaged_closed_form(&sys, &plan).unwrap();
        assert!(close(cf.a_bar[(1, 0)] - 1.0, 0.6, 1e-12));
    }

    #[test]
    fn creation_design() {
        // path 1→2→3→4 with a_32 = 1; create (1,4)
        let mut a = DMatrix::zeros(4, 4);
        a[(1, 0)] = 1.0;
        a[(2, 1)] = 1.0;
        a[(3, 2)] = 1.0;
        let sys = NetworkSystem::new(a).unwrap();
        let w = trails_of_length3(&sys, NodeId::new(1), NodeId::new(4))[0];
        let [e1, e2] = design_creation(&sys, p(1, 4), &w, -1.0, 1.0, &JointOptions { lead_amplitude: Some(2.0) }).unwrap();
        assert_eq!((e1.amplitude, e2.amplitude), (2.0, 1.0));
        let plan = VibrationPlan::new(0.1, vec![e1, e2]).unwrap();
        let num = averaged_numeric(&sys, &plan, &NumericOptions::default()).unwrap();
        assert!(close(num.a_bar[(3, 0)], -1.0, 1e-6));
        assert!(matches!(
            design_creation(&sys, p(1, 2), &w, 1.0, 1.0, &JointOptions::default()),
            Err(Error::EdgeAlreadyExists(_))
        ));
        assert!(matches!(
            design_creation(&sys, p(1, 3), &w, 1.0, 1.0, &JointOptions::default()),
            Err(Error::InvalidWitness(_))
        ));
    }

    #[test]
    fn twelve_node_plan_matches_published_design() {
        let sys = fixtures::twelve_node_clusters();
        let mut clusters = decompose(&sys, &fixtures::twelve_node_delta()).unwrap();
        for c in &mut clusters {
            if c.kind == ClusterKind::SingleJoint {
                c.lead_amplitude = Some(1.0);
            }
        }
        let plan = compose_plan(&sys, &clusters, 0.04).unwrap();
        let find = |i: usize, j: usize| {
            plan.entries.iter().find(|e| e.row.get() == i && e.col.get() == j).copied().unwrap()
        };
        let r = |v: f64| v.sqrt();
        let want = [
            (2, 1, 1.0, 1.0),
            (5, 6, 3.0, 1.0),
            (4, 3, r(3.2), r(2.0)),
            (4, 8, r(3.0), r(3.0)),
            (7, 8, r(15.0), r(5.0)),
            (12, 11, 2.0 * r(7.0), r(7.0)),
            (10, 11, r(7.0), r(7.0)),
            (9, 11, 0.5 * r(7.0), r(7.0)),
        ];
        assert_eq!(plan.entries.len(), want.len());
        for (i, j, u, beta) in want {
            let e = find(i, j);
            assert!(close(e.amplitude, u, 1e-12), "u at ({i},{j}) = {}", e.amplitude);
            assert_eq!(e.frequency, beta, "beta at ({i},{j})");
        }
    }

    #[test]
    fn structural_multi_joint_amplitudes() {
        let sys = fixtures::structural_five_node();
        let targets = [TargetChange { edge: p(3, 4), delta: -1.0 }, TargetChange { edge: p(3, 5), delta: -1.0 }];
        let es = design_multi_joint(&sys, &targets, p(3, 4), 2f64.sqrt()).unwrap();
        assert!(es.iter().all(|e| close(e.amplitude, 2.0, 1e-14)));
        let zero = [TargetChange { edge: p(3, 4), delta: 0.0 }, TargetChange { edge: p(3, 5), delta: -1.0 }];
        assert!(matches!(design_multi_joint(&sys, &zero, p(3, 4), 1.0), Err(Error::ZeroAnchorDelta(_))));
        // anchor-only cluster uses the direct formula
        let only = [TargetChange { edge: p(3, 4), delta: -0.5 }];
        let a = design_multi_joint(&sys, &only, p(3, 4), 1.0).unwrap()[0];
        assert!(close(a.amplitude, design_direct(&sys, p(3, 4), -0.5, 1.0).unwrap().amplitude, 1e-15));
    }

    #[test]
    fn multi_direct_singleton_is_direct() {
        let sys = fixtures::four_node_unstable();
        let e = design_multi_direct(&sys, &[TargetChange { edge: p(1, 4), delta: 8.0 }], &[1.0]).unwrap();
        assert_eq!(e[0], design_direct(&sys, p(1, 4), 8.0, 1.0).unwrap());
        assert!(matches!(
            design_multi_direct(&sys, &[TargetChange { edge: p(1, 4), delta: -8.0 }], &[1.0]),
            Err(Error::NegativeRadicand(_))
        ));
    }

    #[test]
    fn compose_rejects_shared_drivers() {
        let sys = fixtures::four_node_unstable();
        let c = Cluster::single_direct(TargetChange { edge: p(1, 4), delta: 1.0 });
        assert!(matches!(compose_plan(&sys, &[c.clone(), c], 0.1), Err(Error::DriverConflict(_))));
    }

    #[test]
    fn plan_json_shape() {
        let plan = VibrationPlan::new(0.04, vec![VibrationEntry::on(p(1, 4), 4.0, 1.0)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&plan.to_json_string()).unwrap();
        assert_eq!(v["entries"][0]["i"], 4);
        assert_eq!(v["entries"][0]["j"], 1);
        assert_eq!(v["entries"][0]["u"], 4.0);
        assert_eq!(v["entries"][0]["phase"], 0.0);
        assert_eq!(VibrationPlan::from_json_str(&plan.to_json_string()).unwrap(), plan);
        assert!(VibrationPlan::from_json_str(r#"{"epsilon":0,"entries":[]}"#).is_err());
    }

    #[test]
    fn waveforms_are_zero_mean() {
        let e = VibrationEntry::on(p(1, 2), 3.0, 2f64.sqrt());
        let t_end = 1.0e4;
        let n = 2_000_000;
        let h = t_end / n as f64;
        let integral: f64 = (0..n).map(|k| e.value((k as f64 + 0.5) * h) * h).sum();
        assert!(integral.abs() / t_end < 1e-3);
    }
}
