//! The averaged ("functioning") network `Ā = lim 1/T ∫ Ψ⁻¹ A Ψ ds`, where
//! `Ψ' = V(s) Ψ` is the auxiliary flow of the vibrations.
//!
//! When no vibrated row is also a vibrated column, `N(s) = Ψ(s) − I` squares
//! to zero and `Ā` has a closed form. Otherwise, and as an independent check,
//! the average is computed numerically.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{NetworkSystem, NodePair};
use crate::perturb::TargetChange;
use crate::synth::VibrationPlan;

/// Default threshold below which an averaged entry counts as zero.
pub const DIFF_TOL: f64 = 1e-9;

/// `Ψ(s) = I + N(s)` with `N(s) = −Σ (u/β) cos(βs + φ) E_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    n: usize,
    terms: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    pos: (usize, usize),
    ratio: f64,
    beta: f64,
    phase: f64,
}

impl FundamentalMatrix {
    /// `N(s)`.
    pub fn n_at(&self, s: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for t in &self.terms {
            m[t.pos] -= t.ratio * (t.beta * s + t.phase).cos();
        }
        m
    }

    pub fn at(&self, s: f64) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n) + self.n_at(s)
    }

    /// `Ψ⁻¹(s) = I − N(s)`.
    pub fn inverse_at(&self, s: f64) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n) - self.n_at(s)
    }

    /// Upper bound `1 + Σ |u/β|` on the max-norm of `Ψ(s)`.
    pub fn bound(&self) -> f64 {
        1.0 + self.terms.iter().map(|t| t.ratio.abs()).sum::<f64>()
    }
}

/// Symbolic fundamental matrix of a nilpotent plan on `n` nodes.
pub fn fundamental_analytic(n: usize, plan: &VibrationPlan) -> Result<FundamentalMatrix> {
    if !plan.is_nilpotent() {
        return Err(Error::NotNilpotent);
    }
    if let Some(e) = plan.entries.iter().find(|e| e.row.get() > n || e.col.get() > n) {
        return Err(Error::Validation(format!("entry ({},{}) out of range for n = {n}", e.row, e.col)));
    }
    let terms = plan
        .entries
        .iter()
        .filter(|e| e.amplitude != 0.0)
        .map(|e| Term { pos: e.pos(), ratio: e.ratio(), beta: e.frequency, phase: e.phase })
        .collect();
    Ok(FundamentalMatrix { n, terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    Increase,
    Decrease,
    Removal,
    Creation,
    Unchanged,
}

/// One entry of `A` compared with `Ā`. `i`, `j` are 1-based matrix indices,
/// so the entry belongs to the edge `(j, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRecord {
    pub i: usize,
    pub j: usize,
    pub edge: NodePair,
    pub before: f64,
    pub after: f64,
    pub kind: DiffKind,
    /// Changed although it was not asked for.
    pub side_effect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMethod {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedResult {
    #[serde(serialize_with = "ser_matrix")]
    pub a_bar: DMatrix<f64>,
    pub diff: Vec<DiffRecord>,
    pub method: AveragingMethod,
    /// Averaging horizon in fast time (numeric only).
    pub horizon: Option<f64>,
    /// Max-norm change at the last horizon doubling (numeric only).
    pub residual: f64,
}

pub(crate) fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

impl AveragedResult {
    /// Changed entries only.
    pub fn changes(&self) -> impl Iterator<Item = &DiffRecord> {
        self.diff.iter().filter(|d| d.kind != DiffKind::Unchanged)
    }

    pub fn side_effects(&self) -> impl Iterator<Item = &DiffRecord> {
        self.diff.iter().filter(|d| d.side_effect)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Edges a plan means to change: its recorded targets, or the vibrated edges
/// when it records none.
fn intended(plan: &VibrationPlan) -> Vec<NodePair> {
    if plan.targets.is_empty() {
        plan.entries.iter().map(|e| e.edge()).collect()
    } else {
        plan.targets.iter().map(|t: &TargetChange| t.edge).collect()
    }
}

/// `Ā = A − ½ Σ_{β_k = β_l} cos(φ_k − φ_l) (U_k/β_k) A (U_l/β_l)`.
///
/// Frequencies are compared exactly; the allocator hands out identical
/// values within a cluster and distinct ones across clusters.
pub fn averaged_closed_form(sys: &NetworkSystem, plan: &VibrationPlan) -> Result<AveragedResult> {
    let a = sys.matrix();
    let psi = fundamental_analytic(sys.n(), plan)?;
    let mut a_bar = a.clone();
    for k in &psi.terms {
        for l in &psi.terms {
            if k.beta != l.beta {
                continue;
            }
            // E_ab A E_cd = a_bc E_ad
            let (ra, cb) = k.pos;
            let (rc, cd) = l.pos;
            let a_bc = a[(cb, rc)];
            if a_bc != 0.0 {
                a_bar[(ra, cd)] -= 0.5 * (k.phase - l.phase).cos() * k.ratio * l.ratio * a_bc;
            }
        }
    }
    let diff = diff_networks(a, &a_bar, DIFF_TOL, &intended(plan))?;
    Ok(AveragedResult { a_bar, diff, method: AveragingMethod::ClosedForm, horizon: None, residual: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericOptions {
    /// Stop once doubling the horizon moves no entry by more than this.
    pub tol: f64,
    /// Largest horizon (fast time) before giving up.
    pub t_max: f64,
    /// RK4 steps per period of the fastest vibration.
    pub steps_per_period: usize,
    /// First horizon, in periods of the slowest vibration.
    pub initial_periods: f64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        NumericOptions { tol: 1e-8, t_max: 1e5, steps_per_period: 64, initial_periods: 100.0 }
    }
}

/// Long-horizon numerical average, independent of the closed form.
///
/// `Ψ` is integrated by RK4 from `Ψ(0) = I − Σ (u/β) cos φ E_ij` (the value of
/// the analytic form at 0) and `Ψ⁻¹AΨ` is averaged with the smooth window
/// `exp(−1/(x(1−x)))`, which converges much faster than a flat average on
/// quasi-periodic integrands. The horizon doubles until the result settles.
pub fn averaged_numeric(sys: &NetworkSystem, plan: &VibrationPlan, opts: &NumericOptions) -> Result<AveragedResult> {
    plan.validate_for(sys)?;
    let a = sys.matrix();
    let (Some(b_max), Some(b_min)) = (plan.max_frequency(), plan.min_frequency()) else {
        let diff = diff_networks(a, a, DIFF_TOL, &[])?;
        return Ok(AveragedResult {
            a_bar: a.clone(),
            diff,
            method: AveragingMethod::Numeric,
            horizon: Some(0.0),
            residual: 0.0,
        });
    };
    let tau = std::f64::consts::TAU;
    let mut h = tau / b_max / opts.steps_per_period.max(4) as f64;
    let h_min = h / 16.0;
    let mut horizon = opts.initial_periods * tau / b_min;
    let psi0 = initial_psi(sys.n(), plan);
    let mut prev = weighted_average(sys, plan, &psi0, horizon, h)?;
    let mut change = f64::INFINITY;
    loop {
        let next_h = 2.0 * horizon;
        if next_h > opts.t_max {
            return Err(Error::NonConvergent { horizon, change });
        }
        let next = weighted_average(sys, plan, &psi0, next_h, h)?;
        let last = change;
        change = (&next - &prev).amax();
        if change >= opts.tol && change > 0.5 * last && h > h_min {
            // the change is not shrinking with the horizon: integration
            // error dominates, so refine the step and redo this horizon
            h /= 2.0;
            prev = weighted_average(sys, plan, &psi0, horizon, h)?;
            change = f64::INFINITY;
            continue;
        }
        horizon = next_h;
        prev = next;
        if change < opts.tol {
            let diff = diff_networks(a, &prev, opts.tol.max(DIFF_TOL) * 10.0, &intended(plan))?;
            return Ok(AveragedResult {
                a_bar: prev,
                diff,
                method: AveragingMethod::Numeric,
                horizon: Some(horizon),
                residual: change,
            });
        }
    }
}

fn window(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        (-1.0 / (x * (1.0 - x))).exp()
    }
}

fn initial_psi(n: usize, plan: &VibrationPlan) -> DMatrix<f64> {
    let mut psi = DMatrix::identity(n, n);
    for e in &plan.entries {
        psi[e.pos()] -= e.ratio() * e.phase.cos();
    }
    if psi.clone().try_inverse().is_some_and(|inv| inv.amax() * psi.amax() < 1e12) {
        psi
    } else {
        DMatrix::identity(n, n)
    }
}

fn weighted_average(sys: &NetworkSystem, plan: &VibrationPlan, psi0: &DMatrix<f64>, horizon: f64, h: f64) -> Result<DMatrix<f64>> {
    let n = sys.n();
    let a = sys.matrix();
    let steps = (horizon / h).ceil() as usize;
    let h = horizon / steps as f64;
    let entries: Vec<(usize, usize, f64, f64, f64)> = plan
        .entries
        .iter()
        .map(|e| (e.row.idx(), e.col.idx(), e.amplitude, e.frequency, e.phase))
        .collect();

    // k = V(s) X, using only the nonzero entries of V
    let apply_v = |s: f64, x: &DMatrix<f64>, out: &mut DMatrix<f64>| {
        out.fill(0.0);
        for &(r, c, u, b, ph) in &entries {
            let v = u * (b * s + ph).sin();
            for col in 0..n {
                out[(r, col)] += v * x[(c, col)];
            }
        }
    };

    let mut psi = psi0.clone();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
    );
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut ap = DMatrix::<f64>::zeros(n, n);
    let mut wsum = 0.0;
    for k in 0..=steps {
        let s = k as f64 * h;
        let w = window(s / horizon);
        if w > 0.0 {
            let lu = psi.clone().lu();
            let inv = lu.try_inverse().ok_or(Error::SingularFundamental { time: s })?;
            if inv.amax() * psi.amax() > 1e12 || inv.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularFundamental { time: s });
            }
            ap.gemm(1.0, a, &psi, 0.0);
            acc.gemm(w, &inv, &ap, 1.0);
            wsum += w;
        }
        if k == steps {
            break;
        }
        apply_v(s, &psi, &mut k1);
        tmp.zip_zip_apply(&psi, &k1, |t, p, k| *t = p + 0.5 * h * k);
        apply_v(s + 0.5 * h, &tmp, &mut k2);
        tmp.zip_zip_apply(&psi, &k2, |t, p, k| *t = p + 0.5 * h * k);
        apply_v(s + 0.5 * h, &tmp, &mut k3);
        tmp.zip_zip_apply(&psi, &k3, |t, p, k| *t = p + h * k);
        apply_v(s + h, &tmp, &mut k4);
        for idx in 0..n * n {
            psi[idx] += h / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularFundamental { time: s + h });
        }
    }
    Ok(acc / wsum)
}

/// Closed form when the plan is nilpotent, numeric otherwise.
pub fn averaged(sys: &NetworkSystem, plan: &VibrationPlan, opts: &NumericOptions) -> Result<AveragedResult> {
    match averaged_closed_form(sys, plan) {
        Err(Error::NotNilpotent) => averaged_numeric(sys, plan, opts),
        other => other,
    }
}

/// Classifies every entry that is nonzero in `A` or `Ā`.
///
/// `targets` are the edges meant to change; any other changed entry is
/// flagged as a side effect.
pub fn diff_networks(a: &DMatrix<f64>, a_bar: &DMatrix<f64>, tol: f64, targets: &[NodePair]) -> Result<Vec<DiffRecord>> {
    if a.shape() != a_bar.shape() || a.nrows() != a.ncols() {
        return Err(Error::Validation(format!("cannot compare {:?} with {:?}", a.shape(), a_bar.shape())));
    }
    let n = a.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (before, after) = (a[(i, j)], a_bar[(i, j)]);
            let kind = if before != 0.0 {
                if after.abs() < tol {
                    DiffKind::Removal
                } else if after - before > tol {
                    DiffKind::Increase
                } else if after - before < -tol {
                    DiffKind::Decrease
                } else {
                    DiffKind::Unchanged
                }
            } else if after.abs() >= tol {
                DiffKind::Creation
            } else {
                continue;
            };
            let edge = NodePair::at_pos(i, j);
            out.push(DiffRecord {
                i: i + 1,
                j: j + 1,
                edge,
                before,
                after,
                kind,
                side_effect: kind != DiffKind::Unchanged && !targets.contains(&edge),
            });
        }
    }
    Ok(out)
}
