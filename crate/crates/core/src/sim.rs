//! Time-domain simulation of the vibrated system `ẋ = (A + V(t/ε)/ε) x` and
//! of its average `ẋ̄ = Ā x̄`, plus the comparisons and verdicts built on them.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::avg::{averaged, AveragingMethod, NumericOptions};
use crate::error::{Error, Result};
use crate::netcore::NetworkSystem;
use crate::numerics::{rk4, spectral_abscissa};
use crate::synth::VibrationPlan;

/// Sampled solution. Times are strictly increasing and in slow time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Time at which the state stopped being finite; the samples end there.
    pub blow_up: Option<f64>,
}

impl Trajectory {
    pub fn with_capacity(_n: usize, cap: usize) -> Self {
        Trajectory { times: Vec::with_capacity(cap), states: Vec::with_capacity(cap), blow_up: None }
    }

    pub fn push(&mut self, t: f64, x: DVector<f64>) {
        debug_assert!(self.times.last().is_none_or(|&l| t > l));
        self.times.push(t);
        self.states.push(x);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    /// Errors with [`Error::NonFinite`] if the run blew up.
    pub fn check(&self) -> Result<&Self> {
        match self.blow_up {
            Some(time) => Err(Error::NonFinite { time }),
            None => Ok(self),
        }
    }

    /// `‖x(T)‖ / ‖x(0)‖`, infinite after a blow-up.
    pub fn norm_ratio(&self) -> f64 {
        if self.blow_up.is_some() {
            return f64::INFINITY;
        }
        match (self.states.first(), self.states.last()) {
            (Some(a), Some(b)) if a.norm() > 0.0 => b.norm() / a.norm(),
            _ => f64::NAN,
        }
    }

    /// Linear interpolation at `t`, `None` outside the sampled span.
    pub fn at(&self, t: f64) -> Option<DVector<f64>> {
        let (&t0, &t1) = (self.times.first()?, self.times.last()?);
        let slack = 1e-12 * t1.abs().max(1.0);
        if t < t0 - slack || t > t1 + slack {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Some(self.states[0].clone());
        }
        if k >= self.len() {
            return Some(self.states[self.len() - 1].clone());
        }
        let (ta, tb) = (self.times[k - 1], self.times[k]);
        let w = (t - ta) / (tb - ta);
        Some(&self.states[k - 1] * (1.0 - w) + &self.states[k] * w)
    }

    /// `t,x1,...,xn` with one row per sample.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 1..=self.dim() {
            let _ = write!(s, ",x{k}");
        }
        s.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            let _ = write!(s, "{t:.10e}");
            for v in x.iter() {
                let _ = write!(s, ",{v:.10e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Smallest `ε` accepted; the cost of a full simulation grows like `1/ε`.
pub const MIN_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// RK4 steps per period of the fastest vibration (slow time `2πε/β`).
    pub steps_per_period: usize,
    /// Step for unvibrated and averaged runs.
    pub averaged_step: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { steps_per_period: 40, averaged_step: 1e-2 }
    }
}

fn check_run(sys: &NetworkSystem, x0: &DVector<f64>, horizon: f64) -> Result<()> {
    if x0.len() != sys.n() {
        return Err(Error::Validation(format!("initial state has {} entries, network {} nodes", x0.len(), sys.n())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("initial state is not finite".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps < MIN_EPSILON {
        return Err(Error::Validation(format!("epsilon {eps} is below the supported minimum {MIN_EPSILON}")));
    }
    Ok(())
}

/// Step for the full system.
pub fn full_step(plan: &VibrationPlan, opts: &SimOptions) -> f64 {
    match plan.max_frequency() {
        Some(b) => (plan.epsilon * std::f64::consts::TAU / b / opts.steps_per_period.max(4) as f64).min(opts.averaged_step),
        None => opts.averaged_step,
    }
}

/// Integrates the vibrated system from `x0` over `[0, horizon]`.
pub fn simulate_full(sys: &NetworkSystem, plan: &VibrationPlan, x0: &DVector<f64>, horizon: f64, opts: &SimOptions) -> Result<Trajectory> {
    check_run(sys, x0, horizon)?;
    plan.validate_for(sys)?;
    check_epsilon(plan.epsilon)?;
    let a = sys.matrix().clone();
    let eps = plan.epsilon;
    let entries: Vec<(usize, usize, f64, f64, f64)> =
        plan.entries.iter().map(|e| (e.row.idx(), e.col.idx(), e.amplitude / eps, e.frequency / eps, e.phase)).collect();
    rk4(
        |t, x, out| {
            out.gemv(1.0, &a, x, 0.0);
            for &(r, c, u, b, ph) in &entries {
                out[r] += u * (b * t + ph).sin() * x[c];
            }
        },
        x0,
        0.0,
        horizon,
        full_step(plan, opts),
        1,
    )
}

/// Integrates `ẋ̄ = Ā x̄` from `x0` over `[0, horizon]`.
pub fn simulate_averaged(a_bar: &DMatrix<f64>, x0: &DVector<f64>, horizon: f64, opts: &SimOptions) -> Result<Trajectory> {
    if !a_bar.is_square() || a_bar.nrows() != x0.len() {
        return Err(Error::Validation("averaged matrix and initial state disagree in size".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
    }
    rk4(|_, x, out| out.gemv(1.0, a_bar, x, 0.0), x0, 0.0, horizon, opts.averaged_step, 1)
}

/// Largest Euclidean distance between the two runs, with `full` linearly
/// interpolated onto the grid of `averaged`.
pub fn compare(full: &Trajectory, averaged: &Trajectory) -> Result<f64> {
    if full.is_empty() || averaged.is_empty() {
        return Err(Error::GridMismatch("empty trajectory".into()));
    }
    if full.dim() != averaged.dim() {
        return Err(Error::GridMismatch(format!("dimensions {} and {}", full.dim(), averaged.dim())));
    }
    let mut sup = 0.0f64;
    for (t, y) in averaged.times.iter().zip(&averaged.states) {
        let x = full.at(*t).ok_or_else(|| Error::GridMismatch(format!("t = {t} lies outside the full run")))?;
        sup = sup.max((x - y).norm());
    }
    Ok(sup)
}

/// Sup-norm error of the averaged approximation over `[0, horizon]`.
///
/// `x` itself carries a ripple `N(t/ε) x` of size independent of `ε`; the
/// approximation statement is about the demodulated state
/// `z(t) = Ψ⁻¹(t/ε) x(t)`, which is compared with `x̄(t)` started from
/// `Ψ⁻¹(0) x0`. Everything is integrated together on one grid.
pub fn approximation_error(
    sys: &NetworkSystem,
    plan: &VibrationPlan,
    a_bar: &DMatrix<f64>,
    x0: &DVector<f64>,
    horizon: f64,
    opts: &SimOptions,
) -> Result<f64> {
    check_run(sys, x0, horizon)?;
    plan.validate_for(sys)?;
    check_epsilon(plan.epsilon)?;
    let n = sys.n();
    let a = sys.matrix().clone();
    let eps = plan.epsilon;
    let entries: Vec<(usize, usize, f64, f64, f64)> =
        plan.entries.iter().map(|e| (e.row.idx(), e.col.idx(), e.amplitude / eps, e.frequency / eps, e.phase)).collect();
    let nilpotent = plan.is_nilpotent();

    // Ψ(0) = I − Σ (u/β) cos φ E
    let mut psi0 = DMatrix::<f64>::identity(n, n);
    for e in &plan.entries {
        psi0[e.pos()] -= e.ratio() * e.phase.cos();
    }
    let psi0_inv = psi0.clone().try_inverse().ok_or(Error::SingularFundamental { time: 0.0 })?;
    let xbar0 = &psi0_inv * x0;

    // state: [x; x̄; vec Ψ (column-major)] when Ψ must be integrated
    let dim = if nilpotent { 2 * n } else { 2 * n + n * n };
    let mut s0 = DVector::zeros(dim);
    s0.rows_mut(0, n).copy_from(x0);
    s0.rows_mut(n, n).copy_from(&xbar0);
    if !nilpotent {
        s0.rows_mut(2 * n, n * n).copy_from_slice(psi0.as_slice());
    }
    let traj = rk4(
        |t, s, out| {
            out.fill(0.0);
            let x = s.rows(0, n);
            let xb = s.rows(n, n);
            out.rows_mut(0, n).gemv(1.0, &a, &x, 0.0);
            out.rows_mut(n, n).gemv(1.0, a_bar, &xb, 0.0);
            for &(r, c, u, b, ph) in &entries {
                let v = u * (b * t + ph).sin();
                out[r] += v * s[c];
                if !nilpotent {
                    // Ψ' = V Ψ / ε, row r of Ψ gains v · row c
                    for col in 0..n {
                        out[2 * n + col * n + r] += v * s[2 * n + col * n + c];
                    }
                }
            }
        },
        &s0,
        0.0,
        horizon,
        full_step(plan, opts),
        1,
    )?;
    traj.check()?;
    let mut sup = 0.0f64;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let x = s.rows(0, n).into_owned();
        let xb = s.rows(n, n).into_owned();
        let z = if nilpotent {
            // Ψ⁻¹ = I − N = I + Σ (u/β) cos(βt/ε + φ) E
            let mut z = x.clone();
            for e in &plan.entries {
                z[e.row.idx()] += e.ratio() * (e.frequency * t / eps + e.phase).cos() * x[e.col.idx()];
            }
            z
        } else {
            let psi = DMatrix::from_column_slice(n, n, s.rows(2 * n, n * n).as_slice());
            psi.lu().solve(&x).ok_or(Error::SingularFundamental { time: *t / eps })?
        };
        sup = sup.max((z - xb).norm());
    }
    Ok(sup)
}

/// Approximation error for a series of `ε` at a fixed horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxErrorCurve {
    pub horizon: f64,
    /// `(ε, sup-norm error)` in the order given.
    pub points: Vec<(f64, f64)>,
}

impl ApproxErrorCurve {
    /// Errors strictly decrease as `ε` decreases.
    pub fn is_strictly_decreasing(&self) -> bool {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        pts.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,error\n");
        for (e, err) in &self.points {
            let _ = writeln!(s, "{e:.10e},{err:.10e}");
        }
        s
    }
}

/// Runs [`approximation_error`] for every `ε`, reusing the rest of `plan`.
pub fn epsilon_sweep(
    sys: &NetworkSystem,
    plan: &VibrationPlan,
    epsilons: &[f64],
    x0: &DVector<f64>,
    horizon: f64,
    opts: &SimOptions,
) -> Result<ApproxErrorCurve> {
    let a_bar = averaged(sys, plan, &NumericOptions::default())?.a_bar;
    let points = epsilons
        .iter()
        .map(|&eps| {
            let p = VibrationPlan { epsilon: eps, ..plan.clone() };
            Ok((eps, approximation_error(sys, &p, &a_bar, x0, horizon, opts)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ApproxErrorCurve { horizon, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictOptions {
    pub horizon: f64,
    /// Decay means `‖x(T)‖ / ‖x(0)‖` below this.
    pub decay_threshold: f64,
    /// Defaults to all ones.
    pub x0: Option<Vec<f64>>,
    pub sim: SimOptions,
    pub numeric: NumericOptions,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        VerdictOptions {
            horizon: 10.0,
            decay_threshold: 0.1,
            x0: None,
            sim: SimOptions::default(),
            numeric: NumericOptions::default(),
        }
    }
}

impl VerdictOptions {
    pub fn initial_state(&self, n: usize) -> Result<DVector<f64>> {
        match &self.x0 {
            Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            Some(v) => Err(Error::Validation(format!("initial state has {} entries, network {n} nodes", v.len()))),
            None => Ok(DVector::from_element(n, 1.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub abscissa_a_bar: f64,
    pub decay_observed: bool,
    pub final_over_initial_norm: f64,
    pub epsilon_used: f64,
    pub horizon: f64,
    pub method: AveragingMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blow_up: Option<f64>,
}

impl StabilityVerdict {
    /// Stable on average and decaying in simulation.
    pub fn passed(&self) -> bool {
        self.abscissa_a_bar < 0.0 && self.decay_observed
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

/// Averages the plan, checks `Ā` for stability and simulates the full system.
pub fn verdict(sys: &NetworkSystem, plan: &VibrationPlan, opts: &VerdictOptions) -> Result<StabilityVerdict> {
    let avg = averaged(sys, plan, &opts.numeric)?;
    let abscissa = spectral_abscissa(&avg.a_bar)?;
    let x0 = opts.initial_state(sys.n())?;
    let traj = simulate_full(sys, plan, &x0, opts.horizon, &opts.sim)?;
    let ratio = traj.norm_ratio();
    Ok(StabilityVerdict {
        abscissa_a_bar: abscissa,
        decay_observed: ratio < opts.decay_threshold,
        final_over_initial_norm: ratio,
        epsilon_used: plan.epsilon,
        horizon: opts.horizon,
        method: avg.method,
        blow_up: traj.blow_up,
    })
}
