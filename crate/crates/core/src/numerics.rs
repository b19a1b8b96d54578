//! Eigenvalues, spectral abscissa and a fixed-step Runge–Kutta integrator.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::Trajectory;

/// Eigenvalues of a real matrix together with the largest real part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    #[serde(serialize_with = "ser_complex")]
    pub eigenvalues: Vec<Complex<f64>>,
    pub abscissa: f64,
}

fn ser_complex<S: serde::Serializer>(v: &[Complex<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

impl Spectrum {
    pub fn is_hurwitz(&self) -> bool {
        self.abscissa < 0.0
    }
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues via Hessenberg reduction and shifted QR (real Schur form),
/// sorted by decreasing real part, then decreasing imaginary part.
pub fn spectrum(m: &DMatrix<f64>) -> Result<Spectrum> {
    if m.nrows() != m.ncols() {
        return Err(Error::Validation("eigenvalues need a square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    if m.nrows() == 0 {
        return Ok(Spectrum { eigenvalues: Vec::new(), abscissa: f64::NEG_INFINITY });
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::NoConvergence)?;
    let mut eigenvalues: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let abscissa = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(Spectrum { eigenvalues, abscissa })
}

/// Largest real part of the eigenvalues of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(spectrum(m)?.abscissa)
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<bool> {
    Ok(spectral_abscissa(m)? < 0.0)
}

/// Classic RK4 for `ẋ = f(t, x)` with the step adjusted so that `t1` is hit
/// exactly. `rhs(t, x, out)` writes the derivative into `out`.
///
/// Every `stride`-th step is recorded. A non-finite state stops the run; the
/// returned trajectory then carries the blow-up time.
pub fn rk4<F>(mut rhs: F, x0: &DVector<f64>, t0: f64, t1: f64, h: f64, stride: usize) -> Result<Trajectory>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Validation(format!("step must be positive, got {h}")));
    }
    if !(t1 > t0) {
        return Err(Error::Validation(format!("time span [{t0}, {t1}] is empty")));
    }
    let steps = ((t1 - t0) / h).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let stride = stride.max(1);
    let n = x0.len();
    let mut x = x0.clone();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (DVector::zeros(n), DVector::zeros(n), DVector::zeros(n), DVector::zeros(n), DVector::zeros(n));
    let mut traj = Trajectory::with_capacity(n, steps / stride + 2);
    traj.push(t0, x.clone());
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        rhs(t, &x, &mut k1);
        tmp.copy_from(&x);
        tmp.axpy(0.5 * h, &k1, 1.0);
        rhs(t + 0.5 * h, &tmp, &mut k2);
        tmp.copy_from(&x);
        tmp.axpy(0.5 * h, &k2, 1.0);
        rhs(t + 0.5 * h, &tmp, &mut k3);
        tmp.copy_from(&x);
        tmp.axpy(h, &k3, 1.0);
        rhs(t + h, &tmp, &mut k4);
        for r in 0..n {
            x[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
        }
        let t_next = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * h };
        if x.iter().any(|v| !v.is_finite()) {
            traj.blow_up = Some(t_next);
            return Ok(traj);
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            traj.push(t_next, x.clone());
        }
    }
    Ok(traj)
}

/// Integrates `ẋ = F(t) x` over `[t0, t1]` with fixed step `h`, recording
/// every step.
pub fn integrate_ltv<F>(mut f: F, x0: &DVector<f64>, t0: f64, t1: f64, h: f64) -> Result<Trajectory>
where
    F: FnMut(f64) -> DMatrix<f64>,
{
    rk4(|t, x, out| out.gemv(1.0, &f(t), x, 0.0), x0, t0, t1, h, 1)
}
