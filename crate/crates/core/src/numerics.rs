//! Small numerical building blocks shared by the geometric modules:
//! central finite differences, a damped Newton solver, Gauss rules and
//! least-squares order fits.

use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLegendre};
use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

/// Default step for first derivatives.
pub const FD_STEP_1: f64 = 1e-5;
/// Default step for second derivatives.
pub const FD_STEP_2: f64 = 1e-3;

fn check_step(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 1e-14) {
        return Err(Error::StepUnderflow(h));
    }
    Ok(())
}

/// Central-difference gradient of a scalar function.
pub fn gradient<T, F>(f: F, x: &DVector<f64>, h: f64) -> Result<DVector<T>>
where
    T: ComplexField<RealField = f64> + Copy,
    F: Fn(&DVector<f64>) -> T,
{
    check_step(h)?;
    let n = x.len();
    let mut g = DVector::<T>::zeros(n);
    let mut xp = x.clone();
    for i in 0..n {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) * T::from_real(0.5 / h);
    }
    Ok(g)
}

/// Central-difference Jacobian `J[i][j] = d f_i / d x_j`.
pub fn jacobian<T, F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64> + Copy,
    F: Fn(&DVector<f64>) -> DVector<T>,
{
    check_step(h)?;
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut xp = x.clone();
    for j in 0..n {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        cols.push((fp - fm) * T::from_real(0.5 / h));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Central-difference Hessian of a scalar function.
pub fn hessian<T, F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64> + Copy,
    F: Fn(&DVector<f64>) -> T,
{
    check_step(h)?;
    let n = x.len();
    let mut hm = DMatrix::<T>::zeros(n, n);
    let f0 = f(x);
    let mut xp = x.clone();
    for i in 0..n {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        hm[(i, i)] = (fp - f0 - f0 + fm) * T::from_real(1.0 / (h * h));
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h;
                xp[j] = x[j] + sj * h;
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                * T::from_real(0.25 / (h * h));
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    Ok(hm)
}

/// Settings for [`newton`].
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence is declared once the step norm drops below this value.
    pub step_tol: f64,
    /// Residual norm accepted as converged even if the step is still larger.
    pub residual_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { max_iter: 50, step_tol: 1e-12, residual_tol: 1e-14 }
    }
}

/// Outcome of a Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub x: DVector<f64>,
    pub iters: usize,
    pub residual: f64,
}

/// Damped Newton iteration for `f(x) = 0`.
///
/// The full step is halved until the residual norm does not increase.
/// `retract` maps a trial point back onto the admissible set (identity for
/// unconstrained problems).
pub fn newton<F, J, R>(
    f: F,
    jac: J,
    retract: R,
    x0: DVector<f64>,
    opts: NewtonOptions,
) -> Result<NewtonResult>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
    R: Fn(DVector<f64>) -> DVector<f64>,
{
    let mut x = x0;
    let mut r = f(&x)?;
    let mut rn = r.norm();
    for it in 1..=opts.max_iter {
        if rn <= opts.residual_tol {
            return Ok(NewtonResult { x, iters: it - 1, residual: rn });
        }
        let jm = jac(&x)?;
        let step = jm
            .lu()
            .solve(&(-&r))
            .ok_or(Error::NewtonDiverged { iters: it, residual: rn })?;
        let sn = step.norm();
        if !sn.is_finite() {
            return Err(Error::NewtonDiverged { iters: it, residual: rn });
        }
        let mut lambda = 1.0;
        let (mut xn, mut rnew, mut rnn);
        loop {
            xn = retract(&x + &step * lambda);
            rnew = f(&xn)?;
            rnn = rnew.norm();
            if rnn <= rn || lambda < 1e-4 {
                break;
            }
            lambda *= 0.5;
        }
        x = xn;
        r = rnew;
        rn = rnn;
        if sn * lambda < opts.step_tol {
            return Ok(NewtonResult { x, iters: it, residual: rn });
        }
    }
    if rn <= 1e3 * opts.residual_tol.max(1e-13) {
        return Ok(NewtonResult { x, iters: opts.max_iter, residual: rn });
    }
    Err(Error::NewtonDiverged { iters: opts.max_iter, residual: rn })
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    let (c, s) = (0.5 * (a + b), 0.5 * (b - a));
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (c + s * x, s * w)).collect()
}

/// Gauss-Hermite rule for the weight `exp(-x^2 / (2 sigma^2))`.
pub fn gauss_hermite_scaled(n: usize, sigma: f64) -> Vec<(f64, f64)> {
    let rule = GaussHermite::new(NonZeroUsize::new(n.max(1)).unwrap());
    let s = std::f64::consts::SQRT_2 * sigma;
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (s * x, s * w)).collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// One classical Runge-Kutta step of size `h` for `y' = f(y)`.
pub fn rk4_step<F>(f: &F, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (0.5 * h)));
    let k3 = f(&(y + &k2 * (0.5 * h)));
    let k4 = f(&(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Fixed-step classical Runge-Kutta integration of `y' = f(y)`.
///
/// `post` is applied after every step (used to project back onto a constraint).
pub fn rk4<F, P>(f: F, post: P, y0: DVector<f64>, t: f64, steps: usize) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    P: Fn(DVector<f64>) -> DVector<f64>,
{
    let h = t / steps as f64;
    let mut y = y0;
    for _ in 0..steps {
        y = post(rk4_step(&f, &y, h));
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegratorDiverged);
        }
    }
    Ok(y)
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos(theta)` times the
/// uniform rule in `phi`. Weights are area weights (they sum to `4 pi`).
pub fn sphere_product_grid(n_theta: usize, n_phi: usize) -> Vec<(nalgebra::Vector3<f64>, f64)> {
    let mut out = Vec::with_capacity(n_theta * n_phi);
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    for (c, w) in gauss_legendre(n_theta, -1.0, 1.0) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            out.push((nalgebra::Vector3::new(s * phi.cos(), s * phi.sin(), c), w * dphi));
        }
    }
    out
}
