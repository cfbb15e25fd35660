//! Intrinsic Ether dynamics: exponential map, point flows, groupoid
//! translations, inversion of the symplectic fibration and the left lift.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Chart, CotangentVector, Manifold, Point, TangentVector};
use crate::numerics::{self, NewtonOptions};
use crate::starprod::field::FieldSymbol;

/// Settings of the fixed-step RK4 integrator with step doubling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Initial number of steps per unit of flow time (at least 16).
    pub steps_per_unit: usize,
    /// Stop doubling once two successive results differ by less than this.
    pub tol: f64,
    /// Maximum number of step doublings.
    pub max_refinements: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { steps_per_unit: 64, tol: 1e-12, max_refinements: 12 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_unit < 16 {
            return Err(Error::InvalidArgument("steps_per_unit must be at least 16".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("flow tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Piecewise path through the "time" manifold; segments are Ether geodesics.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub waypoints: Vec<Point>,
}

impl PathSpec {
    /// Single geodesic segment from `from` to `to`.
    pub fn segment(from: &Point, to: &Point) -> Self {
        PathSpec { waypoints: vec![from.clone(), to.clone()] }
    }
}

/// Integrates `y' = field(y)` over time `t`, doubling the step count until stable.
pub(crate) fn integrate<F, P>(field: F, post: P, y0: DVector<f64>, t: f64, cfg: &FlowConfig) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    P: Fn(DVector<f64>) -> DVector<f64>,
{
    cfg.validate()?;
    if t == 0.0 {
        return Ok(y0);
    }
    let mut steps = ((cfg.steps_per_unit as f64 * t.abs()).ceil() as usize).max(16);
    let mut prev = numerics::rk4(&field, &post, y0.clone(), t, steps)?;
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_refinements {
        steps *= 2;
        let next = numerics::rk4(&field, &post, y0.clone(), t, steps)?;
        change = (&next - &prev).amax();
        prev = next;
        if change < cfg.tol {
            return Ok(prev);
        }
    }
    if change < 1e3 * cfg.tol {
        return Ok(prev);
    }
    Err(Error::IntegratorDiverged)
}

fn projector(m: &Manifold) -> impl Fn(DVector<f64>) -> DVector<f64> + '_ {
    move |y: DVector<f64>| match m {
        Manifold::Sphere => {
            let n = y.rows(0, 3).norm();
            let mut y = y;
            for i in 0..3 {
                y[i] /= n;
            }
            y
        }
        Manifold::Flat { .. } => y,
    }
}

fn check_tangent(m: &Manifold, x: &Point, v: &TangentVector) -> Result<()> {
    m.check_point(x)?;
    if v.comps.len() != m.ambient_dim() {
        return Err(Error::Dimension { expected: m.ambient_dim(), found: v.comps.len() });
    }
    if v.base.distance(x) > 1e-12 {
        return Err(Error::InvalidArgument("tangent vector is based at a different point".into()));
    }
    if let Manifold::Sphere = m {
        let dot = v.comps.dot(&x.coords);
        if dot.abs() > 1e-12 * v.comps.norm().max(1.0) {
            return Err(Error::InvalidArgument(format!("vector is not tangent: v.x = {dot:e}")));
        }
    }
    Ok(())
}

/// Flow of the Hamiltonian `<H_x(.), v>` from `y` for time `t`.
pub fn flow_point(m: &Manifold, x: &Point, v: &TangentVector, y: &Point, t: f64, cfg: &FlowConfig) -> Result<Point> {
    check_tangent(m, x, v)?;
    m.check_point(y)?;
    let field = |z: &DVector<f64>| m.ether_velocity(x, &v.comps, z);
    let out = integrate(field, projector(m), y.coords.clone(), t, cfg)?;
    Ok(Point::new(out))
}

/// Ether exponential map, scaled so that on flat space `exp_map(x, v) = x + v`.
pub fn exp_map(m: &Manifold, x: &Point, v: &TangentVector, cfg: &FlowConfig) -> Result<Point> {
    flow_point(m, x, v, x, 0.5, cfg)
}

/// Inverse of [`exp_map`] by damped Newton on the frame components of `v`.
pub fn log_map(m: &Manifold, x: &Point, b: &Point, cfg: &FlowConfig) -> Result<TangentVector> {
    m.check_point(x)?;
    m.check_point(b)?;
    let guess = m.geodesic_log(x, b)?;
    let ex = m.frame(x);
    let eb = m.frame(b);
    let to_vec = |c: &DVector<f64>| TangentVector { base: x.clone(), comps: &ex * c };
    let resid = |c: &DVector<f64>| -> Result<DVector<f64>> {
        let p = exp_map(m, x, &to_vec(c), cfg)?;
        Ok(eb.transpose() * (&p.coords - &b.coords))
    };
    let jac = |c: &DVector<f64>| -> Result<DMatrix<f64>> {
        let cols: Result<Vec<DVector<f64>>> = (0..c.len())
            .map(|j| {
                let h = 1e-6;
                let mut cp = c.clone();
                cp[j] += h;
                let mut cm = c.clone();
                cm[j] -= h;
                Ok((resid(&cp)? - resid(&cm)?) / (2.0 * h))
            })
            .collect();
        Ok(DMatrix::from_columns(&cols?))
    };
    let opts = NewtonOptions { residual_tol: 1e-13, ..NewtonOptions::default() };
    let sol = numerics::newton(resid, jac, |c| c, ex.transpose() * guess, opts)?;
    Ok(to_vec(&sol.x))
}

fn segment_velocity(m: &Manifold, p: &Point, w: &DVector<f64>, s: f64) -> DVector<f64> {
    match m {
        Manifold::Flat { .. } => w.clone(),
        Manifold::Sphere => {
            let th = w.norm();
            if th == 0.0 {
                return DVector::zeros(3);
            }
            let what = w / th;
            (&p.coords * (-(s * th).sin()) + what * (s * th).cos()) * th
        }
    }
}

/// Groupoid translation `g_{x,y}(z0)` along a path from `y` to `x`.
pub fn translate(m: &Manifold, path: &PathSpec, z0: &Point, cfg: &FlowConfig) -> Result<Point> {
    m.check_point(z0)?;
    let mut z = z0.clone();
    for pair in path.waypoints.windows(2) {
        let (p, q) = (&pair[0], &pair[1]);
        m.check_point(p)?;
        m.check_point(q)?;
        let w = m.geodesic_log(p, q)?;
        let d = m.ambient_dim();
        let field = |y: &DVector<f64>| {
            let s = y[d];
            let xs = m.geodesic(p, &w, s);
            let xdot = segment_velocity(m, p, &w, s);
            let zdot = m.ether_velocity(&xs, &xdot, &y.rows(0, d).into_owned());
            let mut out = DVector::zeros(d + 1);
            out.rows_mut(0, d).copy_from(&zdot);
            out[d] = 1.0;
            out
        };
        let mut y0 = DVector::zeros(d + 1);
        y0.rows_mut(0, d).copy_from(&z.coords);
        let y = integrate(field, projector(m), y0, 1.0, cfg)?;
        z = Point::new(y.rows(0, d).into_owned());
    }
    Ok(z)
}

/// Ether form components `H_{x(u)}(z)_j` in `chart` at chart point `u`.
pub fn ether_components(m: &Manifold, chart: &Chart, u: &DVector<f64>, z: &Point) -> DVector<f64> {
    let x = chart.point(u);
    chart.covector_components(u, &m.ether_ambient(&x, z))
}

pub(crate) fn ell_invert_ambient(m: &Manifold, x: &Point, eta: &DVector<f64>) -> Result<Point> {
    if eta.norm() >= m.fiber_radius() {
        return Err(Error::OutOfDomain(format!("|eta| = {} exceeds the fiber radius", eta.norm())));
    }
    let chart = m.chart_centered(x);
    let u0 = DVector::zeros(m.dim());
    let target = chart.covector_components(&u0, eta);
    let resid = |u: &DVector<f64>| -> Result<DVector<f64>> {
        let z = chart.point(u);
        Ok(chart.covector_components(&u0, &m.ether_ambient(x, &z)) - &target)
    };
    let jac = |u: &DVector<f64>| -> Result<DMatrix<f64>> {
        let t = chart.tangent_basis(u);
        let cols: Vec<DVector<f64>> = (0..m.dim())
            .map(|k| chart.covector_components(&u0, &m.ether_linear(x, &t.column(k).into_owned())))
            .collect();
        Ok(DMatrix::from_columns(&cols))
    };
    let sol = numerics::newton(resid, jac, |u| u, u0.clone(), NewtonOptions::default())?;
    Ok(chart.point(&sol.x))
}

/// Inverse of the fibration: the point `z` with `H_x(z) = eta`, by Newton from `z = x`.
pub fn ell_invert(m: &Manifold, x: &Point, eta: &CotangentVector) -> Result<Point> {
    m.check_point(x)?;
    if eta.comps.len() != m.ambient_dim() {
        return Err(Error::Dimension { expected: m.ambient_dim(), found: eta.comps.len() });
    }
    ell_invert_ambient(m, x, &eta.comps)
}

/// Order of the left quantum lift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftOrder {
    Classical,
    FirstOrder,
}

/// Left quantum lift `f#(x, eta)` through first order in `hbar`.
///
/// The `O(hbar)` terms are evaluated in the chart centered at `x` by central
/// differences; in the second term the derivative of `H_x(c)` in the
/// subscript is taken with `c = ell(x, eta)` held fixed.
pub fn lift_symbol(
    m: &Manifold,
    f: &FieldSymbol,
    x: &Point,
    eta: &CotangentVector,
    order: LiftOrder,
    hbar: f64,
) -> Result<Complex64> {
    m.check_point(x)?;
    let c0 = ell_invert(m, x, eta)?;
    let base = f.value(&c0.coords);
    if order == LiftOrder::Classical {
        return Ok(base);
    }
    let chart = m.chart_centered(x);
    let d = m.dim();
    let u0 = DVector::zeros(d);
    let eta_c = chart.covector_components(&u0, &eta.comps);
    let h = 1e-3;
    // F(u, eta) = f(ell(x(u), eta)) with eta in chart components at u.
    let lifted = |u: &DVector<f64>, e: &DVector<f64>| -> Result<Complex64> {
        let xu = chart.point(u);
        let amb = chart.covector_ambient(u, e);
        Ok(f.value(&ell_invert_ambient(m, &xu, &amb)?.coords))
    };
    let unit = |k: usize| {
        let mut v = DVector::zeros(d);
        v[k] = h;
        v
    };
    let mut mixed = Complex64::new(0.0, 0.0);
    for k in 0..d {
        let e = unit(k);
        let v = lifted(&(&u0 + &e), &(&eta_c + &e))? - lifted(&(&u0 + &e), &(&eta_c - &e))?
            - lifted(&(&u0 - &e), &(&eta_c + &e))?
            + lifted(&(&u0 - &e), &(&eta_c - &e))?;
        mixed += v / (4.0 * h * h);
    }
    let mut d_eta = DVector::<Complex64>::zeros(d);
    for s in 0..d {
        let e = unit(s);
        d_eta[s] = (lifted(&u0, &(&eta_c + &e))? - lifted(&u0, &(&eta_c - &e))?) / (2.0 * h);
    }
    // G_{ks}(eta) = d/du^k [H_{x(u)}(c(eta))_s] at u = 0.
    let g = |e: &DVector<f64>| -> Result<DMatrix<f64>> {
        let c = ell_invert_ambient(m, x, &chart.covector_ambient(&u0, e))?;
        numerics::jacobian(|u: &DVector<f64>| ether_components(m, &chart, u, &c), &u0, h).map(|j| j.transpose())
    };
    let mut second = Complex64::new(0.0, 0.0);
    for k in 0..d {
        let e = unit(k);
        let dg = (g(&(&eta_c + &e))? - g(&(&eta_c - &e))?) / (2.0 * h);
        for s in 0..d {
            second += d_eta[s] * dg[(k, s)];
        }
    }
    let ih2 = Complex64::new(0.0, hbar / 2.0);
    Ok(base - ih2 * mixed - ih2 * second)
}

/// Zero-curvature residual `max_{j<k} |d_j H_k - d_k H_j + {H_j, H_k}|` at `(x, z)`.
///
/// Derivatives in `x` are central differences with step `h` in the chart
/// centered at `x`; the bracket in `z` is analytic.
pub fn zero_curvature_residual(m: &Manifold, x: &Point, z: &Point, h: f64) -> Result<f64> {
    m.check_point(x)?;
    m.check_point(z)?;
    let chart = m.chart_centered(x);
    let d = m.dim();
    let u0 = DVector::zeros(d);
    let jac: DMatrix<f64> = numerics::jacobian(|u: &DVector<f64>| ether_components(m, &chart, u, z), &u0, h)?;
    let t = chart.tangent_basis(&u0);
    let grads: Vec<DVector<f64>> = (0..d).map(|j| m.ether_pairing_gradient(x, &t.column(j).into_owned())).collect();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        for k in (j + 1)..d {
            // jac[(k, j)] = d H_k / d x^j
            let r = jac[(k, j)] - jac[(j, k)] + m.poisson(z, &grads[j], &grads[k]);
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}
