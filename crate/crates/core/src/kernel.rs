//! Semiclassical star-product kernel `K = phi exp(i Phi / hbar)`.
//!
//! The midpoints `x, y, z` determine a geodesic triangle `a, b, c` through
//! `c = s_z(b)`, `b = s_y(a)`, `a = s_x(c)`; `b` is a fixed point of
//! `F = s_y o s_x o s_z`. The phase is the symplectic area of the membrane
//! spanned by the three geodesic sides (oriented `a -> b -> c`) and the
//! amplitude is `2^n mu^2 det(I - DF(b))^{-1/2}` with `mu = 2^n`.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ether::ether_components;
use crate::geometry::{Chart, Manifold, Point};
use crate::numerics::{self, NewtonOptions};

/// Threshold on `|det(I - DF)|` below which a triple is focal.
pub const FOCAL_DET: f64 = 1e-10;

/// Vertices of the geodesic triangle with midpoints `x, y, z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleSolution {
    pub x: Point,
    pub y: Point,
    pub z: Point,
    pub a: Point,
    pub b: Point,
    pub c: Point,
    pub branch_id: usize,
    pub newton_iters: usize,
    /// Largest violation of the three reflection relations.
    pub residual: f64,
}

/// One sample of the semiclassical kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub phase: f64,
    pub amplitude: f64,
    pub hbar: f64,
    pub branch_id: usize,
    pub value: Complex64,
}

/// Normalization constant `mu = 2^n`.
pub fn mu(m: &Manifold) -> f64 {
    2f64.powi(m.n() as i32)
}

fn triple_map(m: &Manifold, x: &Point, y: &Point, z: &Point, b: &Point) -> Point {
    m.reflect_unchecked(y, &m.reflect_unchecked(x, &m.reflect_unchecked(z, b)))
}

/// Ambient Jacobian of `s_x` (both built-in reflections are restrictions of linear maps).
fn reflection_matrix(m: &Manifold, x: &Point) -> DMatrix<f64> {
    match m {
        Manifold::Flat { n } => -DMatrix::identity(2 * n, 2 * n),
        Manifold::Sphere => &x.coords * x.coords.transpose() * 2.0 - DMatrix::identity(3, 3),
    }
}

/// `DF(b)` of `F = s_y o s_x o s_z` in the orthonormal frame at `b` (analytic chain rule).
pub fn triple_map_jacobian(m: &Manifold, x: &Point, y: &Point, z: &Point, b: &Point) -> DMatrix<f64> {
    let full = reflection_matrix(m, y) * reflection_matrix(m, x) * reflection_matrix(m, z);
    let e = m.frame(b);
    e.transpose() * full * e
}

/// `det(I - DF(b))`.
pub fn focal_determinant(m: &Manifold, x: &Point, y: &Point, z: &Point, b: &Point) -> f64 {
    let d = m.dim();
    (DMatrix::identity(d, d) - triple_map_jacobian(m, x, y, z, b)).determinant()
}

fn newton_fixed_point(m: &Manifold, x: &Point, y: &Point, z: &Point, seed: &Point) -> Result<(Point, usize)> {
    match m {
        Manifold::Flat { .. } => {
            let resid = |b: &DVector<f64>| Ok(triple_map(m, x, y, z, &Point::new(b.clone())).coords - b);
            let d = m.dim();
            let jac = |_: &DVector<f64>| Ok(-DMatrix::identity(d, d) * 2.0);
            let sol = numerics::newton(resid, jac, |b| b, seed.coords.clone(), NewtonOptions::default())?;
            Ok((Point::new(sol.x), sol.iters))
        }
        Manifold::Sphere => {
            // Newton in the stereographic chart centered at the current iterate,
            // which covers everything but the antipode.
            let mut b = seed.clone();
            for it in 1..=NewtonOptions::default().max_iter {
                let chart = Chart::stereographic(b.v3());
                let u0 = DVector::zeros(2);
                let g = |u: &DVector<f64>| -> DVector<f64> {
                    let p = chart.point(u);
                    let fp = triple_map(m, x, y, z, &p);
                    chart.coords(&fp).unwrap_or_else(|_| DVector::from_element(2, f64::NAN)) - u
                };
                let r = g(&u0);
                if !r.iter().all(|v| v.is_finite()) {
                    return Err(Error::NewtonDiverged { iters: it, residual: f64::INFINITY });
                }
                let jac: DMatrix<f64> = numerics::jacobian(g, &u0, 1e-7)?;
                let step = jac.lu().solve(&(-&r)).ok_or(Error::NewtonDiverged { iters: it, residual: r.norm() })?;
                let mut step = step;
                if step.norm() > 0.5 {
                    step *= 0.5 / step.norm();
                }
                b = chart.point(&step);
                if step.norm() < 1e-12 || r.norm() < 1e-15 {
                    return Ok((b, it));
                }
            }
            let res = triple_map(m, x, y, z, &b).distance(&b);
            if res < 1e-11 {
                return Ok((b, NewtonOptions::default().max_iter));
            }
            Err(Error::NewtonDiverged { iters: NewtonOptions::default().max_iter, residual: res })
        }
    }
}

fn flat_guess(m: &Manifold, x: &Point, y: &Point, z: &Point) -> Point {
    let g = &y.coords - &x.coords + &z.coords;
    match m {
        Manifold::Flat { .. } => Point::new(g),
        Manifold::Sphere => m.project(g).unwrap_or_else(|_| x.clone()),
    }
}

/// All fixed points of `s_y o s_x o s_z`, branch 0 first (the root reached from
/// the flat guess `y - x + z`, or else the root nearest to it). Fails with
/// `FocalTriple` on nonisolated fixed points.
pub fn enumerate_fixed_points(m: &Manifold, x: &Point, y: &Point, z: &Point) -> Result<Vec<(Point, usize)>> {
    m.check_point(x)?;
    m.check_point(y)?;
    m.check_point(z)?;
    let guess = flat_guess(m, x, y, z);
    let mut roots: Vec<(Point, usize)> = Vec::new();
    let mut first_err = None;
    match newton_fixed_point(m, x, y, z, &guess) {
        Ok(r) => roots.push(r),
        Err(e) => first_err = Some(e),
    }
    if let Some((b0, _)) = roots.first() {
        let det = focal_determinant(m, x, y, z, b0);
        if det.abs() <= FOCAL_DET {
            return Err(Error::FocalTriple { det });
        }
    }
    if let Manifold::Sphere = m {
        let mut seeds = vec![Point::new(-&guess.coords)];
        for p in [x, y, z] {
            seeds.push(Point::new(-&p.coords));
            seeds.push(p.clone());
        }
        for k in 0..3 {
            for s in [1.0, -1.0] {
                let mut v = Vector3::zeros();
                v[k] = s;
                seeds.push(Point::from_v3(v));
            }
        }
        let from_guess = !roots.is_empty();
        for seed in seeds {
            if roots.len() == 2 {
                break;
            }
            if let Ok((r, it)) = newton_fixed_point(m, x, y, z, &seed) {
                if roots.iter().all(|(q, _)| q.distance(&r) > 1e-6) {
                    roots.push((r, it));
                }
            }
        }
        if !from_guess {
            roots.sort_by(|(p, _), (q, _)| p.distance(&guess).total_cmp(&q.distance(&guess)));
        }
    }
    let det = focal_determinant(m, x, y, z, roots.first().map_or(&guess, |(b, _)| b));
    if det.abs() <= FOCAL_DET {
        return Err(Error::FocalTriple { det });
    }
    match (roots.is_empty(), first_err) {
        (true, Some(e)) => Err(e),
        _ => Ok(roots),
    }
}

/// Solves the midpoint-triangle relations on the requested branch.
pub fn solve_triangle(m: &Manifold, x: &Point, y: &Point, z: &Point, branch: usize) -> Result<TriangleSolution> {
    let roots = enumerate_fixed_points(m, x, y, z)?;
    let (b, iters) = roots.get(branch).cloned().ok_or(Error::NoSuchBranch(branch))?;
    let c = m.reflect_unchecked(z, &b);
    let a = m.reflect_unchecked(x, &c);
    let residual = m.reflect_unchecked(y, &a).distance(&b);
    Ok(TriangleSolution {
        x: x.clone(),
        y: y.clone(),
        z: z.clone(),
        a,
        b,
        c,
        branch_id: branch,
        newton_iters: iters,
        residual,
    })
}

/// Chart used to carry the membrane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MembraneChart {
    /// Gnomonic when the boundary fits comfortably, stereographic otherwise.
    #[default]
    Auto,
    Gnomonic,
    Stereographic,
}

/// Apex of the fan that fills the membrane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FanApex {
    /// The chart origin.
    #[default]
    Center,
    /// The vertex `a`.
    Vertex,
}

/// Settings for the membrane integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembraneConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub chart: MembraneChart,
    pub apex: FanApex,
}

impl Default for MembraneConfig {
    fn default() -> Self {
        MembraneConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            min_nodes: 8,
            max_nodes: 1024,
            chart: MembraneChart::Auto,
            apex: FanApex::Center,
        }
    }
}

/// The three oriented geodesic sides as `(midpoint, w)` with side `tau -> Exp_mid(tau w)`, `tau in [-1, 1]`.
fn sides(m: &Manifold, tri: &TriangleSolution) -> Result<[(Point, DVector<f64>); 3]> {
    Ok([
        (tri.y.clone(), m.geodesic_log(&tri.y, &tri.b)?),
        (tri.z.clone(), m.geodesic_log(&tri.z, &tri.c)?),
        (tri.x.clone(), m.geodesic_log(&tri.x, &tri.a)?),
    ])
}

fn geodesic_velocity(m: &Manifold, mid: &Point, w: &DVector<f64>, tau: f64) -> DVector<f64> {
    match m {
        Manifold::Flat { .. } => w.clone(),
        Manifold::Sphere => {
            let th = w.norm();
            if th == 0.0 {
                return DVector::zeros(3);
            }
            (&mid.coords * (-(tau * th).sin()) + w / th * (tau * th).cos()) * th
        }
    }
}

/// Chart coordinates and their derivative along a native-coordinate velocity.
fn chart_velocity(chart: &Chart, z: &Point, dz: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let u = chart.coords(z)?;
    let t = chart.tangent_basis(&u);
    // t is injective on the tangent plane; solve t du = dz in least squares.
    let du = (t.transpose() * &t).try_inverse().ok_or(Error::SingularForm)? * (t.transpose() * dz);
    Ok((u, du))
}

fn membrane_chart(m: &Manifold, tri: &TriangleSolution, sides: &[(Point, DVector<f64>); 3], choice: MembraneChart) -> Result<Chart> {
    if let Manifold::Flat { n } = m {
        return Ok(Chart::Linear { dim: 2 * n });
    }
    let mut pts = Vec::new();
    for (mid, w) in sides {
        for i in 0..=32 {
            let tau = -1.0 + 2.0 * i as f64 / 32.0;
            pts.push(m.geodesic(mid, w, tau).v3());
        }
    }
    let sum: Vector3<f64> = pts.iter().sum::<Vector3<f64>>() + tri.x.v3() + tri.y.v3() + tri.z.v3();
    let center = if sum.norm() > 1e-8 { sum.normalize() } else { tri.x.v3() };
    let min_dot = pts.iter().map(|p| p.dot(&center)).fold(f64::INFINITY, f64::min);
    let gnomonic_ok = min_dot > 0.2;
    let stereo_ok = min_dot > -0.95;
    match choice {
        MembraneChart::Gnomonic if min_dot > 0.02 => Ok(Chart::gnomonic(center)),
        MembraneChart::Auto if gnomonic_ok => Ok(Chart::gnomonic(center)),
        MembraneChart::Stereographic | MembraneChart::Auto if stereo_ok => Ok(Chart::stereographic(center)),
        _ => Err(Error::MembraneTooLarge),
    }
}

fn membrane_sum(
    chart: &Chart,
    boundary: &[(Vec<(DVector<f64>, DVector<f64>)>, Vec<f64>)],
    apex: &DVector<f64>,
    s_nodes: &[(f64, f64)],
) -> f64 {
    let mut total = 0.0;
    for (samples, wts) in boundary {
        for ((g, dg), wt) in samples.iter().zip(wts) {
            let side = g - apex;
            for &(s, ws) in s_nodes {
                let sigma = apex + &side * s;
                let om = chart.omega(&sigma);
                total += wt * ws * s * side.dot(&(om * dg));
            }
        }
    }
    total
}

/// Symplectic area of the membrane spanned by the triangle (the kernel phase).
pub fn phase(m: &Manifold, tri: &TriangleSolution, cfg: &MembraneConfig) -> Result<f64> {
    let sides = sides(m, tri)?;
    let chart = membrane_chart(m, tri, &sides, cfg.chart)?;
    let apex = match cfg.apex {
        FanApex::Center => DVector::zeros(chart.dim()),
        FanApex::Vertex => chart.coords(&tri.a)?,
    };
    let mut n = cfg.min_nodes.max(2);
    let mut prev: Option<f64> = None;
    loop {
        let tau_nodes = numerics::gauss_legendre(n, -1.0, 1.0);
        let s_nodes = numerics::gauss_legendre(n, 0.0, 1.0);
        let mut boundary = Vec::with_capacity(3);
        for (mid, w) in &sides {
            let mut samples = Vec::with_capacity(n);
            let mut wts = Vec::with_capacity(n);
            for &(tau, wt) in &tau_nodes {
                let p = m.geodesic(mid, w, tau);
                let v = geodesic_velocity(m, mid, w, tau);
                samples.push(chart_velocity(&chart, &p, &v)?);
                wts.push(wt);
            }
            boundary.push((samples, wts));
        }
        let value = membrane_sum(&chart, &boundary, &apex, &s_nodes);
        if let Some(p) = prev {
            let change = (value - p).abs();
            if change <= cfg.rel_tol * value.abs() || change <= cfg.abs_tol {
                return Ok(value);
            }
        }
        if n >= cfg.max_nodes {
            let change = prev.map(|p| (value - p).abs()).unwrap_or(f64::INFINITY);
            return Err(Error::QuadratureNonConvergence { change, tol: cfg.rel_tol });
        }
        prev = Some(value);
        n *= 2;
    }
}

/// Closed-form flat phase `2 (x - z)^T omega (y - z)`.
pub fn flat_phase(x: &Point, y: &Point, z: &Point) -> f64 {
    let n = x.coords.len() / 2;
    let j = crate::geometry::standard_j(n);
    2.0 * (&x.coords - &z.coords).dot(&(j * (&y.coords - &z.coords)))
}

/// Determinant amplitude `2^n mu^2 |det(I - DF(b))|^{-1/2}`.
pub fn amplitude(m: &Manifold, tri: &TriangleSolution) -> Result<f64> {
    let det = focal_determinant(m, &tri.x, &tri.y, &tri.z, &tri.b);
    if det.abs() <= 1e-12 {
        return Err(Error::FocalTriple { det });
    }
    let mu = mu(m);
    Ok(2f64.powi(m.n() as i32) * mu * mu / det.abs().sqrt())
}

/// Amplitude from the mixed Hessian of the phase, without reflections:
/// `2^n mu^2 (det d_y d_z Phi det omega(b) / (det DH_y(b) det DH_z(b)))^{1/2}`.
pub fn amplitude_reflection_free(m: &Manifold, tri: &TriangleSolution, h: f64, cfg: &MembraneConfig) -> Result<f64> {
    let d = m.dim();
    let cy = m.chart_centered(&tri.y);
    let cz = m.chart_centered(&tri.z);
    let zero = DVector::<f64>::zeros(d);
    let (oy, oz) = (cy.coords(&tri.y)?, cz.coords(&tri.z)?);
    let phi_at = |uy: &DVector<f64>, uz: &DVector<f64>| -> Result<f64> {
        let y = cy.point(&(&oy + uy));
        let z = cz.point(&(&oz + uz));
        let t = solve_near(m, &tri.x, &y, &z, &tri.b)?;
        phase(m, &t, cfg)
    };
    let mut mixed = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut ei = zero.clone();
            ei[i] = h;
            let mut ej = zero.clone();
            ej[j] = h;
            let v = phi_at(&ei, &ej)? - phi_at(&ei, &(-&ej))? - phi_at(&(-&ei), &ej)? + phi_at(&(-&ei), &(-&ej))?;
            mixed[(i, j)] = v / (4.0 * h * h);
        }
    }
    let eb = m.frame(&tri.b);
    let dh = |p: &Point| -> DMatrix<f64> {
        let ep = m.frame(p);
        DMatrix::from_fn(d, d, |j, k| {
            let col = eb.column(k).into_owned();
            ep.column(j).dot(&m.ether_linear(p, &col))
        })
    };
    let omega_b = m.omega_at(&tri.b)?.entries.determinant();
    let ratio = mixed.determinant() * omega_b / (dh(&tri.y).determinant() * dh(&tri.z).determinant());
    let mu = mu(m);
    Ok(2f64.powi(m.n() as i32) * mu * mu * ratio.abs().sqrt())
}

/// Triangle for perturbed midpoints, continued from a nearby fixed point `b_hint`.
pub(crate) fn solve_near(m: &Manifold, x: &Point, y: &Point, z: &Point, b_hint: &Point) -> Result<TriangleSolution> {
    let (b, iters) = newton_fixed_point(m, x, y, z, b_hint)?;
    let c = m.reflect_unchecked(z, &b);
    let a = m.reflect_unchecked(x, &c);
    let residual = m.reflect_unchecked(y, &a).distance(&b);
    Ok(TriangleSolution { x: x.clone(), y: y.clone(), z: z.clone(), a, b, c, branch_id: 0, newton_iters: iters, residual })
}

/// Semiclassical kernel sample on the requested branch.
pub fn kernel_value(m: &Manifold, x: &Point, y: &Point, z: &Point, hbar: f64, branch: usize) -> Result<KernelValue> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidArgument("hbar must be positive".into()));
    }
    let tri = solve_triangle(m, x, y, z, branch)?;
    let ph = phase(m, &tri, &MembraneConfig::default())?;
    let amp = amplitude(m, &tri)?;
    Ok(KernelValue {
        phase: ph,
        amplitude: amp,
        hbar,
        branch_id: branch,
        value: Complex64::from_polar(amp, ph / hbar),
    })
}

/// Largest component of `dPhi - (H_x(a) + H_y(b) + H_z(c))`, with `dPhi` by
/// central differences of step `h` in the charts centered at `x`, `y` and `z`.
pub fn phase_gradient_residual(m: &Manifold, x: &Point, y: &Point, z: &Point, h: f64) -> Result<f64> {
    let tri = solve_triangle(m, x, y, z, 0)?;
    let cfg = MembraneConfig { rel_tol: 1e-13, abs_tol: 1e-13, ..MembraneConfig::default() };
    let d = m.dim();
    let zero = DVector::<f64>::zeros(d);
    let mut worst: f64 = 0.0;
    for slot in 0..3 {
        let (p, vertex) = match slot {
            0 => (x, &tri.a),
            1 => (y, &tri.b),
            _ => (z, &tri.c),
        };
        let chart = m.chart_centered(p);
        let origin = chart.coords(p)?;
        let expected = ether_components(m, &chart, &origin, vertex);
        for j in 0..d {
            let mut e = zero.clone();
            e[j] = h;
            let eval = |u: &DVector<f64>| -> Result<f64> {
                let q = chart.point(&(&origin + u));
                let (xx, yy, zz) = match slot {
                    0 => (&q, y, z),
                    1 => (x, &q, z),
                    _ => (x, y, &q),
                };
                phase(m, &solve_near(m, xx, yy, zz, &tri.b)?, &cfg)
            };
            let fd = (eval(&e)? - eval(&(-&e))?) / (2.0 * h);
            worst = worst.max((fd - expected[j]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        Point::from_slice(v)
    }

    fn sp(v: &[f64]) -> Point {
        Manifold::Sphere.project(DVector::from_column_slice(v)).unwrap()
    }

    #[test]
    fn flat_triangle_example() {
        let m = Manifold::Flat { n: 1 };
        let t = solve_triangle(&m, &p(&[0.0, 0.0]), &p(&[1.0, 0.0]), &p(&[0.0, 1.0]), 0).unwrap();
        assert!(t.b.distance(&p(&[1.0, 1.0])) < 1e-14);
        assert!(t.a.distance(&p(&[1.0, -1.0])) < 1e-14);
        assert!(t.c.distance(&p(&[-1.0, 1.0])) < 1e-14);
        let ph = phase(&m, &t, &MembraneConfig::default()).unwrap();
        assert!((ph - 2.0).abs() < 1e-13);
        assert!((flat_phase(&t.x, &t.y, &t.z) - 2.0).abs() < 1e-15);
        assert!((amplitude(&m, &t).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(solve_triangle(&m, &t.x, &t.y, &t.z, 1), Err(Error::NoSuchBranch(1))));
    }

    #[test]
    fn degenerate_triples() {
        let m = Manifold::Flat { n: 2 };
        let x = p(&[0.3, -0.2, 1.0, 0.5]);
        let t = solve_triangle(&m, &x, &x, &x, 0).unwrap();
        assert!(t.a.distance(&x) < 1e-15 && t.b.distance(&x) < 1e-15 && t.c.distance(&x) < 1e-15);
        assert!((amplitude(&m, &t).unwrap() - 16.0).abs() < 1e-12);
        let s = Manifold::Sphere;
        let x = sp(&[0.2, 0.3, 0.9]);
        let t = solve_triangle(&s, &x, &x, &x, 0).unwrap();
        assert!((amplitude(&s, &t).unwrap() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn sphere_has_two_branches_and_focal_triad() {
        let s = Manifold::Sphere;
        let (x, y, z) = (sp(&[0.1, 0.2, 0.95]), sp(&[0.4, -0.1, 0.9]), sp(&[-0.2, 0.3, 0.9]));
        let roots = enumerate_fixed_points(&s, &x, &y, &z).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0].0.coords.clone() + &roots[1].0.coords).norm() < 1e-9);
        for br in 0..2 {
            let t = solve_triangle(&s, &x, &y, &z, br).unwrap();
            assert!(t.residual < 1e-9);
            let a = amplitude(&s, &t).unwrap();
            assert!(a.is_finite() && a > 0.0);
        }
        let r = solve_triangle(&s, &p(&[1.0, 0.0, 0.0]), &p(&[0.0, 0.0, 1.0]), &p(&[0.0, 1.0, 0.0]), 0);
        assert!(matches!(r, Err(Error::FocalTriple { .. })));
    }

    #[test]
    fn sphere_phase_properties() {
        let s = Manifold::Sphere;
        let cfg = MembraneConfig::default();
        let (x, y, z) = (sp(&[0.1, 0.2, 0.95]), sp(&[0.5, -0.1, 0.8]), sp(&[-0.3, 0.4, 0.85]));
        let phi = |a: &Point, b: &Point, c: &Point| phase(&s, &solve_triangle(&s, a, b, c, 0).unwrap(), &cfg).unwrap();
        let p0 = phi(&x, &y, &z);
        assert!((p0 + phi(&y, &x, &z)).abs() < 1e-8);
        assert!((p0 - phi(&z, &x, &y)).abs() < 1e-8);
        assert!(phi(&x, &x, &z).abs() < 1e-10);
        let t = solve_triangle(&s, &x, &y, &z, 0).unwrap();
        let alt = MembraneConfig { chart: MembraneChart::Stereographic, apex: FanApex::Vertex, ..cfg };
        assert!((phase(&s, &t, &alt).unwrap() - p0).abs() < 1e-9);
    }

    #[test]
    fn phase_gradient_matches_ether_forms() {
        let f = Manifold::Flat { n: 1 };
        let r = phase_gradient_residual(&f, &p(&[0.1, 0.3]), &p(&[-0.5, 0.2]), &p(&[0.7, -0.4]), 1e-5).unwrap();
        assert!(r < 1e-6);
        let s = Manifold::Sphere;
        let r = phase_gradient_residual(&s, &sp(&[0.1, 0.2, 0.95]), &sp(&[0.5, -0.1, 0.8]), &sp(&[-0.3, 0.4, 0.85]), 1e-4).unwrap();
        assert!(r < 1e-4, "residual {r:e}");
    }

    #[test]
    fn reflection_free_amplitude_agrees() {
        let s = Manifold::Sphere;
        let t = solve_triangle(&s, &sp(&[0.1, 0.2, 0.95]), &sp(&[0.5, -0.1, 0.8]), &sp(&[-0.3, 0.4, 0.85]), 0).unwrap();
        let cfg = MembraneConfig { rel_tol: 1e-14, abs_tol: 1e-15, ..MembraneConfig::default() };
        let a = amplitude(&s, &t).unwrap();
        let b = amplitude_reflection_free(&s, &t, 1e-3, &cfg).unwrap();
        assert!((a - b).abs() / a < 1e-5, "{a} vs {b}");
        let f = Manifold::Flat { n: 1 };
        let t = solve_triangle(&f, &p(&[0.1, 0.3]), &p(&[-0.5, 0.2]), &p(&[0.7, -0.4]), 0).unwrap();
        assert!((amplitude_reflection_free(&f, &t, 1e-3, &cfg).unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn kernel_value_properties() {
        let f = Manifold::Flat { n: 1 };
        let (x, y, z) = (p(&[0.1, 0.3]), p(&[-0.5, 0.2]), p(&[0.7, -0.4]));
        let k = kernel_value(&f, &x, &y, &z, 0.2, 0).unwrap();
        let expect = Complex64::from_polar(4.0, flat_phase(&x, &y, &z) / 0.2);
        assert!((k.value - expect).norm() < 1e-10);
        let kd = kernel_value(&f, &y, &y, &z, 0.2, 0).unwrap();
        assert!((kd.value - Complex64::new(4.0, 0.0)).norm() < 1e-12);
        let kr = kernel_value(&f, &y, &x, &z, 0.2, 0).unwrap();
        assert!((kr.value - k.value.conj()).norm() < 1e-9);
        assert!(kernel_value(&f, &x, &y, &z, 0.0, 0).is_err());
    }
}
