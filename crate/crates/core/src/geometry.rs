//! Symplectic models: flat phase space and the unit sphere.
//!
//! Conventions (fixed once, used everywhere):
//!
//! * Flat points are Darboux coordinates `(q_1..q_n, p_1..p_n)` and the
//!   symplectic matrix is `omega = J = [[0, I], [-I, 0]]`, so that
//!   `omega(u, w) = u^T J w` is `dq ^ dp`.
//! * The Poisson tensor is `Psi = omega^{-1} = -J`, the bracket is
//!   `{f, g} = df . Psi . dg` (hence `{q, p} = -1`) and the Hamiltonian
//!   vector field of `h` is `dz/dt = Psi^T grad h = J grad h`.
//! * Sphere points are unit vectors of R^3. The area form is
//!   `omega_z(u, w) = -z . (u x w)`, the bracket `{f, g}(z) = z . (grad f x grad g)`
//!   and the Hamiltonian field `dz/dt = z x grad h`.
//! * The Ether form is `H_x(z) = 2 omega (z - x)` on flat space and the
//!   ambient covector `2 (x x z)` on the sphere.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Tolerance for the unit-norm constraint of sphere points.
pub const SPHERE_TOL: f64 = 1e-12;

/// A point of a model, stored in its native coordinates
/// (flat: `2n` Darboux coordinates, sphere: a unit vector of R^3).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point {
    pub coords: DVector<f64>,
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point { coords: DVector::from_vec(v) }
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.coords.as_slice().to_vec()
    }
}

impl Point {
    pub fn new(coords: DVector<f64>) -> Self {
        Point { coords }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Point { coords: DVector::from_column_slice(s) }
    }

    pub(crate) fn from_v3(v: Vector3<f64>) -> Self {
        Point { coords: DVector::from_column_slice(v.as_slice()) }
    }

    pub(crate) fn v3(&self) -> Vector3<f64> {
        Vector3::new(self.coords[0], self.coords[1], self.coords[2])
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (&self.coords - &other.coords).norm()
    }
}

/// Tangent vector at `base`; sphere components are ambient and orthogonal to the base.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub comps: DVector<f64>,
}

/// Cotangent vector at `base`; sphere components are the ambient representative with `eta . x = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CotangentVector {
    pub base: Point,
    pub comps: DVector<f64>,
}

/// Matrix of a 2-form in a chart or frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FormMatrix {
    pub entries: DMatrix<f64>,
}

impl FormMatrix {
    pub fn antisymmetry_defect(&self) -> f64 {
        (&self.entries + self.entries.transpose()).amax()
    }
}

/// Connection coefficients `Gamma^l_{jk}`, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Christoffel { dim, data: vec![0.0; dim * dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Gamma^l_{jk}`.
    pub fn get(&self, l: usize, j: usize, k: usize) -> f64 {
        self.data[(l * self.dim + j) * self.dim + k]
    }

    pub fn set(&mut self, l: usize, j: usize, k: usize, v: f64) {
        self.data[(l * self.dim + j) * self.dim + k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_diff(&self, other: &Christoffel) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |a, (u, v)| a.max((u - v).abs()))
    }

    /// Largest violation of `Gamma^l_{jk} = Gamma^l_{kj}`.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for l in 0..d {
            for j in 0..d {
                for k in 0..d {
                    m = m.max((self.get(l, j, k) - self.get(l, k, j)).abs());
                }
            }
        }
        m
    }
}

/// The built-in symplectic models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Manifold {
    /// Flat phase space R^{2n} with Darboux coordinates.
    Flat { n: usize },
    /// Unit sphere with the unit area form.
    Sphere,
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Flat { n } => write!(f, "flat:{n}"),
            Manifold::Sphere => write!(f, "sphere"),
        }
    }
}

impl FromStr for Manifold {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "sphere" {
            return Ok(Manifold::Sphere);
        }
        if let Some(rest) = s.strip_prefix("flat:") {
            if let Ok(n) = rest.parse::<usize>() {
                if n >= 1 {
                    return Ok(Manifold::Flat { n });
                }
            }
        }
        Err(Error::BadManifold(s.to_string()))
    }
}

impl TryFrom<String> for Manifold {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Manifold> for String {
    fn from(m: Manifold) -> String {
        m.to_string()
    }
}

/// Standard symplectic matrix `[[0, I], [-I, 0]]` of size `2n`.
pub fn standard_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Orthonormal tangent frame `(e1, e2)` at a unit vector, built from the
/// coordinate axis on which `p` has the smallest component; `e2 = p x e1`.
pub fn sphere_frame(p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let mut i = 0;
    for k in 1..3 {
        if p[k].abs() < p[i].abs() {
            i = k;
        }
    }
    let mut a = Vector3::zeros();
    a[i] = 1.0;
    let e1 = (a - p * a.dot(p)).normalize();
    let e2 = p.cross(&e1);
    (e1, e2)
}

impl Manifold {
    pub fn flat(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::BadManifold("flat:0".into()));
        }
        Ok(Manifold::Flat { n })
    }

    /// Degrees of freedom.
    pub fn n(&self) -> usize {
        match self {
            Manifold::Flat { n } => *n,
            Manifold::Sphere => 1,
        }
    }

    /// Chart dimension `2n`.
    pub fn dim(&self) -> usize {
        2 * self.n()
    }

    /// Length of the native coordinate vector.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Flat { n } => 2 * n,
            Manifold::Sphere => 3,
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, Manifold::Sphere)
    }

    pub fn has_analytic_reflection(&self) -> bool {
        true
    }

    /// Integral of the first Chern class, carried as model metadata.
    pub fn chern_integral(&self) -> Option<i64> {
        match self {
            Manifold::Flat { .. } => None,
            Manifold::Sphere => Some(2),
        }
    }

    /// Radius of the fiber ball on which `ell_invert` is well defined.
    pub fn fiber_radius(&self) -> f64 {
        match self {
            Manifold::Flat { .. } => f64::INFINITY,
            Manifold::Sphere => 2.0,
        }
    }

    /// Density of the Liouville measure with respect to chart coordinates.
    pub fn liouville_density(&self, chart: &Chart, u: &DVector<f64>) -> f64 {
        let w = chart.omega(u);
        // |Pf omega| = sqrt(det omega) for antisymmetric omega.
        w.determinant().abs().sqrt()
    }

    /// Validates that `z` lies on the model.
    pub fn check_point(&self, z: &Point) -> Result<()> {
        let d = self.ambient_dim();
        if z.coords.len() != d {
            return Err(Error::Dimension { expected: d, found: z.coords.len() });
        }
        if !z.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::OffManifold("non-finite coordinate".into()));
        }
        if let Manifold::Sphere = self {
            let dev = (z.coords.norm() - 1.0).abs();
            if dev > SPHERE_TOL {
                return Err(Error::OffManifold(format!("|z| - 1 = {dev:e}")));
            }
        }
        Ok(())
    }

    /// Maps raw coordinates onto the model (normalization on the sphere).
    pub fn project(&self, v: DVector<f64>) -> Result<Point> {
        match self {
            Manifold::Flat { .. } => {
                let p = Point::new(v);
                self.check_point(&p)?;
                Ok(p)
            }
            Manifold::Sphere => {
                if v.len() != 3 {
                    return Err(Error::Dimension { expected: 3, found: v.len() });
                }
                let n = v.norm();
                if !(n > 1e-300 && n.is_finite()) {
                    return Err(Error::OffManifold("cannot normalize zero vector".into()));
                }
                Ok(Point::new(v / n))
            }
        }
    }

    /// Orthonormal frame at `z` as columns of an `ambient x 2n` matrix.
    pub fn frame(&self, z: &Point) -> DMatrix<f64> {
        match self {
            Manifold::Flat { n } => DMatrix::identity(2 * n, 2 * n),
            Manifold::Sphere => {
                let (e1, e2) = sphere_frame(&z.v3());
                DMatrix::from_columns(&[
                    DVector::from_column_slice(e1.as_slice()),
                    DVector::from_column_slice(e2.as_slice()),
                ])
            }
        }
    }

    /// Value of the symplectic form on two ambient tangent vectors at `z`.
    pub fn omega_value(&self, z: &Point, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        match self {
            Manifold::Flat { n } => u.dot(&(standard_j(*n) * w)),
            Manifold::Sphere => {
                let (u, w) = (Vector3::from_column_slice(u.as_slice()), Vector3::from_column_slice(w.as_slice()));
                -z.v3().dot(&u.cross(&w))
            }
        }
    }

    /// `omega(z)` in the orthonormal frame at `z`.
    pub fn omega_at(&self, z: &Point) -> Result<FormMatrix> {
        self.check_point(z)?;
        let e = self.frame(z);
        let d = self.dim();
        let mut w = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                w[(j, k)] = self.omega_value(z, &e.column(j).into_owned(), &e.column(k).into_owned());
            }
        }
        Ok(FormMatrix { entries: w })
    }

    /// Poisson tensor `Psi(z) = omega(z)^{-1}` in the frame at `z`.
    pub fn psi_at(&self, z: &Point) -> Result<FormMatrix> {
        let w = self.omega_at(z)?;
        if w.entries.determinant().abs() < 1e-12 {
            return Err(Error::SingularForm);
        }
        let inv = w.entries.try_inverse().ok_or(Error::SingularForm)?;
        Ok(FormMatrix { entries: inv })
    }

    /// Symplectic reflection `s_x(z)`.
    pub fn reflect(&self, x: &Point, z: &Point) -> Result<Point> {
        self.check_point(x)?;
        self.check_point(z)?;
        Ok(self.reflect_unchecked(x, z))
    }

    pub(crate) fn reflect_unchecked(&self, x: &Point, z: &Point) -> Point {
        match self {
            Manifold::Flat { .. } => Point::new(&x.coords * 2.0 - &z.coords),
            Manifold::Sphere => {
                let (xv, zv) = (x.v3(), z.v3());
                Point::from_v3((xv * (2.0 * xv.dot(&zv)) - zv).normalize())
            }
        }
    }

    /// Ether 1-form `H_x(z)`; sphere components are the ambient representative.
    pub fn ether_form(&self, x: &Point, z: &Point) -> Result<CotangentVector> {
        self.check_point(x)?;
        self.check_point(z)?;
        Ok(CotangentVector { base: x.clone(), comps: self.ether_ambient(x, z) })
    }

    pub(crate) fn ether_ambient(&self, x: &Point, z: &Point) -> DVector<f64> {
        match self {
            Manifold::Flat { n } => standard_j(*n) * (&z.coords - &x.coords) * 2.0,
            Manifold::Sphere => {
                let v = x.v3().cross(&z.v3()) * 2.0;
                DVector::from_column_slice(v.as_slice())
            }
        }
    }

    /// Linear part of `z -> H_x(z)` applied to an ambient vector `w`
    /// (the Ether form is affine in `z` for both models).
    pub(crate) fn ether_linear(&self, x: &Point, w: &DVector<f64>) -> DVector<f64> {
        match self {
            Manifold::Flat { n } => standard_j(*n) * w * 2.0,
            Manifold::Sphere => {
                let v = x.v3().cross(&Vector3::from_column_slice(w.as_slice())) * 2.0;
                DVector::from_column_slice(v.as_slice())
            }
        }
    }

    /// Ambient gradient in `z` of the scalar `<H_x(z), t>` for an ambient vector `t` at `x`.
    pub(crate) fn ether_pairing_gradient(&self, x: &Point, t: &DVector<f64>) -> DVector<f64> {
        match self {
            Manifold::Flat { n } => standard_j(*n).transpose() * t * 2.0,
            Manifold::Sphere => {
                let v = Vector3::from_column_slice(t.as_slice()).cross(&x.v3()) * 2.0;
                DVector::from_column_slice(v.as_slice())
            }
        }
    }

    /// Hamiltonian vector field of a function with ambient gradient `grad` at `z`.
    pub fn hamiltonian_velocity(&self, z: &DVector<f64>, grad: &DVector<f64>) -> DVector<f64> {
        match self {
            Manifold::Flat { n } => standard_j(*n) * grad,
            Manifold::Sphere => {
                let v = Vector3::from_column_slice(z.as_slice()).cross(&Vector3::from_column_slice(grad.as_slice()));
                DVector::from_column_slice(v.as_slice())
            }
        }
    }

    /// Poisson bracket of two functions from their ambient gradients at `z`.
    pub fn poisson(&self, z: &Point, gf: &DVector<f64>, gg: &DVector<f64>) -> f64 {
        match self {
            Manifold::Flat { n } => -gf.dot(&(standard_j(*n) * gg)),
            Manifold::Sphere => {
                let a = Vector3::from_column_slice(gf.as_slice());
                let b = Vector3::from_column_slice(gg.as_slice());
                z.v3().dot(&a.cross(&b))
            }
        }
    }

    /// Velocity at `z` of the Hamiltonian `h(z) = <H_x(z), v>` for an ambient
    /// tangent vector `v` at `x`.
    pub fn ether_velocity(&self, x: &Point, v: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.hamiltonian_velocity(z, &self.ether_pairing_gradient(x, v))
    }

    /// Closed-form Ether geodesic `Exp_x(s v)`, normalized so that `s = 1` is the
    /// exponential map (flat: `x + s v`, sphere: great circle with speed `|v|`).
    pub fn geodesic(&self, x: &Point, v: &DVector<f64>, s: f64) -> Point {
        match self {
            Manifold::Flat { .. } => Point::new(&x.coords + v * s),
            Manifold::Sphere => {
                let th = v.norm() * s;
                if th.abs() < 1e-300 {
                    return x.clone();
                }
                let dir = Vector3::from_column_slice(v.as_slice()) / v.norm() * s.signum();
                Point::from_v3((x.v3() * th.cos() + dir * th.abs().sin()).normalize())
            }
        }
    }

    /// Closed-form inverse of [`Manifold::geodesic`] at `s = 1`.
    pub fn geodesic_log(&self, x: &Point, b: &Point) -> Result<DVector<f64>> {
        match self {
            Manifold::Flat { .. } => Ok(&b.coords - &x.coords),
            Manifold::Sphere => {
                let (xv, bv) = (x.v3(), b.v3());
                let w = bv - xv * xv.dot(&bv);
                let s = w.norm();
                let c = xv.dot(&bv);
                if s < 1e-14 {
                    if c > 0.0 {
                        return Ok(DVector::zeros(3));
                    }
                    return Err(Error::OutOfDomain("antipodal points".into()));
                }
                let th = s.atan2(c);
                Ok(DVector::from_column_slice((w / s * th).as_slice()))
            }
        }
    }

    /// Reference chart used for connection coefficients at `z`.
    ///
    /// Flat: the Darboux chart. Sphere: the gnomonic chart centered on the
    /// signed coordinate axis nearest to `z`, so that `z` generally sits off-center.
    pub fn chart_at(&self, z: &Point) -> Chart {
        match self {
            Manifold::Flat { n } => Chart::Linear { dim: 2 * n },
            Manifold::Sphere => {
                let zv = z.v3();
                let mut k = 0;
                for i in 1..3 {
                    if zv[i].abs() > zv[k].abs() {
                        k = i;
                    }
                }
                let mut c = Vector3::zeros();
                c[k] = zv[k].signum();
                Chart::gnomonic(c)
            }
        }
    }

    /// Chart centered at `z` (gnomonic on the sphere).
    pub fn chart_centered(&self, z: &Point) -> Chart {
        match self {
            Manifold::Flat { n } => Chart::Linear { dim: 2 * n },
            Manifold::Sphere => Chart::gnomonic(z.v3()),
        }
    }

    /// Symplectic connection `Gamma^l_{jk}(z)` in the reference chart at `z`.
    pub fn christoffel_at(&self, z: &Point) -> Result<Christoffel> {
        self.check_point(z)?;
        let chart = self.chart_at(z);
        let u = chart.coords(z)?;
        Ok(chart.christoffel(&u))
    }

    /// Connection from the reflections, `Gamma = -1/2 D^2 s_x(z)` at `x = z`,
    /// by central second differences in the reference chart.
    pub fn connection_from_reflections(&self, z: &Point, h: f64) -> Result<Christoffel> {
        self.check_point(z)?;
        let chart = self.chart_at(z);
        let u0 = chart.coords(z)?;
        let d = self.dim();
        let mut g = Christoffel::zeros(d);
        for l in 0..d {
            let f = |u: &DVector<f64>| -> f64 {
                let p = chart.point(u);
                let r = self.reflect_unchecked(z, &p);
                chart.coords(&r).map(|c| c[l]).unwrap_or(f64::NAN)
            };
            let hm: DMatrix<f64> = numerics::hessian(f, &u0, h)?;
            for j in 0..d {
                for k in 0..d {
                    g.set(l, j, k, -0.5 * hm[(j, k)]);
                }
            }
        }
        Ok(g)
    }
}

/// A coordinate chart of a model.
#[derive(Clone, Debug, PartialEq)]
pub enum Chart {
    /// Flat Darboux coordinates.
    Linear { dim: usize },
    /// Gnomonic chart of the sphere: `z(u) = (c + E u) / |c + E u|`.
    Gnomonic { center: Vector3<f64>, e1: Vector3<f64>, e2: Vector3<f64> },
    /// Stereographic chart of the sphere from the pole `-c`:
    /// `z(u) = ((1 - |u|^2) c + 2 E u) / (1 + |u|^2)`.
    Stereographic { center: Vector3<f64>, e1: Vector3<f64>, e2: Vector3<f64> },
}

impl Chart {
    pub fn gnomonic(center: Vector3<f64>) -> Self {
        let (e1, e2) = sphere_frame(&center);
        Chart::Gnomonic { center, e1, e2 }
    }

    pub fn stereographic(center: Vector3<f64>) -> Self {
        let (e1, e2) = sphere_frame(&center);
        Chart::Stereographic { center, e1, e2 }
    }

    pub fn dim(&self) -> usize {
        match self {
            Chart::Linear { dim } => *dim,
            _ => 2,
        }
    }

    pub fn point(&self, u: &DVector<f64>) -> Point {
        match self {
            Chart::Linear { .. } => Point::new(u.clone()),
            Chart::Gnomonic { center, e1, e2 } => Point::from_v3((center + e1 * u[0] + e2 * u[1]).normalize()),
            Chart::Stereographic { center, e1, e2 } => {
                let r2 = u.norm_squared();
                Point::from_v3(((center * (1.0 - r2) + (e1 * u[0] + e2 * u[1]) * 2.0) / (1.0 + r2)).normalize())
            }
        }
    }

    pub fn coords(&self, z: &Point) -> Result<DVector<f64>> {
        match self {
            Chart::Linear { .. } => Ok(z.coords.clone()),
            Chart::Gnomonic { center, e1, e2 } => {
                let zv = z.v3();
                let c = zv.dot(center);
                if c <= 1e-8 {
                    return Err(Error::OutOfDomain("point outside the gnomonic chart".into()));
                }
                Ok(DVector::from_vec(vec![zv.dot(e1) / c, zv.dot(e2) / c]))
            }
            Chart::Stereographic { center, e1, e2 } => {
                let zv = z.v3();
                let c = 1.0 + zv.dot(center);
                if c <= 1e-8 {
                    return Err(Error::OutOfDomain("point at the stereographic pole".into()));
                }
                Ok(DVector::from_vec(vec![zv.dot(e1) / c, zv.dot(e2) / c]))
            }
        }
    }

    /// Columns `t_j = dz/du^j` in native coordinates.
    pub fn tangent_basis(&self, u: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Chart::Linear { dim } => DMatrix::identity(*dim, *dim),
            Chart::Gnomonic { center, e1, e2 } => {
                let w = center + e1 * u[0] + e2 * u[1];
                let r = w.norm();
                let z = w / r;
                let cols: Vec<DVector<f64>> = [e1, e2]
                    .iter()
                    .map(|e| DVector::from_column_slice(((*e - z * z.dot(e)) / r).as_slice()))
                    .collect();
                DMatrix::from_columns(&cols)
            }
            Chart::Stereographic { center, e1, e2 } => {
                let d = 1.0 + u.norm_squared();
                let z = self.point(u).v3();
                let cols: Vec<DVector<f64>> = [e1, e2]
                    .iter()
                    .enumerate()
                    .map(|(j, e)| DVector::from_column_slice(((*e * 2.0 - center * (2.0 * u[j]) - z * (2.0 * u[j])) / d).as_slice()))
                    .collect();
                DMatrix::from_columns(&cols)
            }
        }
    }

    /// Second derivative `d^2 z / du^j du^k` in native coordinates.
    pub fn second_derivative(&self, u: &DVector<f64>, j: usize, k: usize) -> DVector<f64> {
        match self {
            Chart::Linear { dim } => DVector::zeros(*dim),
            Chart::Gnomonic { center, e1, e2 } => {
                let es = [e1, e2];
                let w = center + e1 * u[0] + e2 * u[1];
                let r = w.norm();
                let z = w / r;
                let t = |i: usize| (es[i] - z * z.dot(es[i])) / r;
                let (tj, tk) = (t(j), t(k));
                let v = (-tk * z.dot(es[j]) - z * tk.dot(es[j])) / r - tj * (z.dot(es[k]) / r);
                DVector::from_column_slice(v.as_slice())
            }
            Chart::Stereographic { center, e1, e2 } => {
                let es = [e1, e2];
                let d = 1.0 + u.norm_squared();
                let z = self.point(u).v3();
                let t = self.tangent_basis(u);
                let tk = Vector3::new(t[(0, k)], t[(1, k)], t[(2, k)]);
                let delta = if j == k { 1.0 } else { 0.0 };
                let first = (center * (-2.0 * delta) - z * (2.0 * delta) - tk * (2.0 * u[j])) / d;
                let second = (es[j] * 2.0 - center * (2.0 * u[j]) - z * (2.0 * u[j])) * (2.0 * u[k] / (d * d));
                DVector::from_column_slice((first - second).as_slice())
            }
        }
    }

    /// Components of `omega` in this chart at `u`.
    pub fn omega(&self, u: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Chart::Linear { dim } => standard_j(dim / 2),
            _ => {
                let z = self.point(u).v3();
                let t = self.tangent_basis(u);
                let t0 = Vector3::new(t[(0, 0)], t[(1, 0)], t[(2, 0)]);
                let t1 = Vector3::new(t[(0, 1)], t[(1, 1)], t[(2, 1)]);
                let w12 = -z.dot(&t0.cross(&t1));
                DMatrix::from_row_slice(2, 2, &[0.0, w12, -w12, 0.0])
            }
        }
    }

    /// Levi-Civita connection of the round metric (which preserves the area
    /// form) in this chart; zero for the linear chart.
    pub fn christoffel(&self, u: &DVector<f64>) -> Christoffel {
        let d = self.dim();
        let mut g = Christoffel::zeros(d);
        let den = 1.0 + u.norm_squared();
        let kd = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        match self {
            Chart::Linear { .. } => {}
            Chart::Gnomonic { .. } => {
                for l in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            g.set(l, j, k, -(kd(l, k) * u[j] + kd(l, j) * u[k]) / den);
                        }
                    }
                }
            }
            Chart::Stereographic { .. } => {
                // Conformal metric 4 / (1 + |u|^2)^2 with log-factor gradient -2u / (1 + |u|^2).
                let phi = |i: usize| -2.0 * u[i] / den;
                for l in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            g.set(l, j, k, kd(l, j) * phi(k) + kd(l, k) * phi(j) - kd(j, k) * phi(l));
                        }
                    }
                }
            }
        }
        g
    }

    /// Chart components of an ambient covector at chart point `u`.
    pub fn covector_components(&self, u: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        self.tangent_basis(u).transpose() * eta
    }

    /// Ambient (tangential) representative of chart covector components at `u`.
    pub fn covector_ambient(&self, u: &DVector<f64>, comps: &DVector<f64>) -> DVector<f64> {
        let t = self.tangent_basis(u);
        let g = t.transpose() * &t;
        let inv = g.try_inverse().expect("chart metric is invertible");
        t * (inv * comps)
    }

    /// Ambient tangent vector from chart components at `u`.
    pub fn vector_ambient(&self, u: &DVector<f64>, comps: &DVector<f64>) -> DVector<f64> {
        self.tangent_basis(u) * comps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> Point {
        Point::from_slice(v)
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("flat:2".parse::<Manifold>().unwrap(), Manifold::Flat { n: 2 });
        assert_eq!("sphere".parse::<Manifold>().unwrap(), Manifold::Sphere);
        assert!("flat:0".parse::<Manifold>().is_err());
        assert!("torus".parse::<Manifold>().is_err());
        assert_eq!(Manifold::Flat { n: 3 }.to_string(), "flat:3");
        let json = serde_json::to_string(&Manifold::Sphere).unwrap();
        assert_eq!(json, "\"sphere\"");
    }

    #[test]
    fn flat_omega_is_j() {
        let m = Manifold::Flat { n: 1 };
        let w = m.omega_at(&pt(&[0.3, -1.0])).unwrap();
        assert_eq!(w.entries, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let psi = m.psi_at(&pt(&[0.3, -1.0])).unwrap();
        assert_eq!(psi.entries, -w.entries.clone());
    }

    #[test]
    fn sphere_omega_in_frame() {
        let m = Manifold::Sphere;
        let z = pt(&[0.0, 0.0, 1.0]);
        let w = m.omega_at(&z).unwrap();
        assert!((w.entries[(0, 1)].abs() - 1.0).abs() < 1e-15);
        assert!(w.antisymmetry_defect() < 1e-15);
        let psi = m.psi_at(&z).unwrap();
        assert!((psi.entries * w.entries - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn off_manifold_points_are_rejected() {
        let m = Manifold::Sphere;
        assert!(matches!(m.omega_at(&pt(&[0.0, 0.0, 1.1])), Err(Error::OffManifold(_))));
        assert!(matches!(m.omega_at(&pt(&[0.0, 1.0])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reflections() {
        let m = Manifold::Flat { n: 1 };
        let r = m.reflect(&pt(&[1.0, 2.0]), &pt(&[0.5, -1.0])).unwrap();
        assert_eq!(r, pt(&[1.5, 5.0]));
        let s = Manifold::Sphere;
        let x = pt(&[0.0, 0.0, 1.0]);
        let z = pt(&[1.0, 0.0, 0.0]);
        let r = s.reflect(&x, &z).unwrap();
        assert!(r.distance(&pt(&[-1.0, 0.0, 0.0])) < 1e-15);
        assert!(s.reflect(&x, &x).unwrap().distance(&x) < 1e-15);
    }

    #[test]
    fn ether_form_examples() {
        let m = Manifold::Flat { n: 1 };
        let e = m.ether_form(&pt(&[0.0, 0.0]), &pt(&[1.0, 2.0])).unwrap();
        // 2 omega (1, 2)^T with omega = J
        assert_eq!(e.comps.as_slice(), &[4.0, -2.0]);
        let s = Manifold::Sphere;
        let e = s.ether_form(&pt(&[0.0, 0.0, 1.0]), &pt(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(e.comps.as_slice(), &[0.0, 2.0, 0.0]);
        let x = pt(&[0.6, 0.0, 0.8]);
        assert_eq!(s.ether_form(&x, &x).unwrap().comps.norm(), 0.0);
    }

    #[test]
    fn frame_is_right_handed_orthonormal() {
        let p = Vector3::new(0.2, -0.5, 0.7).normalize();
        let (e1, e2) = sphere_frame(&p);
        assert!(e1.dot(&p).abs() < 1e-15 && e2.dot(&p).abs() < 1e-15);
        assert!((e1.cross(&e2) - p).norm() < 1e-15);
    }

    #[test]
    fn gnomonic_chart_round_trip_and_derivatives() {
        let chart = Chart::gnomonic(Vector3::new(0.0, 0.0, 1.0));
        let u = DVector::from_vec(vec![0.3, -0.2]);
        let z = chart.point(&u);
        assert!((chart.coords(&z).unwrap() - &u).norm() < 1e-15);
        let t = chart.tangent_basis(&u);
        let fd: DMatrix<f64> = numerics::jacobian(|v| chart.point(v).coords, &u, 1e-6).unwrap();
        assert!((t - fd).amax() < 1e-9);
        for j in 0..2 {
            for k in 0..2 {
                let f = |v: &DVector<f64>| chart.tangent_basis(v).column(j).into_owned();
                let d: DMatrix<f64> = numerics::jacobian(f, &u, 1e-6).unwrap();
                assert!((chart.second_derivative(&u, j, k) - d.column(k)).amax() < 1e-8);
            }
        }
        // omega_12 = -(1 + |u|^2)^{-3/2}
        let w = chart.omega(&u);
        assert!((w[(0, 1)] + (1.0 + u.norm_squared()).powf(-1.5)).abs() < 1e-14);
    }

    #[test]
    fn stereographic_chart_round_trip_and_derivatives() {
        let chart = Chart::stereographic(Vector3::new(0.6, 0.0, 0.8));
        let u = DVector::from_vec(vec![0.7, -1.3]);
        let z = chart.point(&u);
        assert!((chart.coords(&z).unwrap() - &u).norm() < 1e-14);
        let t = chart.tangent_basis(&u);
        let fd: DMatrix<f64> = numerics::jacobian(|v| chart.point(v).coords, &u, 1e-6).unwrap();
        assert!((t - fd).amax() < 1e-9);
        for j in 0..2 {
            for k in 0..2 {
                let f = |v: &DVector<f64>| chart.tangent_basis(v).column(j).into_owned();
                let d: DMatrix<f64> = numerics::jacobian(f, &u, 1e-6).unwrap();
                assert!((chart.second_derivative(&u, j, k) - d.column(k)).amax() < 1e-8);
            }
        }
        let w = chart.omega(&u);
        assert!((w[(0, 1)] + 4.0 / (1.0 + u.norm_squared()).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn reference_chart_prefers_nearest_axis() {
        let s = Manifold::Sphere;
        let z = s.project(DVector::from_vec(vec![0.3, -0.9, 0.2])).unwrap();
        match s.chart_at(&z) {
            Chart::Gnomonic { center, .. } => assert_eq!(center, Vector3::new(0.0, -1.0, 0.0)),
            _ => panic!("expected gnomonic chart"),
        }
    }

    #[test]
    fn geodesic_and_log_are_inverse() {
        let s = Manifold::Sphere;
        let x = s.project(DVector::from_vec(vec![0.1, 0.2, 0.9])).unwrap();
        let b = s.project(DVector::from_vec(vec![-0.4, 0.5, 0.3])).unwrap();
        let v = s.geodesic_log(&x, &b).unwrap();
        assert!(s.geodesic(&x, &v, 1.0).distance(&b) < 1e-14);
        assert!(s.geodesic_log(&x, &Point::new(-&x.coords)).is_err());
    }

    #[test]
    fn christoffel_vanishes_flat_and_at_chart_center() {
        let m = Manifold::Flat { n: 2 };
        assert_eq!(m.christoffel_at(&pt(&[1.0, 2.0, 3.0, 4.0])).unwrap().max_abs(), 0.0);
        let s = Manifold::Sphere;
        assert_eq!(s.christoffel_at(&pt(&[0.0, 0.0, 1.0])).unwrap().max_abs(), 0.0);
        let z = s.project(DVector::from_vec(vec![0.3, 0.2, 0.9])).unwrap();
        let g = s.christoffel_at(&z).unwrap();
        assert!(g.max_abs() > 0.1);
        assert!(g.symmetry_defect() < 1e-15);
    }
}
