//! Integrality check `(1/2 pi hbar) int omega - (1/2) int c_1 in Z`.
//!
//! On the sphere the symplectic volume is integrated over an icosahedral mesh
//! whose flat triangles are pulled back to the sphere by radial projection.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point};
use crate::numerics;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizeConfig {
    /// Accepted distance from the nearest integer.
    pub tol: f64,
    /// Relative change between mesh refinements accepted for the volume.
    pub quad_tol: f64,
    pub max_level: usize,
    /// Gauss points per direction on each triangle.
    pub triangle_nodes: usize,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        QuantizeConfig { tol: 1e-6, quad_tol: 1e-9, max_level: 6, triangle_nodes: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizeReport {
    pub manifold: Manifold,
    pub hbar: f64,
    /// Nothing to check: the second cohomology is trivial.
    pub vacuous: bool,
    pub omega_integral: Option<f64>,
    pub chern_integral: Option<i64>,
    pub value: Option<f64>,
    pub distance: Option<f64>,
    pub mesh_level: Option<usize>,
    pub quadrature_change: Option<f64>,
    pub pass: bool,
}

type Tri = [Vector3<f64>; 3];

fn icosahedron() -> Vec<Tri> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let v = [
        Vector3::new(-1.0, g, 0.0),
        Vector3::new(1.0, g, 0.0),
        Vector3::new(-1.0, -g, 0.0),
        Vector3::new(1.0, -g, 0.0),
        Vector3::new(0.0, -1.0, g),
        Vector3::new(0.0, 1.0, g),
        Vector3::new(0.0, -1.0, -g),
        Vector3::new(0.0, 1.0, -g),
        Vector3::new(g, 0.0, -1.0),
        Vector3::new(g, 0.0, 1.0),
        Vector3::new(-g, 0.0, -1.0),
        Vector3::new(-g, 0.0, 1.0),
    ];
    let f: [[usize; 3]; 20] = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    f.iter().map(|t| [v[t[0]].normalize(), v[t[1]].normalize(), v[t[2]].normalize()]).collect()
}

fn subdivide(tris: &[Tri]) -> Vec<Tri> {
    let mut out = Vec::with_capacity(4 * tris.len());
    for [a, b, c] in tris {
        let (ab, bc, ca) = (((a + b) / 2.0).normalize(), ((b + c) / 2.0).normalize(), ((c + a) / 2.0).normalize());
        out.push([*a, ab, ca]);
        out.push([ab, *b, bc]);
        out.push([ca, bc, *c]);
        out.push([ab, bc, ca]);
    }
    out
}

/// `int_T P^* omega` for the radial projection `P` of the flat triangle `T`.
fn triangle_integral(m: &Manifold, t: &Tri, rule: &[(f64, f64)]) -> f64 {
    let (e1, e2) = (t[1] - t[0], t[2] - t[0]);
    let push = |p: &Vector3<f64>, v: &Vector3<f64>| -> Vector3<f64> {
        let r = p.norm();
        let u = p / r;
        (v - u * u.dot(v)) / r
    };
    let mut acc = 0.0;
    // Collapsed tensor rule: (s, t) = (a, b (1 - a)) with Jacobian (1 - a).
    for &(a, wa) in rule {
        for &(b, wb) in rule {
            let (s, tt) = (a, b * (1.0 - a));
            let p = t[0] + e1 * s + e2 * tt;
            let z = Point::from_v3(p.normalize());
            let da = push(&p, &e1);
            let db = push(&p, &e2);
            let dens = m.omega_value(&z, &nalgebra::DVector::from_column_slice(da.as_slice()), &nalgebra::DVector::from_column_slice(db.as_slice()));
            acc += wa * wb * (1.0 - a) * dens;
        }
    }
    acc
}

/// Symplectic volume of the sphere by mesh quadrature. Returns `(volume, level, last change)`.
///
/// Triangles are oriented by the symplectic form, which is nondegenerate on the
/// connected surface, so the sign of the first triangle fixes all of them.
pub fn sphere_symplectic_volume(cfg: &QuantizeConfig) -> Result<(f64, usize, f64)> {
    let m = Manifold::Sphere;
    let rule = numerics::gauss_legendre(cfg.triangle_nodes, 0.0, 1.0);
    let mut tris = icosahedron();
    let orient = triangle_integral(&m, &tris[0], &rule).signum();
    let mut prev: Option<f64> = None;
    for level in 0..=cfg.max_level {
        let vol: f64 = orient * tris.iter().map(|t| triangle_integral(&m, t, &rule)).sum::<f64>();
        if let Some(p) = prev {
            let change = (vol - p).abs() / vol.abs();
            if change <= cfg.quad_tol {
                return Ok((vol, level, change));
            }
        }
        prev = Some(vol);
        if level < cfg.max_level {
            tris = subdivide(&tris);
        }
    }
    Err(Error::QuadratureNonConvergence { change: f64::NAN, tol: cfg.quad_tol })
}

/// Evaluates the integrality condition for `m` at `hbar`.
pub fn quantize_check(m: &Manifold, hbar: f64, cfg: &QuantizeConfig) -> Result<QuantizeReport> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::InvalidArgument("hbar must be positive".into()));
    }
    let chern = match m.chern_integral() {
        Some(c) if m.is_compact() => c,
        _ => {
            return Ok(QuantizeReport {
                manifold: *m,
                hbar,
                vacuous: true,
                omega_integral: None,
                chern_integral: None,
                value: None,
                distance: None,
                mesh_level: None,
                quadrature_change: None,
                pass: true,
            })
        }
    };
    let (vol, level, change) = sphere_symplectic_volume(cfg)?;
    let value = vol / (2.0 * std::f64::consts::PI * hbar) - 0.5 * chern as f64;
    let distance = (value - value.round()).abs();
    Ok(QuantizeReport {
        manifold: *m,
        hbar,
        vacuous: false,
        omega_integral: Some(vol),
        chern_integral: Some(chern),
        value: Some(value),
        distance: Some(distance),
        mesh_level: Some(level),
        quadrature_change: Some(change),
        pass: distance <= cfg.tol,
    })
}
