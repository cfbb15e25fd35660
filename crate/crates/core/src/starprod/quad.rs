//! Integral form of the flat star product for one degree of freedom.
//!
//! The kernel integral over the two outer points is evaluated in its Fourier
//! form: writing the enveloped factor `g` as a superposition of plane waves,
//! `(f*g)(z) = (2 pi)^{-2} int G(k) f(z + (hbar/2) J k) exp(-i k.z) dk` with
//! `G(k) = int g(w) exp(i k.w) dw`. For `g = r exp(-|w - c|^2 / 2 s^2)` the contour
//! shift `w = c + i s^2 k + v` turns `G` into a Gauss-Hermite sum
//! `G(k) = exp(i k.c - s^2 |k|^2 / 2) int r(c + i s^2 k + v) exp(-|v|^2 / 2 s^2) dv`,
//! which needs `r` to extend analytically to complex arguments.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::poly::PolySymbol;
use crate::error::{Error, Result};
use crate::numerics;

/// Smallest accepted `hbar`; below it the integrand oscillates beyond the node budget.
pub const MIN_HBAR: f64 = 0.05;

/// Gaussian factor `exp(-|w - center|^2 / (2 sigma^2))` carried by a symbol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub center: [f64; 2],
    pub sigma: f64,
}

impl Envelope {
    pub fn eval(&self, w: [Complex64; 2]) -> Complex64 {
        let d0 = w[0] - self.center[0];
        let d1 = w[1] - self.center[1];
        (-(d0 * d0 + d1 * d1) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// A symbol on the plane that extends to an entire function of `(q, p)`.
pub trait AnalyticSymbol: Send + Sync {
    fn eval(&self, w: [Complex64; 2]) -> Complex64;

    /// Gaussian decay factor, if the symbol has one.
    fn envelope(&self) -> Option<Envelope> {
        None
    }

    fn eval_real(&self, w: [f64; 2]) -> Complex64 {
        self.eval([Complex64::new(w[0], 0.0), Complex64::new(w[1], 0.0)])
    }
}

/// `poly(w) exp(-|w - center|^2 / (2 sigma^2))`, or just `poly` without an envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPoly {
    pub poly: PolySymbol,
    pub envelope: Option<Envelope>,
}

impl GaussianPoly {
    pub fn gaussian(center: [f64; 2], sigma: f64, amp: Complex64) -> Self {
        GaussianPoly { poly: PolySymbol::constant(2, amp), envelope: Some(Envelope { center, sigma }) }
    }

    pub fn polynomial(poly: PolySymbol) -> Self {
        GaussianPoly { poly, envelope: None }
    }

    /// Complex conjugate symbol (on real arguments).
    pub fn conj(&self) -> Self {
        GaussianPoly { poly: self.poly.conj(), envelope: self.envelope }
    }
}

impl AnalyticSymbol for GaussianPoly {
    fn eval(&self, w: [Complex64; 2]) -> Complex64 {
        let base = self.poly.eval_complex(&w);
        match &self.envelope {
            Some(e) => base * e.eval(w),
            None => base,
        }
    }

    fn envelope(&self) -> Option<Envelope> {
        self.envelope
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Frequency nodes per axis at the first level.
    pub nodes: usize,
    /// Nodes per axis for the inner contour-shifted integral.
    pub inner_nodes: usize,
    pub max_nodes: usize,
    /// Accepted change between node doublings (absolute, relative to `max(1, |value|)`).
    pub tol: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { nodes: 48, inner_nodes: 16, max_nodes: 192, tol: 1e-10 }
    }
}

/// `f*g` on a fixed frequency grid, with the transform of the enveloped factor tabulated.
pub struct QuadProduct {
    outer: Arc<dyn AnalyticSymbol>,
    hbar: f64,
    /// `+1` when `g` is the transformed factor, `-1` when `f` is.
    orientation: f64,
    /// `(k, weight * G(k) exp(s^2 |k|^2 / 2) / (2 pi)^2)` per frequency node.
    table: Vec<([f64; 2], Complex64)>,
}

impl QuadProduct {
    pub fn new(f: Arc<dyn AnalyticSymbol>, g: Arc<dyn AnalyticSymbol>, hbar: f64, nodes: usize, inner_nodes: usize) -> Result<Self> {
        if !(hbar >= MIN_HBAR) {
            return Err(Error::InvalidArgument(format!("hbar {hbar} below the quadrature limit {MIN_HBAR}")));
        }
        let (outer, inner, orientation) = match (g.envelope(), f.envelope()) {
            (Some(_), _) => (f, g, 1.0),
            (None, Some(_)) => (g, f, -1.0),
            (None, None) => return Err(Error::NonDecaying),
        };
        let env = inner.envelope().expect("inner factor has an envelope");
        let s2 = env.sigma * env.sigma;
        let knodes = numerics::gauss_hermite_scaled(nodes, 1.0 / env.sigma);
        let vnodes = numerics::gauss_hermite_scaled(inner_nodes, env.sigma);
        let mut grid = Vec::with_capacity(nodes * nodes);
        for &(k0, w0) in &knodes {
            for &(k1, w1) in &knodes {
                grid.push(([k0, k1], w0 * w1));
            }
        }
        let norm = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
        let table = grid
            .par_iter()
            .map(|&(k, wk)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(v0, a0) in &vnodes {
                    for &(v1, a1) in &vnodes {
                        let w = [
                            Complex64::new(env.center[0] + v0, s2 * k[0]),
                            Complex64::new(env.center[1] + v1, s2 * k[1]),
                        ];
                        acc += inner.eval(w) / env.eval(w) * (a0 * a1);
                    }
                }
                let phase = Complex64::from_polar(1.0, k[0] * env.center[0] + k[1] * env.center[1]);
                (k, acc * phase * (wk * norm))
            })
            .collect();
        Ok(QuadProduct { outer, hbar, orientation, table })
    }

    pub fn eval_at(&self, z: [Complex64; 2]) -> Complex64 {
        let h = self.orientation * self.hbar / 2.0;
        self.table
            .iter()
            .map(|&(k, t)| {
                // J k = (k_p, -k_q)
                let arg = [z[0] + h * k[1], z[1] - h * k[0]];
                let wave = (-Complex64::i() * (z[0] * k[0] + z[1] * k[1])).exp();
                self.outer.eval(arg) * wave * t
            })
            .sum()
    }
}

impl AnalyticSymbol for QuadProduct {
    fn eval(&self, w: [Complex64; 2]) -> Complex64 {
        self.eval_at(w)
    }
}

/// Doubles the frequency nodes until the values at all `probes` settle; returns the
/// accepted product and the last change.
pub fn converged_product(
    f: Arc<dyn AnalyticSymbol>,
    g: Arc<dyn AnalyticSymbol>,
    hbar: f64,
    cfg: &QuadConfig,
    probes: &[[f64; 2]],
) -> Result<(QuadProduct, f64)> {
    let mut n = cfg.nodes.max(4);
    let mut prev: Option<(QuadProduct, Vec<Complex64>)> = None;
    loop {
        let prod = QuadProduct::new(f.clone(), g.clone(), hbar, n, cfg.inner_nodes)?;
        let vals: Vec<Complex64> = probes.iter().map(|&z| prod.eval_real(z)).collect();
        if let Some((_, pv)) = &prev {
            let change = vals
                .iter()
                .zip(pv)
                .map(|(a, b)| (a - b).norm() / a.norm().max(1.0))
                .fold(0.0, f64::max);
            if change <= cfg.tol {
                return Ok((prod, change));
            }
            if 2 * n > cfg.max_nodes {
                return Err(Error::QuadratureNonConvergence { change, tol: cfg.tol });
            }
        }
        prev = Some((prod, vals));
        n *= 2;
    }
}

/// `(f*g)(z)` by quadrature, with node doubling until converged.
pub fn quad_product(f: Arc<dyn AnalyticSymbol>, g: Arc<dyn AnalyticSymbol>, z: [f64; 2], hbar: f64, cfg: &QuadConfig) -> Result<Complex64> {
    let (prod, _) = converged_product(f, g, hbar, cfg, &[z])?;
    Ok(prod.eval_real(z))
}

/// `int F dq dp` for a decaying symbol by a tensor Gauss-Legendre rule on `[c - L, c + L]^2`.
pub fn plane_integral(f: &dyn AnalyticSymbol, center: [f64; 2], half_width: f64, nodes: usize) -> Complex64 {
    let r0 = numerics::gauss_legendre(nodes, center[0] - half_width, center[0] + half_width);
    let r1 = numerics::gauss_legendre(nodes, center[1] - half_width, center[1] + half_width);
    let rows: Vec<Complex64> = r0
        .par_iter()
        .map(|&(q, wq)| r1.iter().map(|&(p, wp)| f.eval_real([q, p]) * (wq * wp)).sum::<Complex64>())
        .collect();
    rows.iter().sum()
}

/// Pointwise product of two symbols.
pub struct Pointwise(pub Arc<dyn AnalyticSymbol>, pub Arc<dyn AnalyticSymbol>);

impl AnalyticSymbol for Pointwise {
    fn eval(&self, w: [Complex64; 2]) -> Complex64 {
        self.0.eval(w) * self.1.eval(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{diagonal_symbol, gaussian_diagonal};
    use crate::starprod::field::FieldSymbol;
    use crate::starprod::series::{series_product, SeriesConfig};
    use crate::geometry::{Manifold, Point};
    use nalgebra::DVector;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn arc(s: GaussianPoly) -> Arc<dyn AnalyticSymbol> {
        Arc::new(s)
    }

    #[test]
    fn unit_gaussians_match_operator_product() {
        let hbar = 0.2;
        let g = arc(GaussianPoly::gaussian([0.0, 0.0], 1.0, c(1.0)));
        let d = gaussian_diagonal(200, 1.0, hbar);
        let sq: Vec<Complex64> = d.iter().map(|a| a * a).collect();
        for z in [[0.0, 0.0], [0.4, -0.3], [1.0, 0.8]] {
            let got = quad_product(g.clone(), g.clone(), z, hbar, &QuadConfig::default()).unwrap();
            let want = diagonal_symbol(&sq, z[0], z[1], hbar);
            assert!((got - want).norm() < 1e-6, "{z:?}: {got} vs {want}");
        }
    }

    #[test]
    fn orientation_agrees_with_series() {
        // Off-center Gaussians with polynomial factors: the first-order term fixes the sign.
        let hbar = 0.05;
        let pf = PolySymbol::from_terms(2, &[(&[1, 0], c(1.0)), (&[0, 0], c(0.3))]).unwrap();
        let pg = PolySymbol::from_terms(2, &[(&[0, 1], c(1.0)), (&[1, 0], c(-0.5))]).unwrap();
        let f = GaussianPoly { poly: pf, envelope: Some(Envelope { center: [0.3, -0.2], sigma: 0.9 }) };
        let g = GaussianPoly { poly: pg, envelope: Some(Envelope { center: [-0.1, 0.4], sigma: 1.1 }) };
        let z = [0.2, 0.1];
        let got = quad_product(arc(f.clone()), arc(g.clone()), z, hbar, &QuadConfig::default()).unwrap();
        let to_field = |s: &GaussianPoly| {
            let s = Arc::new(s.clone());
            FieldSymbol::new(move |w: &DVector<f64>| s.eval_real([w[0], w[1]]))
        };
        let flat = Manifold::Flat { n: 1 };
        let at = Point::from_slice(&z);
        let cfg = SeriesConfig { mode: crate::starprod::DerivativeMode::FiniteDifference, ..SeriesConfig::new(hbar, 2) };
        let series = |order| series_product(&flat, &to_field(&f), &to_field(&g), &at, &SeriesConfig { order, ..cfg }).unwrap();
        let first_order = (series(1) - series(0)).norm();
        assert!((got - series(2)).norm() < 1e-4);
        assert!(first_order > 1e-2);
    }

    #[test]
    fn unity_and_nondecaying() {
        let hbar = 0.2;
        let f = arc(GaussianPoly {
            poly: PolySymbol::from_terms(2, &[(&[1, 1], c(1.0)), (&[0, 0], c(0.5))]).unwrap(),
            envelope: Some(Envelope { center: [0.2, 0.1], sigma: 1.0 }),
        });
        let one = arc(GaussianPoly::polynomial(PolySymbol::constant(2, c(1.0))));
        let z = [0.3, -0.4];
        let v = quad_product(f.clone(), one.clone(), z, hbar, &QuadConfig::default()).unwrap();
        assert!((v - f.eval_real(z)).norm() < 1e-8);
        let v = quad_product(one.clone(), f.clone(), z, hbar, &QuadConfig::default()).unwrap();
        assert!((v - f.eval_real(z)).norm() < 1e-8);
        assert!(matches!(QuadProduct::new(one.clone(), one, hbar, 8, 4), Err(Error::NonDecaying)));
        assert!(QuadProduct::new(f.clone(), f, 0.01, 8, 4).is_err());
    }
}
