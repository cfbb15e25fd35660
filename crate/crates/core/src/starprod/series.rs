//! Covariant deformation series
//! `f*g = fg - (i hbar/2) df Psi dg - (hbar^2/8) Hf Psi Psi Hg`,
//! with covariant Hessians taken in the reference chart at the evaluation point.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::{DerivativeMode, FieldSymbol, Jet};
use crate::error::{Error, Result};
use crate::geometry::{Chart, Manifold, Point};
use crate::numerics;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub hbar: f64,
    pub order: usize,
    pub mode: DerivativeMode,
}

impl SeriesConfig {
    pub fn new(hbar: f64, order: usize) -> Self {
        SeriesConfig { hbar, order, mode: DerivativeMode::Analytic }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::InvalidArgument("hbar must be positive".into()));
        }
        if self.order > 2 {
            return Err(Error::InvalidArgument(format!("series order {} exceeds 2", self.order)));
        }
        Ok(())
    }
}

fn covariant_jet(m: &Manifold, f: &FieldSymbol, chart: &Chart, u: &DVector<f64>, cfg: &SeriesConfig) -> Result<Jet> {
    let mut jet = f.chart_jet(chart, u, cfg.mode, cfg.order)?;
    if cfg.order >= 2 && matches!(m, Manifold::Sphere) {
        let gamma = chart.christoffel(u);
        let d = chart.dim();
        for j in 0..d {
            for k in 0..d {
                let corr: Complex64 = (0..d).map(|l| jet.grad[l] * gamma.get(l, j, k)).sum();
                jet.hess[(j, k)] -= corr;
            }
        }
    }
    Ok(jet)
}

fn combine(jf: &Jet, jg: &Jet, psi: &DMatrix<Complex64>, cfg: &SeriesConfig) -> Complex64 {
    let mut out = jf.value * jg.value;
    if cfg.order >= 1 {
        let bracket = (jf.grad.transpose() * psi * &jg.grad)[(0, 0)];
        out += Complex64::new(0.0, -cfg.hbar / 2.0) * bracket;
    }
    if cfg.order >= 2 {
        let left = psi.transpose() * &jf.hess * psi;
        let contraction: Complex64 = left.iter().zip(jg.hess.iter()).map(|(a, b)| a * b).sum();
        out -= contraction * (cfg.hbar * cfg.hbar / 8.0);
    }
    out
}

/// Truncated covariant star product `(f*g)(z)`.
pub fn series_product(m: &Manifold, f: &FieldSymbol, g: &FieldSymbol, z: &Point, cfg: &SeriesConfig) -> Result<Complex64> {
    cfg.validate()?;
    m.check_point(z)?;
    let chart = m.chart_at(z);
    let u = chart.coords(z)?;
    let psi = chart.omega(&u).try_inverse().ok_or(Error::SingularForm)?.map(|v| Complex64::new(v, 0.0));
    let jf = covariant_jet(m, f, &chart, &u, cfg)?;
    let jg = covariant_jet(m, g, &chart, &u, cfg)?;
    Ok(combine(&jf, &jg, &psi, cfg))
}

/// The truncated product as a symbol, with derivatives left to finite differences.
pub fn series_symbol(m: &Manifold, f: &FieldSymbol, g: &FieldSymbol, cfg: &SeriesConfig) -> FieldSymbol {
    let (m, f, g, cfg) = (*m, f.clone(), g.clone(), *cfg);
    FieldSymbol::new(move |z| {
        let p = Point::new(z.clone());
        series_product(&m, &f, &g, &p, &cfg).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    })
}

/// `max_j |i hbar d_j f(x) - (f * H_{x,j})(x)|`, with `H_{x,j}` the components of
/// the Ether form at `x` in the reference chart.
pub fn germ_residual(m: &Manifold, f: &FieldSymbol, x: &Point, cfg: &SeriesConfig) -> Result<f64> {
    cfg.validate()?;
    m.check_point(x)?;
    let chart = m.chart_at(x);
    let ux = chart.coords(x)?;
    let t = chart.tangent_basis(&ux);
    let amb = m.ambient_dim();
    let df = f.chart_jet(&chart, &ux, cfg.mode, 1)?.grad;
    let mut worst: f64 = 0.0;
    for j in 0..m.dim() {
        let tj = t.column(j).into_owned();
        let xa = x.clone();
        let mm = *m;
        let tv = tj.clone();
        let grad = DVector::from_iterator(
            amb,
            (0..amb).map(|k| {
                let mut e = DVector::zeros(amb);
                e[k] = 1.0;
                Complex64::new(tj.dot(&m.ether_linear(x, &e)), 0.0)
            }),
        );
        let h = FieldSymbol::new(move |z| Complex64::new(tv.dot(&mm.ether_ambient(&xa, &Point::new(z.clone()))), 0.0))
            .with_gradient(move |_| grad.clone())
            .with_hessian(move |_| DMatrix::zeros(amb, amb));
        let prod = series_product(m, f, &h, x, cfg)?;
        worst = worst.max((Complex64::new(0.0, cfg.hbar) * df[j] - prod).norm());
    }
    Ok(worst)
}

/// `|((f*g)*h)(z) - (f*(g*h))(z)|` with the outer products in finite-difference mode.
pub fn associativity_defect(m: &Manifold, f: &FieldSymbol, g: &FieldSymbol, h: &FieldSymbol, z: &Point, cfg: &SeriesConfig) -> Result<f64> {
    let outer = SeriesConfig { mode: DerivativeMode::FiniteDifference, ..*cfg };
    let fg = series_symbol(m, f, g, cfg);
    let gh = series_symbol(m, g, h, cfg);
    let fd_h = FieldSymbol::new({
        let h = h.clone();
        move |p| h.value(p)
    });
    let fd_f = FieldSymbol::new({
        let f = f.clone();
        move |p| f.value(p)
    });
    let left = series_product(m, &fg, &fd_h, z, &outer)?;
    let right = series_product(m, &fd_f, &gh, z, &outer)?;
    Ok((left - right).norm())
}

/// `|int f*g dm - int f g dm|` on the sphere using a product Gauss grid.
pub fn sphere_cyclicity_defect(f: &FieldSymbol, g: &FieldSymbol, cfg: &SeriesConfig, n_theta: usize) -> Result<f64> {
    let m = Manifold::Sphere;
    let mut star = Complex64::new(0.0, 0.0);
    let mut plain = Complex64::new(0.0, 0.0);
    for (p, w) in numerics::sphere_product_grid(n_theta, 2 * n_theta) {
        let pt = Point::from_v3(p);
        star += series_product(&m, f, g, &pt, cfg)? * w;
        plain += f.value(&pt.coords) * g.value(&pt.coords) * w;
    }
    Ok((star - plain).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::starprod::poly::{moyal_truncated, PolySymbol};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn sample_poly(seed: u32) -> PolySymbol {
        let s = seed as f64;
        PolySymbol::from_terms(
            2,
            &[
                (&[3, 0], c(0.3 + 0.1 * s)),
                (&[1, 2], Complex64::new(-0.7, 0.2 * s)),
                (&[0, 3], c(0.5)),
                (&[2, 1], c(1.1 - 0.05 * s)),
                (&[1, 0], c(0.4)),
                (&[0, 0], c(-0.2)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn flat_series_matches_truncated_moyal() {
        let m = Manifold::Flat { n: 1 };
        let (f, g) = (sample_poly(1), sample_poly(2));
        let z = Point::from_slice(&[0.3, -0.6]);
        for order in 0..=2 {
            let cfg = SeriesConfig::new(0.1, order);
            let got = series_product(&m, &FieldSymbol::from_poly(f.clone()), &FieldSymbol::from_poly(g.clone()), &z, &cfg).unwrap();
            let want = moyal_truncated(&f, &g, 0.1, order).unwrap().eval(z.coords.as_slice());
            assert!((got - want).norm() < 1e-12, "order {order}");
        }
    }

    #[test]
    fn first_order_term_vanishes_for_equal_symbols() {
        let m = Manifold::Sphere;
        let f = FieldSymbol::from_poly(PolySymbol::from_terms(3, &[(&[1, 1, 0], c(1.0)), (&[0, 0, 2], c(0.5))]).unwrap());
        let z = m.project(DVector::from_vec(vec![0.3, 0.5, 0.8])).unwrap();
        let c0 = series_product(&m, &f, &f, &z, &SeriesConfig::new(0.1, 0)).unwrap();
        let c1 = series_product(&m, &f, &f, &z, &SeriesConfig::new(0.1, 1)).unwrap();
        assert!((c1 - c0).norm() < 1e-12);
    }

    #[test]
    fn sphere_order_one_term_is_the_bracket() {
        let m = Manifold::Sphere;
        let f = FieldSymbol::from_poly(PolySymbol::var(3, 0));
        let g = FieldSymbol::from_poly(PolySymbol::var(3, 1));
        let z = m.project(DVector::from_vec(vec![0.2, -0.4, 0.9])).unwrap();
        let cfg = SeriesConfig::new(0.1, 1);
        let got = series_product(&m, &f, &g, &z, &cfg).unwrap() - c(z.coords[0] * z.coords[1]);
        // {x, y} = z . (e_x x e_y) = z_3
        let bracket = m.poisson(&z, &DVector::from_vec(vec![1.0, 0.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0, 0.0]));
        assert!((bracket - z.coords[2]).abs() < 1e-14);
        assert!((got - Complex64::new(0.0, -0.05 * bracket)).norm() < 1e-12);
    }

    #[test]
    fn germ_residual_is_exact_through_second_order() {
        let f = FieldSymbol::from_poly(sample_poly(3));
        let flat = Manifold::Flat { n: 1 };
        let x = Point::from_slice(&[0.4, 0.1]);
        for order in 1..=2 {
            assert!(germ_residual(&flat, &f, &x, &SeriesConfig::new(0.1, order)).unwrap() < 1e-12);
        }
        let s = Manifold::Sphere;
        let fs = FieldSymbol::from_poly(PolySymbol::from_terms(3, &[(&[2, 1, 0], c(1.0)), (&[0, 1, 1], c(-0.4)), (&[0, 0, 3], c(0.3))]).unwrap());
        let xs = s.project(DVector::from_vec(vec![0.3, -0.2, 0.9])).unwrap();
        for order in 1..=2 {
            assert!(germ_residual(&s, &fs, &xs, &SeriesConfig::new(0.1, order)).unwrap() < 1e-12);
        }
        let one = FieldSymbol::constant(c(2.0));
        assert!(germ_residual(&s, &one, &xs, &SeriesConfig::new(0.1, 1)).unwrap() < 1e-15);
    }

    #[test]
    fn flat_associativity_defect_scales() {
        let m = Manifold::Flat { n: 1 };
        let (f, g, h) = (sample_poly(1), sample_poly(4), sample_poly(5));
        let z = Point::from_slice(&[0.2, 0.3]);
        let hs = [0.1, 0.05, 0.025];
        let mut defects = Vec::new();
        for &hb in &hs {
            let fg = moyal_truncated(&f, &g, hb, 1).unwrap();
            let gh = moyal_truncated(&g, &h, hb, 1).unwrap();
            let l = moyal_truncated(&fg, &h, hb, 1).unwrap().eval(z.coords.as_slice());
            let r = moyal_truncated(&f, &gh, hb, 1).unwrap().eval(z.coords.as_slice());
            defects.push((l - r).norm());
        }
        let slope = numerics::loglog_slope(&hs, &defects);
        assert!(slope > 1.8, "slope {slope}");
        let fd = associativity_defect(
            &m,
            &FieldSymbol::from_poly(f),
            &FieldSymbol::from_poly(g),
            &FieldSymbol::from_poly(h),
            &z,
            &SeriesConfig::new(0.1, 1),
        )
        .unwrap();
        assert!((fd - defects[0]).abs() < 1e-5 * defects[0].max(1.0));
    }

    #[test]
    fn sphere_cyclicity_at_first_order() {
        let f = FieldSymbol::from_poly(PolySymbol::from_terms(3, &[(&[1, 1, 0], c(1.0)), (&[0, 0, 1], c(0.5))]).unwrap());
        let g = FieldSymbol::gaussian(DVector::from_vec(vec![0.0, 0.6, 0.8]), 0.7, c(1.0));
        let d = sphere_cyclicity_defect(&f, &g, &SeriesConfig::new(0.1, 1), 40).unwrap();
        assert!(d < 1e-10, "defect {d:e}");
    }

    #[test]
    fn config_validation() {
        assert!(SeriesConfig::new(0.1, 3).validate().is_err());
        assert!(SeriesConfig::new(-0.1, 1).validate().is_err());
    }
}
