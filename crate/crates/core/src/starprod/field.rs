//! Scalar symbols given as callables with optional analytic derivatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::poly::PolySymbol;
use crate::error::{Error, Result};
use crate::geometry::Chart;
use crate::numerics::{self, FD_STEP_1, FD_STEP_2};

type ValueFn = Arc<dyn Fn(&DVector<f64>) -> Complex64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<Complex64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<Complex64> + Send + Sync>;

/// How derivatives of a symbol are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// A complex scalar field on native model coordinates.
///
/// Derivatives, when present, are Euclidean derivatives of the callable in
/// native coordinates; on the sphere only their restriction to the sphere matters.
#[derive(Clone)]
pub struct FieldSymbol {
    value: ValueFn,
    grad: Option<GradFn>,
    hess: Option<HessFn>,
}

impl fmt::Debug for FieldSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSymbol")
            .field("gradient", &self.grad.is_some())
            .field("hessian", &self.hess.is_some())
            .finish()
    }
}

/// Value, chart gradient and chart Hessian at a point.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: Complex64,
    pub grad: DVector<Complex64>,
    pub hess: DMatrix<Complex64>,
}

impl FieldSymbol {
    pub fn new(f: impl Fn(&DVector<f64>) -> Complex64 + Send + Sync + 'static) -> Self {
        FieldSymbol { value: Arc::new(f), grad: None, hess: None }
    }

    pub fn with_gradient(mut self, g: impl Fn(&DVector<f64>) -> DVector<Complex64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&DVector<f64>) -> DMatrix<Complex64> + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(h));
        self
    }

    pub fn constant(c: Complex64) -> Self {
        FieldSymbol::new(move |_| c)
            .with_gradient(|z| DVector::zeros(z.len()))
            .with_hessian(|z| DMatrix::zeros(z.len(), z.len()))
    }

    /// Polynomial symbol with exact derivatives.
    pub fn from_poly(p: PolySymbol) -> Self {
        let nv = p.nvars();
        let d1: Vec<PolySymbol> = (0..nv).map(|i| p.derivative(i)).collect();
        let d2: Vec<Vec<PolySymbol>> = d1.iter().map(|di| (0..nv).map(|j| di.derivative(j)).collect()).collect();
        let p = Arc::new(p);
        let (d1, d2) = (Arc::new(d1), Arc::new(d2));
        FieldSymbol::new(move |z| p.eval(z.as_slice()))
            .with_gradient(move |z| DVector::from_iterator(nv, d1.iter().map(|d| d.eval(z.as_slice()))))
            .with_hessian(move |z| DMatrix::from_fn(nv, nv, |i, j| d2[i][j].eval(z.as_slice())))
    }

    /// `amp * exp(-|z - c|^2 / (2 sigma^2))` with exact derivatives.
    pub fn gaussian(center: DVector<f64>, sigma: f64, amp: Complex64) -> Self {
        let s2 = sigma * sigma;
        let (c1, c2, c3) = (center.clone(), center.clone(), center);
        let val = move |z: &DVector<f64>, c: &DVector<f64>| amp * (-(z - c).norm_squared() / (2.0 * s2)).exp();
        FieldSymbol::new(move |z| val(z, &c1))
            .with_gradient(move |z| {
                let v = val(z, &c2);
                (z - &c2).map(|d| -v * d / s2)
            })
            .with_hessian(move |z| {
                let v = val(z, &c3);
                let d = z - &c3;
                let n = z.len();
                DMatrix::from_fn(n, n, |i, j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    v * (d[i] * d[j] / (s2 * s2) - delta / s2)
                })
            })
    }

    pub fn value(&self, z: &DVector<f64>) -> Complex64 {
        (self.value)(z)
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn has_hessian(&self) -> bool {
        self.hess.is_some()
    }

    pub fn ambient_gradient(&self, z: &DVector<f64>) -> Result<DVector<Complex64>> {
        self.grad.as_ref().map(|g| g(z)).ok_or(Error::MissingDerivative(1))
    }

    pub fn ambient_hessian(&self, z: &DVector<f64>) -> Result<DMatrix<Complex64>> {
        self.hess.as_ref().map(|h| h(z)).ok_or(Error::MissingDerivative(2))
    }

    /// Complex conjugate symbol.
    pub fn conj(&self) -> Self {
        let v = self.value.clone();
        let mut out = FieldSymbol::new(move |z| v(z).conj());
        if let Some(g) = self.grad.clone() {
            out = out.with_gradient(move |z| g(z).map(|c| c.conj()));
        }
        if let Some(h) = self.hess.clone() {
            out = out.with_hessian(move |z| h(z).map(|c| c.conj()));
        }
        out
    }

    /// Value and chart derivatives of `f o chart` at `u`, up to `order` (0, 1 or 2).
    pub fn chart_jet(&self, chart: &Chart, u: &DVector<f64>, mode: DerivativeMode, order: usize) -> Result<Jet> {
        let d = chart.dim();
        let z = chart.point(u).coords;
        let value = self.value(&z);
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        match mode {
            DerivativeMode::Analytic => {
                if order >= 1 {
                    let t = chart.tangent_basis(u).map(|v| Complex64::new(v, 0.0));
                    let g = self.ambient_gradient(&z)?;
                    grad = t.transpose() * &g;
                    if order >= 2 {
                        let h = self.ambient_hessian(&z)?;
                        hess = t.transpose() * h * &t;
                        for j in 0..d {
                            for k in 0..d {
                                let dd = chart.second_derivative(u, j, k).map(|v| Complex64::new(v, 0.0));
                                hess[(j, k)] += g.dot(&dd);
                            }
                        }
                    }
                }
            }
            DerivativeMode::FiniteDifference => {
                let f = |v: &DVector<f64>| self.value(&chart.point(v).coords);
                if order >= 1 {
                    grad = numerics::gradient(f, u, FD_STEP_1)?;
                }
                if order >= 2 {
                    hess = numerics::hessian(f, u, FD_STEP_2)?;
                }
            }
        }
        Ok(Jet { value, grad, hess })
    }

    /// Largest mismatch between supplied derivatives and finite differences at the probes.
    pub fn derivative_consistency(&self, probes: &[DVector<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for z in probes {
            let f = |v: &DVector<f64>| self.value(v);
            if let Some(g) = &self.grad {
                let fd: DVector<Complex64> = numerics::gradient(f, z, FD_STEP_1)?;
                worst = worst.max((g(z) - fd).camax());
            }
            if let Some(h) = &self.hess {
                let fd: DMatrix<Complex64> = numerics::hessian(f, z, FD_STEP_2)?;
                worst = worst.max((h(z) - fd).camax());
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn polynomial_and_gaussian_derivatives_are_consistent() {
        let p = PolySymbol::from_terms(2, &[(&[2, 1], Complex64::new(1.0, 0.5)), (&[0, 3], Complex64::new(-0.3, 0.0))]).unwrap();
        let probes = vec![DVector::from_vec(vec![0.3, -0.2]), DVector::from_vec(vec![-1.0, 0.8])];
        assert!(FieldSymbol::from_poly(p).derivative_consistency(&probes).unwrap() < 1e-6);
        let g = FieldSymbol::gaussian(DVector::from_vec(vec![0.1, 0.2]), 0.8, Complex64::new(1.0, 0.0));
        assert!(g.derivative_consistency(&probes).unwrap() < 1e-6);
        assert!(g.conj().derivative_consistency(&probes).unwrap() < 1e-6);
    }

    #[test]
    fn chart_jets_agree_between_modes() {
        // f = x y + z^2 on the sphere, off-center gnomonic chart.
        let p = PolySymbol::from_terms(3, &[(&[1, 1, 0], Complex64::new(1.0, 0.0)), (&[0, 0, 2], Complex64::new(1.0, 0.0))]).unwrap();
        let f = FieldSymbol::from_poly(p);
        let chart = Chart::gnomonic(Vector3::new(0.0, 0.0, 1.0));
        let u = DVector::from_vec(vec![0.4, -0.3]);
        let a = f.chart_jet(&chart, &u, DerivativeMode::Analytic, 2).unwrap();
        let b = f.chart_jet(&chart, &u, DerivativeMode::FiniteDifference, 2).unwrap();
        assert!((a.grad - b.grad).camax() < 1e-9);
        let dh = (a.hess - b.hess).camax();
        assert!(dh < 1e-5, "hessian mismatch {dh:e}");
    }

    #[test]
    fn missing_derivatives_are_reported() {
        let f = FieldSymbol::new(|z| Complex64::new(z[0], 0.0));
        let chart = Chart::Linear { dim: 2 };
        let r = f.chart_jet(&chart, &DVector::zeros(2), DerivativeMode::Analytic, 1);
        assert!(matches!(r, Err(Error::MissingDerivative(1))));
    }
}
