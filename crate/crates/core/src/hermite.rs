//! Truncated harmonic-oscillator basis for one degree of freedom, used as an
//! independent operator-side reference for Weyl symbols.
//!
//! Conventions: `q = sqrt(hbar/2)(a + a^*)`, `p = i sqrt(hbar/2)(a^* - a)`, so
//! `[q, p] = i hbar`. The Weyl symbol of `A` at the origin is `2 tr(A P)` with
//! `P` the parity operator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::starprod::PolySymbol;

pub type CMatrix = DMatrix<Complex64>;

/// Annihilation operator on the first `dim` number states.
pub fn annihilation(dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { Complex64::new((j as f64).sqrt(), 0.0) } else { Complex64::new(0.0, 0.0) })
}

pub fn position(dim: usize, hbar: f64) -> CMatrix {
    let a = annihilation(dim);
    (&a + a.adjoint()) * Complex64::new((hbar / 2.0).sqrt(), 0.0)
}

pub fn momentum(dim: usize, hbar: f64) -> CMatrix {
    let a = annihilation(dim);
    (a.adjoint() - &a) * Complex64::new(0.0, (hbar / 2.0).sqrt())
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Weyl quantization of a polynomial in `(q, p)`, built on `dim + pad` states and
/// truncated to `dim` so that the kept block is free of truncation artifacts up
/// to degree `pad`.
pub fn weyl_poly(p: &PolySymbol, dim: usize, hbar: f64, pad: usize) -> Result<CMatrix> {
    if p.nvars() != 2 {
        return Err(Error::Unsupported("operator reference covers one degree of freedom".into()));
    }
    let big = dim + pad;
    let q = position(big, hbar);
    let mom = momentum(big, hbar);
    let mut out = CMatrix::zeros(big, big);
    let powers = |m: &CMatrix, k: u32| -> CMatrix { (0..k).fold(CMatrix::identity(big, big), |acc, _| acc * m) };
    for (mi, coef) in p.terms() {
        let (a, b) = (mi[0], mi[1]);
        let pb = powers(&mom, b);
        let mut term = CMatrix::zeros(big, big);
        for k in 0..=a {
            term += powers(&q, k) * &pb * powers(&q, a - k) * Complex64::new(binomial(a, k), 0.0);
        }
        out += term * (*coef / 2f64.powi(a as i32));
    }
    Ok(out.view((0, 0), (dim, dim)).into_owned())
}

/// `exp(-x/2) L_n(x)` for `n = 0..len`.
pub fn laguerre_scaled(len: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let e = (-x / 2.0).exp();
    let (mut l0, mut l1) = (e, e * (1.0 - x));
    for n in 0..len {
        match n {
            0 => out.push(l0),
            1 => out.push(l1),
            _ => {
                let k = (n - 1) as f64;
                let l2 = ((2.0 * k + 1.0 - x) * l1 - k * l0) / (k + 1.0);
                out.push(l2);
                l0 = l1;
                l1 = l2;
            }
        }
    }
    out
}

/// Weyl symbol at `(q, p)` of the operator diagonal in the number basis with entries `diag`.
pub fn diagonal_symbol(diag: &[Complex64], q: f64, p: f64, hbar: f64) -> Complex64 {
    let x = 2.0 * (q * q + p * p) / hbar;
    laguerre_scaled(diag.len(), x)
        .iter()
        .zip(diag)
        .enumerate()
        .map(|(n, (l, a))| a * (2.0 * l * if n % 2 == 0 { 1.0 } else { -1.0 }))
        .sum()
}

/// Number-basis diagonal of the operator with symbol `exp(-(q^2 + p^2)/(2 s^2))`.
pub fn gaussian_diagonal(dim: usize, sigma: f64, hbar: f64) -> Vec<Complex64> {
    let r = hbar / (2.0 * sigma * sigma);
    let tau = (1.0 - r) / (1.0 + r);
    (0..dim).map(|n| Complex64::new((1.0 + tau) / 2.0 * tau.powi(n as i32), 0.0)).collect()
}

/// Smooth cutoff weights for the alternating trace: the even extension
/// `rho_n = (erfc((n - c)/s) - erfc((n + c)/s)) / (2 erf(c/s))` with `c = c0 dim`
/// and `s = cs dim`, normalized to `rho_0 = 1` so that the low end carries no
/// boundary error in the alternating sum.
pub fn edge_window(dim: usize, c0: f64, cs: f64) -> Vec<f64> {
    let (c, s) = (c0 * dim as f64, cs * dim as f64);
    let norm = erfc(-c / s) - erfc(c / s);
    (0..dim).map(|n| (erfc((n as f64 - c) / s) - erfc((n as f64 + c) / s)) / norm).collect()
}

/// `2 sum_n rho_n (-1)^n A_nn`: the symbol at the origin, regularized by the weights `rho`.
pub fn origin_symbol(a: &CMatrix, window: Option<&[f64]>) -> Complex64 {
    (0..a.nrows())
        .map(|n| {
            let w = window.map_or(1.0, |w| w[n]);
            a[(n, n)] * (2.0 * w * if n % 2 == 0 { 1.0 } else { -1.0 })
        })
        .sum()
}

/// `exp(-i t H / hbar)` for Hermitian `H`.
pub fn unitary_evolution(h: &CMatrix, t: f64, hbar: f64) -> CMatrix {
    let herm = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let phases = eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -t * l / hbar));
    let v = &eig.eigenvectors;
    v * CMatrix::from_diagonal(&phases) * v.adjoint()
}

/// Windowed parity trace `2 sum_j rho_j exp(-i t E_j / hbar) <phi_j|P|phi_j>` over the
/// eigenpairs of the Hermitian `H`, ordered by energy. The window acts on the energy
/// index, so eigenpairs distorted by the truncation carry no weight.
pub fn evolved_origin_symbol(h: &CMatrix, t: f64, hbar: f64, window: &[f64]) -> Complex64 {
    let herm = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    order
        .iter()
        .zip(window)
        .map(|(&j, &w)| {
            let v = eig.eigenvectors.column(j);
            let parity: f64 = v.iter().enumerate().map(|(n, c)| if n % 2 == 0 { c.norm_sqr() } else { -c.norm_sqr() }).sum();
            Complex64::from_polar(2.0 * w * parity, -t * eig.eigenvalues[j] / hbar)
        })
        .sum()
}
