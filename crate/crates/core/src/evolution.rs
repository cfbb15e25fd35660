//! Semiclassical symbol of `exp(-i t H / hbar)` on flat phase space.
//!
//! For a midpoint `x` the chord endpoint `x0` solves `(x0 + g_t(x0))/2 = x`
//! with `g_t` the Hamilton flow. The phase is the symplectic area enclosed by
//! the arc `x0 -> g_t(x0)` and the chord, minus `t H`; the amplitude is
//! `2^n det(I + M)^{-1/2}` with `M = Dg_t(x0)`, continued from `t = 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{standard_j, Point};
use crate::hermite;
use crate::numerics;
use crate::starprod::{FieldSymbol, PolySymbol};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// Initial Runge-Kutta steps per unit time (doubled until converged).
    pub steps_per_unit: usize,
    /// Accepted change of endpoint and action between step doublings.
    pub tol: f64,
    pub max_refinements: usize,
    /// Largest time increment when continuing the chord solution from `t = 0`.
    pub continuation_step: f64,
    /// `|det(I + M)|` below this marks a focal time.
    pub focal_det: f64,
    /// Number of stored arc samples.
    pub arc_samples: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            steps_per_unit: 128,
            tol: 1e-11,
            max_refinements: 8,
            continuation_step: 0.25,
            focal_det: 1e-10,
            arc_samples: 32,
        }
    }
}

/// Hamilton trajectory with its linearization and action integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub end: Point,
    /// `Dg_t(x0)`.
    pub monodromy: DMatrix<f64>,
    /// `int_0^t z . grad H(z) ds`.
    pub action: f64,
    pub arc: Vec<Point>,
    /// Largest `|H(z(s)) - H(x0)|` over the stored samples.
    pub energy_drift: f64,
    pub steps: usize,
}

/// Chord-membrane data for one `(x, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSegment {
    pub x: Point,
    pub t: f64,
    pub x0: Point,
    pub x1: Point,
    pub arc: Vec<Point>,
    /// Signed area of the region between arc and chord.
    pub area: f64,
    pub h_arc: f64,
    /// `det(I + M)`.
    pub det: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolSample {
    pub value: Complex64,
    pub phase: f64,
    pub amplitude: f64,
    /// Number of focal times crossed; samples past a focal time are refused, so always 0.
    pub branch_index: usize,
    pub segment: EvolutionSegment,
}

fn check_hamiltonian(h: &FieldSymbol) -> Result<()> {
    if !h.has_gradient() {
        return Err(Error::MissingDerivative(1));
    }
    if !h.has_hessian() {
        return Err(Error::MissingDerivative(2));
    }
    Ok(())
}

fn real_h(h: &FieldSymbol, z: &DVector<f64>) -> f64 {
    h.value(z).re
}

fn flow_fixed(h: &FieldSymbol, x0: &DVector<f64>, t: f64, steps: usize, samples: usize) -> Result<FlowResult> {
    let d = x0.len();
    let j = standard_j(d / 2);
    // state: z (d), M (d*d, column major), action
    let rhs = |y: &DVector<f64>| -> DVector<f64> {
        let z = y.rows(0, d).into_owned();
        let g = h.ambient_gradient(&z).map(|g| g.map(|c| c.re)).unwrap_or_else(|_| DVector::from_element(d, f64::NAN));
        let hs = h.ambient_hessian(&z).map(|m| m.map(|c| c.re)).unwrap_or_else(|_| DMatrix::from_element(d, d, f64::NAN));
        let m = DMatrix::from_column_slice(d, d, y.rows(d, d * d).as_slice());
        let mut out = DVector::zeros(d + d * d + 1);
        out.rows_mut(0, d).copy_from(&(&j * &g));
        let dm = &j * hs * m;
        out.rows_mut(d, d * d).copy_from_slice(dm.as_slice());
        out[d + d * d] = z.dot(&g);
        out
    };
    let mut y = DVector::zeros(d + d * d + 1);
    y.rows_mut(0, d).copy_from(x0);
    let id = DMatrix::<f64>::identity(d, d);
    y.rows_mut(d, d * d).copy_from_slice(id.as_slice());
    let step = t / steps as f64;
    let every = (steps / samples.max(1)).max(1);
    let h0 = real_h(h, x0);
    let mut arc = vec![Point::new(x0.clone())];
    let mut drift: f64 = 0.0;
    for k in 1..=steps {
        y = numerics::rk4_step(&rhs, &y, step);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegratorDiverged);
        }
        if k % every == 0 || k == steps {
            let z = y.rows(0, d).into_owned();
            drift = drift.max((real_h(h, &z) - h0).abs());
            arc.push(Point::new(z));
        }
    }
    Ok(FlowResult {
        end: Point::new(y.rows(0, d).into_owned()),
        monodromy: DMatrix::from_column_slice(d, d, y.rows(d, d * d).as_slice()),
        action: y[d + d * d],
        arc,
        energy_drift: drift,
        steps,
    })
}

/// Hamilton flow `z' = J grad H` from `x0` for time `t`, refined by step doubling.
pub fn hamilton_flow(h: &FieldSymbol, x0: &Point, t: f64, cfg: &EvolutionConfig) -> Result<FlowResult> {
    check_hamiltonian(h)?;
    if x0.coords.len() % 2 != 0 || x0.coords.is_empty() {
        return Err(Error::Dimension { expected: 2, found: x0.coords.len() });
    }
    let mut steps = ((t.abs() * cfg.steps_per_unit as f64).ceil() as usize).max(8);
    let mut prev = flow_fixed(h, &x0.coords, t, steps, cfg.arc_samples)?;
    for _ in 0..cfg.max_refinements {
        steps *= 2;
        let next = flow_fixed(h, &x0.coords, t, steps, cfg.arc_samples)?;
        let change = next.end.distance(&prev.end).max((next.action - prev.action).abs());
        let scale = 1.0 + next.end.coords.norm() + next.action.abs();
        if change <= cfg.tol * scale {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::IntegratorDiverged)
}

fn chord_newton(h: &FieldSymbol, x: &Point, t: f64, guess: &Point, cfg: &EvolutionConfig) -> Result<(Point, FlowResult)> {
    let d = x.coords.len();
    let id = DMatrix::<f64>::identity(d, d);
    let mut x0 = guess.clone();
    for _ in 0..50 {
        let flow = hamilton_flow(h, &x0, t, cfg)?;
        let r = (&x0.coords + &flow.end.coords) * 0.5 - &x.coords;
        let jac = (&id + &flow.monodromy) * 0.5;
        let det = jac.determinant() * 2f64.powi(d as i32);
        if det.abs() < cfg.focal_det {
            return Err(Error::FocalTime { t, det });
        }
        let scale = 1.0 + x0.coords.norm() + flow.end.coords.norm();
        if r.norm() < 1e-14 * scale {
            return Ok((x0, flow));
        }
        let step = jac.lu().solve(&r).ok_or(Error::FocalTime { t, det })?;
        x0 = Point::new(&x0.coords - &step);
        if step.norm() < 1e-14 * scale {
            let flow = hamilton_flow(h, &x0, t, cfg)?;
            return Ok((x0, flow));
        }
    }
    let flow = hamilton_flow(h, &x0, t, cfg)?;
    let residual = ((&x0.coords + &flow.end.coords) * 0.5 - &x.coords).norm();
    if residual < 1e-10 * (1.0 + x0.coords.norm()) {
        return Ok((x0, flow));
    }
    Err(Error::NewtonDiverged { iters: 50, residual })
}

/// Chord endpoint `x0` with midpoint `x`, continued in time from `x0 = x` at `t = 0`.
///
/// The time step is halved whenever `det(I + M)` drops below half its previous
/// value, so a zero of the determinant (a focal time) is approached but never
/// stepped over; it is reported as `FocalTime` once the step underflows or the
/// determinant falls below `cfg.focal_det`.
pub fn chord_fixed_point(h: &FieldSymbol, x: &Point, t: f64, cfg: &EvolutionConfig) -> Result<(Point, FlowResult)> {
    check_hamiltonian(h)?;
    let d = x.coords.len();
    let id = DMatrix::<f64>::identity(d, d);
    let dir = t.signum();
    let total = t.abs();
    let min_step = 1e-9 * total.max(1.0);
    let mut s = 0.0;
    let mut step = cfg.continuation_step.min(total);
    let mut det_prev = 2f64.powi(d as i32);
    let mut guess = x.clone();
    let mut last = None;
    while s < total {
        if step < min_step {
            return Err(Error::FocalTime { t: dir * s, det: det_prev });
        }
        let s_try = (s + step).min(total);
        let attempt = chord_newton(h, x, dir * s_try, &guess, cfg).and_then(|(x0, flow)| {
            let det = (&id + &flow.monodromy).determinant();
            if det <= cfg.focal_det {
                return Err(Error::FocalTime { t: dir * s_try, det });
            }
            Ok((x0, flow, det))
        });
        match attempt {
            Ok((x0, flow, det)) if det >= 0.5 * det_prev => {
                s = s_try;
                det_prev = det;
                guess = x0.clone();
                last = Some((x0, flow));
                step = (2.0 * step).min(cfg.continuation_step);
            }
            Ok(_) | Err(Error::FocalTime { .. }) | Err(Error::NewtonDiverged { .. }) => step *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Ok(last.expect("at least one continuation step"))
}

/// Semiclassical symbol `G_t(x) = phi exp(i Phi / hbar)`.
pub fn evolution_symbol(h: &FieldSymbol, x: &Point, t: f64, hbar: f64, cfg: &EvolutionConfig) -> Result<SymbolSample> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidArgument("hbar must be positive".into()));
    }
    let d = x.coords.len();
    let n = d / 2;
    let (x0, flow) = if t == 0.0 {
        check_hamiltonian(h)?;
        (x.clone(), hamilton_flow(h, x, 0.0, cfg)?)
    } else {
        chord_fixed_point(h, x, t, cfg)?
    };
    let j = standard_j(n);
    let x1 = flow.end.clone();
    // Green's theorem with the primitive z^T J dz / 2, taken along the chord x1 -> x0 and
    // against the arc, so that the oscillator reproduces -tan(t/2)|x|^2.
    let area = 0.5 * flow.action - 0.5 * x1.coords.dot(&(&j * &x0.coords));
    let h_arc = real_h(h, &x0.coords);
    let phase = area - t * h_arc;
    let det = (DMatrix::<f64>::identity(d, d) + &flow.monodromy).determinant();
    let amplitude = 2f64.powi(n as i32) / det.sqrt();
    Ok(SymbolSample {
        value: Complex64::from_polar(amplitude, phase / hbar),
        phase,
        amplitude,
        branch_index: 0,
        segment: EvolutionSegment { x: x.clone(), t, x0, x1, arc: flow.arc, area, h_arc, det },
    })
}

/// Settings of the number-basis reference computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub dim: usize,
    /// Center of the edge window as a fraction of `dim`.
    pub window_center: f64,
    /// Width of the edge window as a fraction of `dim`.
    pub window_width: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { dim: 128, window_center: 0.35, window_width: 0.08 }
    }
}

/// Symbol of `exp(-i t H^ / hbar)` at `x`, computed as the windowed parity trace
/// over the eigenpairs of the Weyl quantization of `H(. + x)` in the number basis.
pub fn oracle_symbol(h: &PolySymbol, x: &Point, t: f64, hbar: f64, cfg: &OracleConfig) -> Result<Complex64> {
    if h.nvars() != 2 || x.coords.len() != 2 {
        return Err(Error::Unsupported("the operator reference covers one degree of freedom".into()));
    }
    if h.degree() < 2 || h.degree() % 2 == 1 {
        return Err(Error::Unsupported("the operator reference needs a confining Hamiltonian of even degree".into()));
    }
    if cfg.dim < 8 || cfg.dim > 256 {
        return Err(Error::InvalidArgument(format!("oracle dimension {} outside 8..=256", cfg.dim)));
    }
    let hx = h.shifted(x.coords.as_slice())?;
    let op = hermite::weyl_poly(&hx, cfg.dim, hbar, h.degree() + 1)?;
    let w = hermite::edge_window(cfg.dim, cfg.window_center, cfg.window_width);
    Ok(hermite::evolved_origin_symbol(&op, t, hbar, &w))
}

/// Oracle value at `cfg.dim` together with the relative change from half the dimension.
pub fn oracle_symbol_checked(h: &PolySymbol, x: &Point, t: f64, hbar: f64, cfg: &OracleConfig, tol: f64) -> Result<(Complex64, f64)> {
    let full = oracle_symbol(h, x, t, hbar, cfg)?;
    let half = oracle_symbol(h, x, t, hbar, &OracleConfig { dim: cfg.dim / 2, ..*cfg })?;
    let change = (full - half).norm() / full.norm().max(1e-300);
    if change > tol {
        return Err(Error::TruncationNonConvergence { change, tol });
    }
    Ok((full, change))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn oscillator() -> PolySymbol {
        PolySymbol::from_terms(2, &[(&[2, 0], c(0.5)), (&[0, 2], c(0.5))]).unwrap()
    }

    #[test]
    fn flow_examples() {
        let cfg = EvolutionConfig::default();
        let h = FieldSymbol::from_poly(oscillator());
        let x0 = Point::from_slice(&[0.7, -0.3]);
        let r = hamilton_flow(&h, &x0, 2.0 * std::f64::consts::PI, &cfg).unwrap();
        assert!(r.end.distance(&x0) < 1e-8);
        assert!(r.energy_drift < 1e-9 * 2.0 * std::f64::consts::PI);
        assert!((r.monodromy.clone() - DMatrix::identity(2, 2)).amax() < 1e-8);
        let r0 = hamilton_flow(&h, &x0, 0.0, &cfg).unwrap();
        assert_eq!(r0.end, x0);
        // H = 2q - p moves along J grad H = (-1, -2).
        let lin = FieldSymbol::from_poly(PolySymbol::from_terms(2, &[(&[1, 0], c(2.0)), (&[0, 1], c(-1.0))]).unwrap());
        let r = hamilton_flow(&lin, &x0, 1.5, &cfg).unwrap();
        assert!(r.end.distance(&Point::from_slice(&[0.7 - 1.5, -0.3 - 3.0])) < 1e-12);
    }

    #[test]
    fn oscillator_chord_and_symbol() {
        let cfg = EvolutionConfig::default();
        let h = FieldSymbol::from_poly(oscillator());
        let x = Point::from_slice(&[0.5, 0.2]);
        for t in [0.5, 1.0, 2.0, 3.0] {
            let (x0, flow) = chord_fixed_point(&h, &x, t, &cfg).unwrap();
            let mid = (&x0.coords + &flow.end.coords) * 0.5;
            assert!((mid - &x.coords).norm() < 1e-10);
            let s = evolution_symbol(&h, &x, t, 0.2, &cfg).unwrap();
            assert!((s.amplitude - 1.0 / (t / 2.0).cos()).abs() < 1e-8);
            let exact = -(t / 2.0).tan() * x.coords.norm_squared();
            assert!((s.phase - exact).abs() < 1e-9, "t {t}: {} vs {exact}", s.phase);
        }
        let g0 = evolution_symbol(&h, &x, 0.0, 0.2, &cfg).unwrap();
        assert!((g0.value - c(1.0)).norm() < 1e-15);
        let focal = evolution_symbol(&h, &x, std::f64::consts::PI, 0.2, &cfg);
        assert!(matches!(focal, Err(Error::FocalTime { .. })), "{focal:?}");
        assert!(matches!(evolution_symbol(&h, &x, 4.0, 0.2, &cfg), Err(Error::FocalTime { .. })));
    }

    #[test]
    fn oracle_properties() {
        let cfg = OracleConfig { dim: 96, ..OracleConfig::default() };
        let h = oscillator();
        let x = Point::from_slice(&[0.3, -0.4]);
        assert!((oracle_symbol(&h, &x, 0.0, 0.2, &cfg).unwrap() - c(1.0)).norm() < 1e-10);
        let rot = Point::from_slice(&[0.5, 0.0]);
        let a = oracle_symbol(&h, &x, 1.0, 0.2, &cfg).unwrap();
        let b = oracle_symbol(&h, &rot, 1.0, 0.2, &cfg).unwrap();
        assert!((a - b).norm() < 1e-8);
        let back = oracle_symbol(&h, &x, -1.0, 0.2, &cfg).unwrap();
        assert!((a.conj() - back).norm() < 1e-9);
        // Displacing the well by (0.2, 0) displaces the symbol.
        let shifted = PolySymbol::from_terms(2, &[(&[2, 0], c(0.5)), (&[1, 0], c(-0.2)), (&[0, 0], c(0.02)), (&[0, 2], c(0.5))]).unwrap();
        let moved = Point::from_slice(&[0.5, -0.4]);
        assert!((oracle_symbol(&shifted, &moved, 1.0, 0.2, &cfg).unwrap() - a).norm() < 1e-8);
        let q = PolySymbol::var(2, 0);
        assert!(matches!(oracle_symbol(&q, &x, 0.7, 0.2, &cfg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn semiclassical_matches_oracle_for_quadratic_h() {
        let aniso = PolySymbol::from_terms(2, &[(&[2, 0], c(0.6)), (&[1, 1], c(0.2)), (&[0, 2], c(0.4)), (&[1, 0], c(0.1))]).unwrap();
        let x = Point::from_slice(&[0.4, -0.3]);
        for (h, t) in [(aniso.clone(), 0.5), (aniso, 1.0), (oscillator(), 2.0)] {
            let s = evolution_symbol(&FieldSymbol::from_poly(h.clone()), &x, t, 0.2, &EvolutionConfig::default()).unwrap();
            let o = oracle_symbol(&h, &x, t, 0.2, &OracleConfig::default()).unwrap();
            let rel = (s.value - o).norm() / o.norm();
            assert!(rel < 1e-6, "t {t}: {} vs {o} ({rel:e})", s.value);
        }
    }
}
