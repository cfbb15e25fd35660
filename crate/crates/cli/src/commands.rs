//! The five subcommands. Each turns a resolved configuration into an [`Outcome`].

use std::sync::Arc;

use etherstar_core::evolution::{evolution_symbol, oracle_symbol, EvolutionConfig, OracleConfig};
use etherstar_core::kernel::{self, MembraneConfig};
use etherstar_core::numerics::loglog_slope;
use etherstar_core::quantize::{quantize_check as run_quantize, QuantizeConfig};
use etherstar_core::starprod::{moyal_poly, quad::converged_product, series_product, FieldSymbol, GaussianPoly, PolySymbol, QuadConfig, SeriesConfig};
use etherstar_core::suite;
use etherstar_core::{Error, Manifold, Point};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::Value;

use crate::config::{self, RunConfig, StarMethod};
use crate::output::{json_f64, opt_f64, Outcome, Row};
use crate::CliError;

const DEFAULT_HBAR: f64 = 0.2;
const DEFAULT_ORACLE_TOL: f64 = 1e-5;

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Usage(e.to_string()))
}

fn required<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str, CliError> {
    v.as_deref().ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

pub fn check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.manifold()?;
    let samples = cfg.samples.unwrap_or_default();
    let report = suite::check_suite(&m, cfg.seed(), &samples, cfg.timing);
    let mut out = Outcome::new(report.pass).summary("seed", report.seed);
    if let Some(t) = report.wall_time_s {
        out = out.summary("wall_time_s", json_f64(t));
    }
    for c in &report.checks {
        match to_value(c)? {
            Value::Object(row) => out.rows.push(row),
            _ => unreachable!("check results serialize to objects"),
        }
    }
    Ok(out)
}

pub fn quantize_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.manifold()?;
    let mut qc = QuantizeConfig::default();
    if let Some(t) = cfg.tol {
        qc.tol = t;
    }
    let report = run_quantize(&m, cfg.hbar(1.0)?, &qc)?;
    let mut out = Outcome::new(report.pass);
    match to_value(&report)? {
        Value::Object(row) => out.rows.push(row),
        _ => unreachable!("reports serialize to objects"),
    }
    Ok(out)
}

fn kernel_rows(m: &Manifold, x: &Point, y: &Point, z: &Point, index: usize, hbar: f64) -> Result<Vec<Row>, CliError> {
    let base = || Row::default().set("z_index", index).set("branch", Value::Null).coords("z", z.coords.as_slice());
    let blank = |r: Row| r.set("phase", Value::Null).set("amplitude", Value::Null).set("re", Value::Null).set("im", Value::Null);
    let roots = match kernel::enumerate_fixed_points(m, x, y, z) {
        Ok(r) => r,
        Err(e @ Error::FocalTriple { .. }) => {
            return Ok(vec![blank(base()).set("focal", true).set("status", "focal").set("message", e.to_string())]);
        }
        Err(e) => return Err(e.into()),
    };
    let mut rows = Vec::with_capacity(roots.len());
    for branch in 0..roots.len() {
        let tri = kernel::solve_triangle(m, x, y, z, branch)?;
        let row = base().set("branch", branch);
        let phase = match kernel::phase(m, &tri, &MembraneConfig::default()) {
            Ok(p) => p,
            Err(e @ Error::MembraneTooLarge) => {
                rows.push(blank(row).set("focal", false).set("status", "membrane-too-large").set("message", e.to_string()));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let amp = kernel::amplitude(m, &tri)?;
        let v = Complex64::from_polar(amp, phase / hbar);
        rows.push(
            row.set("phase", json_f64(phase))
                .set("amplitude", json_f64(amp))
                .set("re", json_f64(v.re))
                .set("im", json_f64(v.im))
                .set("focal", false)
                .set("status", "ok")
                .set("message", ""),
        );
    }
    Ok(rows)
}

/// Kernel over a grid of `z`. Fails (exit 1) when no grid point gives a value.
pub fn kernel(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.manifold()?;
    let hbar = cfg.hbar(DEFAULT_HBAR)?;
    let x = config::parse_point(&m, required(&cfg.x, "x")?)?;
    let y = config::parse_point(&m, required(&cfg.y, "y")?)?;
    let zs = cfg.grid_points(&m)?;
    let rows: Vec<Vec<Row>> = zs.par_iter().enumerate().map(|(i, z)| kernel_rows(&m, &x, &y, z, i, hbar)).collect::<Result<_, _>>()?;
    let rows: Vec<_> = rows.into_iter().flatten().map(Row::build).collect();
    let ok = rows.iter().filter(|r| r["status"] == "ok").count();
    let mut out = Outcome::new(ok > 0).summary("hbar", hbar).summary("mu", kernel::mu(&m)).summary("values", ok);
    out.rows = rows;
    Ok(out)
}

fn polynomial_only(g: &GaussianPoly, nvars: usize) -> Result<PolySymbol, CliError> {
    if g.envelope.is_some() {
        return Err(CliError::Usage("the series and moyal methods take polynomial symbols without an envelope".into()));
    }
    if g.poly.nvars() != nvars {
        return Err(CliError::Usage(format!("symbols must be polynomials in {nvars} variables, got {}", g.poly.nvars())));
    }
    Ok(g.poly.clone())
}

pub fn star(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.manifold()?;
    let hbar = cfg.hbar(DEFAULT_HBAR)?;
    let f = config::parse_symbol(required(&cfg.f, "f")?)?;
    let g = config::parse_symbol(required(&cfg.g, "g")?)?;
    let zs = cfg.grid_points(&m)?;
    let method = cfg.method.unwrap_or_default();
    let mut out = Outcome::new(true).summary("hbar", hbar).summary("method", to_value(&method)?);
    let values: Vec<Complex64> = match method {
        StarMethod::Series => {
            let order = cfg.order.unwrap_or(2);
            let sc = SeriesConfig::new(hbar, order);
            let fs = FieldSymbol::from_poly(polynomial_only(&f, m.ambient_dim())?);
            let gs = FieldSymbol::from_poly(polynomial_only(&g, m.ambient_dim())?);
            out = out.summary("order", order);
            zs.par_iter().map(|z| series_product(&m, &fs, &gs, z, &sc)).collect::<Result<_, _>>()?
        }
        StarMethod::Moyal => {
            if !matches!(m, Manifold::Flat { .. }) {
                return Err(CliError::Usage("the moyal method needs a flat model".into()));
            }
            let prod = moyal_poly(&polynomial_only(&f, m.dim())?, &polynomial_only(&g, m.dim())?, hbar)?;
            out = out.summary("product", to_value(&prod)?);
            zs.iter().map(|z| prod.eval(z.coords.as_slice())).collect()
        }
        StarMethod::Quad => {
            if m != (Manifold::Flat { n: 1 }) {
                return Err(CliError::Usage("the quad method needs flat:1".into()));
            }
            for s in [&f, &g] {
                if s.poly.nvars() != 2 {
                    return Err(CliError::Usage("quad symbols are functions of (q, p)".into()));
                }
            }
            let probes: Vec<[f64; 2]> = zs.iter().map(|z| [z.coords[0], z.coords[1]]).collect();
            let (prod, change) = converged_product(Arc::new(f), Arc::new(g), hbar, &QuadConfig::default(), &probes)?;
            out = out.summary("quadrature_change", json_f64(change));
            probes.iter().map(|&p| etherstar_core::starprod::AnalyticSymbol::eval_real(&prod, p)).collect()
        }
    };
    out.rows = zs
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(i, (z, v))| Row::default().set("z_index", i).coords("z", z.coords.as_slice()).set("re", json_f64(v.re)).set("im", json_f64(v.im)).build())
        .collect();
    Ok(out)
}

/// One evolution sample, `None` past a focal time.
struct EvolvePoint {
    value: Option<(Complex64, f64, f64)>,
    oracle: Option<Complex64>,
}

impl EvolvePoint {
    fn rel_error(&self) -> Option<f64> {
        match (self.value, self.oracle) {
            (Some((v, _, _)), Some(o)) => Some((v - o).norm() / o.norm()),
            _ => None,
        }
    }
}

fn evolve_point(h: &PolySymbol, hs: &FieldSymbol, x: &Point, t: f64, hbar: f64, oracle: Option<&OracleConfig>) -> Result<EvolvePoint, CliError> {
    let value = match evolution_symbol(hs, x, t, hbar, &EvolutionConfig::default()) {
        Ok(s) => Some((s.value, s.phase, s.amplitude)),
        Err(Error::FocalTime { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let oracle = match oracle {
        Some(oc) => Some(oracle_symbol(h, x, t, hbar, oc)?),
        None => None,
    };
    Ok(EvolvePoint { value, oracle })
}

fn evolve_row(t: f64, x: &Point, hbar: Option<f64>, p: &EvolvePoint, with_oracle: bool) -> Row {
    let mut r = Row::default().set("t", json_f64(t)).coords("x", x.coords.as_slice());
    if let Some(h) = hbar {
        r = r.set("hbar", json_f64(h));
    }
    r = match p.value {
        Some((v, phase, amp)) => r.set("re", json_f64(v.re)).set("im", json_f64(v.im)).set("phase", json_f64(phase)).set("amplitude", json_f64(amp)).set("focal", false),
        None => r.set("re", Value::Null).set("im", Value::Null).set("phase", Value::Null).set("amplitude", Value::Null).set("focal", true),
    };
    r = r.set("method", "semiclassical");
    if with_oracle {
        r = r
            .set("oracle_re", opt_f64(p.oracle.map(|o| o.re)))
            .set("oracle_im", opt_f64(p.oracle.map(|o| o.im)))
            .set("rel_error", opt_f64(p.rel_error()));
    }
    r
}

pub fn evolve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.manifold()?;
    if !matches!(m, Manifold::Flat { .. }) {
        return Err(CliError::Usage("evolve needs a flat model".into()));
    }
    let h = config::parse_hamiltonian(cfg.h.as_deref().unwrap_or("oscillator"))?;
    if h.nvars() != m.dim() {
        return Err(CliError::Usage(format!("the Hamiltonian must be a polynomial in {} variables", m.dim())));
    }
    let hs = FieldSymbol::from_poly(h.clone());
    let ts = config::parse_values(required(&cfg.t, "t")?)?;
    let xs = cfg.grid_points(&m)?;
    let sweep = cfg.hbar_sweep.as_deref().map(config::parse_values).transpose()?;
    let with_oracle = cfg.oracle || sweep.is_some();
    let oc = OracleConfig { dim: cfg.oracle_dim.unwrap_or(OracleConfig::default().dim), ..OracleConfig::default() };
    let oracle = with_oracle.then_some(&oc);
    let jobs: Vec<(f64, &Point)> = ts.iter().flat_map(|&t| xs.iter().map(move |x| (t, x))).collect();
    let mut out = Outcome::new(true).summary("hamiltonian", to_value(&h)?);
    if with_oracle {
        out = out.summary("oracle_dim", oc.dim);
    }
    let tol = cfg.tol.or((with_oracle && sweep.is_none()).then_some(DEFAULT_ORACLE_TOL));
    let mut worst: f64 = 0.0;
    match &sweep {
        None => {
            let hbar = cfg.hbar(DEFAULT_HBAR)?;
            out = out.summary("hbar", hbar);
            let pts: Vec<EvolvePoint> = jobs.par_iter().map(|&(t, x)| evolve_point(&h, &hs, x, t, hbar, oracle)).collect::<Result<_, _>>()?;
            for (&(t, x), p) in jobs.iter().zip(&pts) {
                worst = worst.max(p.rel_error().unwrap_or(0.0));
                out.rows.push(evolve_row(t, x, None, p, with_oracle).build());
            }
        }
        Some(hbars) => {
            if hbars.iter().any(|&v| !(v > 0.0)) {
                return Err(CliError::Usage("hbar values must be positive".into()));
            }
            let groups: Vec<Vec<EvolvePoint>> = jobs
                .par_iter()
                .map(|&(t, x)| hbars.iter().map(|&hb| evolve_point(&h, &hs, x, t, hb, oracle)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<_, _>>()?;
            for (&(t, x), group) in jobs.iter().zip(&groups) {
                let errs: Option<Vec<f64>> = group.iter().map(EvolvePoint::rel_error).collect();
                let slope = errs.as_ref().filter(|e| e.len() >= 2).map(|e| loglog_slope(hbars, e));
                for (p, &hb) in group.iter().zip(hbars) {
                    worst = worst.max(p.rel_error().unwrap_or(0.0));
                    out.rows.push(evolve_row(t, x, Some(hb), p, true).set("slope", opt_f64(slope)).build());
                }
            }
        }
    }
    if with_oracle {
        out = out.summary("max_rel_error", json_f64(worst));
    }
    if let Some(tol) = tol {
        out = out.summary("tol", tol);
        out.pass = worst <= tol;
    }
    Ok(out)
}
