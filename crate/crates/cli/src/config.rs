//! Run configuration: command-line flags merged over an optional JSON config file.

use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use etherstar_core::starprod::{Envelope, GaussianPoly, PolySymbol};
use etherstar_core::suite::{self, SuiteSamples};
use etherstar_core::{Manifold, Point};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StarMethod {
    /// Covariant series truncated at `--order` (any model, polynomial symbols).
    #[default]
    Series,
    /// Exact Moyal product of polynomials (flat).
    Moyal,
    /// Oscillatory-integral quadrature (flat:1, at least one Gaussian factor).
    Quad,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Every setting of every command. Flags override the file given by `--config`.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// JSON file with defaults for any of these settings.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Model: `flat:<n>` or `sphere`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<String>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,

    /// Seed of the random suites.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    /// Output file (standard output when absent).
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,

    /// Include wall times in the report.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub timing: bool,

    /// Grid as comma-separated `start:stop:count` ranges, one per coordinate
    /// (sphere: polar and azimuthal angle in radians).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,

    /// Explicit points in native coordinates, separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<String>,

    /// First kernel argument, comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,

    /// Second kernel argument, comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,

    /// First star factor: polynomial JSON (optionally with an `envelope`) or `@file`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,

    /// Second star factor, same syntax as `--f`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<StarMethod>,

    /// Series truncation order (1 or 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,

    /// Hamiltonian: `oscillator`, `anharmonic`, polynomial JSON or `@file`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,

    /// Times as `start:stop:count` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<String>,

    /// Compare against the number-basis reference.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub oracle: bool,

    /// Number-basis dimension of the reference.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_dim: Option<usize>,

    /// Comma-separated hbar values; adds a fitted error order per (t, x).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hbar_sweep: Option<String>,

    /// Tolerance of the pass/fail decision (quantization distance, reference error).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,

    /// Sample counts of the check suite (config file only).
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<SuiteSamples>,
}

impl RunConfig {
    /// Overlays the flags on the config file named by `--config`, if any.
    pub fn resolve(flags: RunConfig) -> Result<RunConfig, CliError> {
        let Some(path) = flags.config.clone() else {
            return Ok(flags);
        };
        let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut base: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let over = serde_json::to_value(&flags).map_err(|e| CliError::Usage(e.to_string()))?;
        match (&mut base, over) {
            (Value::Object(b), Value::Object(o)) => b.extend(o),
            _ => return Err(CliError::Usage(format!("config {} must be a JSON object", path.display()))),
        }
        let mut merged: RunConfig = serde_json::from_value(base).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        merged.config = Some(path);
        Ok(merged)
    }

    pub fn manifold(&self) -> Result<Manifold, CliError> {
        self.manifold.as_deref().unwrap_or("flat:1").parse().map_err(|e: etherstar_core::Error| CliError::Usage(e.to_string()))
    }

    pub fn hbar(&self, default: f64) -> Result<f64, CliError> {
        let h = self.hbar.unwrap_or(default);
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::Usage(format!("hbar must be positive, got {h}")));
        }
        Ok(h)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(7)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    /// The grid from `--points` or `--grid` (exactly one must be given).
    pub fn grid_points(&self, m: &Manifold) -> Result<Vec<Point>, CliError> {
        let pts = match (&self.points, &self.grid) {
            (Some(_), Some(_)) => return Err(CliError::Usage("give either --points or --grid, not both".into())),
            (Some(p), None) => p.split(';').filter(|s| !s.trim().is_empty()).map(|s| parse_point(m, s)).collect::<Result<Vec<_>, _>>()?,
            (None, Some(g)) => parse_grid(m, g)?,
            (None, None) => return Err(CliError::Usage("a grid is required (--grid or --points)".into())),
        };
        if pts.is_empty() {
            return Err(CliError::Usage("the grid is empty".into()));
        }
        Ok(pts)
    }
}

fn parse_f64(s: &str) -> Result<f64, CliError> {
    s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("not a number: `{}`", s.trim())))
}

/// A point in native coordinates, validated against the model.
pub fn parse_point(m: &Manifold, s: &str) -> Result<Point, CliError> {
    let v = s.split(',').map(parse_f64).collect::<Result<Vec<f64>, _>>()?;
    let p = Point::new(DVector::from_vec(v));
    m.check_point(&p).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(p)
}

/// `start:stop:count` with `count` equally spaced values including both ends.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("range `{s}` is not start:stop:count")));
    }
    let (a, b) = (parse_f64(parts[0])?, parse_f64(parts[1])?);
    let n: usize = parts[2].trim().parse().map_err(|_| CliError::Usage(format!("bad count in `{s}`")))?;
    if n == 0 {
        return Err(CliError::Usage(format!("range `{s}` is empty")));
    }
    Ok(if n == 1 { vec![a] } else { (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect() })
}

/// A range or a comma-separated list of values.
pub fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    let v = if s.contains(':') { parse_range(s)? } else { s.split(',').map(parse_f64).collect::<Result<Vec<f64>, _>>()? };
    if v.is_empty() {
        return Err(CliError::Usage("empty value list".into()));
    }
    Ok(v)
}

fn parse_grid(m: &Manifold, s: &str) -> Result<Vec<Point>, CliError> {
    let axes = s.split(',').map(parse_range).collect::<Result<Vec<_>, _>>()?;
    let want = match m {
        Manifold::Flat { n } => 2 * n,
        Manifold::Sphere => 2,
    };
    if axes.len() != want {
        return Err(CliError::Usage(format!("grid for {m} needs {want} ranges, got {}", axes.len())));
    }
    let mut tuples: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        tuples = tuples.into_iter().flat_map(|t| axis.iter().map(move |&v| [t.clone(), vec![v]].concat())).collect();
    }
    Ok(tuples
        .into_iter()
        .map(|t| match m {
            Manifold::Flat { .. } => Point::new(DVector::from_vec(t)),
            Manifold::Sphere => {
                let (th, ph) = (t[0], t[1]);
                Point::from_slice(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()])
            }
        })
        .collect())
}

fn read_spec(s: &str) -> Result<String, CliError> {
    match s.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {path}: {e}"))),
        None => Ok(s.to_string()),
    }
}

/// Symbol from JSON `{"terms": [...], "envelope": {"center": [q, p], "sigma": s}}`; the envelope is optional.
pub fn parse_symbol(s: &str) -> Result<GaussianPoly, CliError> {
    let text = read_spec(s)?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("symbol: {e}")))?;
    let envelope = match v.as_object_mut().and_then(|o| o.remove("envelope")) {
        Some(e) => Some(serde_json::from_value::<Envelope>(e).map_err(|e| CliError::Usage(format!("envelope: {e}")))?),
        None => None,
    };
    let poly: PolySymbol = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("symbol: {e}")))?;
    if let Some(e) = &envelope {
        if !(e.sigma > 0.0) || poly.nvars() != 2 {
            return Err(CliError::Usage("an envelope needs sigma > 0 and a polynomial in (q, p)".into()));
        }
    }
    Ok(GaussianPoly { poly, envelope })
}

/// Hamiltonian by preset name, JSON or `@file`.
pub fn parse_hamiltonian(s: &str) -> Result<PolySymbol, CliError> {
    match s.trim() {
        "oscillator" => Ok(suite::oscillator()),
        "anharmonic" => Ok(suite::anharmonic()),
        other => {
            let text = read_spec(other)?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("hamiltonian: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_range("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_range("2:5:1").unwrap(), vec![2.0]);
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("0:1:0").is_err());
        assert_eq!(parse_values("0.5, 1,2").unwrap(), vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn grids_follow_the_model() {
        let flat = Manifold::Flat { n: 1 };
        let cfg = RunConfig { grid: Some("0:1:2,-1:1:3".into()), ..Default::default() };
        let pts = cfg.grid_points(&flat).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].coords.as_slice(), &[0.0, 0.0]);
        let sphere = RunConfig { grid: Some("0.5:1:2,0:3:4".into()), ..Default::default() };
        for p in sphere.grid_points(&Manifold::Sphere).unwrap() {
            assert!((p.coords.norm() - 1.0).abs() < 1e-15);
        }
        assert!(RunConfig { grid: Some("0:1:2".into()), ..Default::default() }.grid_points(&flat).is_err());
        assert!(RunConfig { points: Some("0.6,0,0.7".into()), ..Default::default() }.grid_points(&Manifold::Sphere).is_err());
    }

    #[test]
    fn symbols_with_and_without_envelope() {
        let g = parse_symbol(r#"{"terms":[{"mi":[0,0],"re":1}],"envelope":{"center":[0.1,0],"sigma":0.8}}"#).unwrap();
        assert_eq!(g.envelope.unwrap().sigma, 0.8);
        let p = parse_symbol(r#"{"terms":[{"mi":[1,0],"re":1,"im":0.5}]}"#).unwrap();
        assert!(p.envelope.is_none());
        assert!(parse_symbol(r#"{"terms":[{"mi":[1,0],"re":1}],"envelope":{"center":[0,0],"sigma":-1}}"#).is_err());
        assert_eq!(parse_hamiltonian("oscillator").unwrap(), suite::oscillator());
    }
}
