//! The nine acceptance criteria, one printed line each.
//!
//! A criterion passes when all of its checks pass. Sub-claims listed in
//! `KNOWN_UNATTAINABLE` are evaluated and reported as failures, and the test then
//! asserts the measured reason they cannot hold instead of their threshold.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use etherstar_core::evolution::OracleConfig;
use etherstar_core::suite::{self, CheckResult, StarCheckConfig, ORDER_LAW_HBARS};
use etherstar_core::Manifold;

const SEED: u64 = 20_261_016;

/// Sub-claims that cannot hold for this construction.
/// The sphere germ residual is zero up to round-off at every hbar, so its decay rate
/// has no meaningful fit.
const KNOWN_UNATTAINABLE: &[&str] = &["sphere germ residual slope"];

struct Criterion {
    id: usize,
    title: &'static str,
    checks: Vec<CheckResult>,
    elapsed: Duration,
    limit: Option<Duration>,
}

impl Criterion {
    fn run(id: usize, title: &'static str, limit: Option<f64>, f: impl FnOnce() -> Vec<CheckResult>) -> Self {
        let start = Instant::now();
        let checks = f();
        Criterion { id, title, checks, elapsed: start.elapsed(), limit: limit.map(Duration::from_secs_f64) }
    }

    fn in_time(&self) -> bool {
        self.limit.is_none_or(|l| self.elapsed <= l)
    }

    fn passed(&self) -> bool {
        self.in_time() && self.checks.iter().all(CheckResult::passed)
    }

    fn line(&self) -> String {
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                let mark = if c.passed() { "ok" } else { "FAILED" };
                let rel = if c.lower_bound { ">=" } else { "<=" };
                let mut s = format!("{} {:.2e} ({rel} {:e}) n={} {}", c.name, c.max_residual, c.tolerance, c.samples, mark);
                if c.skipped > 0 {
                    s += &format!(" skipped={}", c.skipped);
                }
                s
            })
            .collect();
        let time = match self.limit {
            Some(l) => format!("{:.2}s (limit {}s)", self.elapsed.as_secs_f64(), l.as_secs()),
            None => format!("{:.2}s", self.elapsed.as_secs_f64()),
        };
        let status = if self.passed() { "PASS" } else { "FAIL" };
        format!("[{status}] {}. {}: {}; {time}", self.id, self.title, parts.join("; "))
    }
}

#[test]
fn acceptance_criteria() {
    let flat = Manifold::Flat { n: 1 };
    let sphere = Manifold::Sphere;
    let mut germ_rows: Vec<Vec<f64>> = Vec::new();

    let criteria = vec![
        Criterion::run(1, "flat exactness", Some(10.0), || suite::flat_exactness(1, SEED, 1000, 1e-8, 1e-10)),
        Criterion::run(2, "zero curvature", Some(5.0), || {
            let mut out = vec![suite::zero_curvature(&flat, SEED, 200, 1e-6), suite::zero_curvature(&sphere, SEED, 200, 1e-6)];
            out[0].name = "flat zero curvature".into();
            out[1].name = "sphere zero curvature".into();
            out
        }),
        Criterion::run(3, "reflection axioms", None, || {
            let mut out = Vec::new();
            for (label, m) in [("flat", flat), ("sphere", sphere)] {
                for mut c in suite::reflection_axioms(&m, SEED, 100, 1e-8) {
                    c.name = format!("{label} {}", c.name);
                    out.push(c);
                }
            }
            out
        }),
        Criterion::run(4, "Hamilton-Jacobi differential", None, || {
            let mut a = suite::phase_gradient(&flat, SEED, 50, 1e-6);
            let mut b = suite::phase_gradient(&sphere, SEED, 50, 1e-4);
            a.name = "flat phase gradient".into();
            b.name = "sphere phase gradient".into();
            vec![a, b]
        }),
        Criterion::run(5, "star-product identities", None, || {
            suite::star_identities(SEED, 3, &StarCheckConfig::default(), [1e-6, 1e-8, 1e-6, 1e-5, 1e-14])
        }),
        Criterion::run(6, "series order law", None, || {
            let law = suite::series_order_law(1, SEED, 20, 2.7);
            germ_rows = suite::sphere_germ_residuals(SEED, 10, &ORDER_LAW_HBARS, 1).expect("germ residuals");
            let worst_slope = germ_rows
                .iter()
                .map(|row| etherstar_core::numerics::loglog_slope(&ORDER_LAW_HBARS, row))
                .fold(f64::INFINITY, f64::min);
            let germ = CheckResult::at_least("sphere germ residual slope", worst_slope, 1.7, germ_rows.len());
            vec![law, germ]
        }),
        Criterion::run(7, "sphere multiplicity", None, || suite::sphere_multiplicity(SEED, 500, 20)),
        Criterion::run(8, "evolution exactness for quadratic H", Some(60.0), || {
            let oracle = OracleConfig { dim: 128, ..OracleConfig::default() };
            let xs = suite::square_grid(3, 0.6);
            vec![
                suite::evolution_vs_oracle("oscillator symbol", &suite::oscillator(), &xs, &[0.5, 1.0, 2.0], 0.2, &oracle, 1e-5),
                suite::oscillator_amplitude(&[0.5, 1.0, 2.0, 3.0, PI - 0.05], 1e-8),
                suite::oscillator_focal_time(),
            ]
        }),
        Criterion::run(9, "quantization condition", None, || vec![suite::quantization(&sphere)]),
    ];

    // The documented reason for the unattainable slope: the residual is round-off at every hbar.
    let worst_germ = germ_rows.iter().flatten().fold(0.0f64, |a, &b| a.max(b));

    // Written to the process stdout so the lines appear without --nocapture.
    let mut report = String::from("\n");
    for c in &criteria {
        report += &c.line();
        report.push('\n');
    }
    report += &format!("note: sphere germ residual at most {worst_germ:.1e} over all hbar; a decay slope is not measurable\n");
    std::io::stdout().write_all(report.as_bytes()).unwrap();

    let mut unexpected = Vec::new();
    for c in &criteria {
        if !c.in_time() {
            unexpected.push(format!("criterion {} over its time limit", c.id));
        }
        for check in c.checks.iter().filter(|k| !k.passed()) {
            if !KNOWN_UNATTAINABLE.contains(&check.name.as_str()) {
                unexpected.push(format!("criterion {}: {}", c.id, check.name));
            }
        }
    }
    assert!(unexpected.is_empty(), "unexpected failures: {unexpected:?}");
    assert!(worst_germ <= 1e-12, "germ residual {worst_germ:e} is no longer at round-off");
}
