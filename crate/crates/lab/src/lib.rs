//! Experiment harness for partially observable linear contextual bandits:
//! scenario configs, seeded parallel replications, bundled figure recipes,
//! the verification suite, and CSV/SVG output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod csvio;
pub mod emit;
pub mod harness;
pub mod recipes;

pub use config::{ConfigError, ScenarioSpec, OUT_DIR_ENV};
pub use harness::{run_experiment, run_single, ExperimentReport, HarnessError, RunOutcome, Series};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Writes the CSV, a summary and optionally SVG charts for a report.
pub fn write_outputs(report: &ExperimentReport, dir: &Path, svg: bool) -> std::io::Result<Vec<PathBuf>> {
    let mut paths = vec![emit::write_csv(report, dir)?];
    let summary = dir.join(format!("{}_summary.txt", report.spec.experiment));
    std::fs::write(&summary, summary_text(report))?;
    paths.push(summary);
    if svg {
        paths.extend(emit::write_svgs(report, dir)?);
    }
    Ok(paths)
}

/// Human-readable report: spec echo, run seeds, margin estimate, pass
/// fractions and wall-clock time.
pub fn summary_text(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# experiment {}", report.spec.experiment);
    let _ = writeln!(s, "{}", report.spec.to_toml());
    let m = &report.margin;
    let p: Vec<String> = m.p_hat.iter().map(|p| format!("{p:.4}")).collect();
    let _ = writeln!(s, "p_hat = [{}]", p.join(", "));
    let _ = writeln!(s, "kappa_hat = {:.4}  c_hat = {:.4}  (margin samples {})", m.kappa_hat, m.c_hat, m.num_samples);
    for c in &report.checks {
        if let Some(f) = c.fraction() {
            let _ = writeln!(s, "{} {}: {}/{} = {:.3}", c.policy.name(), c.name, c.passed, c.checked, f);
        }
    }
    for &policy in &report.policies {
        if let Some(c) = report.curve(policy, Series::Regret) {
            if let (Some(&t), Some(mean), Some(worst)) = (c.grid.last(), c.mean.last(), c.worst.last()) {
                let _ = writeln!(s, "{} regret at t={t}: mean {mean:.3}, worst {worst:.3}", policy.name());
            }
        }
        if let Some(c) = report.curve(policy, Series::Cdr) {
            if let (Some(&t), Some(mean)) = (c.grid.last(), c.mean.last()) {
                let _ = writeln!(s, "{} correct decision rate at t={t}: {mean:.4}", policy.name());
            }
        }
    }
    let _ = writeln!(s, "runs (index, seed, dispersion):");
    for r in &report.runs {
        let _ = writeln!(s, "  {} {:#018x} {:.6}", r.index, r.seed, r.dispersion);
    }
    let _ = writeln!(s, "wall clock: {:.2}s", report.elapsed.as_secs_f64());
    s
}
