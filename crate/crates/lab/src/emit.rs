//! Long-format CSV output and standalone SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::harness::{ExperimentReport, Series};

pub const CSV_HEADER: [&str; 6] = ["experiment", "policy", "run", "series", "t", "value"];

/// One CSV record. `run` is a run index, `mean` or `worst`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub policy: String,
    pub run: String,
    pub series: String,
    pub t: u64,
    pub value: f64,
}

/// 17 significant digits: enough to parse back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-run rows followed by aggregate rows, in a fixed order.
pub fn rows(report: &ExperimentReport) -> Vec<Row> {
    let exp = &report.spec.experiment;
    let mut out = Vec::new();
    for (p, policy) in report.policies.iter().enumerate() {
        let arms = report.runs.first().map_or(0, |r| r.margin.p_hat.len());
        for run in &report.runs {
            let trace = &run.traces[p];
            for series in Series::all(arms, report.spec.dataset.is_some()) {
                for &t in &report.grid {
                    if let Some(value) = series.value(trace, t) {
                        out.push(Row {
                            experiment: exp.clone(),
                            policy: policy.name().to_owned(),
                            run: run.index.to_string(),
                            series: series.to_string(),
                            t,
                            value,
                        });
                    }
                }
            }
        }
    }
    for c in &report.curves {
        for (label, values) in [("mean", &c.curves.mean), ("worst", &c.curves.worst)] {
            for (&t, &value) in c.curves.grid.iter().zip(values) {
                out.push(Row {
                    experiment: exp.clone(),
                    policy: c.policy.name().to_owned(),
                    run: label.to_owned(),
                    series: c.series.to_string(),
                    t,
                    value,
                });
            }
        }
    }
    out
}

pub fn write_rows(rows: &[Row], w: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.as_str(),
            r.policy.as_str(),
            r.run.as_str(),
            r.series.as_str(),
            &r.t.to_string(),
            &format_value(r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn render_csv(report: &ExperimentReport) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows(&rows(report), &mut buf).expect("writing to memory");
    buf
}

pub fn read_rows(r: impl Read) -> csv::Result<Vec<Row>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default().to_owned();
        let parse_err = |what: &str| {
            csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad {what}")))
        };
        out.push(Row {
            experiment: field(0),
            policy: field(1),
            run: field(2),
            series: field(3),
            t: field(4).parse().map_err(|_| parse_err("t"))?,
            value: field(5).parse().map_err(|_| parse_err("value"))?,
        });
    }
    Ok(out)
}

/// Writes `<dir>/<experiment>.csv` and returns its path.
pub fn write_csv(report: &ExperimentReport, dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", report.spec.experiment));
    std::fs::write(&path, render_csv(report))?;
    Ok(path)
}

/// Writes one chart per series, `<dir>/<experiment>_<series>.svg`, with the
/// mean (solid) and worst case (dashed) of every policy.
pub fn write_svgs(report: &ExperimentReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut by_series: BTreeMap<Series, Vec<Line<'_>>> = BTreeMap::new();
    for c in &report.curves {
        let lines = by_series.entry(c.series).or_default();
        lines.push(Line { label: format!("{} mean", c.policy.name()), t: &c.curves.grid, v: &c.curves.mean, dashed: false });
        if c.curves.runs > 1 {
            lines.push(Line {
                label: format!("{} worst", c.policy.name()),
                t: &c.curves.grid,
                v: &c.curves.worst,
                dashed: true,
            });
        }
    }
    let mut paths = Vec::new();
    for (series, lines) in by_series {
        let path = dir.join(format!("{}_{}.svg", report.spec.experiment, series));
        let title = format!("{}: {}", report.spec.experiment, series);
        std::fs::write(&path, svg_chart(&title, "t", &series.to_string(), &lines))?;
        paths.push(path);
    }
    Ok(paths)
}

pub struct Line<'a> {
    pub label: String,
    pub t: &'a [u64],
    pub v: &'a [f64],
    pub dashed: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A self-contained line chart with linear axes.
pub fn svg_chart(title: &str, x_label: &str, y_label: &str, lines: &[Line<'_>]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 160.0, 40.0, 50.0);
    let points = lines.iter().flat_map(|l| l.t.iter().zip(l.v.iter()));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (&t, &v) in points.filter(|(_, v)| v.is_finite()) {
        x0 = x0.min(t as f64);
        x1 = x1.max(t as f64);
        y0 = y0.min(v);
        y1 = y1.max(v);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    y0 = y0.min(0.0);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |t: f64| left + (t - x0) / (x1 - x0) * pw;
    let sy = |v: f64| top + ph - (v - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for k in 0..=4 {
        let f = f64::from(k) / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            top + ph + 16.0,
            fmt_tick(xv)
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(yv) + 4.0, fmt_tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, line) in lines.iter().enumerate() {
        let color = PALETTE[(i / 2) % PALETTE.len()];
        let pts: Vec<String> = line
            .t
            .iter()
            .zip(line.v)
            .filter(|(_, v)| v.is_finite())
            .map(|(&t, &v)| format!("{:.2},{:.2}", sx(t as f64), sy(v)))
            .collect();
        let dash = if line.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = w - right + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&line.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}
