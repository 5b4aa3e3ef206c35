//! CSV, JSON manifest and SVG output for comparison reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ComparisonReport, ComparisonRow, ExperimentConfig, HarnessError, Regime};

pub const CSV_HEADER: [&str; 8] = ["N", "t", "functional_id", "mean", "stderr", "pde_value", "gap", "gap_in_se"];

/// Shortest decimal that parses back to the same `f64`.
fn float(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv<W: std::io::Write>(rows: &[ComparisonRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            float(r.t),
            r.functional_id.clone(),
            float(r.mean),
            float(r.stderr),
            float(r.pde_value),
            float(r.gap),
            float(r.gap_in_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<ComparisonRow>, HarnessError> {
    let bad = |e: String| HarnessError::Parse(e);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", CSV_HEADER[i])));
        rows.push(ComparisonRow {
            n: rec[0].parse().map_err(|e| bad(format!("column N: {e}")))?,
            t: num(1)?,
            functional_id: rec[2].to_string(),
            mean: num(3)?,
            stderr: num(4)?,
            pde_value: num(5)?,
            gap: num(6)?,
            gap_in_se: num(7)?,
        });
    }
    Ok(rows)
}

/// Run metadata written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub tag: Regime,
    pub config: ExperimentConfig,
    pub wall_seconds: Vec<(usize, f64)>,
    pub accepted_events: Vec<(usize, u64)>,
    pub files: Vec<String>,
}

/// For each consecutive pair of lattice sizes at time `t`: whether the gap did
/// not grow by more than two standard errors of the difference.
pub fn convergence_audit(report: &ComparisonReport, t: f64, functional_id: &str) -> Vec<(usize, usize, bool)> {
    let mut rows: Vec<&ComparisonRow> =
        report.rows.iter().filter(|r| r.t == t && r.functional_id == functional_id).collect();
    rows.sort_by_key(|r| r.n);
    rows.windows(2)
        .map(|w| {
            let slack = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            (w[0].n, w[1].n, w[1].gap <= w[0].gap + slack)
        })
        .collect()
}

/// Line chart of `gap` against `log₂ N` at the last report time, with
/// `±stderr` bars.
pub fn render_svg(report: &ComparisonReport, functional_id: &str) -> String {
    let t_last = report.rows.iter().map(|r| r.t).fold(f64::NEG_INFINITY, f64::max);
    let mut pts: Vec<(f64, f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.t == t_last && r.functional_id == functional_id)
        .map(|r| ((r.n as f64).log2(), r.gap, r.stderr))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (w, h, pad) = (480.0, 320.0, 48.0);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{functional_id}: |mean − PDE| at t = {t_last:?}</text>"#,
        w / 2.0
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = (pts[0].0 - 0.5, pts[pts.len() - 1].0 + 0.5);
    let ymax = pts.iter().map(|p| p.1 + p.2.max(0.0)).fold(0.0_f64, f64::max).max(1e-12) * 1.1;
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / ymax * (h - 2.0 * pad);
    let _ = writeln!(
        svg,
        r#"<path d="M{p} {b} L{q} {b} M{p} {b} L{p} {t}" stroke="black" fill="none"/>"#,
        p = pad,
        q = w - pad,
        b = h - pad,
        t = pad
    );
    for &(x, _, _) in &pts {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">N={}</text>"#,
            sx(x),
            h - pad + 16.0,
            x.exp2().round()
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{ymax:.3e}</text>"#, 4.0, pad);
    let line: Vec<String> = pts.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(svg, r#"<polyline points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#, line.join(" "));
    for &(x, y, se) in &pts {
        let se = if se.is_finite() { se } else { 0.0 };
        let _ = writeln!(
            svg,
            r#"<path d="M{cx:.2} {lo:.2} L{cx:.2} {hi:.2}" stroke="gray"/><circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="steelblue"/>"#,
            cx = sx(x),
            lo = sy((y - se).max(0.0)),
            hi = sy(y + se),
            cy = sy(y)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::Io { path: path.to_owned(), source: e })
}

/// Write `comparison.csv`, `manifest.json` and optionally one SVG per
/// functional into `dir`. Returns the paths written.
pub fn emit_reports(
    report: &ComparisonReport,
    cfg: &ExperimentConfig,
    dir: &Path,
    svg: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.to_owned(), source: e })?;
    let mut files = Vec::new();
    let csv_path = dir.join("comparison.csv");
    let mut buf = Vec::new();
    write_csv(&report.rows, &mut buf).map_err(|e| HarnessError::Parse(e.to_string()))?;
    write_file(&csv_path, &buf)?;
    files.push(csv_path);
    if svg {
        for f in &cfg.functionals {
            let p = dir.join(format!("gap_{}.svg", f.id));
            write_file(&p, render_svg(report, &f.id).as_bytes())?;
            files.push(p);
        }
    }
    let manifest = Manifest {
        version: format!("lgk-core {}", env!("CARGO_PKG_VERSION")),
        config_sha256: cfg.hash(),
        master_seed: cfg.seed,
        tag: report.tag,
        config: cfg.clone(),
        wall_seconds: report.wall_seconds.clone(),
        accepted_events: report.events.clone(),
        files: files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
    };
    let manifest_path = dir.join("manifest.json");
    write_file(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes())?;
    files.push(manifest_path);
    Ok(files)
}
