//! Writing experiment results: per-repeat rows, aggregate tables, a JSON
//! summary and SVG bar charts of FDR and power with the target level drawn in.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Aggregates, ExperimentReport, Summary, SweepPoint, TrialFailure, TrialRow};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

pub const ALL_FORMATS: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg];

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(Error::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

/// A published result at larger scale, printed next to local numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub label: &'static str,
    pub fdr: f64,
    pub power: f64,
}

pub const REFERENCE_MIXTURE: ReferencePoint = ReferencePoint {
    label: "published, Gaussian mixture n=2000 p=100, 600 repeats",
    fdr: 0.081,
    power: 0.973,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub name: String,
    pub config_digest: String,
    pub q: f64,
    pub completed: usize,
    pub failures: Vec<TrialFailure>,
    pub aggregates: Option<Aggregates>,
    /// Label, FDR and power of the published reference.
    pub reference: (String, f64, f64),
    pub rows_file: Option<String>,
    pub aggregates_file: Option<String>,
    pub figures: Vec<String>,
}

/// File-name-safe version of an experiment name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn write_rows(path: &Path, rows: &[TrialRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trial_rows(path: impl AsRef<Path>) -> Result<Vec<TrialRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
        .collect()
}

fn write_aggregates(path: &Path, agg: &Aggregates) -> Result<()> {
    let mut out = String::from("metric,count,mean,std,median,q05,q95\n");
    for (name, s) in [("fdp", agg.fdp), ("power", agg.power), ("runtime_secs", agg.runtime_secs)] {
        let Summary { count, mean, std, median, q05, q95, .. } = s;
        writeln!(out, "{name},{count},{mean:?},{std:?},{median:?},{q05:?},{q95:?}").expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One bar pair per group: FDR and power, with a dashed line at `q`.
pub fn bar_chart_svg(title: &str, groups: &[(String, f64, f64)], q: f64) -> String {
    let (left, top, plot_h, group_w, bar_w) = (50.0, 40.0, 220.0, 90.0, 30.0);
    let width = left + group_w * groups.len().max(1) as f64 + 20.0;
    let height = top + plot_h + 60.0;
    let y = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, escape(title));
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{y0}" y2="{y0}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            width - 20.0,
            left - 4.0,
            y(v) + 4.0,
            y0 = y(v)
        );
    }
    for (i, (label, fdr, power)) in groups.iter().enumerate() {
        let x0 = left + group_w * i as f64 + 10.0;
        for (k, (v, color)) in [(*fdr, "#d9534f"), (*power, "#337ab7")].into_iter().enumerate() {
            let x = x0 + k as f64 * bar_w;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
                y(v),
                bar_w - 4.0,
                y(0.0) - y(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + bar_w,
            y(0.0) + 16.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{left}" x2="{}" y1="{yq}" y2="{yq}" stroke="red" stroke-dasharray="6,3"/><text x="{}" y="{}" fill="red">q={q}</text>"#,
        width - 20.0,
        width - 20.0,
        y(q) - 4.0,
        yq = y(q)
    );
    let ly = height - 18.0;
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{}" width="10" height="10" fill="#d9534f"/><text x="{}" y="{ly}">FDR</text><rect x="{}" y="{}" width="10" height="10" fill="#337ab7"/><text x="{}" y="{ly}">power</text>"##,
        ly - 9.0,
        left + 14.0,
        left + 60.0,
        ly - 9.0,
        left + 74.0
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn means(report: &ExperimentReport) -> (f64, f64) {
    report
        .aggregates
        .map(|a| (a.fdp.mean, a.power.mean))
        .unwrap_or((f64::NAN, f64::NAN))
}

/// Writes the requested artifacts for one experiment into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = slug(&report.name);
    let mut written = Vec::new();
    let mut summary = ReportSummary {
        name: report.name.clone(),
        config_digest: report.config_digest.clone(),
        q: report.spec.q,
        completed: report.trials.len(),
        failures: report.failures.clone(),
        aggregates: report.aggregates,
        reference: (REFERENCE_MIXTURE.label.to_string(), REFERENCE_MIXTURE.fdr, REFERENCE_MIXTURE.power),
        rows_file: None,
        aggregates_file: None,
        figures: Vec::new(),
    };
    let file_name = |p: &Path| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    if formats.contains(&ReportFormat::Csv) {
        let rows = dir.join(format!("{stem}.rows.csv"));
        write_rows(&rows, &report.rows())?;
        summary.rows_file = Some(file_name(&rows));
        written.push(rows);
        if let Some(agg) = &report.aggregates {
            let path = dir.join(format!("{stem}.aggregates.csv"));
            write_aggregates(&path, agg)?;
            summary.aggregates_file = Some(file_name(&path));
            written.push(path);
        }
    }
    if formats.contains(&ReportFormat::Svg) {
        let (fdr, power) = means(report);
        let svg = bar_chart_svg(&report.name, &[(report.name.rsplit('/').next().unwrap_or("").to_string(), fdr, power)], report.spec.q);
        let path = dir.join(format!("{stem}.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        summary.figures.push(file_name(&path));
        written.push(path);
    }
    if formats.contains(&ReportFormat::Json) {
        let path = dir.join(format!("{stem}.summary.json"));
        io::write_json(&path, &summary)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub config_digest: String,
    pub completed: usize,
    pub failed: usize,
    pub fdr_mean: f64,
    pub fdr_std: f64,
    pub power_mean: f64,
    pub power_std: f64,
}

/// Side-by-side table and chart for an ablation or a sweep, plus the full
/// artifacts of each entry.
pub fn emit_comparison(
    title: &str,
    entries: &[(String, &ExperimentReport)],
    dir: impl AsRef<Path>,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (_, r) in entries {
        written.extend(emit_report(r, dir, formats)?);
    }
    let rows: Vec<ComparisonRow> = entries
        .iter()
        .map(|(label, r)| {
            let (fdr_mean, power_mean) = means(r);
            let std = |f: fn(&Aggregates) -> f64| r.aggregates.as_ref().map(f).unwrap_or(f64::NAN);
            ComparisonRow {
                label: label.clone(),
                config_digest: r.config_digest.clone(),
                completed: r.trials.len(),
                failed: r.failures.len(),
                fdr_mean,
                fdr_std: std(|a| a.fdp.std),
                power_mean,
                power_std: std(|a| a.power.std),
            }
        })
        .collect();
    let stem = slug(title);
    if formats.contains(&ReportFormat::Csv) {
        let path = dir.join(format!("{stem}.comparison.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Parse(e.to_string()))?;
        for r in &rows {
            w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    if formats.contains(&ReportFormat::Svg) {
        let q = entries.first().map(|(_, r)| r.spec.q).unwrap_or(0.1);
        let groups: Vec<_> = rows.iter().map(|r| (r.label.clone(), r.fdr_mean, r.power_mean)).collect();
        let path = dir.join(format!("{stem}.comparison.svg"));
        std::fs::write(&path, bar_chart_svg(title, &groups, q)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn sweep_entries(points: &[SweepPoint]) -> Vec<(String, &ExperimentReport)> {
    points
        .iter()
        .map(|p| (format!("{}={}", p.parameter, p.value), &p.report))
        .collect()
}

/// Plain-text summary with the published reference alongside.
pub fn text_summary(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment {} ({})", report.name, &report.config_digest[..12]);
    let _ = writeln!(
        s,
        "  repeats: {} completed, {} failed",
        report.trials.len(),
        report.failures.len()
    );
    let _ = writeln!(s, "  {:<10} {:>8} {:>8} {:>8} {:>8} {:>8}", "", "mean", "std", "median", "q05", "q95");
    if let Some(a) = &report.aggregates {
        for (name, v) in [("FDR", a.fdp), ("power", a.power), ("secs", a.runtime_secs)] {
            let _ = writeln!(
                s,
                "  {:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
                name, v.mean, v.std, v.median, v.q05, v.q95
            );
        }
        if a.fdp.single_repeat {
            let _ = writeln!(s, "  (single repeat: spreads are not meaningful)");
        }
    }
    let r = REFERENCE_MIXTURE;
    let _ = writeln!(s, "  reference: FDR {:.3}, power {:.3} ({})", r.fdr, r.power, r.label);
    s
}
