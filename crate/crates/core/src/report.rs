//! CSV and Markdown emitters, multi-method comparison tables and
//! normal-vs-hard drop tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{DatasetMetrics, EvalReport, FCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "max-F")]
    MaxF,
    #[serde(rename = "ave-F")]
    AveF,
    #[serde(rename = "Fbw")]
    Fbw,
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "SM")]
    Sm,
    #[serde(rename = "EM")]
    Em,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::MaxF,
        Metric::AveF,
        Metric::Fbw,
        Metric::Mae,
        Metric::Sm,
        Metric::Em,
    ];

    /// Column header used in every emitted table.
    pub fn header(self) -> &'static str {
        match self {
            Metric::MaxF => "max-F",
            Metric::AveF => "ave-F",
            Metric::Fbw => "Fbw",
            Metric::Mae => "MAE",
            Metric::Sm => "SM",
            Metric::Em => "EM",
        }
    }

    pub fn higher_is_better(self) -> bool {
        self != Metric::Mae
    }

    pub fn of(self, m: &DatasetMetrics) -> f64 {
        match self {
            Metric::MaxF => m.max_f,
            Metric::AveF => m.ave_f,
            Metric::Fbw => m.fbw,
            Metric::Mae => m.mae,
            Metric::Sm => m.s_measure,
            Metric::Em => m.e_measure,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.header())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Metric::ALL
            .into_iter()
            .find(|m| m.header().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::parse("metric", format!("unknown metric '{t}'")))
    }
}

/// Formats a score the way benchmark tables print them: three decimals,
/// no leading zero (`0.044` -> `.044`, `-0.013` -> `-.013`).
pub fn format_score(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = if s == "-0.000" { "0.000".to_string() } else { s };
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

/// One method's dataset-level scores. A metric may be absent when it was
/// disabled at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub values: BTreeMap<Metric, f64>,
}

impl SummaryRow {
    pub fn from_report(report: &EvalReport, metrics: &[Metric]) -> Self {
        Self {
            method: report.method.clone(),
            values: metrics.iter().map(|&m| (m, m.of(&report.summary))).collect(),
        }
    }

    pub fn get(&self, m: Metric) -> Option<f64> {
        self.values.get(&m).copied()
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::parse("csv", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::parse("csv", e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("csv", e.to_string())
}

fn columns_of(rows: &[SummaryRow]) -> Vec<Metric> {
    let set: BTreeSet<Metric> = rows.iter().flat_map(|r| r.values.keys().copied()).collect();
    set.into_iter().collect()
}

/// `method,max-F,ave-F,Fbw,MAE,SM,EM` with full-precision values.
pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let cols = columns_of(rows);
    let mut w = csv_writer();
    let mut header = vec!["method".to_string()];
    header.extend(cols.iter().map(|m| m.header().to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.method.clone()];
        rec.extend(cols.iter().map(|&m| r.get(m).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut method_col = None;
    let mut cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if h.eq_ignore_ascii_case("method") {
            method_col = Some(i);
        } else if let Ok(m) = h.parse::<Metric>() {
            cols.push((i, m));
        }
    }
    let method_col =
        method_col.ok_or_else(|| Error::parse("summary csv", "missing 'method' column"))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let method = rec.get(method_col).unwrap_or_default().to_string();
        let mut values = BTreeMap::new();
        for &(i, m) in &cols {
            let cell = rec.get(i).unwrap_or_default();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse("summary csv", format!("{method}: bad {m} value '{cell}'"))
            })?;
            values.insert(m, v);
        }
        rows.push(SummaryRow { method, values });
    }
    Ok(rows)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_summary_csv(&text)
}

/// Per-image records, in image-id order.
pub fn records_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv_writer();
    let mut header = vec!["image_id"];
    header.extend(Metric::ALL.iter().map(|m| m.header()));
    w.write_record(&header).map_err(csv_err)?;
    for r in &report.records {
        let vals = [r.max_f, r.ave_f, r.fbw, r.mae, r.s_measure, r.e_measure];
        let mut rec = vec![r.image_id.clone()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// Threshold-wise precision/recall/F dump for external plotting.
pub fn curve_csv(curve: &FCurve) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["threshold", "precision", "recall", "f"]).map_err(csv_err)?;
    for (t, p) in curve.points.iter().enumerate() {
        w.write_record([
            t.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.f.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

fn md_header(out: &mut String, first: &str, cols: &[Metric]) {
    let _ = write!(out, "| {first} |");
    for m in cols {
        let _ = write!(out, " {} |", m.header());
    }
    out.push('\n');
    out.push_str("|:---|");
    for _ in cols {
        out.push_str("---:|");
    }
    out.push('\n');
}

/// Plain Markdown table of one or more summary rows.
pub fn summary_markdown(rows: &[SummaryRow]) -> String {
    let cols = columns_of(rows);
    let mut out = String::new();
    md_header(&mut out, "Method", &cols);
    for r in rows {
        let _ = write!(out, "| {} |", r.method);
        for &m in &cols {
            let cell = r.get(m).map(format_score).unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

pub const SUMMARY_CSV: &str = "summary.csv";
pub const RECORDS_CSV: &str = "per_image.csv";
pub const CURVE_CSV: &str = "pr_curve.csv";
pub const SUMMARY_MD: &str = "summary.md";

/// Writes the summary CSV (only `metrics` columns), per-image CSV, mean
/// PR curve and Markdown summary into `dir`. Returns the written paths.
pub fn write_eval_outputs(report: &EvalReport, metrics: &[Metric], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let row = SummaryRow::from_report(report, metrics);
    let mut md = summary_markdown(std::slice::from_ref(&row));
    let _ = writeln!(md, "\n{} image(s) evaluated.", report.records.len());
    if report.skipped_unpaired > 0 {
        let _ = writeln!(md, "Skipped {} unpaired file(s).", report.skipped_unpaired);
    }
    let files = [
        (SUMMARY_CSV, summary_csv(&[row])?),
        (RECORDS_CSV, records_csv(report)?),
        (CURVE_CSV, curve_csv(&report.mean_curve)?),
        (SUMMARY_MD, md),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub method: String,
    pub values: BTreeMap<Metric, f64>,
    /// Competition ranks (1, 1, 3, ...); equal values share a rank.
    pub ranks: BTreeMap<Metric, usize>,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metrics: Vec<Metric>,
    /// Ordered by mean rank, then method name.
    pub rows: Vec<RankedRow>,
}

/// Ranks methods on every metric all of them report.
pub fn compare(rows: &[SummaryRow]) -> Result<Comparison> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("need ≥ 2 methods".into()));
    }
    let mut seen = BTreeSet::new();
    for r in rows {
        if !seen.insert(r.method.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "duplicated method name '{}'",
                r.method
            )));
        }
    }
    let metrics: Vec<Metric> = Metric::ALL
        .into_iter()
        .filter(|&m| rows.iter().all(|r| r.get(m).is_some()))
        .collect();
    if metrics.is_empty() {
        return Err(Error::InvalidArgument("no metric is shared by all reports".into()));
    }

    let mut ranked: Vec<RankedRow> = rows
        .iter()
        .map(|r| RankedRow {
            method: r.method.clone(),
            values: metrics.iter().map(|&m| (m, r.values[&m])).collect(),
            ranks: BTreeMap::new(),
            mean_rank: 0.0,
        })
        .collect();
    for &m in &metrics {
        let vals: Vec<f64> = ranked.iter().map(|r| r.values[&m]).collect();
        for (i, row) in ranked.iter_mut().enumerate() {
            let better = vals
                .iter()
                .filter(|&&v| {
                    if m.higher_is_better() {
                        v > vals[i]
                    } else {
                        v < vals[i]
                    }
                })
                .count();
            row.ranks.insert(m, better + 1);
        }
    }
    for row in &mut ranked {
        row.mean_rank = row.ranks.values().sum::<usize>() as f64 / metrics.len() as f64;
    }
    ranked.sort_by(|a, b| {
        a.mean_rank
            .total_cmp(&b.mean_rank)
            .then_with(|| a.method.cmp(&b.method))
    });
    Ok(Comparison {
        metrics,
        rows: ranked,
    })
}

fn superscript(rank: usize) -> &'static str {
    match rank {
        1 => "¹",
        2 => "²",
        3 => "³",
        _ => "",
    }
}

impl Comparison {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv_writer();
        let mut header = vec!["method".to_string()];
        for m in &self.metrics {
            header.push(m.header().to_string());
            header.push(format!("{}_rank", m.header()));
        }
        header.push("mean_rank".into());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.method.clone()];
            for m in &self.metrics {
                rec.push(r.values[m].to_string());
                rec.push(r.ranks[m].to_string());
            }
            rec.push(r.mean_rank.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish(w)
    }

    /// Table with the best three entries of each column marked ¹ ² ³.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        md_header(&mut out, "Method", &self.metrics);
        for r in &self.rows {
            let _ = write!(out, "| {} |", r.method);
            for m in &self.metrics {
                let _ = write!(out, " {}{} |", format_score(r.values[m]), superscript(r.ranks[m]));
            }
            out.push('\n');
        }
        out
    }
}

/// Score drop between a normal and a hard test subset. Positive Δ always
/// means the hard subset is worse: `normal - hard`, except MAE which is
/// `hard - normal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub method: String,
    pub deltas: BTreeMap<Metric, f64>,
}

impl DropReport {
    pub fn new(normal: &SummaryRow, hard: &SummaryRow, metrics: &[Metric]) -> Result<Self> {
        let mut deltas = BTreeMap::new();
        for &m in metrics {
            let n = normal.get(m).ok_or_else(|| missing(m, &normal.method, "normal"))?;
            let h = hard.get(m).ok_or_else(|| missing(m, &hard.method, "hard"))?;
            let d = if m.higher_is_better() { n - h } else { h - n };
            deltas.insert(m, d);
        }
        Ok(Self {
            method: normal.method.clone(),
            deltas,
        })
    }

    pub fn get(&self, m: Metric) -> Option<f64> {
        self.deltas.get(&m).copied()
    }

    pub fn to_csv(&self) -> Result<String> {
        drop_table_csv(std::slice::from_ref(self))
    }

    pub fn markdown_row(&self) -> String {
        let mut out = format!("| {} |", self.method);
        for v in self.deltas.values() {
            let _ = write!(out, " {} |", format_score(*v));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        drop_table_markdown(std::slice::from_ref(self))
    }
}

/// Several drop rows in one CSV; the columns come from the first report.
pub fn drop_table_csv(reports: &[DropReport]) -> Result<String> {
    let cols: Vec<Metric> = reports.first().map(|r| r.deltas.keys().copied().collect()).unwrap_or_default();
    let mut w = csv_writer();
    let mut header = vec!["method".to_string()];
    header.extend(cols.iter().map(|m| format!("d_{}", m.header())));
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        let mut rec = vec![r.method.clone()];
        rec.extend(cols.iter().map(|&m| r.get(m).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

pub fn drop_table_markdown(reports: &[DropReport]) -> String {
    let cols: Vec<Metric> = reports.first().map(|r| r.deltas.keys().copied().collect()).unwrap_or_default();
    let mut out = String::new();
    md_header(&mut out, "Method", &cols);
    for r in reports {
        out.push_str(&r.markdown_row());
        out.push('\n');
    }
    out
}

fn missing(m: Metric, method: &str, which: &str) -> Error {
    Error::InvalidArgument(format!("metric {m} missing from {which} report '{method}'"))
}
