//! The experiment report (`report.json`) and its renderings: a flat
//! `path,value` CSV that converts back to the same JSON, summary tables, and
//! a ROC plot with a logarithmic FPR axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::eval::{stars, Aggregate, LabelCharacteristics, MetadataCharacteristics, OverlapSummary};

pub const REPORT_FORMAT: &str = "memaudit-report";
pub const REPORT_VERSION: u32 = 1;

/// FPRs at which mean ROC curves are tabulated for plotting.
pub const ROC_GRID: [f64; 14] = [0.0, 1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1, 0.2, 0.5, 1.0];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("flat csv line {line}: {message}")]
    Flat { line: usize, message: String },
    #[error("unknown format {0:?}; expected json, csv or svg")]
    Format(String),
}

/// Key used for an FPR target in maps: its shortest round-trip decimal.
pub fn fpr_key(f: f64) -> String {
    format!("{f:?}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub index: usize,
    pub seed: u64,
    pub members: usize,
    pub non_members: usize,
    pub baseline: f64,
    pub target_epochs: usize,
    pub reference_points: usize,
    pub unbalanced_candidates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRepetition {
    pub tpr: BTreeMap<String, f64>,
    pub minority_tpr: BTreeMap<String, Option<f64>>,
    pub auc: f64,
    pub flagged: usize,
    /// Members identified at FPR 0, in challenge order.
    pub identified: Vec<String>,
    /// TPR at each [`ROC_GRID`] point.
    pub roc_grid: Vec<f64>,
}

/// Everything kept from one repetition; stored as `rep.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub game: GameSummary,
    pub attacks: BTreeMap<String, AttackRepetition>,
    /// Size of the union of all attacks' FPR-0 identified sets.
    pub union_identified: usize,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub tpr: BTreeMap<String, Aggregate>,
    pub median_minority_tpr: BTreeMap<String, Option<f64>>,
    pub mean_auc: f64,
    pub mean_identified: f64,
    pub labels: Option<LabelCharacteristics>,
    pub metadata: Option<MetadataCharacteristics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub config: String,
    pub repetitions_requested: usize,
    pub repetitions: Vec<RepetitionRecord>,
    pub failures: Vec<RepetitionFailure>,
    pub attacks: BTreeMap<String, AttackSummary>,
    /// Union of every attack's FPR-0 identified set.
    pub combined: Option<AttackSummary>,
    /// LiRA against RMIA identified sets at FPR 0.
    pub overlap: Option<OverlapSummary>,
    pub dataset_positive_fraction: f64,
    pub roc_grid: Vec<f64>,
    pub mean_roc: BTreeMap<String, Vec<f64>>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, crate::Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let corrupt = |message: String| ReportError::Corrupt {
            path: path.display().to_string(),
            message,
        };
        let report: Self = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if report.format != REPORT_FORMAT || report.version != REPORT_VERSION {
            return Err(corrupt(format!("unsupported format {} v{}", report.format, report.version)).into());
        }
        Ok(report)
    }
}

fn escape(seg: &str) -> String {
    seg.replace('%', "%25").replace('/', "%2F").replace('[', "%5B")
}

fn unescape(seg: &str) -> String {
    seg.replace("%5B", "[").replace("%2F", "/").replace("%25", "%")
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |seg: String| if prefix.is_empty() { seg } else { format!("{prefix}/{seg}") };
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, x) in m {
                flatten_into(&join(escape(k)), x, out);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            for (i, x) in a.iter().enumerate() {
                flatten_into(&join(format!("[{i}]")), x, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Leaf paths joined by `/`; array elements appear as `[i]`. Values are JSON literals.
pub fn flatten_json(v: &Value) -> Vec<(String, String)> {
    let mut out = Vec::new();
    flatten_into("", v, &mut out);
    out
}

fn insert(root: &mut Value, path: &[&str], leaf: Value) -> Result<(), String> {
    let Some((head, rest)) = path.split_first() else {
        *root = leaf;
        return Ok(());
    };
    if let Some(idx) = head.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
        let i: usize = idx.parse().map_err(|_| format!("bad index {head:?}"))?;
        if root.is_null() {
            *root = Value::Array(Vec::new());
        }
        let arr = root.as_array_mut().ok_or("index into a non-array")?;
        if i > arr.len() {
            return Err(format!("index {i} skips elements"));
        }
        if i == arr.len() {
            arr.push(Value::Null);
        }
        insert(&mut arr[i], rest, leaf)
    } else {
        if root.is_null() {
            *root = Value::Object(Map::new());
        }
        let obj = root.as_object_mut().ok_or("key into a non-object")?;
        insert(obj.entry(unescape(head)).or_insert(Value::Null), rest, leaf)
    }
}

pub fn write_flat_csv(v: &Value) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["path", "value"]).expect("in-memory write");
    for (p, val) in flatten_json(v) {
        w.write_record([p, val]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn read_flat_csv(text: &str) -> Result<Value, ReportError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| ReportError::Flat { line: 1, message: e.to_string() })?;
    if header.iter().ne(["path", "value"]) {
        return Err(ReportError::Flat {
            line: 1,
            message: "header must be path,value".into(),
        });
    }
    let mut root = Value::Null;
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let err = |message: String| ReportError::Flat { line, message };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let leaf: Value = serde_json::from_str(&rec[1]).map_err(|e| err(e.to_string()))?;
        let path: Vec<&str> = if rec[0].is_empty() { Vec::new() } else { rec[0].split('/').collect() };
        insert(&mut root, &path, leaf).map_err(err)?;
    }
    Ok(root)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn summaries(r: &ExperimentReport) -> Vec<(String, &AttackSummary)> {
    let mut v: Vec<(String, &AttackSummary)> = r.attacks.iter().map(|(k, s)| (k.clone(), s)).collect();
    if let Some(c) = &r.combined {
        v.push(("combined".into(), c));
    }
    v
}

pub fn tpr_table(r: &ExperimentReport) -> String {
    let mut s = String::from("attack,fpr,median_tpr,mean_tpr,baseline,p_value,stars,repetitions\n");
    for (name, a) in summaries(r) {
        for (fpr, agg) in &a.tpr {
            let _ = writeln!(
                s,
                "{name},{fpr},{:?},{:?},{:?},{:?},{},{}",
                agg.median,
                agg.mean,
                agg.baseline,
                agg.test.p_value,
                agg.stars,
                agg.values.len()
            );
        }
    }
    s
}

pub fn overlap_table(r: &ExperimentReport) -> String {
    let mut s = String::from("row,observed,expected,p_value,stars\n");
    if let Some(o) = &r.overlap {
        for (i, (obs, exp)) in o.observed.iter().zip(&o.expected).enumerate() {
            let _ = writeln!(s, "{i},{},{},,", fmt_opt(*obs), fmt_opt(*exp));
        }
        let _ = writeln!(s, "mean,{:?},{:?},{:?},{}", o.observed_mean, o.expected_mean, o.test.p_value, stars(o.test.p_value));
    }
    s
}

/// One row per attack: mean positive fraction of identified members and the
/// rest, with the dataset fraction and the Mann-Whitney significance.
pub fn label_table(r: &ExperimentReport) -> String {
    let mut s = String::from("attack,identified_positive,not_identified_positive,dataset_positive,p_value,stars\n");
    for (name, a) in summaries(r) {
        if let Some(l) = &a.labels {
            let _ = writeln!(
                s,
                "{name},{:?},{:?},{:?},{:?},{}",
                l.mean_identified_positive,
                l.mean_other_positive,
                l.dataset_positive,
                l.test.p_value,
                stars(l.test.p_value)
            );
        }
    }
    s
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// ROC with log-scaled FPR from 1e-4 to 1; FPR 0 is drawn on the left edge.
pub fn roc_svg(r: &ExperimentReport) -> String {
    let (w, h, m) = (480.0, 400.0, 50.0);
    let lo = 1e-4f64.log10();
    let x = |f: f64| m + (f.max(1e-4).log10() - lo) / -lo * (w - 2.0 * m);
    let y = |t: f64| h - m - t * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * m, h - 2.0 * m);
    for e in 0..=4 {
        let f = 10f64.powi(-e);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">1e-{e}</text>"#, x(f), h - m + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">FPR</text>"#, w / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="15" y="{:.1}" font-size="12" transform="rotate(-90 15 {:.1})" text-anchor="middle">TPR</text>"#, h / 2.0, h / 2.0);
    let chance: Vec<String> = (0..=40).map(|i| {
        let f = 10f64.powf(lo * (1.0 - i as f64 / 40.0));
        format!("{:.2},{:.2}", x(f), y(f))
    }).collect();
    let _ = writeln!(s, r#"<path d="M{}" fill="none" stroke="grey" stroke-dasharray="4 3"/>"#, chance.join(" L"));
    for (i, (name, tprs)) in r.mean_roc.iter().enumerate() {
        let pts: Vec<String> = r.roc_grid.iter().zip(tprs).map(|(&f, &t)| format!("{:.2},{:.2}", x(f), y(t))).collect();
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">{name}</text>"#, m + 8.0, m + 16.0 + 14.0 * i as f64);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the requested rendering next to `out_dir` and returns the files written.
pub fn report_render(report_path: impl AsRef<Path>, format: &str, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, crate::Error> {
    let report = ExperimentReport::load(&report_path)?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let files: Vec<(&str, String)> = match format {
        "json" => vec![("report.json", report.to_json())],
        "csv" => {
            let value = serde_json::to_value(&report).expect("report serializes");
            vec![
                ("report_flat.csv", write_flat_csv(&value)),
                ("tpr_summary.csv", tpr_table(&report)),
                ("overlap.csv", overlap_table(&report)),
                ("label_fractions.csv", label_table(&report)),
            ]
        }
        "svg" => vec![("roc.svg", roc_svg(&report))],
        other => return Err(ReportError::Format(other.to_string()).into()),
    };
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| crate::Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

/// Rebuilds the JSON report from its flat CSV rendering.
pub fn report_from_flat_csv(text: &str) -> Result<ExperimentReport, ReportError> {
    let v = read_flat_csv(text)?;
    serde_json::from_value(v).map_err(|e| ReportError::Corrupt {
        path: "<flat csv>".into(),
        message: e.to_string(),
    })
}
