//! Dataset files (CSV and binary with a JSON sidecar) and report
//! serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bound::BoundSummary;
use crate::dataset::{Attribute, EmbeddingSet, MetricKind};
use crate::error::{Error, Result};
use crate::fits::{CorrelationReport, PowerLawFit, SensitivityFit};
use crate::harness::sweep::SweepResult;
use crate::separation::SeparationReport;

pub const FORMAT_VERSION: u32 = 1;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: malformed CSV: {other:?}", path.display())),
    }
}

/// Reads `id,y[,a_<name>…],z_0,…,z_{d−1}`. Attribute cells may hold integer
/// codes or text labels; labels are coded in sorted order.
pub fn load_csv(path: &Path) -> Result<EmbeddingSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.first().map(String::as_str) != Some("id") {
        return Err(Error::Schema("first column must be `id`".into()));
    }
    if header.get(1).map(String::as_str) != Some("y") {
        return Err(Error::Schema("missing `y` column in second position".into()));
    }
    let attr_names: Vec<String> = header[2..]
        .iter()
        .take_while(|h| h.starts_with("a_"))
        .map(|h| h[2..].to_string())
        .collect();
    let z_cols = &header[2 + attr_names.len()..];
    if z_cols.is_empty() {
        return Err(Error::Schema("no `z_*` columns".into()));
    }
    for (j, h) in z_cols.iter().enumerate() {
        if *h != format!("z_{j}") {
            return Err(Error::Schema(format!("expected column `z_{j}`, found `{h}`")));
        }
    }
    let d = z_cols.len();

    let mut ids = Vec::new();
    let mut y = Vec::new();
    let mut raw_attrs: Vec<Vec<String>> = vec![Vec::new(); attr_names.len()];
    let mut z = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: header.get(rec.len().min(header.len() - 1)).cloned().unwrap_or_default(),
                message: format!("expected {} cells, found {}", header.len(), rec.len()),
            });
        }
        ids.push(rec[0].to_string());
        let label = rec[1].trim();
        match label {
            "0" => y.push(0),
            "1" => y.push(1),
            other => {
                return Err(Error::Parse {
                    row,
                    column: "y".into(),
                    message: format!("label `{other}` is not 0 or 1"),
                })
            }
        }
        for (k, col) in raw_attrs.iter_mut().enumerate() {
            col.push(rec[2 + k].trim().to_string());
        }
        for j in 0..d {
            let cell = rec[2 + attr_names.len() + j].trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: format!("z_{j}"),
                message: format!("`{cell}` is not a number"),
            })?;
            z.push(v);
        }
    }

    let mut attributes = Vec::new();
    for (name, raw) in attr_names.iter().zip(raw_attrs) {
        attributes.push(code_column(name, raw)?);
    }
    let tag = format!("csv:{}", path.file_name().and_then(|s| s.to_str()).unwrap_or_default());
    EmbeddingSet::new(ids, z, d, y, attributes, tag)?.validated()
}

fn code_column(name: &str, raw: Vec<String>) -> Result<Attribute> {
    if raw.iter().all(|v| v.parse::<u8>().is_ok()) {
        let codes = raw.iter().map(|v| v.parse::<u8>().expect("checked")).collect();
        return Ok(Attribute::new(name, codes));
    }
    let labels: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    if labels.len() > 256 {
        return Err(Error::Schema(format!("attribute `{name}` has more than 256 groups")));
    }
    let index: BTreeMap<&str, u8> = labels.iter().enumerate().map(|(i, l)| (*l, i as u8)).collect();
    let codes = raw.iter().map(|v| index[v.as_str()]).collect();
    let dictionary = index.iter().map(|(l, c)| (*c, l.to_string())).collect();
    Ok(Attribute::new(name, codes).with_dictionary(dictionary))
}

/// Labels survive a CSV round trip only if their sorted order matches
/// their codes; otherwise codes are written.
fn labels_round_trip(a: &Attribute) -> bool {
    if a.dictionary.is_empty() {
        return false;
    }
    let used: BTreeSet<u8> = a.codes.iter().copied().collect();
    if used.iter().any(|c| !a.dictionary.contains_key(c)) {
        return false;
    }
    let in_use: Vec<&String> = used.iter().map(|c| &a.dictionary[c]).collect();
    let codes_are_dense = used.iter().enumerate().all(|(i, &c)| i == usize::from(c));
    codes_are_dense
        && in_use.windows(2).all(|w| w[0] < w[1])
        && in_use.iter().any(|l| l.parse::<u8>().is_err())
}

pub fn save_csv(ds: &EmbeddingSet, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["id".to_string(), "y".to_string()];
    header.extend(ds.attributes().iter().map(|a| format!("a_{}", a.name)));
    header.extend((0..ds.d()).map(|j| format!("z_{j}")));
    wtr.write_record(&header).map_err(|e| csv_err(path, e))?;
    let as_label: Vec<bool> = ds.attributes().iter().map(labels_round_trip).collect();
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        rec.clear();
        rec.push(ds.ids()[i].clone());
        rec.push(ds.labels()[i].to_string());
        for (a, &lab) in ds.attributes().iter().zip(&as_label) {
            let code = a.codes[i];
            rec.push(if lab { a.dictionary[&code].clone() } else { code.to_string() });
        }
        // shortest representation that parses back to the same f64
        rec.extend(ds.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFileHeader {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub attribute_names: Vec<String>,
    #[serde(default)]
    pub value_dictionaries: BTreeMap<String, BTreeMap<u8, String>>,
    pub encoder_tag: String,
    #[serde(default)]
    pub ids: Option<Vec<String>>,
}

impl DatasetFileHeader {
    /// Payload bytes: `n·d` little-endian f32, then `n` labels, then `n`
    /// bytes per attribute.
    pub fn payload_len(&self) -> u64 {
        (self.n * self.d * 4 + self.n + self.n * self.attribute_names.len()) as u64
    }
}

/// `(payload, header)` paths: `x.bin` / `x.json` for `x` or `x.bin`.
pub fn binary_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = if path.extension().is_some_and(|e| e == "bin") {
        path.with_extension("")
    } else {
        path.to_path_buf()
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".bin"), with(".json"))
}

/// Writes the payload and its JSON header. Matrix values are stored as f32.
pub fn save_binary(ds: &EmbeddingSet, path: &Path) -> Result<()> {
    let (bin, json) = binary_paths(path);
    let header = DatasetFileHeader {
        format_version: FORMAT_VERSION,
        n: ds.n(),
        d: ds.d(),
        attribute_names: ds.attributes().iter().map(|a| a.name.clone()).collect(),
        value_dictionaries: ds
            .attributes()
            .iter()
            .filter(|a| !a.dictionary.is_empty())
            .map(|a| (a.name.clone(), a.dictionary.clone()))
            .collect(),
        encoder_tag: ds.encoder_tag().to_string(),
        ids: Some(ds.ids().to_vec()),
    };
    let mut payload = Vec::with_capacity(header.payload_len() as usize);
    for v in ds.matrix() {
        payload.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    payload.extend_from_slice(ds.labels());
    for a in ds.attributes() {
        payload.extend_from_slice(&a.codes);
    }
    fs::write(&bin, payload).map_err(|e| Error::io(&bin, e))?;
    write_text(&json, &to_json_string(&header)?)
}

pub fn load_binary(path: &Path) -> Result<EmbeddingSet> {
    let (bin, json) = binary_paths(path);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(Error::Version(version));
    }
    let header: DatasetFileHeader = serde_json::from_value(raw)?;
    if header.n == 0 || header.d == 0 {
        return Err(Error::Schema("header declares an empty matrix".into()));
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() as u64 != header.payload_len() {
        return Err(Error::SizeMismatch {
            path: bin,
            expected: header.payload_len(),
            found: bytes.len() as u64,
        });
    }
    let (n, d) = (header.n, header.d);
    let z: Vec<f64> = bytes[..n * d * 4]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let mut offset = n * d * 4;
    let y = bytes[offset..offset + n].to_vec();
    offset += n;
    let mut attributes = Vec::new();
    for name in &header.attribute_names {
        let codes = bytes[offset..offset + n].to_vec();
        offset += n;
        let dict = header.value_dictionaries.get(name).cloned().unwrap_or_default();
        attributes.push(Attribute::new(name.clone(), codes).with_dictionary(dict));
    }
    let ids = match header.ids {
        Some(ids) if ids.len() == n => ids,
        Some(ids) => {
            return Err(Error::Schema(format!("header lists {} ids for {n} rows", ids.len())));
        }
        None => (0..n).map(|i| i.to_string()).collect(),
    };
    EmbeddingSet::new(ids, z, d, y, attributes, header.encoder_tag)?.validated()
}

/// Loads by extension: `.csv` as CSV, anything else as binary.
pub fn load_dataset(path: &Path) -> Result<EmbeddingSet> {
    if path.extension().is_some_and(|e| e == "csv") {
        load_csv(path)
    } else {
        load_binary(path)
    }
}

pub fn save_dataset(ds: &EmbeddingSet, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        save_csv(ds, path)
    } else {
        save_binary(ds, path)
    }
}

/// Rounds to nine significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

fn round_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_value),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with sorted keys, floats at nine significant digits, and a
/// trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

pub const REPORT_COLUMNS: [&str; 9] = ["report", "attribute", "group", "allocation", "seed", "metric", "value", "std", "n"];

/// One long-format CSV row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportRow {
    pub report: &'static str,
    pub attribute: String,
    pub group: Option<String>,
    pub allocation: Option<f64>,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub std: Option<f64>,
    pub n: Option<usize>,
}

/// Reports that flatten to `(attribute, group, allocation, metric)` rows.
pub trait ReportRows {
    fn rows(&self) -> Vec<ReportRow>;
}

fn fmt_f(v: f64) -> String {
    round_sig(v).to_string()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(REPORT_COLUMNS).expect("in-memory write");
    for r in rows {
        wtr.write_record([
            r.report.to_string(),
            r.attribute.clone(),
            opt(r.group.clone()),
            r.allocation.map(fmt_f).unwrap_or_default(),
            opt(r.seed),
            r.metric.clone(),
            fmt_f(r.value),
            r.std.map(fmt_f).unwrap_or_default(),
            opt(r.n),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Writes `report` as JSON or long-format CSV.
pub fn save_report<T: Serialize + ReportRows>(report: &T, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => to_json_string(report)?,
        ReportFormat::Csv => rows_to_csv(&report.rows()),
    };
    write_text(path, &text)
}

impl<T: ReportRows> ReportRows for Vec<T> {
    fn rows(&self) -> Vec<ReportRow> {
        self.iter().flat_map(ReportRows::rows).collect()
    }
}

impl ReportRows for SeparationReport {
    fn rows(&self) -> Vec<ReportRow> {
        let base = |metric: &str, value: f64| ReportRow {
            report: "separation",
            attribute: self.attribute.clone(),
            metric: metric.to_string(),
            value,
            ..Default::default()
        };
        let mut out = vec![base("tv", self.epsilon_tv), base("tv_uniform_classes", self.tv_uniform_classes)];
        for (y, v) in &self.per_class_tv {
            out.push(ReportRow {
                group: Some(format!("y{y}")),
                ..base("tv_class", *v)
            });
        }
        if let Some(wd) = self.wd {
            out.push(base("wd", wd));
        }
        if let Some(fd) = self.fd {
            out.push(base("fd", fd));
        }
        out.push(base("k", self.k as f64));
        out
    }
}

impl ReportRows for SweepResult {
    fn rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for r in &self.runs {
            for m in &r.overall {
                out.push(ReportRow {
                    report: "sweep",
                    attribute: self.attribute.clone(),
                    group: Some("overall".into()),
                    allocation: Some(r.alpha),
                    seed: Some(r.seed),
                    metric: m.kind.to_string(),
                    value: m.value,
                    std: None,
                    n: Some(m.n),
                });
            }
            for g in &r.groups {
                for m in &g.metrics {
                    out.push(ReportRow {
                        report: "sweep",
                        attribute: g.attribute.clone(),
                        group: Some(g.group.to_string()),
                        allocation: Some(g.allocation.unwrap_or(r.alpha)),
                        seed: Some(r.seed),
                        metric: m.kind.to_string(),
                        value: m.value,
                        std: None,
                        n: Some(m.n),
                    });
                }
            }
        }
        out
    }
}

impl ReportRows for SensitivityFit {
    fn rows(&self) -> Vec<ReportRow> {
        let metric = self.metric.to_string();
        let mut out = vec![ReportRow {
            report: "fit",
            attribute: self.attribute.clone(),
            group: Some("mean".into()),
            metric: format!("{metric}_slope"),
            value: self.slope,
            std: Some(self.slope_std),
            ..Default::default()
        }];
        for g in &self.groups {
            out.push(ReportRow {
                report: "fit",
                attribute: self.attribute.clone(),
                group: Some(g.group.to_string()),
                metric: format!("{metric}_slope"),
                value: g.slope,
                std: Some(g.slope_std),
                n: Some(g.per_seed.len()),
                ..Default::default()
            });
        }
        for e in self.delta_endpoint.iter().flatten() {
            out.push(ReportRow {
                report: "fit",
                attribute: self.attribute.clone(),
                group: Some(e.group.to_string()),
                metric: format!("{metric}_delta_endpoint"),
                value: e.mean,
                std: Some(e.std),
                n: Some(e.per_seed.len()),
                ..Default::default()
            });
        }
        out
    }
}

impl ReportRows for CorrelationReport {
    fn rows(&self) -> Vec<ReportRow> {
        let mut out: Vec<ReportRow> = self
            .points
            .iter()
            .flat_map(|p| {
                [
                    ReportRow {
                        report: "correlation",
                        attribute: p.attribute.clone(),
                        metric: self.separation_metric.as_str().to_string(),
                        value: p.separation,
                        ..Default::default()
                    },
                    ReportRow {
                        report: "correlation",
                        attribute: p.attribute.clone(),
                        metric: format!("{}_slope", self.sensitivity_metric),
                        value: p.slope,
                        std: Some(p.slope_std),
                        ..Default::default()
                    },
                ]
            })
            .collect();
        out.push(ReportRow {
            report: "correlation",
            metric: "pearson_r".into(),
            value: self.pearson_r,
            n: Some(self.points.len()),
            ..Default::default()
        });
        out.push(ReportRow {
            report: "correlation",
            metric: "p_value".into(),
            value: self.p_value,
            n: Some(self.points.len()),
            ..Default::default()
        });
        out
    }
}

impl ReportRows for BoundSummary {
    fn rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for c in &self.checks {
            for ((g, gap), ok) in c.observed_subgroup_gaps.iter().zip(&c.satisfied) {
                out.push(ReportRow {
                    report: "bound",
                    attribute: c.attribute.clone(),
                    group: Some(g.to_string()),
                    allocation: Some(c.alpha_a),
                    seed: Some(c.seed),
                    metric: format!("gap_vs_{}", fmt_f(c.alpha_b)),
                    value: *gap,
                    std: None,
                    n: None,
                });
                out.push(ReportRow {
                    report: "bound",
                    attribute: c.attribute.clone(),
                    group: Some(g.to_string()),
                    allocation: Some(c.alpha_a),
                    seed: Some(c.seed),
                    metric: format!("bound_vs_{}", fmt_f(c.alpha_b)),
                    value: c.bound_value,
                    std: None,
                    n: Some(usize::from(*ok)),
                });
            }
        }
        out.push(ReportRow {
            report: "bound",
            attribute: self.attribute.clone(),
            metric: "fraction_satisfied".into(),
            value: self.fraction_satisfied,
            n: Some(self.pairs),
            ..Default::default()
        });
        out
    }
}

impl ReportRows for PowerLawFit {
    fn rows(&self) -> Vec<ReportRow> {
        let p = &self.params;
        [p.sigma, p.p, p.tau, p.q, p.delta]
            .iter()
            .zip(crate::fits::powerlaw::PARAM_NAMES)
            .zip(self.stds)
            .map(|((v, name), s)| ReportRow {
                report: "powerlaw",
                group: self.group.map(|g| g.to_string()),
                metric: name.to_string(),
                value: *v,
                std: s,
                ..Default::default()
            })
            .collect()
    }
}

/// Seed mean and standard deviation of a metric at each grid point, for
/// the overall set and each group of the swept attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub series: String,
    /// Group-1 allocation `α₁`.
    pub alpha: f64,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

pub fn allocation_curve(sweep: &SweepResult, kind: MetricKind) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    let mut push = |series: &str, values: &dyn Fn(&crate::harness::RunRecord) -> Option<f64>| {
        for &alpha in &sweep.grid {
            let v: Vec<f64> = sweep.runs.iter().filter(|r| r.alpha == alpha).filter_map(values).collect();
            if v.is_empty() {
                continue;
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s = if v.len() > 1 {
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            out.push(CurvePoint {
                series: series.to_string(),
                alpha,
                mean: m,
                std: s,
                seeds: v.len(),
            });
        }
    };
    push("overall", &|r| r.overall(kind));
    for g in 0..2u8 {
        let name = format!("group_{g}");
        push(&name, &|r| r.group(&sweep.attribute, g).and_then(|x| x.get(kind)));
    }
    out
}

/// Writes a plot-ready CSV: a header then one row per entry, floats at
/// nine significant digits.
pub fn write_plot_data(path: &Path, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(columns).expect("in-memory write");
    for r in rows {
        wtr.write_record(r).expect("in-memory write");
    }
    let text = String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 input");
    write_text(path, &text)
}

pub fn curve_rows(curve: &[CurvePoint]) -> Vec<Vec<String>> {
    curve
        .iter()
        .map(|c| vec![c.series.clone(), fmt_f(c.alpha), fmt_f(c.mean), fmt_f(c.std), c.seeds.to_string()])
        .collect()
}

pub fn format_float(v: f64) -> String {
    fmt_f(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MetricValue;

    fn small() -> EmbeddingSet {
        let rows = vec![vec![0.5, -1.25], vec![3.0, 2.0], vec![1e-3, 7.0]];
        let sex = Attribute::new("sex", vec![0, 1, 1]);
        EmbeddingSet::from_rows(&rows, vec![0, 1, 0], vec![sex]).unwrap()
    }

    #[test]
    fn csv_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "id,y,a_sex,z_0,z_1\na,0,0,0.1,0.2\nb,1,1,0.3,0.4\nc,0,1,0.5,0.6\n").unwrap();
        let ds = load_csv(&p).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.attribute_names(), vec!["sex"]);
        assert_eq!(ds.ids()[1], "b");
    }

    #[test]
    fn csv_bad_label_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let mut text = String::from("id,y,a_g,z_0\n");
        for i in 1..=9 {
            let y = if i == 7 { 2 } else { i % 2 };
            text.push_str(&format!("r{i},{y},{},{i}.0\n", i % 2));
        }
        fs::write(&p, text).unwrap();
        match load_csv(&p) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (7, "y")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "id,a_g,z_0\nx,0,1\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Schema(_))));
        fs::write(&p, "id,y,a_g\nx,0,1\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Schema(_))));
        fs::write(&p, "id,y,a_g,z_1\nx,0,1,1\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_text_labels_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "id,y,a_sex,z_0\na,0,male,1\nb,1,female,2\nc,1,male,3\n").unwrap();
        let ds = load_csv(&p).unwrap();
        let a = ds.attribute("sex").unwrap();
        assert_eq!(a.codes, vec![1, 0, 1]);
        assert_eq!(a.label(0), "female");
        // round trip keeps labels
        let q = dir.path().join("e.csv");
        save_csv(&ds, &q).unwrap();
        assert!(fs::read_to_string(&q).unwrap().contains("female"));
        assert_eq!(load_csv(&q).unwrap().attribute("sex").unwrap(), a);

        fs::write(&p, "id,y,a_g,z_0\na,0,0,1\nb,1,0,2\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Validation(_))));
        fs::write(&p, "id,y,a_g,z_0\na,0,0,NaN\nb,1,1,2\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn binary_payload_size_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![vec![1.0, 2.5, -3.0], vec![0.125, 0.0, 9.0]];
        let ds = EmbeddingSet::from_rows(&rows, vec![0, 1], vec![Attribute::new("g", vec![1, 0])]).unwrap();
        let p = dir.path().join("x.bin");
        save_binary(&ds, &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 24 + 2 + 2);
        assert!(dir.path().join("x.json").exists());
        let back = load_binary(&p).unwrap();
        assert_eq!(back.matrix(), ds.matrix());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.ids(), ds.ids());

        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_binary(&p), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn binary_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        save_binary(&small(), &p).unwrap();
        let json = dir.path().join("x.json");
        let text = fs::read_to_string(&json).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&json, text).unwrap();
        assert!(matches!(load_binary(&p), Err(Error::Version(2))));
    }

    #[test]
    fn json_sorted_rounded_newline() {
        let mut m = BTreeMap::new();
        m.insert("b", 0.1 + 0.2);
        m.insert("a", 0.17);
        let s = to_json_string(&m).unwrap();
        assert!(s.ends_with('\n'));
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("\"b\": 0.3\n"));
        assert!(s.contains("\"a\": 0.17"));
    }

    #[test]
    fn empty_sweep_csv_is_header_only() {
        let sweep = SweepResult {
            attribute: "g".into(),
            budget: 10,
            grid: vec![],
            seeds: vec![],
            hold_py: false,
            hold_py_given_a: true,
            probe: Default::default(),
            pool_hash: String::new(),
            eval_hash: String::new(),
            eval_n: 0,
            encoder_tag: String::new(),
            runs: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        save_report(&sweep, &p, ReportFormat::Csv).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), format!("{}\n", REPORT_COLUMNS.join(",")));
    }

    #[test]
    fn report_rows_format_floats() {
        let rows = vec![ReportRow {
            report: "sweep",
            attribute: "g".into(),
            group: Some("1".into()),
            allocation: Some(0.1 + 0.2),
            seed: Some(3),
            metric: MetricKind::Loss.to_string(),
            value: MetricValue::new(MetricKind::Loss, 0.123456789123, 5).unwrap().value,
            std: None,
            n: Some(5),
        }];
        let text = rows_to_csv(&rows);
        assert!(text.contains("sweep,g,1,0.3,3,loss,0.123456789,,5"), "{text}");
    }

    #[test]
    fn sig_rounding() {
        assert_eq!(round_sig(0.17), 0.17);
        assert_eq!(round_sig(123456.7891234), 123456.789);
        assert_eq!(round_sig(0.0), 0.0);
    }
}
