//! Shared domain types: embedding matrices with labels and subgroup
//! attributes, per-attribute summaries, and metric values.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named attribute column: an integer group code per row, plus an
/// optional code → label dictionary for readable reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub codes: Vec<u8>,
    #[serde(default)]
    pub dictionary: BTreeMap<u8, String>,
}

impl Attribute {
    pub fn new(name: impl Into<String>, codes: Vec<u8>) -> Self {
        Attribute {
            name: name.into(),
            codes,
            dictionary: BTreeMap::new(),
        }
    }

    pub fn with_dictionary(mut self, dictionary: BTreeMap<u8, String>) -> Self {
        self.dictionary = dictionary;
        self
    }

    /// Group codes the attribute declares: `0..=max(code)` plus any
    /// dictionary keys.
    pub fn groups(&self) -> Vec<u8> {
        let max_code = self.codes.iter().copied().max().unwrap_or(0);
        let max_dict = self.dictionary.keys().copied().max().unwrap_or(0);
        (0..=max_code.max(max_dict)).collect()
    }

    pub fn label(&self, code: u8) -> String {
        self.dictionary
            .get(&code)
            .cloned()
            .unwrap_or_else(|| code.to_string())
    }
}

/// A frozen encoder's latent matrix `Z` (row-major, `n × d`) with binary
/// labels and subgroup attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    z: Vec<f64>,
    n: usize,
    d: usize,
    y: Vec<u8>,
    attributes: Vec<Attribute>,
    encoder_tag: String,
}

impl EmbeddingSet {
    /// Builds a set from a flat row-major matrix. Only the matrix shape is
    /// checked here; call [`validate`] or [`EmbeddingSet::validated`] for the
    /// full invariant check.
    pub fn new(
        ids: Vec<String>,
        z: Vec<f64>,
        d: usize,
        y: Vec<u8>,
        attributes: Vec<Attribute>,
        encoder_tag: impl Into<String>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Schema("embedding dimension must be at least 1".into()));
        }
        if !z.len().is_multiple_of(d) {
            return Err(Error::Schema(format!(
                "matrix length {} is not a multiple of d = {d}",
                z.len()
            )));
        }
        let n = z.len() / d;
        Ok(EmbeddingSet {
            ids,
            z,
            n,
            d,
            y,
            attributes,
            encoder_tag: encoder_tag.into(),
        })
    }

    /// Builds from row vectors; ids default to the row index.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<u8>, attributes: Vec<Attribute>) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Schema("ragged rows".into()));
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        let z = rows.iter().flatten().copied().collect();
        EmbeddingSet::new(ids, z, d, y, attributes, "")
    }

    /// Returns `self` if every invariant holds, otherwise the violations.
    pub fn validated(self) -> Result<Self> {
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(violations))
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn matrix(&self) -> &[f64] {
        &self.z
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    pub fn encoder_tag(&self) -> &str {
        &self.encoder_tag
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute_names(&self) -> Vec<&str> {
        self.attributes.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn attribute(&self, name: &str) -> Result<&Attribute> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute {
                name: name.to_string(),
                known: self.attribute_names().join(", "),
            })
    }

    /// Rows `indices` in the given order, with all columns carried along.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingSet {
        let mut z = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            z.extend_from_slice(self.row(i));
        }
        EmbeddingSet {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            z,
            n: indices.len(),
            d: self.d,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            attributes: self
                .attributes
                .iter()
                .map(|a| Attribute {
                    name: a.name.clone(),
                    codes: indices.iter().map(|&i| a.codes[i]).collect(),
                    dictionary: a.dictionary.clone(),
                })
                .collect(),
            encoder_tag: self.encoder_tag.clone(),
        }
    }

    /// Same rows and columns with a new matrix (e.g. projected or re-encoded).
    pub fn with_matrix(&self, z: Vec<f64>, d: usize, encoder_tag: impl Into<String>) -> Result<Self> {
        if d == 0 || z.len() != self.n * d {
            return Err(Error::DimensionMismatch {
                expected: self.n * d.max(1),
                got: z.len(),
            });
        }
        Ok(EmbeddingSet {
            ids: self.ids.clone(),
            z,
            n: self.n,
            d,
            y: self.y.clone(),
            attributes: self.attributes.clone(),
            encoder_tag: encoder_tag.into(),
        })
    }

    /// Same data with a different set of attribute columns.
    pub fn with_attributes(&self, attributes: Vec<Attribute>) -> Self {
        EmbeddingSet {
            attributes,
            ..self.clone()
        }
    }
}

/// One broken invariant, located by row and/or column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub row: Option<usize>,
    pub column: Option<String>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.row, &self.column) {
            (Some(r), Some(c)) => write!(f, "({r}, {c}): {}", self.rule),
            (Some(r), None) => write!(f, "row {r}: {}", self.rule),
            (None, Some(c)) => write!(f, "column {c}: {}", self.rule),
            (None, None) => write!(f, "{}", self.rule),
        }
    }
}

fn violation(row: Option<usize>, column: Option<String>, rule: impl Into<String>) -> Violation {
    Violation {
        row,
        column,
        rule: rule.into(),
    }
}

/// Checks every structural invariant. Never fails; an empty list means the
/// set is well-formed. Matrix violations are located as `(row, column)`.
pub fn validate(ds: &EmbeddingSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = ds.n;
    if n == 0 {
        out.push(violation(None, None, "dataset has no rows"));
    }
    if ds.ids.len() != n {
        out.push(violation(
            None,
            Some("id".into()),
            format!("length {} differs from N = {n}", ds.ids.len()),
        ));
    }
    if ds.y.len() != n {
        out.push(violation(
            None,
            Some("y".into()),
            format!("length {} differs from N = {n}", ds.y.len()),
        ));
    }
    for (i, &v) in ds.z.iter().enumerate() {
        if !v.is_finite() {
            out.push(violation(
                Some(i / ds.d),
                Some((i % ds.d).to_string()),
                "non-finite embedding value",
            ));
        }
    }
    for (i, &label) in ds.y.iter().enumerate() {
        if label > 1 {
            out.push(violation(Some(i), Some("y".into()), format!("label {label} is not binary")));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for a in &ds.attributes {
        if !seen.insert(a.name.as_str()) {
            out.push(violation(None, Some(a.name.clone()), "duplicate attribute name"));
        }
        if a.codes.len() != n {
            out.push(violation(
                None,
                Some(a.name.clone()),
                format!("length {} differs from N = {n}", a.codes.len()),
            ));
            continue;
        }
        let distinct: std::collections::BTreeSet<u8> = a.codes.iter().copied().collect();
        if distinct.len() < 2 {
            out.push(violation(None, Some(a.name.clone()), "attribute has one group"));
        }
    }
    out
}

/// Base prevalence of each group and the label rate inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub attribute: String,
    /// `gamma[k]` = fraction of rows with code `k`.
    pub gamma: Vec<f64>,
    /// `class_given_group[k]` = P(Y = 1 | A = k).
    pub class_given_group: Vec<f64>,
    /// `counts[y][k]` = rows with label `y` and code `k`.
    pub counts: [Vec<usize>; 2],
}

/// Computes group prevalences and class rates for one attribute.
pub fn summarize(ds: &EmbeddingSet, attribute: &str) -> Result<SubgroupSummary> {
    let attr = ds.attribute(attribute)?;
    let groups = attr.groups().len();
    let mut counts = [vec![0usize; groups], vec![0usize; groups]];
    for (&y, &a) in ds.y.iter().zip(&attr.codes) {
        counts[usize::from(y.min(1))][usize::from(a)] += 1;
    }
    let n = ds.n as f64;
    let mut gamma = Vec::with_capacity(groups);
    let mut class_given_group = Vec::with_capacity(groups);
    for k in 0..groups {
        let total = counts[0][k] + counts[1][k];
        if total == 0 {
            return Err(Error::EmptySubgroup(format!(
                "attribute `{attribute}` group {} has no rows",
                attr.label(k as u8)
            )));
        }
        gamma.push(total as f64 / n);
        class_given_group.push(counts[1][k] as f64 / total as f64);
    }
    Ok(SubgroupSummary {
        attribute: attribute.to_string(),
        gamma,
        class_given_group,
        counts,
    })
}

/// Which performance number a [`MetricValue`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Loss,
    BalancedAccuracy,
    Auc,
    Accuracy,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Loss,
        MetricKind::BalancedAccuracy,
        MetricKind::Auc,
        MetricKind::Accuracy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Loss => "loss",
            MetricKind::BalancedAccuracy => "balanced_accuracy",
            MetricKind::Auc => "auc",
            MetricKind::Accuracy => "accuracy",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(MetricKind::Loss),
            "balanced_accuracy" | "balanced-accuracy" | "bacc" => Ok(MetricKind::BalancedAccuracy),
            "auc" => Ok(MetricKind::Auc),
            "accuracy" | "acc" => Ok(MetricKind::Accuracy),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
    pub n: usize,
}

impl MetricValue {
    pub fn new(kind: MetricKind, value: f64, n: usize) -> Result<Self> {
        let ok = match kind {
            MetricKind::Loss => value >= 0.0,
            _ => (0.0..=1.0).contains(&value),
        };
        if !ok || !value.is_finite() || n == 0 {
            return Err(Error::Range(format!("{kind} = {value} on n = {n}")));
        }
        Ok(MetricValue { kind, value, n })
    }
}
