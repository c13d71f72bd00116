//! Class-conditional distances between subgroup embedding distributions.
//!
//! Three estimators are provided, each evaluated per label `y` and then
//! averaged over labels:
//!
//! - total variation from per-dimension histograms with shared bin edges,
//!   averaged across dimensions;
//! - univariate Wasserstein-1 per dimension (exact, from sorted samples),
//!   averaged across dimensions;
//! - Fréchet distance under a Gaussian approximation of each group.
//!
//! [`separation_report`] runs the full pipeline: optional PCA to the
//! smallest component set reaching a variance fraction, then the selected
//! metrics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{Attribute, EmbeddingSet};
use crate::error::{Error, Result};
use crate::pca;

pub const DEFAULT_BINS: usize = 50;

/// How labels are weighted when averaging per-class distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// Empirical `P(Y = y)` of the evaluated set.
    #[default]
    Empirical,
    Uniform,
}

/// How per-dimension distances are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DimensionWeighting {
    #[default]
    Unweighted,
    /// Weight each dimension by its pooled sample variance.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Tv,
    Wd,
    Fd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationOptions {
    pub bins: usize,
    pub condition_on_y: bool,
    pub class_weighting: ClassWeighting,
    pub dimension_weighting: DimensionWeighting,
    /// `None` evaluates in the full space.
    pub variance_fraction: Option<f64>,
    pub metrics: Vec<Metric>,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions {
            bins: DEFAULT_BINS,
            condition_on_y: true,
            class_weighting: ClassWeighting::Empirical,
            dimension_weighting: DimensionWeighting::Unweighted,
            variance_fraction: Some(pca::DEFAULT_VARIANCE_FRACTION),
            metrics: vec![Metric::Tv, Metric::Wd, Metric::Fd],
        }
    }
}

/// Row indices of each group within each conditioning class.
struct Cells {
    /// Class label for each entry of `rows`; `None` when not conditioning.
    classes: Vec<Option<u8>>,
    /// `rows[c][g]` = row indices with class `classes[c]` and group `g`.
    rows: Vec<Vec<Vec<usize>>>,
    /// Unnormalized weight of each class in the expectation over `y`.
    weights: Vec<f64>,
}

fn class_key(c: Option<u8>) -> String {
    match c {
        Some(y) => y.to_string(),
        None => "all".to_string(),
    }
}

fn cells(ds: &EmbeddingSet, attr: &Attribute, opts: &SeparationOptions) -> Result<Cells> {
    let groups = attr.groups().len();
    let classes: Vec<Option<u8>> = if opts.condition_on_y {
        vec![Some(0), Some(1)]
    } else {
        vec![None]
    };
    let mut rows = vec![vec![Vec::new(); groups]; classes.len()];
    for i in 0..ds.n() {
        let c = if opts.condition_on_y {
            usize::from(ds.labels()[i])
        } else {
            0
        };
        if c >= classes.len() {
            return Err(Error::Range(format!("row {i} has non-binary label")));
        }
        rows[c][usize::from(attr.codes[i])].push(i);
    }
    for (c, per_group) in rows.iter().enumerate() {
        for (g, r) in per_group.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::EmptySubgroup(format!(
                    "attribute `{}`: no rows with y = {}, group {}",
                    attr.name,
                    class_key(classes[c]),
                    attr.label(g as u8)
                )));
            }
        }
    }
    let weights = match opts.class_weighting {
        ClassWeighting::Empirical => rows
            .iter()
            .map(|g| g.iter().map(Vec::len).sum::<usize>() as f64)
            .collect(),
        ClassWeighting::Uniform => vec![1.0; classes.len()],
    };
    Ok(Cells {
        classes,
        rows,
        weights,
    })
}

fn column(ds: &EmbeddingSet, rows: &[usize], j: usize) -> Vec<f64> {
    rows.iter().map(|&i| ds.row(i)[j]).collect()
}

/// Normalized histograms of two samples over shared equal-width bins that
/// span their pooled range. Returns `(p, q, edges)`.
pub fn shared_histograms(a: &[f64], b: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (lo, width) = pooled_range(a, b, bins);
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let counts = |xs: &[f64]| {
        let mut h = vec![0u64; bins];
        for &x in xs {
            h[bin_index(x, lo, width, bins)] += 1;
        }
        h
    };
    let norm = |h: Vec<u64>, total: usize| -> Vec<f64> {
        h.into_iter().map(|c| c as f64 / total as f64).collect()
    };
    (norm(counts(a), a.len()), norm(counts(b), b.len()), edges)
}

fn bin_index(x: f64, lo: f64, width: f64, bins: usize) -> usize {
    if width > 0.0 {
        (((x - lo) / width) as usize).min(bins - 1)
    } else {
        0
    }
}

fn pooled_range(a: &[f64], b: &[f64], bins: usize) -> (f64, f64) {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, (hi - lo) / bins as f64)
}

/// `½ Σ_b |p(b) − q(b)|` between two samples on shared bins. The sum is
/// formed on integer counts, so identical samples give exactly 0 and
/// disjoint supports exactly 1.
pub fn tv_1d(a: &[f64], b: &[f64], bins: usize) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (lo, width) = pooled_range(a, b, bins);
    let mut ca = vec![0i128; bins];
    let mut cb = vec![0i128; bins];
    for &x in a {
        ca[bin_index(x, lo, width, bins)] += 1;
    }
    for &x in b {
        cb[bin_index(x, lo, width, bins)] += 1;
    }
    let (na, nb) = (a.len() as i128, b.len() as i128);
    let num: i128 = ca.iter().zip(&cb).map(|(x, y)| (x * nb - y * na).abs()).sum();
    (num as f64 / (2 * na * nb) as f64).clamp(0.0, 1.0)
}

/// Exact Wasserstein-1 between two empirical samples: `∫ |F(t) − G(t)| dt`.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = match (xs.first(), ys.first()) {
        (Some(&x), Some(&y)) => x.min(y),
        _ => return 0.0,
    };
    let mut total = 0.0;
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        total += (i as f64 / n - j as f64 / m).abs() * (next - prev);
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}

fn dimension_weights(ds: &EmbeddingSet, opts: &SeparationOptions) -> Vec<f64> {
    let d = ds.d();
    match opts.dimension_weighting {
        DimensionWeighting::Unweighted => vec![1.0; d],
        DimensionWeighting::Variance => {
            let (_, cov) = pca::covariance(ds);
            if cov.diagonal().iter().sum::<f64>() <= 0.0 {
                vec![1.0; d]
            } else {
                cov.diagonal().iter().copied().collect()
            }
        }
    }
}

/// Per-dimension distance averaged over dimensions, for each class and
/// each unordered group pair `(g, h)` with `g < h`.
fn per_class_pairwise<F>(
    ds: &EmbeddingSet,
    cells: &Cells,
    dim_w: &[f64],
    f: F,
) -> Vec<BTreeMap<(usize, usize), f64>>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    cells
        .rows
        .iter()
        .map(|groups| {
            let mut out = BTreeMap::new();
            for g in 0..groups.len() {
                for h in g + 1..groups.len() {
                    let mut acc = 0.0;
                    for (j, w) in dim_w.iter().enumerate() {
                        let a = column(ds, &groups[g], j);
                        let b = column(ds, &groups[h], j);
                        acc += w * f(&a, &b);
                    }
                    out.insert((g, h), acc / dim_w.iter().sum::<f64>());
                }
            }
            out
        })
        .collect()
}

/// Total-variation estimate for one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    /// Class-weighted mean of `per_class`; with more than two groups, the
    /// per-class value is the maximum over group pairs.
    pub epsilon: f64,
    pub per_class: BTreeMap<String, f64>,
    pub class_weights: BTreeMap<String, f64>,
    /// Same per-class values averaged with equal class weights.
    pub epsilon_uniform: f64,
    pub warnings: Vec<String>,
}

fn small_cell_warnings(cells: &Cells, attr: &Attribute, bins: usize) -> Vec<String> {
    let mut w = Vec::new();
    for (c, groups) in cells.rows.iter().enumerate() {
        for (g, rows) in groups.iter().enumerate() {
            if rows.len() < bins {
                w.push(format!(
                    "insufficient samples: y = {}, {} = {} has {} rows (< {bins} bins)",
                    class_key(cells.classes[c]),
                    attr.name,
                    attr.label(g as u8),
                    rows.len()
                ));
            }
        }
    }
    w
}

fn reduce_classes(cells: &Cells, values: &[f64]) -> (f64, f64, BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let total_w: f64 = cells.weights.iter().sum();
    let eps = values.iter().zip(&cells.weights).map(|(v, w)| v * w).sum::<f64>() / total_w;
    let uniform = values.iter().sum::<f64>() / values.len() as f64;
    let per_class = cells
        .classes
        .iter()
        .zip(values)
        .map(|(&c, &v)| (class_key(c), v))
        .collect();
    let weights = cells
        .classes
        .iter()
        .zip(&cells.weights)
        .map(|(&c, &w)| (class_key(c), w / total_w))
        .collect();
    (eps, uniform, per_class, weights)
}

fn max_pair(m: &BTreeMap<(usize, usize), f64>) -> f64 {
    m.values().copied().fold(0.0, f64::max)
}

/// Histogram total variation between the groups of `attribute`, per label
/// and averaged over labels. For attributes with more than two groups this
/// is the max-over-pairs extension.
pub fn tv_distance(ds: &EmbeddingSet, attribute: &str, opts: &SeparationOptions) -> Result<TvEstimate> {
    if opts.bins < 2 {
        return Err(Error::Range(format!("bins = {} (need ≥ 2)", opts.bins)));
    }
    let attr = ds.attribute(attribute)?;
    let cells = cells(ds, attr, opts)?;
    let dim_w = dimension_weights(ds, opts);
    let pairs = per_class_pairwise(ds, &cells, &dim_w, |a, b| tv_1d(a, b, opts.bins));
    let values: Vec<f64> = pairs.iter().map(max_pair).map(|v| v.clamp(0.0, 1.0)).collect();
    let (epsilon, epsilon_uniform, per_class, class_weights) = reduce_classes(&cells, &values);
    Ok(TvEstimate {
        epsilon: epsilon.clamp(0.0, 1.0),
        per_class,
        class_weights,
        epsilon_uniform: epsilon_uniform.clamp(0.0, 1.0),
        warnings: small_cell_warnings(&cells, attr, opts.bins),
    })
}

/// Multi-group total variation: expectation over labels of the maximum
/// pairwise TV among the groups.
pub fn tv_multigroup(ds: &EmbeddingSet, attribute: &str, opts: &SeparationOptions) -> Result<f64> {
    tv_distance(ds, attribute, opts).map(|t| t.epsilon)
}

/// Mean per-dimension Wasserstein-1 between groups, averaged over labels.
pub fn wasserstein_distance(ds: &EmbeddingSet, attribute: &str, opts: &SeparationOptions) -> Result<f64> {
    let attr = ds.attribute(attribute)?;
    let cells = cells(ds, attr, opts)?;
    let dim_w = dimension_weights(ds, opts);
    let pairs = per_class_pairwise(ds, &cells, &dim_w, wasserstein_1d);
    let values: Vec<f64> = pairs.iter().map(max_pair).collect();
    Ok(reduce_classes(&cells, &values).0)
}

fn mean_cov(ds: &EmbeddingSet, rows: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
    let sub = ds.subset(rows);
    let (mean, cov) = pca::covariance(&sub);
    (mean, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Fréchet distance between two Gaussians `(μ₀, Σ₀)` and `(μ₁, Σ₁)`.
/// Negative eigenvalues are clamped to zero before each square root.
pub fn frechet_gaussian(m0: &[f64], c0: &DMatrix<f64>, m1: &[f64], c1: &DMatrix<f64>) -> Result<f64> {
    let mean_term: f64 = m0.iter().zip(m1).map(|(a, b)| (a - b).powi(2)).sum();
    let s0 = sym_sqrt(c0)?;
    let inner = &s0 * c1 * &s0;
    let cross = sym_sqrt(&inner)?;
    let fd = mean_term + c0.trace() + c1.trace() - 2.0 * cross.trace();
    Ok(fd.max(0.0))
}

/// Fréchet distance between groups, averaged over labels.
pub fn frechet_distance(ds: &EmbeddingSet, attribute: &str, opts: &SeparationOptions) -> Result<f64> {
    let attr = ds.attribute(attribute)?;
    let cells = cells(ds, attr, opts)?;
    let mut values = Vec::with_capacity(cells.rows.len());
    for (c, groups) in cells.rows.iter().enumerate() {
        if let Some((g, r)) = groups.iter().enumerate().find(|(_, r)| r.len() < 2) {
            return Err(Error::InsufficientSamples(format!(
                "Fréchet distance needs ≥ 2 rows per cell; y = {}, {} = {} has {}",
                class_key(cells.classes[c]),
                attr.name,
                attr.label(g as u8),
                r.len()
            )));
        }
        let stats: Vec<_> = groups.iter().map(|r| mean_cov(ds, r)).collect();
        let mut worst: f64 = 0.0;
        for g in 0..stats.len() {
            for h in g + 1..stats.len() {
                let fd = frechet_gaussian(&stats[g].0, &stats[g].1, &stats[h].0, &stats[h].1)?;
                worst = worst.max(fd);
            }
        }
        values.push(worst);
    }
    Ok(reduce_classes(&cells, &values).0)
}

/// Per-dimension histograms of the groups of `attribute` within label `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalHistogram {
    pub attribute: String,
    pub y: u8,
    pub bins: usize,
    /// `masses[dim][group][bin]`
    pub masses: Vec<[Vec<f64>; 2]>,
    pub bin_edges: Vec<Vec<f64>>,
}

/// Histograms for a binary attribute, one per dimension, sharing edges
/// across the two groups.
pub fn conditional_histograms(ds: &EmbeddingSet, attribute: &str, y: u8, bins: usize) -> Result<ConditionalHistogram> {
    let attr = ds.attribute(attribute)?;
    let opts = SeparationOptions {
        bins,
        ..Default::default()
    };
    let cells = cells(ds, attr, &opts)?;
    let groups = &cells.rows[usize::from(y.min(1))];
    if groups.len() != 2 {
        return Err(Error::Config(format!(
            "conditional histograms need a binary attribute; `{}` has {} groups",
            attr.name,
            groups.len()
        )));
    }
    let mut masses = Vec::with_capacity(ds.d());
    let mut bin_edges = Vec::with_capacity(ds.d());
    for j in 0..ds.d() {
        let (p, q, e) = shared_histograms(&column(ds, &groups[0], j), &column(ds, &groups[1], j), bins);
        masses.push([p, q]);
        bin_edges.push(e);
    }
    Ok(ConditionalHistogram {
        attribute: attribute.to_string(),
        y,
        bins,
        masses,
        bin_edges,
    })
}

/// Separation of one attribute's groups in a frozen representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub attribute: String,
    /// Class-averaged total variation (the `ε` used by bound checks).
    #[serde(rename = "tv")]
    pub epsilon_tv: f64,
    pub per_class_tv: BTreeMap<String, f64>,
    pub class_weights: BTreeMap<String, f64>,
    pub tv_uniform_classes: f64,
    pub wd: Option<f64>,
    pub fd: Option<f64>,
    /// Dimensions the metrics were computed on.
    pub k: usize,
    pub variance_fraction: Option<f64>,
    pub bins: usize,
    pub groups: usize,
    /// `"y{y}_a{code}"` → rows.
    pub n_per_cell: BTreeMap<String, usize>,
    pub condition_on_y: bool,
    pub class_weighting: ClassWeighting,
    pub dimension_weighting: DimensionWeighting,
    pub seed: u64,
    /// Content hash of the set the report was computed on.
    #[serde(default)]
    pub dataset_hash: Option<String>,
    pub warnings: Vec<String>,
}

/// Optional PCA, then the requested metrics for one attribute.
pub fn separation_report(
    ds: &EmbeddingSet,
    attribute: &str,
    opts: &SeparationOptions,
    seed: u64,
) -> Result<SeparationReport> {
    let attr = ds.attribute(attribute)?;
    let projected;
    let view = match opts.variance_fraction {
        Some(f) => {
            let model = pca::fit_pca(ds, f)?;
            projected = pca::project(&model, ds)?;
            &projected
        }
        None => ds,
    };
    let tv = tv_distance(view, attribute, opts)?;
    let wd = if opts.metrics.contains(&Metric::Wd) {
        Some(wasserstein_distance(view, attribute, opts)?)
    } else {
        None
    };
    let fd = if opts.metrics.contains(&Metric::Fd) {
        Some(frechet_distance(view, attribute, opts)?)
    } else {
        None
    };
    let mut n_per_cell = BTreeMap::new();
    for (&y, &a) in ds.labels().iter().zip(&attr.codes) {
        *n_per_cell.entry(format!("y{y}_a{a}")).or_insert(0) += 1;
    }
    Ok(SeparationReport {
        attribute: attribute.to_string(),
        epsilon_tv: tv.epsilon,
        per_class_tv: tv.per_class,
        class_weights: tv.class_weights,
        tv_uniform_classes: tv.epsilon_uniform,
        wd,
        fd,
        k: view.d(),
        variance_fraction: opts.variance_fraction,
        bins: opts.bins,
        groups: attr.groups().len(),
        n_per_cell,
        condition_on_y: opts.condition_on_y,
        class_weighting: opts.class_weighting,
        dimension_weighting: opts.dimension_weighting,
        seed,
        dataset_hash: Some(crate::manifest::dataset_hash(ds)),
        warnings: tv.warnings,
    })
}
