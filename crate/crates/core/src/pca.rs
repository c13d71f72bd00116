//! Principal-component projection keeping the smallest number of components
//! whose cumulative explained variance reaches a target fraction.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.7;

/// Fitted projection. `components` is `k × d`, row-major, with orthonormal
/// rows sorted by decreasing explained variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub variance_fraction: f64,
    pub total_variance: f64,
    pub k: usize,
}

impl PcaModel {
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    /// Cumulative explained fraction at `k` components.
    pub fn explained_fraction(&self) -> f64 {
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }
}

/// Centered sample covariance (denominator `n − 1`) and column means.
pub(crate) fn covariance(ds: &EmbeddingSet) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (ds.n(), ds.d());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(ds.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, &v), &m) in centered.iter_mut().zip(ds.row(i)).zip(&mean) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

/// Fits the projection. `k` is the smallest component count whose cumulative
/// explained variance is at least `variance_fraction`; each component is
/// signed so its largest-magnitude entry is positive.
pub fn fit_pca(ds: &EmbeddingSet, variance_fraction: f64) -> Result<PcaModel> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::Range(format!(
            "variance fraction {variance_fraction} outside (0, 1]"
        )));
    }
    if ds.n() < 2 {
        return Err(Error::DegenerateData("PCA needs at least two rows".into()));
    }
    let d = ds.d();
    let (mean, cov) = covariance(ds);
    let total: f64 = cov.diagonal().iter().sum();
    if total < 1e-12 {
        return Err(Error::DegenerateData(format!(
            "total variance {total:e} below 1e-12"
        )));
    }
    let eig = SymmetricEigen::try_new(cov, 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("covariance eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    // Relative slack absorbs rounding when the fraction is met exactly.
    let target = variance_fraction * total * (1.0 - 1e-12);
    let mut cumulative = 0.0;
    let mut k = d;
    for (rank, &j) in order.iter().enumerate() {
        cumulative += eig.eigenvalues[j].max(0.0);
        if cumulative >= target {
            k = rank + 1;
            break;
        }
    }

    let mut components = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for &j in order.iter().take(k) {
        let mut row: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let pivot = row
            .iter()
            .copied()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, v)| {
                if v.abs() > best.1.abs() + 1e-12 {
                    (i, v)
                } else {
                    best
                }
            })
            .1;
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(row);
        explained.push(eig.eigenvalues[j].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
        variance_fraction,
        total_variance: total,
        k,
    })
}

/// Maps each row to `(z − mean) · componentsᵀ`; labels and attributes are
/// carried through unchanged.
pub fn project(model: &PcaModel, ds: &EmbeddingSet) -> Result<EmbeddingSet> {
    if ds.d() != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            got: ds.d(),
        });
    }
    let k = model.k;
    let mut out = Vec::with_capacity(ds.n() * k);
    let mut centered = vec![0.0; ds.d()];
    for i in 0..ds.n() {
        for ((c, &v), &m) in centered.iter_mut().zip(ds.row(i)).zip(&model.mean) {
            *c = v - m;
        }
        for comp in &model.components {
            out.push(comp.iter().zip(&centered).map(|(a, b)| a * b).sum());
        }
    }
    let tag = format!("{}+pca{k}", ds.encoder_tag());
    ds.with_matrix(out, k, tag)
}

/// Inverse map from `k`-dimensional scores back to the original space.
pub fn back_project(model: &PcaModel, scores: &[f64]) -> Vec<f64> {
    let mut out = model.mean.clone();
    for (s, comp) in scores.iter().zip(&model.components) {
        for (o, c) in out.iter_mut().zip(comp) {
            *o += s * c;
        }
    }
    out
}
