//! Small two-layer encoder pre-trained end to end, optionally with a
//! batch-level penalty on group separation of its hidden embedding.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::rng;

/// Floor on the pooled per-dimension variance used by the penalty.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam step size.
    pub learning_rate: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: 16,
            epochs: 60,
            batch_size: 128,
            learning_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderTrace {
    /// Mean total loss per epoch.
    pub loss: Vec<f64>,
    /// Mean cross-entropy per epoch.
    pub task_loss: Vec<f64>,
    /// Mean penalty value per epoch (before scaling by λ).
    pub surrogate: Vec<f64>,
    /// Batch-label pairs whose penalty was skipped because a group was absent.
    pub skipped_cells: usize,
}

/// `h = tanh(W₁ z + b₁)` feeding a logistic head `σ(w₂ · h + b₂)`.
/// The embedding handed to probes is `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// `hidden × input_dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub lambda: f64,
    pub attribute: String,
    pub seed: u64,
    pub trace: EncoderTrace,
}

impl EncoderParams {
    /// Hidden activations for one input row.
    pub fn hidden_of(&self, row: &[f64], out: &mut [f64]) {
        let d = self.input_dim;
        for (h, o) in out.iter_mut().enumerate() {
            let w = &self.w1[h * d..(h + 1) * d];
            *o = (self.b1[h] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()).tanh();
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.hidden_of(row, &mut h);
        sigmoid(self.b2 + h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>())
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Value of the separation penalty on a batch of embeddings (row-major,
/// `width` columns): for each label with both groups present, the squared
/// Mahalanobis distance between the two group means under the pooled
/// within-cell diagonal variance, averaged over those labels. Also returns
/// the number of labels skipped for an empty cell.
pub fn tv_surrogate(h: &[f64], width: usize, y: &[u8], a: &[u8]) -> (f64, usize) {
    let stats = CellStats::new(h, width, y, a);
    (stats.value(), stats.skipped)
}

struct CellStats {
    width: usize,
    /// `means[y][a]`
    means: [[Vec<f64>; 2]; 2],
    counts: [[usize; 2]; 2],
    variance: Vec<f64>,
    used: Vec<usize>,
    skipped: usize,
}

impl CellStats {
    fn new(h: &[f64], width: usize, y: &[u8], a: &[u8]) -> Self {
        let mut means: [[Vec<f64>; 2]; 2] = Default::default();
        for row in means.iter_mut() {
            for m in row.iter_mut() {
                *m = vec![0.0; width];
            }
        }
        let mut counts = [[0usize; 2]; 2];
        for (i, row) in h.chunks_exact(width).enumerate() {
            let (yy, aa) = (usize::from(y[i]), usize::from(a[i].min(1)));
            counts[yy][aa] += 1;
            for (m, v) in means[yy][aa].iter_mut().zip(row) {
                *m += v;
            }
        }
        for yy in 0..2 {
            for aa in 0..2 {
                if counts[yy][aa] > 0 {
                    let c = counts[yy][aa] as f64;
                    means[yy][aa].iter_mut().for_each(|m| *m /= c);
                }
            }
        }
        let mut variance = vec![0.0; width];
        for (i, row) in h.chunks_exact(width).enumerate() {
            let m = &means[usize::from(y[i])][usize::from(a[i].min(1))];
            for ((s, v), mu) in variance.iter_mut().zip(row).zip(m) {
                *s += (v - mu) * (v - mu);
            }
        }
        let cells = counts.iter().flatten().filter(|&&c| c > 0).count();
        let dof = (y.len().saturating_sub(cells)).max(1) as f64;
        variance.iter_mut().for_each(|s| *s = (*s / dof).max(VARIANCE_FLOOR));

        let mut used = Vec::new();
        let mut skipped = 0;
        for yy in 0..2 {
            if counts[yy][0] > 0 && counts[yy][1] > 0 {
                used.push(yy);
            } else if counts[yy][0] + counts[yy][1] > 0 {
                skipped += 1;
            }
        }
        CellStats {
            width,
            means,
            counts,
            variance,
            used,
            skipped,
        }
    }

    fn value(&self) -> f64 {
        if self.used.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .used
            .iter()
            .map(|&yy| {
                (0..self.width)
                    .map(|j| (self.means[yy][1][j] - self.means[yy][0][j]).powi(2) / self.variance[j])
                    .sum::<f64>()
            })
            .sum();
        total / self.used.len() as f64
    }

    /// Gradient of the penalty with respect to one row's embedding; the
    /// variance is held fixed.
    fn row_gradient(&self, y: u8, a: u8, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let yy = usize::from(y);
        let aa = usize::from(a.min(1));
        if !self.used.contains(&yy) {
            return;
        }
        let sign = if aa == 1 { 1.0 } else { -1.0 };
        let scale = 2.0 * sign / (self.counts[yy][aa] as f64 * self.used.len() as f64);
        for (j, g) in out.iter_mut().enumerate() {
            *g = scale * (self.means[yy][1][j] - self.means[yy][0][j]) / self.variance[j];
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains the encoder and its head on `ds` with loss
/// `cross-entropy + λ · penalty(attribute)`, using mini-batch Adam.
/// Deterministic given `seed`.
pub fn pretrain_encoder(
    ds: &EmbeddingSet,
    lambda: f64,
    attribute: &str,
    config: &EncoderConfig,
    seed: u64,
) -> Result<EncoderParams> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Range(format!("λ = {lambda} must be a finite value ≥ 0")));
    }
    if config.hidden == 0 || config.batch_size == 0 {
        return Err(Error::Config("hidden width and batch size must be positive".into()));
    }
    let attr = ds.attribute(attribute)?;
    if attr.codes.iter().any(|&c| c > 1) {
        return Err(Error::Config(format!(
            "encoder penalty needs a binary attribute; `{attribute}` has more groups"
        )));
    }
    let positives = ds.labels().iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == ds.n() {
        return Err(Error::InsufficientSamples("encoder pre-training needs both classes".into()));
    }

    let (d, hw) = (ds.d(), config.hidden);
    let mut init = rng::rng(seed, &[10]);
    let limit1 = (6.0 / (d + hw) as f64).sqrt();
    let limit2 = (6.0 / (hw + 1) as f64).sqrt();
    // flat layout: w1 | b1 | w2 | b2
    let n_params = hw * d + hw + hw + 1;
    let mut params = vec![0.0; n_params];
    for p in &mut params[..hw * d] {
        *p = init.random_range(-limit1..limit1);
    }
    for p in &mut params[hw * d + hw..hw * d + 2 * hw] {
        *p = init.random_range(-limit2..limit2);
    }
    let (o_b1, o_w2, o_b2) = (hw * d, hw * d + hw, hw * d + 2 * hw);

    let mut shuffle = rng::rng(seed, &[11]);
    let mut order: Vec<usize> = (0..ds.n()).collect();
    let mut adam = Adam::new(n_params, config.learning_rate);
    let mut grad = vec![0.0; n_params];
    let mut trace = EncoderTrace {
        loss: Vec::with_capacity(config.epochs),
        task_loss: Vec::with_capacity(config.epochs),
        surrogate: Vec::with_capacity(config.epochs),
        skipped_cells: 0,
    };

    let labels = ds.labels();
    let codes = &attr.codes;
    let mut hidden = Vec::new();
    let mut by = Vec::new();
    let mut ba = Vec::new();
    let mut dh = vec![0.0; hw];
    let mut ds_row = vec![0.0; hw];
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let (mut sum_total, mut sum_task, mut sum_pen, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let b = batch.len() as f64;
            hidden.clear();
            by.clear();
            ba.clear();
            for &i in batch {
                let row = ds.row(i);
                for h in 0..hw {
                    let w = &params[h * d..(h + 1) * d];
                    let u = params[o_b1 + h] + w.iter().zip(row).map(|(x, z)| x * z).sum::<f64>();
                    hidden.push(u.tanh());
                }
                by.push(labels[i]);
                ba.push(codes[i]);
            }
            let stats = if lambda > 0.0 {
                let s = CellStats::new(&hidden, hw, &by, &ba);
                trace.skipped_cells += s.skipped;
                Some(s)
            } else {
                None
            };
            let penalty = stats.as_ref().map_or(0.0, CellStats::value);

            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut task = 0.0;
            for (k, &i) in batch.iter().enumerate() {
                let h = &hidden[k * hw..(k + 1) * hw];
                let t = params[o_b2] + h.iter().zip(&params[o_w2..o_b2]).map(|(x, w)| x * w).sum::<f64>();
                let yv = f64::from(by[k]);
                let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
                task += softplus - yv * t;
                let r = (sigmoid(t) - yv) / b;
                grad[o_b2] += r;
                for j in 0..hw {
                    grad[o_w2 + j] += r * h[j];
                    dh[j] = r * params[o_w2 + j];
                }
                if let Some(s) = &stats {
                    s.row_gradient(by[k], ba[k], &mut ds_row);
                    for j in 0..hw {
                        dh[j] += lambda * ds_row[j];
                    }
                }
                let row = ds.row(i);
                for j in 0..hw {
                    let delta = dh[j] * (1.0 - h[j] * h[j]);
                    if delta == 0.0 {
                        continue;
                    }
                    grad[o_b1 + j] += delta;
                    for (g, z) in grad[j * d..(j + 1) * d].iter_mut().zip(row) {
                        *g += delta * z;
                    }
                }
            }
            task /= b;
            adam.step(&mut params, &grad);
            sum_task += task;
            sum_pen += penalty;
            sum_total += task + lambda * penalty;
            batches += 1;
        }
        let nb = batches.max(1) as f64;
        trace.loss.push(sum_total / nb);
        trace.task_loss.push(sum_task / nb);
        trace.surrogate.push(sum_pen / nb);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("encoder parameters diverged".into()));
    }

    Ok(EncoderParams {
        input_dim: d,
        hidden: hw,
        w1: params[..o_b1].to_vec(),
        b1: params[o_b1..o_w2].to_vec(),
        w2: params[o_w2..o_b2].to_vec(),
        b2: params[o_b2],
        lambda,
        attribute: attribute.to_string(),
        seed,
        trace,
    })
}

/// Replaces each row of `ds` with its hidden embedding.
pub fn embed(params: &EncoderParams, ds: &EmbeddingSet) -> Result<EmbeddingSet> {
    if ds.d() != params.input_dim {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim,
            got: ds.d(),
        });
    }
    let mut z = vec![0.0; ds.n() * params.hidden];
    for (i, out) in z.chunks_exact_mut(params.hidden).enumerate() {
        params.hidden_of(ds.row(i), out);
    }
    let tag = format!("{}+encoder(lambda={},seed={})", ds.encoder_tag(), params.lambda, params.seed);
    ds.with_matrix(z, params.hidden, tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::Preset;

    #[test]
    fn identical_means_give_zero_penalty() {
        // each label's two groups share the same rows
        let h = vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0, -1.0, 0.5, -1.0, 0.5];
        let y = [0, 0, 0, 0, 1, 1];
        let a = [0, 0, 1, 1, 0, 1];
        let (v, skipped) = tv_surrogate(&h, 2, &y, &a);
        assert_eq!(v, 0.0);
        assert_eq!(skipped, 0);
    }

    #[test]
    fn empty_cell_is_skipped() {
        let h = vec![0.0, 1.0, 2.0, 3.0];
        let (v, skipped) = tv_surrogate(&h, 1, &[0, 0, 1, 1], &[0, 1, 0, 0]);
        assert!(v > 0.0);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn penalty_hand_value() {
        // y = 0 only: group means 0 and 2, within-cell variance
        // ((−1)² + 1² + (−1)² + 1²) / (4 − 2) = 2
        let h = vec![-1.0, 1.0, 1.0, 3.0];
        let (v, _) = tv_surrogate(&h, 1, &[0, 0, 0, 0], &[0, 0, 1, 1]);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let h = vec![0.3, -0.2, 0.1, 0.5, -0.4, 0.9, 0.2, 0.0, 0.7, -0.3, 0.8, 0.1];
        let y = [0, 0, 0, 1, 1, 1];
        let a = [0, 1, 1, 0, 1, 0];
        let stats = CellStats::new(&h, 2, &y, &a);
        let mut g = vec![0.0; 2];
        let eps = 1e-6;
        for i in 0..6 {
            stats.row_gradient(y[i], a[i], &mut g);
            for j in 0..2 {
                let mut hp = h.clone();
                hp[i * 2 + j] += eps;
                let mut hm = h.clone();
                hm[i * 2 + j] -= eps;
                // variance held at its unperturbed value
                let value_at = |hh: &[f64]| {
                    let mut s = CellStats::new(hh, 2, &y, &a);
                    s.variance = stats.variance.clone();
                    s.value()
                };
                let fd = (value_at(&hp) - value_at(&hm)) / (2.0 * eps);
                assert!((fd - g[j]).abs() < 1e-6, "row {i} dim {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn zero_lambda_is_plain_cross_entropy() {
        let ds = Preset::Entangled.build(600, 0, 3).unwrap();
        let cfg = EncoderConfig {
            epochs: 3,
            ..Default::default()
        };
        let p = pretrain_encoder(&ds, 0.0, "digit", &cfg, 1).unwrap();
        assert_eq!(p.trace.loss, p.trace.task_loss);
        assert!(p.trace.surrogate.iter().all(|&s| s == 0.0));
        assert_eq!(p, pretrain_encoder(&ds, 0.0, "digit", &cfg, 1).unwrap());
    }

    #[test]
    fn learns_the_task() {
        let ds = Preset::Entangled.build(2000, 0, 4).unwrap();
        let cfg = EncoderConfig {
            epochs: 10,
            ..Default::default()
        };
        let p = pretrain_encoder(&ds, 0.0, "digit", &cfg, 0).unwrap();
        let correct = (0..ds.n())
            .filter(|&i| (p.predict_proba(ds.row(i)) >= 0.5) == (ds.labels()[i] == 1))
            .count();
        assert!(correct as f64 / ds.n() as f64 > 0.85);
        let e = embed(&p, &ds).unwrap();
        assert_eq!(e.d(), cfg.hidden);
        assert!(e.matrix().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn penalty_shrinks_with_lambda() {
        let ds = Preset::Entangled.build(3000, 0, 5).unwrap();
        let cfg = EncoderConfig {
            epochs: 10,
            ..Default::default()
        };
        let plain = pretrain_encoder(&ds, 0.0, "digit", &cfg, 2).unwrap();
        let reg = pretrain_encoder(&ds, 1.0, "digit", &cfg, 2).unwrap();
        let eval = |p: &EncoderParams| {
            let e = embed(p, &ds).unwrap();
            let a = ds.attribute("digit").unwrap();
            tv_surrogate(e.matrix(), e.d(), ds.labels(), &a.codes).0
        };
        assert!(eval(&reg) < eval(&plain));
    }

    #[test]
    fn rejects_negative_lambda() {
        let ds = Preset::Entangled.build(100, 0, 1).unwrap();
        assert!(matches!(
            pretrain_encoder(&ds, -0.1, "digit", &EncoderConfig::default(), 0),
            Err(Error::Range(_))
        ));
    }
}
