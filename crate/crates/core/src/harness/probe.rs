//! Last-layer logistic probe trained on frozen features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Coefficient of `½‖w‖²` (bias excluded).
    pub l2: f64,
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub final_loss: f64,
    pub epochs: usize,
    /// Training rows held a single class; the probe is the constant prior.
    pub single_class: bool,
}

/// Affine readout `σ(w · standardize(z) + b)` with decision threshold 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// `d` feature weights followed by the bias.
    pub weights: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub trace: ProbeTrace,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Probe {
    pub fn d(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        let d = self.d();
        let mut t = self.weights[d];
        for j in 0..d {
            t += self.weights[j] * (row[j] - self.feature_mean[j]) / self.feature_scale[j];
        }
        t
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }

    /// Probabilities for every row of a row-major `n × d` matrix.
    pub fn predict_matrix(&self, z: &[f64]) -> Vec<f64> {
        z.chunks_exact(self.d()).map(|r| self.predict_proba(r)).collect()
    }
}

/// Mean cross-entropy plus the L2 term at `weights` on standardized rows.
fn objective(x: &[f64], y: &[u8], d: usize, weights: &[f64], l2: f64) -> f64 {
    let n = y.len() as f64;
    let mut loss = 0.0;
    for (row, &label) in x.chunks_exact(d).zip(y) {
        let t = weights[d] + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
        // log(1 + e^t) − y t, evaluated stably
        let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
        loss += softplus - f64::from(label) * t;
    }
    let reg: f64 = weights[..d].iter().map(|w| w * w).sum::<f64>() * 0.5 * l2;
    loss / n + reg
}

/// Full-batch gradient descent on the logistic loss from zero weights.
/// `z` is row-major with `d` columns. The seed is accepted for interface
/// symmetry; the procedure itself is deterministic.
pub fn train_probe(z: &[f64], d: usize, y: &[u8], config: &ProbeConfig, _seed: u64) -> Result<Probe> {
    if d == 0 || z.len() != y.len() * d {
        return Err(Error::DimensionMismatch {
            expected: y.len() * d.max(1),
            got: z.len(),
        });
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::InsufficientSamples("probe training set is empty".into()));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::Range(format!("non-finite feature at row {}", i / d)));
    }

    let mut mean = vec![0.0; d];
    let mut scale = vec![1.0; d];
    if config.standardize {
        for row in z.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in z.chunks_exact(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, v) in scale.iter_mut().zip(var) {
            let sd = (v / n as f64).sqrt();
            *s = if sd > 1e-12 { sd } else { 1.0 };
        }
    }
    let x: Vec<f64> = z
        .chunks_exact(d)
        .flat_map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect::<Vec<_>>()
        })
        .collect();

    let positives = y.iter().filter(|&&v| v == 1).count();
    let mut weights = vec![0.0; d + 1];
    if positives == 0 || positives == n {
        let prior = (positives as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
        weights[d] = (prior / (1.0 - prior)).ln();
        let final_loss = objective(&x, y, d, &weights, config.l2);
        return Ok(Probe {
            weights,
            feature_mean: mean,
            feature_scale: scale,
            trace: ProbeTrace {
                final_loss,
                epochs: 0,
                single_class: true,
            },
        });
    }

    let mut grad = vec![0.0; d + 1];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (row, &label) in x.chunks_exact(d).zip(y) {
            let t = weights[d] + row.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();
            let r = sigmoid(t) - f64::from(label);
            for (g, v) in grad.iter_mut().zip(row) {
                *g += r * v;
            }
            grad[d] += r;
        }
        for j in 0..=d {
            let mut g = grad[j] / n as f64;
            if j < d {
                g += config.l2 * weights[j];
            }
            weights[j] -= config.learning_rate * g;
        }
    }
    let final_loss = objective(&x, y, d, &weights, config.l2);
    Ok(Probe {
        weights,
        feature_mean: mean,
        feature_scale: scale,
        trace: ProbeTrace {
            final_loss,
            epochs: config.epochs,
            single_class: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::accuracy;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<f64>, Vec<u8>) {
        let mut r = crate::rng::rng(seed, &[]);
        let mut z = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let c = if label == 1 { sep } else { -sep };
            z.push(c + 0.3 * r.sample::<f64, _>(StandardNormal));
            z.push(-c + 0.3 * r.sample::<f64, _>(StandardNormal));
            y.push(label);
        }
        (z, y)
    }

    #[test]
    fn separable_blobs() {
        let (z, y) = blobs(400, 2.0, 1);
        let p = train_probe(&z, 2, &y, &ProbeConfig::default(), 0).unwrap();
        assert!(accuracy(&p.predict_matrix(&z), &y) >= 0.99);
        assert!(!p.trace.single_class);
    }

    #[test]
    fn uninformative_features_near_chance() {
        let mut accs = Vec::new();
        for seed in 0..10 {
            let mut r = crate::rng::rng(seed, &[1]);
            let draw = |r: &mut crate::rng::Rng, n: usize| {
                let z: Vec<f64> = (0..n * 3).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
                (z, y)
            };
            let (z, y) = draw(&mut r, 500);
            let (zt, yt) = draw(&mut r, 2000);
            let p = train_probe(&z, 3, &y, &ProbeConfig::default(), seed).unwrap();
            accs.push(accuracy(&p.predict_matrix(&zt), &yt));
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((0.45..=0.55).contains(&mean), "{accs:?}");
    }

    #[test]
    fn zero_l2_matches_unregularized_objective() {
        let (z, y) = blobs(100, 0.3, 4);
        let cfg = ProbeConfig {
            l2: 0.0,
            epochs: 50,
            ..Default::default()
        };
        let p = train_probe(&z, 2, &y, &cfg, 0).unwrap();
        let x: Vec<f64> = z
            .chunks_exact(2)
            .flat_map(|r| (0..2).map(|j| (r[j] - p.feature_mean[j]) / p.feature_scale[j]).collect::<Vec<_>>())
            .collect();
        let plain = objective(&x, &y, 2, &p.weights, 0.0);
        assert_eq!(p.trace.final_loss, plain);
        let with_reg = objective(&x, &y, 2, &p.weights, 1e-4);
        assert!(with_reg > plain);
    }

    #[test]
    fn single_class_is_prior() {
        let z = vec![0.0, 1.0, 2.0, 3.0];
        let p = train_probe(&z, 1, &[1, 1, 1, 1], &ProbeConfig::default(), 0).unwrap();
        assert!(p.trace.single_class);
        assert!(p.predict_proba(&[100.0]) > 0.99);
    }

    #[test]
    fn deterministic() {
        let (z, y) = blobs(200, 0.5, 9);
        let a = train_probe(&z, 2, &y, &ProbeConfig::default(), 1).unwrap();
        let b = train_probe(&z, 2, &y, &ProbeConfig::default(), 2).unwrap();
        assert_eq!(a, b);
    }
}
