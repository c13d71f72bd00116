//! Box-constrained fit of `ℓ(n_g, n) = σ² n_g^{−p} + τ² n^{−q} + δ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::MetricKind;
use crate::error::{Error, Result};
use crate::harness::allocation::group_one_count;
use crate::harness::sweep::SweepResult;

pub const PARAM_NAMES: [&str; 5] = ["sigma", "p", "tau", "q", "delta"];

/// One observation: subgroup size, total size, subgroup loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawPoint {
    pub n_group: f64,
    pub n_total: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawParams {
    pub sigma: f64,
    pub p: f64,
    pub tau: f64,
    pub q: f64,
    pub delta: f64,
}

impl PowerLawParams {
    fn from_array(v: [f64; 5]) -> Self {
        PowerLawParams {
            sigma: v[0],
            p: v[1],
            tau: v[2],
            q: v[3],
            delta: v[4],
        }
    }

    pub fn eval(&self, n_group: f64, n_total: f64) -> f64 {
        self.sigma * self.sigma * n_group.powf(-self.p) + self.tau * self.tau * n_total.powf(-self.q) + self.delta
    }
}

/// Inclusive box for `(σ, p, τ, q, δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawBounds {
    pub lower: [f64; 5],
    pub upper: [f64; 5],
}

impl Default for PowerLawBounds {
    /// Scales and offset non-negative, exponents in `[1e-6, 4]`.
    fn default() -> Self {
        PowerLawBounds {
            lower: [0.0, 1e-6, 0.0, 1e-6, 0.0],
            upper: [1e6, 4.0, 1e6, 4.0, 1e6],
        }
    }
}

impl PowerLawBounds {
    fn project(&self, v: &mut [f64; 5]) {
        for i in 0..5 {
            v[i] = v[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub init: PowerLawParams,
    pub initial_residual_norm: f64,
    pub final_residual_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Group code when fitted from a sweep.
    pub group: Option<u8>,
    pub params: PowerLawParams,
    /// Standard deviations in `(σ, p, τ, q, δ)` order; `None` where the
    /// parameter is not identifiable at the optimum.
    pub stds: [Option<f64>; 5],
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Names of parameters the data cannot pin down.
    pub unidentifiable: Vec<String>,
    /// Some standard deviation exceeds its estimate or is undefined.
    pub unstable: bool,
    pub starts: Vec<StartOutcome>,
}

fn residuals(theta: &[f64; 5], pts: &[PowerLawPoint], out: &mut DVector<f64>) {
    let p = PowerLawParams::from_array(*theta);
    for (i, pt) in pts.iter().enumerate() {
        out[i] = p.eval(pt.n_group, pt.n_total) - pt.loss;
    }
}

fn jacobian(theta: &[f64; 5], pts: &[PowerLawPoint]) -> DMatrix<f64> {
    let [s, p, t, q, _] = *theta;
    let mut j = DMatrix::zeros(pts.len(), 5);
    for (i, pt) in pts.iter().enumerate() {
        let g = pt.n_group.powf(-p);
        let h = pt.n_total.powf(-q);
        j[(i, 0)] = 2.0 * s * g;
        j[(i, 1)] = -s * s * g * pt.n_group.ln();
        j[(i, 2)] = 2.0 * t * h;
        j[(i, 3)] = -t * t * h * pt.n_total.ln();
        j[(i, 4)] = 1.0;
    }
    j
}

struct LmOutcome {
    theta: [f64; 5],
    cost: f64,
    iterations: usize,
    converged: bool,
}

/// Projected Levenberg–Marquardt with Marquardt diagonal scaling.
fn levenberg_marquardt(init: [f64; 5], pts: &[PowerLawPoint], bounds: &PowerLawBounds, max_iter: usize) -> LmOutcome {
    let m = pts.len();
    let mut theta = init;
    bounds.project(&mut theta);
    let mut r = DVector::zeros(m);
    residuals(&theta, pts, &mut r);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut trial_r = DVector::zeros(m);
    let mut converged = false;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let j = jacobian(&theta, pts);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        if g.amax() < 1e-15 || cost < 1e-30 {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..5 {
                a[(d, d)] += mu * (jtj[(d, d)] + 1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                mu *= 10.0;
                continue;
            };
            let mut cand = theta;
            for d in 0..5 {
                cand[d] += step[d];
            }
            bounds.project(&mut cand);
            residuals(&cand, pts, &mut trial_r);
            let c = trial_r.norm_squared();
            if c.is_finite() && c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                let moved = (0..5).map(|d| (cand[d] - theta[d]).abs()).fold(0.0, f64::max);
                theta = cand;
                cost = c;
                std::mem::swap(&mut r, &mut trial_r);
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                if rel < 1e-14 || moved < 1e-14 {
                    converged = true;
                }
                break;
            }
            mu *= 2.0;
            if mu > 1e16 {
                break;
            }
        }
        if !improved {
            // no descent direction left inside the box
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LmOutcome {
        theta,
        cost,
        iterations: it,
        converged,
    }
}

/// Eight deterministic starting points scaled to the data.
fn starts(pts: &[PowerLawPoint]) -> Vec<[f64; 5]> {
    let lo = pts.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.loss).fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo).max(1e-3 * hi.abs().max(1e-3));
    let mut out = Vec::with_capacity(8);
    for &exp_g in &[0.25, 1.0] {
        for &exp_n in &[0.25, 1.0] {
            for &scale in &[1.0, 10.0] {
                let ng_min = pts.iter().map(|p| p.n_group).fold(f64::INFINITY, f64::min);
                let n_min = pts.iter().map(|p| p.n_total).fold(f64::INFINITY, f64::min);
                let sigma = (scale * spread * ng_min.powf(exp_g)).sqrt();
                let tau = (scale * spread * n_min.powf(exp_n)).sqrt() * 0.5;
                out.push([sigma, exp_g, tau, exp_n, 0.5 * lo.max(0.0)]);
            }
        }
    }
    out
}

/// Standard deviations from `s² (JᵀJ)⁻¹` restricted to identifiable
/// columns.
fn parameter_stds(theta: &[f64; 5], pts: &[PowerLawPoint], cost: f64) -> ([Option<f64>; 5], Vec<usize>) {
    let j = jacobian(theta, pts);
    let col_scale: Vec<f64> = (0..5).map(|c| j.column(c).norm()).collect();
    let max_scale = col_scale.iter().copied().fold(0.0, f64::max);
    let mut keep: Vec<usize> = (0..5).filter(|&c| col_scale[c] > 1e-10 * max_scale.max(1e-300)).collect();
    let dead: Vec<usize> = (0..5).filter(|c| !keep.contains(c)).collect();
    let mut stds = [None; 5];
    let dof = pts.len().saturating_sub(keep.len()).max(1) as f64;
    let s2 = cost / dof;
    // drop columns until the normalized normal matrix is well conditioned
    let mut unident = dead.clone();
    while !keep.is_empty() {
        let sub = DMatrix::from_fn(pts.len(), keep.len(), |r, c| j[(r, keep[c])] / col_scale[keep[c]]);
        let ntn = sub.transpose() * &sub;
        let eig = nalgebra::SymmetricEigen::new(ntn.clone());
        let (min_e, min_i) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |acc, (i, &v)| if v < acc.0 { (v, i) } else { acc });
        let max_e = eig.eigenvalues.amax();
        if min_e > 1e-12 * max_e {
            if let Some(inv) = ntn.try_inverse() {
                for (ci, &c) in keep.iter().enumerate() {
                    let v = s2 * inv[(ci, ci)];
                    stds[c] = Some(v.max(0.0).sqrt() / col_scale[c]);
                }
            }
            break;
        }
        // the column carrying most of the null direction is not identifiable
        let v = eig.eigenvectors.column(min_i);
        let worst = (0..keep.len()).fold(0, |b, i| if v[i].abs() > v[b].abs() { i } else { b });
        unident.push(keep.remove(worst));
    }
    unident.sort_unstable();
    (stds, unident)
}

/// Fits the scaling law by multi-start projected Levenberg–Marquardt; the
/// start with the smallest residual wins. Non-convergence is reported in the
/// result rather than raised.
pub fn fit_powerlaw(points: &[PowerLawPoint], bounds: &PowerLawBounds) -> Result<PowerLawFit> {
    if points.len() < 5 {
        return Err(Error::InsufficientPoints {
            needed: 5,
            got: points.len(),
        });
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.n_group >= 1.0 && p.n_total >= p.n_group && p.n_total.is_finite()) {
            return Err(Error::Range(format!(
                "point {i}: need 1 ≤ n_g ≤ n (n_g = {}, n = {})",
                p.n_group, p.n_total
            )));
        }
        if !(p.loss > 0.0 && p.loss.is_finite()) {
            return Err(Error::Range(format!("point {i}: loss {} must be > 0", p.loss)));
        }
    }

    let lo = points.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.loss).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi {
        // flat losses: the offset explains everything, exponents are free
        let mut theta = [0.0, 1.0, 0.0, 1.0, lo];
        bounds.project(&mut theta);
        return Ok(PowerLawFit {
            group: None,
            params: PowerLawParams::from_array(theta),
            stds: [Some(0.0), None, Some(0.0), None, Some(0.0)],
            residual_norm: 0.0,
            converged: true,
            iterations: 0,
            unidentifiable: vec!["p".into(), "q".into()],
            unstable: true,
            starts: Vec::new(),
        });
    }

    let mut outcomes = Vec::new();
    let mut best: Option<LmOutcome> = None;
    let mut r0 = DVector::zeros(points.len());
    for init in starts(points) {
        let mut projected = init;
        bounds.project(&mut projected);
        residuals(&projected, points, &mut r0);
        let initial = r0.norm();
        let lm = levenberg_marquardt(projected, points, bounds, 2000);
        outcomes.push(StartOutcome {
            init: PowerLawParams::from_array(projected),
            initial_residual_norm: initial,
            final_residual_norm: lm.cost.sqrt(),
            converged: lm.converged,
        });
        if best.as_ref().is_none_or(|b| lm.cost < b.cost) {
            best = Some(lm);
        }
    }
    let best = best.expect("eight starts");
    let (stds, unident) = parameter_stds(&best.theta, points, best.cost);
    let unstable = (0..5).any(|i| match stds[i] {
        Some(s) => s > best.theta[i].abs(),
        None => true,
    });
    Ok(PowerLawFit {
        group: None,
        params: PowerLawParams::from_array(best.theta),
        stds,
        residual_norm: best.cost.sqrt(),
        converged: best.converged,
        iterations: best.iterations,
        unidentifiable: unident.iter().map(|&i| PARAM_NAMES[i].to_string()).collect(),
        unstable,
        starts: outcomes,
    })
}

/// Subgroup sizes `round(α_k K)` against loss, one fit per group; points
/// with an empty group are skipped.
pub fn fit_powerlaw_sweep(sweep: &SweepResult, bounds: &PowerLawBounds) -> Result<Vec<PowerLawFit>> {
    let k = sweep.budget as f64;
    let mut out = Vec::new();
    for g in 0..2u8 {
        let pts: Vec<PowerLawPoint> = sweep
            .group_series(MetricKind::Loss, g)
            .into_iter()
            .filter_map(|s| {
                let n1 = group_one_count(if g == 1 { s.allocation } else { 1.0 - s.allocation }, sweep.budget);
                let ng = if g == 1 { n1 } else { sweep.budget - n1 };
                (ng > 0).then_some(PowerLawPoint {
                    n_group: ng as f64,
                    n_total: k,
                    loss: s.value,
                })
            })
            .collect();
        let mut fit = fit_powerlaw(&pts, bounds)?;
        fit.group = Some(g);
        out.push(fit);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(p: PowerLawParams, sizes: &[(f64, f64)]) -> Vec<PowerLawPoint> {
        sizes
            .iter()
            .map(|&(ng, n)| PowerLawPoint {
                n_group: ng,
                n_total: n,
                loss: p.eval(ng, n),
            })
            .collect()
    }

    #[test]
    fn noiseless_recovery() {
        let truth = PowerLawParams {
            sigma: 1.0,
            p: 0.5,
            tau: 0.0,
            q: 1.0,
            delta: 0.1,
        };
        let sizes: Vec<(f64, f64)> = [10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0]
            .iter()
            .enumerate()
            .map(|(i, &ng)| (ng, ng * (2 + i % 3) as f64 + 100.0))
            .collect();
        let fit = fit_powerlaw(&planted(truth, &sizes), &PowerLawBounds::default()).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(fit.params.sigma, 1.0) < 1e-3, "{:?}", fit.params);
        assert!(rel(fit.params.p, 0.5) < 1e-3);
        assert!(rel(fit.params.delta, 0.1) < 1e-3);
        assert!(fit.params.tau.abs() < 1e-3);
        assert!(fit.residual_norm < 1e-8);
    }

    #[test]
    fn constant_loss_flags_exponents() {
        let pts: Vec<PowerLawPoint> = (1..=8)
            .map(|i| PowerLawPoint {
                n_group: (i * 10) as f64,
                n_total: 1000.0,
                loss: 0.3,
            })
            .collect();
        let fit = fit_powerlaw(&pts, &PowerLawBounds::default()).unwrap();
        assert!(fit.residual_norm < 1e-6);
        assert!(fit.params.sigma.powi(2) < 0.01 && fit.params.tau.powi(2) < 0.01, "{:?}", fit.params);
        assert!(fit.unstable);
        assert!(fit.unidentifiable.iter().any(|n| n == "p" || n == "q"), "{:?}", fit.unidentifiable);
    }

    #[test]
    fn optimum_beats_every_start() {
        let truth = PowerLawParams {
            sigma: 2.0,
            p: 0.7,
            tau: 1.0,
            q: 0.3,
            delta: 0.05,
        };
        let sizes: Vec<(f64, f64)> = (1..=9).map(|i| ((i * 30) as f64, (i * 100) as f64)).collect();
        let fit = fit_powerlaw(&planted(truth, &sizes), &PowerLawBounds::default()).unwrap();
        for s in &fit.starts {
            assert!(fit.residual_norm <= s.initial_residual_norm);
        }
        assert_eq!(fit.starts.len(), 8);
    }

    #[test]
    fn input_checks() {
        let ok = PowerLawPoint {
            n_group: 5.0,
            n_total: 10.0,
            loss: 0.5,
        };
        assert!(matches!(
            fit_powerlaw(&[ok; 4], &PowerLawBounds::default()),
            Err(Error::InsufficientPoints { needed: 5, got: 4 })
        ));
        let mut bad = [ok; 5];
        bad[2].n_group = 20.0;
        assert!(matches!(fit_powerlaw(&bad, &PowerLawBounds::default()), Err(Error::Range(_))));
        let mut neg = [ok; 5];
        neg[0].loss = 0.0;
        assert!(matches!(fit_powerlaw(&neg, &PowerLawBounds::default()), Err(Error::Range(_))));
    }
}
