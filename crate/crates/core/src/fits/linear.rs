//! Least-squares sensitivity slopes and endpoint gaps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::MetricKind;
use crate::error::{Error, Result};
use crate::harness::sweep::{SeriesPoint, SweepResult};

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Zero when the response is constant.
    pub r_squared: f64,
    /// Regression standard error of the slope; zero with two points.
    pub slope_se: f64,
    pub n: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    let distinct = {
        let mut xs: Vec<f64> = x.to_vec();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    };
    if distinct < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: distinct });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 0.0 };
    let slope_se = if n > 2 { (ssr / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        slope_se,
        n,
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Slope of one group's metric against its own allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSlope {
    pub group: u8,
    /// Mean of the per-seed slopes.
    pub slope: f64,
    /// Sample standard deviation of the per-seed slopes.
    pub slope_std: f64,
    /// Standard error of the slope from one regression over all seeds.
    pub slope_se: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub per_seed: BTreeMap<u64, f64>,
}

/// Per-seed slopes plus a pooled regression over every point.
pub fn fit_series(group: u8, points: &[SeriesPoint]) -> Result<GroupSlope> {
    let x: Vec<f64> = points.iter().map(|p| p.allocation).collect();
    let y: Vec<f64> = points.iter().map(|p| p.value).collect();
    let pooled = ols(&x, &y)?;
    let mut by_seed: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in points {
        let e = by_seed.entry(p.seed).or_default();
        e.0.push(p.allocation);
        e.1.push(p.value);
    }
    let mut per_seed = BTreeMap::new();
    for (seed, (xs, ys)) in by_seed {
        if let Ok(f) = ols(&xs, &ys) {
            per_seed.insert(seed, f.slope);
        }
    }
    if per_seed.is_empty() {
        return Err(Error::InsufficientPoints { needed: 2, got: 1 });
    }
    let slopes: Vec<f64> = per_seed.values().copied().collect();
    let (slope, slope_std) = mean_std(&slopes);
    Ok(GroupSlope {
        group,
        slope,
        slope_std,
        slope_se: pooled.slope_se,
        intercept: pooled.intercept,
        r_squared: pooled.r_squared,
        per_seed,
    })
}

/// `ℓ(α_k = 1) − ℓ(α_k = 0)` for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointGap {
    pub group: u8,
    pub mean: f64,
    pub std: f64,
    pub per_seed: BTreeMap<u64, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityFit {
    pub attribute: String,
    pub metric: MetricKind,
    /// Mean of the two group slopes.
    pub slope: f64,
    /// Standard deviation across seeds of the per-seed group-averaged slope.
    pub slope_std: f64,
    /// Mean of the groups' pooled regression standard errors.
    pub slope_se: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub groups: Vec<GroupSlope>,
    /// Present when the grid holds both endpoints.
    pub delta_endpoint: Option<Vec<EndpointGap>>,
}

/// Regresses each group's metric on its own allocation (`α₁` for group 1,
/// `1 − α₁` for group 0) and averages the two slopes.
pub fn fit_linear(sweep: &SweepResult, metric: MetricKind) -> Result<SensitivityFit> {
    let mut groups = Vec::new();
    for g in 0..2u8 {
        let series = sweep.group_series(metric, g);
        groups.push(fit_series(g, &series)?);
    }
    // per-seed average of the two group slopes
    let mut seed_avg = Vec::new();
    for seed in &sweep.seeds {
        let s: Vec<f64> = groups.iter().filter_map(|g| g.per_seed.get(seed).copied()).collect();
        if s.len() == groups.len() {
            seed_avg.push(s.iter().sum::<f64>() / s.len() as f64);
        }
    }
    let (_, slope_std) = if seed_avg.is_empty() { (0.0, 0.0) } else { mean_std(&seed_avg) };
    let k = groups.len() as f64;
    let delta_endpoint = match delta_endpoint(sweep, metric) {
        Ok(d) => Some(d),
        Err(Error::MissingEndpoint(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SensitivityFit {
        attribute: sweep.attribute.clone(),
        metric,
        slope: groups.iter().map(|g| g.slope).sum::<f64>() / k,
        slope_std,
        slope_se: groups.iter().map(|g| g.slope_se).sum::<f64>() / k,
        intercept: groups.iter().map(|g| g.intercept).sum::<f64>() / k,
        r_squared: groups.iter().map(|g| g.r_squared).sum::<f64>() / k,
        groups,
        delta_endpoint,
    })
}

/// Seed-averaged metric at full allocation minus at zero allocation, per
/// group of the swept attribute.
pub fn delta_endpoint(sweep: &SweepResult, metric: MetricKind) -> Result<Vec<EndpointGap>> {
    for end in [0.0, 1.0] {
        if !sweep.grid.contains(&end) {
            return Err(Error::MissingEndpoint(end));
        }
    }
    let mut out = Vec::new();
    for g in 0..2u8 {
        let series = sweep.group_series(metric, g);
        let mut per_seed = BTreeMap::new();
        for &seed in &sweep.seeds {
            let at = |alloc: f64| {
                series
                    .iter()
                    .find(|p| p.seed == seed && p.allocation == alloc)
                    .map(|p| p.value)
            };
            if let (Some(hi), Some(lo)) = (at(1.0), at(0.0)) {
                per_seed.insert(seed, hi - lo);
            }
        }
        if per_seed.is_empty() {
            return Err(Error::InsufficientPoints { needed: 2, got: 0 });
        }
        let v: Vec<f64> = per_seed.values().copied().collect();
        let (mean, std) = mean_std(&v);
        out.push(EndpointGap {
            group: g,
            mean,
            std,
            per_seed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn pts(xy: &[(f64, f64)], seed: u64) -> Vec<SeriesPoint> {
        xy.iter()
            .map(|&(allocation, value)| SeriesPoint { allocation, seed, value })
            .collect()
    }

    #[test]
    fn constant_metric() {
        let f = ols(&[0.0, 0.5, 1.0], &[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r_squared, 0.0);
    }

    #[test]
    fn two_point_line() {
        let f = ols(&[0.0, 1.0], &[0.30, 0.40]).unwrap();
        assert!((f.slope - 0.10).abs() < 1e-12);
        assert!((f.intercept - 0.30).abs() < 1e-12);
    }

    #[test]
    fn single_allocation_is_insufficient() {
        assert!(matches!(
            ols(&[0.5, 0.5], &[1.0, 2.0]),
            Err(Error::InsufficientPoints { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn planted_trend_recovered() {
        let mut r = crate::rng::rng(17, &[]);
        let mut points = Vec::new();
        for seed in 0..9 {
            for i in 0..=10 {
                let a = i as f64 / 10.0;
                let noise: f64 = r.sample(StandardNormal);
                points.push(SeriesPoint {
                    allocation: a,
                    seed,
                    value: 0.5 + 0.02 * a + 0.002 * noise,
                });
            }
        }
        let g = fit_series(0, &points).unwrap();
        assert!((g.slope - 0.02).abs() < 0.005);
        assert!(g.slope_std > 0.0);
        assert_eq!(g.per_seed.len(), 9);
    }

    #[test]
    fn per_seed_std_reflects_disagreement() {
        let mut p = pts(&[(0.0, 0.0), (1.0, 1.0)], 0);
        p.extend(pts(&[(0.0, 0.0), (1.0, 3.0)], 1));
        let g = fit_series(1, &p).unwrap();
        assert!((g.slope - 2.0).abs() < 1e-12);
        assert!((g.slope_std - 2f64.sqrt()).abs() < 1e-12);
    }
}
