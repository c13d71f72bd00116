//! Correlation of separation against sensitivity across attributes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::MetricKind;
use crate::error::{Error, Result};
use crate::fits::linear::SensitivityFit;
use crate::separation::SeparationReport;

/// Which separation value plays the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeparationAxis {
    #[default]
    Tv,
    Wd,
    Fd,
}

impl SeparationAxis {
    pub fn of(self, r: &SeparationReport) -> Option<f64> {
        match self {
            SeparationAxis::Tv => Some(r.epsilon_tv),
            SeparationAxis::Wd => r.wd,
            SeparationAxis::Fd => r.fd,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeparationAxis::Tv => "tv",
            SeparationAxis::Wd => "wd",
            SeparationAxis::Fd => "fd",
        }
    }
}

impl std::str::FromStr for SeparationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" => Ok(SeparationAxis::Tv),
            "wd" => Ok(SeparationAxis::Wd),
            "fd" => Ok(SeparationAxis::Fd),
            other => Err(Error::Config(format!("unknown separation metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub attribute: String,
    pub separation: f64,
    pub slope: f64,
    pub slope_std: f64,
}

/// Loss slopes are negative when more allocation helps; accuracy-type
/// slopes are positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub separation_metric: SeparationAxis,
    pub sensitivity_metric: MetricKind,
    /// Sorted by attribute name.
    pub points: Vec<CorrelationPoint>,
    pub pearson_r: f64,
    /// Two-sided, from the t distribution with `n − 2` degrees of freedom.
    pub p_value: f64,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx <= 0.0 || syy <= 0.0 {
        let which = if sxx <= 0.0 { "separation" } else { "slope" };
        return Err(Error::DegenerateVariance(format!("{which} values are constant")));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Pairs each attribute's separation with its fitted slope and reports the
/// Pearson correlation. Both lists must name the same attributes.
pub fn correlate(
    separations: &[SeparationReport],
    fits: &[SensitivityFit],
    axis: SeparationAxis,
) -> Result<CorrelationReport> {
    let sep: BTreeMap<&str, &SeparationReport> = separations.iter().map(|s| (s.attribute.as_str(), s)).collect();
    let fit: BTreeMap<&str, &SensitivityFit> = fits.iter().map(|f| (f.attribute.as_str(), f)).collect();
    if sep.len() != separations.len() || fit.len() != fits.len() {
        return Err(Error::MismatchedAttributes("an attribute appears more than once".into()));
    }
    if sep.keys().ne(fit.keys()) {
        let only_sep: Vec<&str> = sep.keys().filter(|k| !fit.contains_key(*k)).copied().collect();
        let only_fit: Vec<&str> = fit.keys().filter(|k| !sep.contains_key(*k)).copied().collect();
        return Err(Error::MismatchedAttributes(format!(
            "separation only: {only_sep:?}; fit only: {only_fit:?}"
        )));
    }
    if sep.len() < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: sep.len() });
    }
    let metrics: Vec<MetricKind> = fit.values().map(|f| f.metric).collect();
    if metrics.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::MismatchedAttributes("fits use different metrics".into()));
    }
    let mut points = Vec::new();
    for (name, s) in &sep {
        let x = axis.of(s).ok_or_else(|| {
            Error::MismatchedAttributes(format!("separation report for `{name}` lacks {}", axis.as_str()))
        })?;
        let f = fit[name];
        points.push(CorrelationPoint {
            attribute: name.to_string(),
            separation: x,
            slope: f.slope,
            slope_std: f.slope_std,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.separation).collect();
    let y: Vec<f64> = points.iter().map(|p| p.slope).collect();
    let r = pearson(&x, &y)?;
    Ok(CorrelationReport {
        separation_metric: axis,
        sensitivity_metric: metrics[0],
        pearson_r: r,
        p_value: pearson_p_value(r, points.len()),
        points,
    })
}
