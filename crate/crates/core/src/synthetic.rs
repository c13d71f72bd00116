//! Synthetic embedding generators with controllable subgroup separation.
//!
//! Each sample draws a label `y` and one group code per attribute, then
//!
//! ```text
//! z = (2y − 1) · c_a  +  Σ_j s_j (2a_j − 1) · v_j  +  noise
//! c_a = κ u + Σ_j (2a_j − 1) sin(φ_j / 2) · v'_j,   κ = sqrt(1 − Σ_j sin²(φ_j / 2))
//! ```
//!
//! `u = e₀` is the shared class direction, `v_j = e_{1+2j}` carries the
//! label-independent group offset `s_j`, and `v'_j = e_{2+2j}` tilts the
//! class direction by `±φ_j / 2` per group. With a single attribute the class
//! direction of group `a` is `u` rotated by `φ(2a − 1)/2` toward `v'`. An
//! offset moves the groups apart without changing which linear readout is
//! optimal; an angle makes the optimal readout group-specific, which is what
//! makes a probe's subgroup accuracy depend on allocation.
//!
//! A `random` attribute of independent fair coin flips is always appended.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Attribute, EmbeddingSet};
use crate::error::{Error, Result};
use crate::rng;

pub const RANDOM_ATTRIBUTE: &str = "random";

/// One attribute column of a generated set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    /// Label-independent group offset `s ≥ 0`.
    pub offset: f64,
    /// Class-direction rotation `φ ∈ [0, π/2]` between the two groups.
    pub angle: f64,
    /// `P(A = 1)`.
    pub prevalence: f64,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, offset: f64, angle: f64) -> Self {
        AttributeSpec {
            name: name.into(),
            offset,
            angle,
            prevalence: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    /// `P(Y = 1)`.
    pub class_balance: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub attribute: AttributeSpec,
}

impl SynthConfig {
    /// Base configuration with a single attribute named `attribute`.
    pub fn new(n: usize, d: usize, offset: f64, angle: f64, noise_std: f64, seed: u64) -> Self {
        SynthConfig {
            n,
            d,
            class_balance: 0.5,
            noise_std,
            seed,
            attribute: AttributeSpec::new("attribute", offset, angle),
        }
    }
}

fn check(base: &SynthConfig, specs: &[AttributeSpec]) -> Result<()> {
    if base.n < 4 {
        return Err(Error::Config(format!("n = {} (need ≥ 4)", base.n)));
    }
    if !(0.0..=1.0).contains(&base.class_balance) {
        return Err(Error::Config(format!("class balance {} outside [0, 1]", base.class_balance)));
    }
    if !(base.noise_std >= 0.0 && base.noise_std.is_finite()) {
        return Err(Error::Config(format!("noise std {}", base.noise_std)));
    }
    if base.d == 0 {
        return Err(Error::Config("d must be at least 1".into()));
    }
    let mut names = BTreeSet::new();
    names.insert(RANDOM_ATTRIBUTE);
    let mut tilt = 0.0;
    for (j, s) in specs.iter().enumerate() {
        if !names.insert(s.name.as_str()) {
            return Err(Error::Config(format!("duplicate attribute name `{}`", s.name)));
        }
        if !(s.offset >= 0.0 && s.offset.is_finite()) {
            return Err(Error::Config(format!("`{}`: offset {} must be ≥ 0", s.name, s.offset)));
        }
        if !(0.0..=PI / 2.0 + 1e-12).contains(&s.angle) {
            return Err(Error::Config(format!("`{}`: angle {} outside [0, π/2]", s.name, s.angle)));
        }
        if !(0.0..=1.0).contains(&s.prevalence) {
            return Err(Error::Config(format!("`{}`: prevalence {}", s.name, s.prevalence)));
        }
        if s.offset > 0.0 && 1 + 2 * j >= base.d {
            return Err(Error::Config(format!(
                "`{}`: offset needs dimension {} but d = {}",
                s.name,
                2 + 2 * j,
                base.d
            )));
        }
        if s.angle > 0.0 && 2 + 2 * j >= base.d {
            return Err(Error::Config(format!(
                "`{}`: rotation needs d ≥ {} (d = {})",
                s.name,
                3 + 2 * j,
                base.d
            )));
        }
        tilt += (s.angle / 2.0).sin().powi(2);
    }
    if tilt > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "combined class-direction tilt Σ sin²(φ/2) = {tilt:.3} exceeds 1"
        )));
    }
    Ok(())
}

fn bernoulli_codes(n: usize, p: f64, seed: u64, stream: &[u64]) -> Vec<u8> {
    let mut r = rng::rng(seed, stream);
    (0..n).map(|_| u8::from(r.random::<f64>() < p)).collect()
}

fn build(base: &SynthConfig, specs: &[AttributeSpec]) -> Result<EmbeddingSet> {
    check(base, specs)?;
    let (n, d) = (base.n, base.d);
    let y = bernoulli_codes(n, base.class_balance, base.seed, &[0]);
    let codes: Vec<Vec<u8>> = specs
        .iter()
        .enumerate()
        .map(|(j, s)| bernoulli_codes(n, s.prevalence, base.seed, &[1, j as u64]))
        .collect();
    let random = bernoulli_codes(n, 0.5, base.seed, &[3]);
    let tilt: f64 = specs.iter().map(|s| (s.angle / 2.0).sin().powi(2)).sum();
    let kappa = (1.0 - tilt).max(0.0).sqrt();

    let mut noise = rng::rng(base.seed, &[2]);
    let mut z = Vec::with_capacity(n * d);
    for i in 0..n {
        let sign_y = if y[i] == 1 { 1.0 } else { -1.0 };
        let mut row: Vec<f64> = (0..d)
            .map(|_| base.noise_std * noise.sample::<f64, _>(StandardNormal))
            .collect();
        row[0] += sign_y * kappa;
        for (j, s) in specs.iter().enumerate() {
            let sign_a = if codes[j][i] == 1 { 1.0 } else { -1.0 };
            if s.offset > 0.0 {
                row[1 + 2 * j] += s.offset * sign_a;
            }
            if s.angle > 0.0 {
                row[2 + 2 * j] += sign_y * sign_a * (s.angle / 2.0).sin();
            }
        }
        z.extend(row);
    }

    let mut attributes: Vec<Attribute> = specs
        .iter()
        .zip(codes)
        .map(|(s, c)| Attribute::new(s.name.clone(), c))
        .collect();
    attributes.push(Attribute::new(RANDOM_ATTRIBUTE, random));
    let ids = (0..n).map(|i| format!("s{}-{i}", base.seed)).collect();
    let tag = format!("synthetic:seed={}", base.seed);
    EmbeddingSet::new(ids, z, d, y, attributes, tag)
}

/// Generates one attribute (named by the config) plus the random column.
pub fn generate(config: &SynthConfig) -> Result<EmbeddingSet> {
    build(config, std::slice::from_ref(&config.attribute))
}

/// One shared matrix carrying an attribute column per entry, each drawn
/// from its own seeded stream, plus the random column. `base.attribute` is
/// ignored.
pub fn battery(base: &SynthConfig, entries: &[AttributeSpec]) -> Result<EmbeddingSet> {
    if entries.is_empty() {
        return Err(Error::Config("battery needs at least one entry".into()));
    }
    build(base, entries)
}

/// Named configurations reachable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `colour` with identical class-conditionals across groups.
    Invariant,
    /// `digit` whose class direction differs between groups.
    Entangled,
    /// Graded battery `level_0 … level_{L−1}`.
    GradedBattery,
    /// `colour` (invariant) and `digit` (entangled) on one matrix.
    MnistLike,
}

pub const ENTANGLED_ANGLE: f64 = PI / 3.0;
pub const PRESET_NOISE: f64 = 0.5;
pub const PRESET_DIM: usize = 8;
pub const BATTERY_MAX_ANGLE: f64 = PI / 3.0;
pub const BATTERY_MAX_OFFSET: f64 = 0.5;

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Invariant,
        Preset::Entangled,
        Preset::GradedBattery,
        Preset::MnistLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Invariant => "invariant",
            Preset::Entangled => "entangled",
            Preset::GradedBattery => "graded-battery",
            Preset::MnistLike => "mnist-like",
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            Preset::MnistLike => 24_000,
            _ => 12_000,
        }
    }

    /// Attribute specs of the preset; `levels` only affects the battery.
    pub fn attributes(self, levels: usize) -> Vec<AttributeSpec> {
        match self {
            Preset::Invariant => vec![AttributeSpec::new("colour", 0.0, 0.0)],
            Preset::Entangled => vec![AttributeSpec::new("digit", 0.0, ENTANGLED_ANGLE)],
            Preset::MnistLike => vec![
                AttributeSpec::new("colour", 0.0, 0.0),
                AttributeSpec::new("digit", 0.0, ENTANGLED_ANGLE),
            ],
            Preset::GradedBattery => graded_levels(levels, BATTERY_MAX_OFFSET, BATTERY_MAX_ANGLE),
        }
    }

    pub fn base(self, n: usize, levels: usize, seed: u64) -> SynthConfig {
        let attrs = self.attributes(levels);
        let d = PRESET_DIM.max(1 + 2 * attrs.len());
        let mut c = SynthConfig::new(n, d, 0.0, 0.0, PRESET_NOISE, seed);
        c.attribute = attrs[0].clone();
        c
    }

    pub fn build(self, n: usize, levels: usize, seed: u64) -> Result<EmbeddingSet> {
        let attrs = self.attributes(levels);
        battery(&self.base(n, levels, seed), &attrs)
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// `levels` attributes whose offset and angle grow linearly from zero, with
/// the tilt budget `Σ sin²(φ/2) ≤ 1` respected by construction for
/// `max_angle ≤ π/3` and up to 10 levels.
pub fn graded_levels(levels: usize, max_offset: f64, max_angle: f64) -> Vec<AttributeSpec> {
    let denom = levels.saturating_sub(1).max(1) as f64;
    (0..levels)
        .map(|j| {
            let t = j as f64 / denom;
            AttributeSpec::new(format!("level_{j}"), t * max_offset, t * max_angle)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::summarize;

    #[test]
    fn deterministic_given_seed() {
        let c = SynthConfig::new(200, 4, 0.5, 0.3, 0.2, 9);
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        let mut other = c.clone();
        other.seed = 10;
        assert_ne!(generate(&c).unwrap().matrix(), generate(&other).unwrap().matrix());
    }

    #[test]
    fn random_column_appended() {
        let c = SynthConfig::new(100, 3, 0.0, 0.0, 0.1, 1);
        let ds = generate(&c).unwrap();
        assert_eq!(ds.attribute_names(), vec!["attribute", RANDOM_ATTRIBUTE]);
    }

    #[test]
    fn rotation_needs_three_dims() {
        let c = SynthConfig::new(100, 2, 0.0, 0.5, 0.1, 1);
        assert!(matches!(generate(&c), Err(Error::Config(_))));
        let c = SynthConfig::new(100, 2, 0.5, 0.0, 0.1, 1);
        assert!(generate(&c).is_ok());
    }

    #[test]
    fn noiseless_geometry() {
        let c = SynthConfig::new(50, 3, 2.0, PI / 2.0, 0.0, 4);
        let ds = generate(&c).unwrap();
        let a = ds.attribute("attribute").unwrap();
        let h = (PI / 4.0).sin();
        for i in 0..ds.n() {
            let sy = if ds.labels()[i] == 1 { 1.0 } else { -1.0 };
            let sa = if a.codes[i] == 1 { 1.0 } else { -1.0 };
            let want = [sy * (PI / 4.0).cos(), 2.0 * sa, sy * sa * h];
            for (x, w) in ds.row(i).iter().zip(want) {
                assert!((x - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn battery_of_one_equals_generate() {
        let c = SynthConfig::new(300, 5, 0.4, 0.2, 0.3, 2);
        let g = generate(&c).unwrap();
        let b = battery(&c, std::slice::from_ref(&c.attribute)).unwrap();
        assert_eq!(g, b);
    }

    #[test]
    fn battery_rejects_duplicates() {
        let c = SynthConfig::new(300, 9, 0.0, 0.0, 0.3, 2);
        let e = vec![AttributeSpec::new("x", 0.1, 0.0), AttributeSpec::new("x", 0.2, 0.0)];
        assert!(matches!(battery(&c, &e), Err(Error::Config(_))));
        let e = vec![AttributeSpec::new(RANDOM_ATTRIBUTE, 0.1, 0.0)];
        assert!(matches!(battery(&c, &e), Err(Error::Config(_))));
    }

    #[test]
    fn balanced_preset_summary() {
        let ds = Preset::MnistLike.build(24_000, 0, 1).unwrap();
        assert_eq!(ds.attribute_names(), vec!["colour", "digit", RANDOM_ATTRIBUTE]);
        for name in ["colour", "digit"] {
            let s = summarize(&ds, name).unwrap();
            for k in 0..2 {
                assert!((s.gamma[k] - 0.5).abs() < 0.02);
                assert!((s.class_given_group[k] - 0.5).abs() < 0.02);
            }
        }
    }

    #[test]
    fn planted_prevalence_within_three_sigma() {
        let q = 0.3;
        let n = 2000;
        let mut hits = 0;
        for seed in 0..200 {
            let mut c = SynthConfig::new(n, 3, 0.0, 0.0, 0.1, seed);
            c.attribute.prevalence = q;
            let ds = generate(&c).unwrap();
            let s = summarize(&ds, "attribute").unwrap();
            if (s.gamma[1] - q).abs() <= 3.0 * (q * (1.0 - q) / n as f64).sqrt() {
                hits += 1;
            }
        }
        assert!(hits >= 198, "{hits}/200");
    }

    #[test]
    fn graded_levels_respect_tilt_budget() {
        let levels = graded_levels(10, 1.0, BATTERY_MAX_ANGLE);
        let tilt: f64 = levels.iter().map(|s| (s.angle / 2.0).sin().powi(2)).sum();
        assert!(tilt <= 1.0);
        assert_eq!(Preset::GradedBattery.build(500, 8, 0).unwrap().attributes().len(), 9);
    }
}
