//! Seeded statistical behaviour of the separation metrics, the synthetic
//! generator and the sweep harness.

use latsep::dataset::{EmbeddingSet, MetricKind};
use latsep::harness::{holdout, run_sweep, AllocationSpec};
use latsep::separation::{separation_report, SeparationOptions};
use latsep::synthetic::{generate, Preset, SynthConfig};

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    latsep::fits::correlate::pearson(&ranks(a), &ranks(b)).unwrap()
}

fn tv(ds: &EmbeddingSet, attribute: &str, opts: &SeparationOptions) -> f64 {
    separation_report(ds, attribute, opts, 0).unwrap().epsilon_tv
}

#[test]
fn random_attribute_sits_below_planted_offset() {
    let opts = SeparationOptions::default();
    let (mut random, mut planted) = (0.0, 0.0);
    for seed in 0..20 {
        // noise std 0.5, offset 1.0: two pooled standard deviations
        let ds = generate(&SynthConfig::new(2000, 8, 1.0, 0.0, 0.5, seed)).unwrap();
        random += tv(&ds, "random", &opts);
        planted += tv(&ds, "attribute", &opts);
    }
    assert!(random < planted, "random {random} vs planted {planted}");
}

#[test]
fn random_attribute_tv_shrinks_with_n() {
    let opts = SeparationOptions::default();
    let mean = |n: usize| -> f64 {
        (0..5)
            .map(|seed| tv(&generate(&SynthConfig::new(n, 8, 0.0, 0.0, 0.5, seed)).unwrap(), "random", &opts))
            .sum::<f64>()
            / 5.0
    };
    let (small, large) = (mean(1000), mean(16_000));
    assert!(large < small, "n=16000 {large} vs n=1000 {small}");
}

#[test]
fn tv_grows_with_offset() {
    let opts = SeparationOptions {
        variance_fraction: None,
        ..Default::default()
    };
    let values: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&s| tv(&generate(&SynthConfig::new(4000, 4, s, 0.0, 0.5, 3)).unwrap(), "attribute", &opts))
        .collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
}

#[test]
fn metrics_agree_across_battery_and_spaces() {
    let ds = Preset::GradedBattery.build(6000, 8, 1).unwrap();
    let pca = SeparationOptions::default();
    let full = SeparationOptions {
        variance_fraction: None,
        ..Default::default()
    };
    let (mut t, mut w, mut f, mut t_full) = (vec![], vec![], vec![], vec![]);
    for j in 0..8 {
        let attr = format!("level_{j}");
        let r = separation_report(&ds, &attr, &pca, 0).unwrap();
        t.push(r.epsilon_tv);
        w.push(r.wd.unwrap());
        f.push(r.fd.unwrap());
        t_full.push(tv(&ds, &attr, &full));
    }
    for (name, x, y) in [("tv/wd", &t, &w), ("tv/fd", &t, &f), ("wd/fd", &w, &f), ("pca/full", &t, &t_full)] {
        let rho = spearman(x, y);
        assert!(rho >= 0.7, "{name}: {rho}");
    }
}

#[test]
fn offset_alone_keeps_classes_separable() {
    let acc = |offset: f64| {
        let ds = generate(&SynthConfig::new(6000, 8, offset, 0.0, 0.5, 4)).unwrap();
        let (pool, eval) = holdout(&ds, 0.3, 4).unwrap();
        let mut spec = AllocationSpec::new("attribute", 1000);
        spec.grid = vec![0.5];
        spec.seeds = vec![0];
        run_sweep(&pool, &spec, &eval).unwrap().runs[0]
            .overall(MetricKind::Accuracy)
            .unwrap()
    };
    let (a, b) = (acc(0.0), acc(2.0));
    assert!((a - b).abs() < 0.02, "offset 0: {a}, offset 2: {b}");
}

#[test]
fn hold_py_keeps_label_rate_fixed() {
    let (pool, eval) = holdout(&Preset::Entangled.build(6000, 0, 2).unwrap(), 0.3, 2).unwrap();
    let mut spec = AllocationSpec::new("digit", 1000);
    spec.hold_py = true;
    spec.seeds = vec![0, 1];
    let sweep = run_sweep(&pool, &spec, &eval).unwrap();
    let rates: Vec<f64> = sweep
        .runs
        .iter()
        .map(|r| (r.realized[1][0] + r.realized[1][1]) as f64 / 1000.0)
        .collect();
    let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo <= 1.0 / 1000.0 + 1e-12, "{rates:?}");
}

#[test]
fn sweep_is_reproducible() {
    let (pool, eval) = holdout(&Preset::Invariant.build(3000, 0, 6).unwrap(), 0.3, 6).unwrap();
    let mut spec = AllocationSpec::new("colour", 500);
    spec.seeds = vec![0, 1];
    let a = run_sweep(&pool, &spec, &eval).unwrap();
    let b = run_sweep(&pool, &spec, &eval).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}
