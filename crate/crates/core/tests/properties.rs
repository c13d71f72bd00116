use std::collections::BTreeMap;

use proptest::prelude::*;

use latsep::bound::{mixture_check, parity_bound, DiscreteJoint};
use latsep::dataset::{summarize, Attribute, EmbeddingSet, MetricKind};
use latsep::fits::linear::fit_series;
use latsep::fits::{correlate, SensitivityFit, SeparationAxis};
use latsep::harness::sweep::SeriesPoint;
use latsep::io;
use latsep::pca::{fit_pca, project};
use latsep::separation::{tv_1d, tv_distance, ClassWeighting, DimensionWeighting, SeparationOptions, SeparationReport};

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..40)
}

/// Rows with both labels and both groups present in every label.
fn dataset(max_rows: usize, d: usize) -> impl Strategy<Value = EmbeddingSet> {
    (8..max_rows).prop_flat_map(move |n| {
        (
            prop::collection::vec(-100.0f64..100.0, n * d),
            prop::collection::vec(0u8..2, n),
            prop::collection::vec(0u8..2, n),
        )
            .prop_map(move |(z, mut y, mut a)| {
                // pin one row in each (y, a) cell
                for (i, (yy, aa)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    y[i] = yy;
                    a[i] = aa;
                }
                let ids = (0..n).map(|i| format!("r{i}")).collect();
                EmbeddingSet::new(ids, z, d, y, vec![Attribute::new("sex", a)], "prop").unwrap()
            })
    })
}

fn permuted(ds: &EmbeddingSet, seed: u64) -> EmbeddingSet {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..ds.n()).collect();
    idx.shuffle(&mut latsep::rng::rng(seed, &[]));
    ds.subset(&idx)
}

fn report(attribute: &str, tv: f64) -> SeparationReport {
    SeparationReport {
        attribute: attribute.into(),
        epsilon_tv: tv,
        per_class_tv: BTreeMap::new(),
        class_weights: BTreeMap::new(),
        tv_uniform_classes: tv,
        wd: None,
        fd: None,
        k: 1,
        variance_fraction: None,
        bins: 50,
        groups: 2,
        n_per_cell: BTreeMap::new(),
        condition_on_y: true,
        class_weighting: ClassWeighting::Empirical,
        dimension_weighting: DimensionWeighting::Unweighted,
        seed: 0,
        dataset_hash: None,
        warnings: Vec::new(),
    }
}

fn fit(attribute: &str, slope: f64) -> SensitivityFit {
    SensitivityFit {
        attribute: attribute.into(),
        metric: MetricKind::Loss,
        slope,
        slope_std: 0.0,
        slope_se: 0.0,
        intercept: 0.0,
        r_squared: 0.0,
        groups: Vec::new(),
        delta_endpoint: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn tv_in_unit_interval_and_symmetric(a in sample(), b in sample(), bins in 2usize..80) {
        let t = tv_1d(&a, &b, bins);
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert_eq!(t, tv_1d(&b, &a, bins));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tv_ignores_row_order(ds in dataset(60, 2), seed in any::<u64>()) {
        let opts = SeparationOptions { bins: 5, variance_fraction: None, ..Default::default() };
        let a = tv_distance(&ds, "sex", &opts).unwrap().epsilon;
        let b = tv_distance(&permuted(&ds, seed), "sex", &opts).unwrap().epsilon;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn summarize_ignores_row_order(ds in dataset(60, 1), seed in any::<u64>()) {
        prop_assert_eq!(summarize(&ds, "sex").unwrap(), summarize(&permuted(&ds, seed), "sex").unwrap());
    }

    #[test]
    fn full_rank_projection_is_isometric(ds in dataset(30, 3)) {
        let Ok(model) = fit_pca(&ds, 1.0) else { return Ok(()) };
        prop_assume!(model.d() == 3);
        let p = project(&model, &ds).unwrap();
        let dist = |s: &EmbeddingSet, i: usize, j: usize| {
            s.row(i).iter().zip(s.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        for i in 0..ds.n() {
            for j in i + 1..ds.n() {
                let (x, y) = (dist(&ds, i, j), dist(&p, i, j));
                prop_assert!((x - y).abs() <= 1e-6 * x.max(1.0));
            }
        }
    }

    #[test]
    fn binary_round_trip_is_exact(ds in dataset(40, 3)) {
        let ds = ds.with_matrix(ds.matrix().iter().map(|&v| v as f32 as f64).collect(), 3, "f32").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        io::save_binary(&ds, &path).unwrap();
        let before = std::fs::read(&path).unwrap();
        let back = io::load_binary(&path).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), before);
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn csv_round_trip_within_tolerance(ds in dataset(40, 3)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        io::save_csv(&ds, &path).unwrap();
        let back = io::load_csv(&path).unwrap();
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(back.ids(), ds.ids());
        prop_assert_eq!(back.attributes(), ds.attributes());
        for (a, b) in ds.matrix().iter().zip(back.matrix()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn slope_scales_and_ignores_shift(
        values in prop::collection::vec(-5.0f64..5.0, 11),
        c in 0.1f64..10.0,
        shift in -10.0f64..10.0,
    ) {
        let points = |f: &dyn Fn(f64) -> f64| -> Vec<SeriesPoint> {
            values.iter().enumerate().map(|(i, &v)| SeriesPoint {
                allocation: i as f64 / 10.0,
                seed: 0,
                value: f(v),
            }).collect()
        };
        let base = fit_series(0, &points(&|v| v)).unwrap().slope;
        let scaled = fit_series(0, &points(&|v| c * v)).unwrap().slope;
        let shifted = fit_series(0, &points(&|v| v + shift)).unwrap().slope;
        prop_assert!((scaled - c * base).abs() <= 1e-9 * (1.0 + (c * base).abs()));
        prop_assert!((shifted - base).abs() <= 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn correlation_ignores_order_and_positive_scale(
        pairs in prop::collection::vec((0.0f64..1.0, -1.0f64..1.0), 3..12),
        scale in 0.01f64..100.0,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let names: Vec<String> = (0..pairs.len()).map(|i| format!("attr_{i:02}")).collect();
        let seps: Vec<SeparationReport> = names.iter().zip(&pairs).map(|(n, p)| report(n, p.0)).collect();
        let fits: Vec<SensitivityFit> = names.iter().zip(&pairs).map(|(n, p)| fit(n, p.1)).collect();
        let Ok(base) = correlate(&seps, &fits, SeparationAxis::Tv) else { return Ok(()) };

        let mut shuffled = seps.clone();
        shuffled.shuffle(&mut latsep::rng::rng(seed, &[]));
        for s in &mut shuffled {
            s.epsilon_tv *= scale;
        }
        let moved = correlate(&shuffled, &fits, SeparationAxis::Tv).unwrap();
        prop_assert!((base.pearson_r - moved.pearson_r).abs() < 1e-9);
    }

    #[test]
    fn bound_is_monotone(e in 0.0f64..1.0, g in 0.0f64..1.0, de in 0.0f64..1.0, dg in 0.0f64..1.0) {
        let e2 = (e + de).min(1.0);
        let g2 = (g + dg).min(1.0);
        let b = parity_bound(e, g).unwrap();
        prop_assert!(parity_bound(e2, g).unwrap() >= b);
        prop_assert!(parity_bound(e, g2).unwrap() >= b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mixture_identity_holds(nz in 1usize..=6, seed in any::<u64>()) {
        let c = mixture_check(&DiscreteJoint::random(nz, seed)).unwrap();
        prop_assert!(c.residual <= 1e-14, "residual {}", c.residual);
        prop_assert!(c.bound_gap <= 0.0, "bound gap {}", c.bound_gap);
    }
}
