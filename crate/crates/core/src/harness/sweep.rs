//! Allocation sweeps: resample, retrain the probe, evaluate per subgroup.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingSet, MetricKind, MetricValue};
use crate::error::{Error, Result};
use crate::harness::allocation::{group_one_count, required_cell_counts, resample, AllocationSpec};
use crate::harness::metrics::evaluate;
use crate::harness::probe::{train_probe, ProbeConfig, ProbeTrace};
use crate::manifest::dataset_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub attribute: String,
    pub group: u8,
    /// Fraction of the fine-tuning set drawn from this group; set only for
    /// the swept attribute.
    pub allocation: Option<f64>,
    pub n: usize,
    pub metrics: Vec<MetricValue>,
}

impl GroupMetrics {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        self.metrics.iter().find(|m| m.kind == kind).map(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub alpha: f64,
    pub seed: u64,
    /// Fine-tuning rows per cell, indexed `[y][a]`.
    pub realized: [[usize; 2]; 2],
    pub overall: Vec<MetricValue>,
    /// Every group of every attribute declared on the evaluation set.
    pub groups: Vec<GroupMetrics>,
    pub probe: ProbeTrace,
}

impl RunRecord {
    pub fn group(&self, attribute: &str, group: u8) -> Option<&GroupMetrics> {
        self.groups.iter().find(|g| g.attribute == attribute && g.group == group)
    }

    pub fn overall(&self, kind: MetricKind) -> Option<f64> {
        self.overall.iter().find(|m| m.kind == kind).map(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub attribute: String,
    pub budget: usize,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub hold_py: bool,
    pub hold_py_given_a: bool,
    pub probe: ProbeConfig,
    pub pool_hash: String,
    pub eval_hash: String,
    pub eval_n: usize,
    pub encoder_tag: String,
    /// Ordered by grid point, then seed.
    pub runs: Vec<RunRecord>,
}

/// One observation of a group metric: the group's own allocation, the
/// seed, and the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub allocation: f64,
    pub seed: u64,
    pub value: f64,
}

impl SweepResult {
    /// Metric of `group` of the swept attribute against that group's own
    /// allocation (`1 − α₁` for group 0). Runs lacking the metric are skipped.
    pub fn group_series(&self, kind: MetricKind, group: u8) -> Vec<SeriesPoint> {
        self.runs
            .iter()
            .filter_map(|r| {
                let g = r.group(&self.attribute, group)?;
                Some(SeriesPoint {
                    allocation: g.allocation?,
                    seed: r.seed,
                    value: g.get(kind)?,
                })
            })
            .collect()
    }

    /// Overall metric against `α₁`.
    pub fn overall_series(&self, kind: MetricKind) -> Vec<SeriesPoint> {
        self.runs
            .iter()
            .filter_map(|r| {
                Some(SeriesPoint {
                    allocation: r.alpha,
                    seed: r.seed,
                    value: r.overall(kind)?,
                })
            })
            .collect()
    }

    pub fn run(&self, alpha: f64, seed: u64) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.alpha == alpha && r.seed == seed)
    }
}

/// Checks that the pool can serve every grid point, reporting the per-cell
/// minimum it would need otherwise.
pub fn check_pool(pool: &EmbeddingSet, spec: &AllocationSpec) -> Result<()> {
    spec.check()?;
    let need = required_cell_counts(pool, spec)?;
    let attr = pool.attribute(&spec.attribute)?;
    let mut have = [[0usize; 2]; 2];
    let mut group_have = [0usize; 2];
    for (&y, &a) in pool.labels().iter().zip(&attr.codes) {
        have[usize::from(y)][usize::from(a.min(1))] += 1;
        group_have[usize::from(a.min(1))] += 1;
    }
    let mut short = Vec::new();
    for y in 0..2 {
        for a in 0..2 {
            if have[y][a] < need[y][a] {
                short.push(format!(
                    "(y = {y}, {} = {a}) needs {} has {}",
                    spec.attribute, need[y][a], have[y][a]
                ));
            }
        }
    }
    for a in 0..2 {
        let want = spec
            .grid
            .iter()
            .map(|&al| {
                let n1 = group_one_count(al, spec.budget);
                if a == 1 { n1 } else { spec.budget - n1 }
            })
            .max()
            .unwrap_or(0);
        if group_have[a] < want {
            short.push(format!("({} = {a}) needs {want} has {}", spec.attribute, group_have[a]));
        }
    }
    if short.is_empty() {
        Ok(())
    } else {
        Err(Error::InsufficientSamples(format!(
            "pool too small for budget {}: {}",
            spec.budget,
            short.join("; ")
        )))
    }
}

fn disjoint(pool: &EmbeddingSet, eval: &EmbeddingSet) -> Result<()> {
    let ids: BTreeSet<&str> = pool.ids().iter().map(String::as_str).collect();
    let shared: Vec<&str> = eval.ids().iter().map(String::as_str).filter(|id| ids.contains(id)).collect();
    if let Some(first) = shared.first() {
        return Err(Error::Config(format!(
            "evaluation set shares {} id(s) with the fine-tuning pool (first: `{first}`)",
            shared.len()
        )));
    }
    Ok(())
}

fn one_run(pool: &EmbeddingSet, spec: &AllocationSpec, eval: &EmbeddingSet, alpha: f64, seed: u64) -> Result<RunRecord> {
    let idx = resample(pool, spec, alpha, seed)?;
    let attr = pool.attribute(&spec.attribute)?;
    let mut realized = [[0usize; 2]; 2];
    let mut z = Vec::with_capacity(idx.len() * pool.d());
    let mut y = Vec::with_capacity(idx.len());
    for &i in &idx {
        realized[usize::from(pool.labels()[i])][usize::from(attr.codes[i])] += 1;
        z.extend_from_slice(pool.row(i));
        y.push(pool.labels()[i]);
    }
    let probe = train_probe(&z, pool.d(), &y, &spec.probe, seed)?;
    let probs = probe.predict_matrix(eval.matrix());
    let overall = evaluate(&probs, eval.labels());

    let mut groups = Vec::new();
    for a in eval.attributes() {
        for g in a.groups() {
            let rows: Vec<usize> = (0..eval.n()).filter(|&i| a.codes[i] == g).collect();
            if rows.is_empty() {
                continue;
            }
            let p: Vec<f64> = rows.iter().map(|&i| probs[i]).collect();
            let l: Vec<u8> = rows.iter().map(|&i| eval.labels()[i]).collect();
            let allocation = (a.name == spec.attribute && g <= 1).then_some(if g == 1 { alpha } else { 1.0 - alpha });
            groups.push(GroupMetrics {
                attribute: a.name.clone(),
                group: g,
                allocation,
                n: rows.len(),
                metrics: evaluate(&p, &l),
            });
        }
    }
    Ok(RunRecord {
        alpha,
        seed,
        realized,
        overall,
        groups,
        probe: probe.trace,
    })
}

/// Runs every `(α, seed)` in `spec`. See [`run_sweep_with`].
pub fn run_sweep(pool: &EmbeddingSet, spec: &AllocationSpec, eval: &EmbeddingSet) -> Result<SweepResult> {
    run_sweep_with(pool, spec, eval, |_| {})
}

/// Runs every `(α, seed)` pair in parallel on the current rayon pool and
/// calls `on_run` as each one completes. The result is ordered by grid point
/// then seed and does not depend on the thread count.
pub fn run_sweep_with<F>(pool: &EmbeddingSet, spec: &AllocationSpec, eval: &EmbeddingSet, on_run: F) -> Result<SweepResult>
where
    F: Fn(&RunRecord) + Sync,
{
    check_pool(pool, spec)?;
    disjoint(pool, eval)?;
    if eval.d() != pool.d() {
        return Err(Error::DimensionMismatch {
            expected: pool.d(),
            got: eval.d(),
        });
    }
    eval.attribute(&spec.attribute)?;

    let tasks: Vec<(f64, u64)> = spec
        .grid
        .iter()
        .flat_map(|&a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs = tasks
        .par_iter()
        .map(|&(alpha, seed)| {
            let r = one_run(pool, spec, eval, alpha, seed)?;
            on_run(&r);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepResult {
        attribute: spec.attribute.clone(),
        budget: spec.budget,
        grid: spec.grid.clone(),
        seeds: spec.seeds.clone(),
        hold_py: spec.hold_py,
        hold_py_given_a: spec.hold_py_given_a,
        probe: spec.probe.clone(),
        pool_hash: dataset_hash(pool),
        eval_hash: dataset_hash(eval),
        eval_n: eval.n(),
        encoder_tag: pool.encoder_tag().to_string(),
        runs,
    })
}

/// Splits off a seeded `fraction` of rows as an evaluation set; returns
/// `(pool, eval)`.
pub fn holdout(ds: &EmbeddingSet, fraction: f64, seed: u64) -> Result<(EmbeddingSet, EmbeddingSet)> {
    use rand::seq::SliceRandom;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Range(format!("holdout fraction {fraction} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..ds.n()).collect();
    idx.shuffle(&mut crate::rng::rng(seed, &[20]));
    let n_eval = ((ds.n() as f64) * fraction).round() as usize;
    if n_eval == 0 || n_eval == ds.n() {
        return Err(Error::InsufficientSamples(format!(
            "holdout of {fraction} leaves an empty side of {} rows",
            ds.n()
        )));
    }
    let mut eval_idx = idx[..n_eval].to_vec();
    let mut pool_idx = idx[n_eval..].to_vec();
    eval_idx.sort_unstable();
    pool_idx.sort_unstable();
    Ok((ds.subset(&pool_idx), ds.subset(&eval_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{Preset, SynthConfig, generate};

    fn small_spec(attr: &str) -> AllocationSpec {
        let mut s = AllocationSpec::new(attr, 200);
        s.grid = vec![0.0, 0.5, 1.0];
        s.seeds = vec![0, 1];
        s.probe.epochs = 100;
        s
    }

    #[test]
    fn realized_counts_and_order() {
        let ds = Preset::Entangled.build(3000, 0, 1).unwrap();
        let (pool, eval) = holdout(&ds, 0.3, 0).unwrap();
        let spec = small_spec("digit");
        let res = run_sweep(&pool, &spec, &eval).unwrap();
        assert_eq!(res.runs.len(), 6);
        for r in &res.runs {
            let total: usize = r.realized.iter().flatten().sum();
            assert_eq!(total, 200);
            assert_eq!(r.realized[0][1] + r.realized[1][1], group_one_count(r.alpha, 200));
            for g in &r.groups {
                for m in &g.metrics {
                    assert!(m.value.is_finite());
                }
            }
            assert!(r.group("random", 0).is_some());
        }
        let order: Vec<(f64, u64)> = res.runs.iter().map(|r| (r.alpha, r.seed)).collect();
        assert_eq!(order, vec![(0.0, 0), (0.0, 1), (0.5, 0), (0.5, 1), (1.0, 0), (1.0, 1)]);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let ds = Preset::Entangled.build(2000, 0, 2).unwrap();
        let (pool, eval) = holdout(&ds, 0.3, 0).unwrap();
        let spec = small_spec("digit");
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| run_sweep(&pool, &spec, &eval)).unwrap();
        let b = run_sweep(&pool, &spec, &eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overlapping_eval_rejected() {
        let ds = Preset::Invariant.build(1000, 0, 1).unwrap();
        let spec = small_spec("colour");
        assert!(matches!(run_sweep(&ds, &spec, &ds), Err(Error::Config(_))));
    }

    #[test]
    fn small_pool_reports_cells() {
        let ds = Preset::Invariant.build(300, 0, 1).unwrap();
        let (pool, eval) = holdout(&ds, 0.3, 0).unwrap();
        let spec = small_spec("colour");
        match run_sweep(&pool, &spec, &eval) {
            Err(Error::InsufficientSamples(msg)) => assert!(msg.contains("needs"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_groups_same_auc_gap_at_both_ends() {
        // groups identically distributed: the group AUC gap is pure noise
        let cfg = SynthConfig::new(6000, 4, 0.0, 0.0, 0.5, 3);
        let ds = generate(&cfg).unwrap();
        let (pool, eval) = holdout(&ds, 0.4, 1).unwrap();
        let mut spec = small_spec("attribute");
        spec.seeds = (0..10).collect();
        let res = run_sweep(&pool, &spec, &eval).unwrap();
        let mean = |alpha: f64, g: u8| {
            let v: Vec<f64> = res
                .runs
                .iter()
                .filter(|r| r.alpha == alpha)
                .map(|r| r.group("attribute", g).unwrap().get(MetricKind::Auc).unwrap())
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let diff_lo = mean(0.0, 1) - mean(0.0, 0);
        let diff_hi = mean(1.0, 1) - mean(1.0, 0);
        assert!((diff_hi - diff_lo).abs() < 0.02, "{diff_lo} {diff_hi}");
    }

    #[test]
    fn holdout_is_disjoint_partition() {
        let ds = Preset::Invariant.build(500, 0, 1).unwrap();
        let (p, e) = holdout(&ds, 0.2, 9).unwrap();
        assert_eq!(p.n() + e.n(), 500);
        assert_eq!(e.n(), 100);
        assert!(disjoint(&p, &e).is_ok());
    }
}
