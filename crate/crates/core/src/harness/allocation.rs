//! Fixed-budget fine-tuning sets at a requested subgroup allocation.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::harness::probe::ProbeConfig;
use crate::rng;

/// The eleven-point grid `0.0, 0.1, …, 1.0`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// `start:end:step` → grid points, inclusive of `end` when it lands on the
/// step lattice.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Config(format!("grid `{s}` is not start:end:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || end < start {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count)
        .map(|i| {
            // snap to 12 decimals so 0.1-steps print cleanly
            let v = start + step * i as f64;
            (v * 1e12).round() / 1e12
        })
        .collect();
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSpec {
    pub attribute: String,
    /// Fine-tuning budget `K`.
    pub budget: usize,
    /// Allocations `α₁` of group 1, strictly increasing in `[0, 1]`.
    pub grid: Vec<f64>,
    /// Stratify so the realized `P(Y)` equals the pool's at every point.
    pub hold_py: bool,
    /// Stratify each group by its own `P(Y | A = a)` (used when `hold_py`
    /// is off).
    pub hold_py_given_a: bool,
    pub seeds: Vec<u64>,
    pub probe: ProbeConfig,
}

impl AllocationSpec {
    pub fn new(attribute: impl Into<String>, budget: usize) -> Self {
        AllocationSpec {
            attribute: attribute.into(),
            budget,
            grid: default_grid(),
            hold_py: false,
            hold_py_given_a: true,
            seeds: vec![0],
            probe: ProbeConfig::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.budget < 2 {
            return Err(Error::Config(format!("budget K = {} (need ≥ 2)", self.budget)));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("empty allocation grid".into()));
        }
        if self.grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config("grid values must lie in [0, 1]".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// Group-1 rows for allocation `alpha` of budget `k` (round half to even).
pub fn group_one_count(alpha: f64, k: usize) -> usize {
    ((alpha * k as f64).round_ties_even() as usize).min(k)
}

/// Rows to draw per `(y, a)` cell: `targets[y][a]`.
pub fn cell_targets(pool: &EmbeddingSet, spec: &AllocationSpec, alpha: f64) -> Result<[[usize; 2]; 2]> {
    let attr = pool.attribute(&spec.attribute)?;
    let mut counts = [[0usize; 2]; 2];
    for (&y, &a) in pool.labels().iter().zip(&attr.codes) {
        if a > 1 {
            return Err(Error::Config(format!(
                "allocation sweeps need a binary attribute; `{}` has code {a}",
                spec.attribute
            )));
        }
        counts[usize::from(y)][usize::from(a)] += 1;
    }
    let n1 = group_one_count(alpha, spec.budget);
    let per_group = [spec.budget - n1, n1];
    let total = pool.n() as f64;
    let p_y1 = (counts[1][0] + counts[1][1]) as f64 / total;
    let mut targets = [[0usize; 2]; 2];
    for a in 0..2 {
        let n_a = per_group[a];
        let positives = if spec.hold_py {
            (p_y1 * n_a as f64).round_ties_even() as usize
        } else if spec.hold_py_given_a {
            let group_total = counts[0][a] + counts[1][a];
            if group_total == 0 {
                0
            } else {
                let p = counts[1][a] as f64 / group_total as f64;
                (p * n_a as f64).round_ties_even() as usize
            }
        } else {
            // unstratified: filled by a single draw over the whole group
            usize::MAX
        };
        if positives == usize::MAX {
            targets[0][a] = usize::MAX;
            targets[1][a] = n_a;
        } else {
            let positives = positives.min(n_a);
            targets[1][a] = positives;
            targets[0][a] = n_a - positives;
        }
    }
    Ok(targets)
}

/// Draws a fine-tuning set of exactly `K` row indices (sorted) at allocation
/// `alpha`: `round(αK)` from group 1 and the rest from group 0, uniformly
/// without replacement inside each stratum. Deterministic in `seed`.
pub fn resample(pool: &EmbeddingSet, spec: &AllocationSpec, alpha: f64, seed: u64) -> Result<Vec<usize>> {
    spec.check()?;
    let attr = pool.attribute(&spec.attribute)?;
    let targets = cell_targets(pool, spec, alpha)?;
    let mut r = rng::rng(seed, &[alpha.to_bits()]);
    let mut chosen = Vec::with_capacity(spec.budget);
    for a in 0..2u8 {
        let unstratified = targets[0][usize::from(a)] == usize::MAX;
        let strata: Vec<(Option<u8>, usize)> = if unstratified {
            vec![(None, targets[1][usize::from(a)])]
        } else {
            vec![(Some(0), targets[0][usize::from(a)]), (Some(1), targets[1][usize::from(a)])]
        };
        for (label, want) in strata {
            if want == 0 {
                continue;
            }
            let rows: Vec<usize> = (0..pool.n())
                .filter(|&i| attr.codes[i] == a && label.is_none_or(|l| pool.labels()[i] == l))
                .collect();
            if rows.len() < want {
                let cell = match label {
                    Some(l) => format!("(y = {l}, {} = {a})", spec.attribute),
                    None => format!("({} = {a})", spec.attribute),
                };
                return Err(Error::InsufficientSamples(format!(
                    "cell {cell} needs {want} rows at α = {alpha}, has {} (short by {})",
                    rows.len(),
                    want - rows.len()
                )));
            }
            chosen.extend(index::sample(&mut r, rows.len(), want).into_iter().map(|j| rows[j]));
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Smallest per-cell row counts the pool must hold for every grid point.
pub fn required_cell_counts(pool: &EmbeddingSet, spec: &AllocationSpec) -> Result<[[usize; 2]; 2]> {
    let mut need = [[0usize; 2]; 2];
    for &alpha in &spec.grid {
        let t = cell_targets(pool, spec, alpha)?;
        for y in 0..2 {
            for a in 0..2 {
                if t[y][a] != usize::MAX {
                    need[y][a] = need[y][a].max(t[y][a]);
                }
            }
        }
    }
    Ok(need)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Attribute;

    /// Pool with `per_cell[y][a]` rows in each cell.
    fn pool(per_cell: [[usize; 2]; 2]) -> EmbeddingSet {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut a = Vec::new();
        for yy in 0..2u8 {
            for aa in 0..2u8 {
                for _ in 0..per_cell[usize::from(yy)][usize::from(aa)] {
                    rows.push(vec![rows.len() as f64]);
                    y.push(yy);
                    a.push(aa);
                }
            }
        }
        EmbeddingSet::from_rows(&rows, y, vec![Attribute::new("g", a)]).unwrap()
    }

    fn realized(p: &EmbeddingSet, idx: &[usize]) -> [[usize; 2]; 2] {
        let attr = p.attribute("g").unwrap();
        let mut c = [[0; 2]; 2];
        for &i in idx {
            c[usize::from(p.labels()[i])][usize::from(attr.codes[i])] += 1;
        }
        c
    }

    #[test]
    fn half_split() {
        let p = pool([[200, 200], [200, 200]]);
        let spec = AllocationSpec::new("g", 100);
        let idx = resample(&p, &spec, 0.5, 1).unwrap();
        let c = realized(&p, &idx);
        assert_eq!(idx.len(), 100);
        assert_eq!(c[0][1] + c[1][1], 50);
    }

    #[test]
    fn full_allocation_drops_group_zero() {
        let p = pool([[200, 200], [200, 200]]);
        let spec = AllocationSpec::new("g", 100);
        let c = realized(&p, &resample(&p, &spec, 1.0, 1).unwrap());
        assert_eq!(c[0][0] + c[1][0], 0);
        assert_eq!(c[0][1] + c[1][1], 100);
    }

    #[test]
    fn hold_py_cell_targets() {
        // P(Y = 1) = 0.3 in the pool
        let p = pool([[350, 350], [150, 150]]);
        let mut spec = AllocationSpec::new("g", 100);
        spec.hold_py = true;
        let t = cell_targets(&p, &spec, 0.4).unwrap();
        assert_eq!(t[1][1], 12);
        assert_eq!(t[0][1], 28);
        assert_eq!(t[1][0], 18);
        assert_eq!(t[0][0], 42);
        let c = realized(&p, &resample(&p, &spec, 0.4, 3).unwrap());
        assert_eq!(c, [[42, 28], [18, 12]]);
    }

    #[test]
    fn shortfall_is_named() {
        let p = pool([[10, 10], [10, 10]]);
        let spec = AllocationSpec::new("g", 100);
        match resample(&p, &spec, 1.0, 0) {
            Err(Error::InsufficientSamples(msg)) => assert!(msg.contains("short by 40"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_and_without_replacement() {
        let p = pool([[300, 300], [300, 300]]);
        let spec = AllocationSpec::new("g", 200);
        let a = resample(&p, &spec, 0.3, 5).unwrap();
        assert_eq!(a, resample(&p, &spec, 0.3, 5).unwrap());
        assert_ne!(a, resample(&p, &spec, 0.3, 6).unwrap());
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), a.len());
    }

    #[test]
    fn realized_alpha_within_one_over_k() {
        let p = pool([[400, 400], [400, 400]]);
        let mut spec = AllocationSpec::new("g", 37);
        spec.hold_py = true;
        let base_py = 0.5;
        for &alpha in &default_grid() {
            let idx = resample(&p, &spec, alpha, 2).unwrap();
            let c = realized(&p, &idx);
            let got = (c[0][1] + c[1][1]) as f64 / 37.0;
            assert!((got - alpha).abs() <= 1.0 / 37.0);
            let py = (c[1][0] + c[1][1]) as f64 / 37.0;
            assert!((py - base_py).abs() <= 1.0 / 37.0 + 1e-12);
        }
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0:1:0.1").unwrap(), default_grid());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
    }
}
