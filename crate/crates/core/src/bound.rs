//! Group accuracy-parity bound: the mixture identity behind it, the bound
//! value, and empirical checks of swept runs against it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::MetricKind;
use crate::error::{Error, Result};
use crate::harness::sweep::{RunRecord, SweepResult};
use crate::rng;
use crate::separation::SeparationReport;

/// Finite joint law of `(Z, Y, A)` with binary `Y` and `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    pub nz: usize,
    /// `P(z, y, a)` at index `(z * 2 + y) * 2 + a`.
    pub table: Vec<f64>,
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

impl DiscreteJoint {
    pub fn new(nz: usize, table: Vec<f64>) -> Result<Self> {
        if nz == 0 || table.len() != nz * 4 {
            return Err(Error::Schema(format!(
                "joint table needs {} entries for |Z| = {nz}, got {}",
                nz * 4,
                table.len()
            )));
        }
        if table.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Range("joint probabilities must be finite and ≥ 0".into()));
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Range(format!("joint sums to {total}, not 1")));
        }
        Ok(DiscreteJoint { nz, table })
    }

    /// Seeded random joint with every `(y, a)` cell of positive mass.
    pub fn random(nz: usize, seed: u64) -> Self {
        let mut r = rng::rng(seed, &[40]);
        // exponential weights normalize to a flat Dirichlet draw
        let mut table: Vec<f64> = (0..nz * 4)
            .map(|_| -(1.0 - r.random::<f64>()).ln() + 1e-3)
            .collect();
        let total: f64 = table.iter().sum();
        table.iter_mut().for_each(|p| *p /= total);
        DiscreteJoint { nz, table }
    }

    pub fn p(&self, z: usize, y: usize, a: usize) -> f64 {
        self.table[(z * 2 + y) * 2 + a]
    }

    pub fn p_ya(&self, y: usize, a: usize) -> f64 {
        (0..self.nz).map(|z| self.p(z, y, a)).sum()
    }

    pub fn p_y(&self, y: usize) -> f64 {
        self.p_ya(y, 0) + self.p_ya(y, 1)
    }

    /// `π_y = P(A = 1 | Y = y)`.
    pub fn pi(&self, y: usize) -> f64 {
        self.p_ya(y, 1) / self.p_y(y)
    }

    /// `P(Y = y | A = a)`.
    pub fn label_given_group(&self, a: usize, y: usize) -> f64 {
        self.p_ya(y, a) / (self.p_ya(0, a) + self.p_ya(1, a))
    }

    /// `P(· | y, a)` over `Z`.
    pub fn group_conditional(&self, y: usize, a: usize) -> Vec<f64> {
        let m = self.p_ya(y, a);
        (0..self.nz).map(|z| self.p(z, y, a) / m).collect()
    }

    /// `P(· | y)` over `Z`.
    pub fn class_conditional(&self, y: usize) -> Vec<f64> {
        let m = self.p_y(y);
        (0..self.nz).map(|z| (self.p(z, y, 0) + self.p(z, y, 1)) / m).collect()
    }
}

/// Exact enumeration of the mixture identity
/// `TV(μ₁(·|y), μ(·|y)) = (1 − π_y) · TV(μ₁(·|y), μ₀(·|y))` and of the bound
/// `TV(μ_a(·|y), μ(·|y)) ≤ ε_y` for each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureCheck {
    /// `ε_y = TV(μ₁(·|y), μ₀(·|y))`.
    pub epsilon: [f64; 2],
    /// `π_y`.
    pub pi: [f64; 2],
    /// `TV(μ_a(·|y), μ(·|y))`, indexed `[y][a]`.
    pub group_to_mixture: [[f64; 2]; 2],
    /// Largest absolute deviation from the identity over `y` and both groups.
    pub residual: f64,
    /// Largest `TV(μ_a, μ) − ε_y`; never positive when the bound holds.
    pub bound_gap: f64,
}

pub fn mixture_check(joint: &DiscreteJoint) -> Result<MixtureCheck> {
    let mut out = MixtureCheck {
        epsilon: [0.0; 2],
        pi: [0.0; 2],
        group_to_mixture: [[0.0; 2]; 2],
        residual: 0.0,
        bound_gap: f64::NEG_INFINITY,
    };
    for y in 0..2 {
        if joint.p_y(y) <= 0.0 {
            return Err(Error::DegenerateConditional(format!("P(Y = {y}) = 0")));
        }
        let pi = joint.pi(y);
        if pi <= 0.0 || pi >= 1.0 {
            return Err(Error::DegenerateConditional(format!(
                "π_{y} = {pi}: a group is empty given Y = {y}"
            )));
        }
        let mu = joint.class_conditional(y);
        let mu0 = joint.group_conditional(y, 0);
        let mu1 = joint.group_conditional(y, 1);
        let eps = tv(&mu1, &mu0);
        let t1 = tv(&mu1, &mu);
        let t0 = tv(&mu0, &mu);
        out.epsilon[y] = eps;
        out.pi[y] = pi;
        out.group_to_mixture[y] = [t0, t1];
        // group 0 satisfies the mirrored identity with weight π_y
        out.residual = out
            .residual
            .max((t1 - (1.0 - pi) * eps).abs())
            .max((t0 - pi * eps).abs());
        out.bound_gap = out.bound_gap.max(t1 - eps).max(t0 - eps);
    }
    Ok(out)
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Range(format!("{name} = {v} outside [0, 1]")))
    }
}

/// `4ε + |ΔAcc|`.
pub fn parity_bound(epsilon: f64, overall_gap: f64) -> Result<f64> {
    unit("ε", epsilon)?;
    unit("overall gap", overall_gap)?;
    Ok(4.0 * epsilon + overall_gap)
}

/// `2ε′ + 2ε″ + |ΔAcc|` when the two fine-tuning distributions carry
/// different separations.
pub fn parity_bound_asymmetric(eps_a: f64, eps_b: f64, overall_gap: f64) -> Result<f64> {
    unit("ε′", eps_a)?;
    unit("ε″", eps_b)?;
    unit("overall gap", overall_gap)?;
    Ok(2.0 * eps_a + 2.0 * eps_b + overall_gap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    /// Added to the bound for the slack-adjusted verdict.
    pub slack: f64,
    /// `(ε′, ε″)` replacing the single separation value.
    pub epsilons: Option<(f64, f64)>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            slack: 0.0,
            epsilons: None,
        }
    }
}

/// Verdict for one pair of allocations run with the same seed. Trained
/// probes are not Bayes optimal, so these checks are empirical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub attribute: String,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub overall_acc_gap: f64,
    pub bound_value: f64,
    pub slack: f64,
    /// Group code → `|Acc′(A = a) − Acc″(A = a)|`.
    pub observed_subgroup_gaps: Vec<(u8, f64)>,
    /// Observed gap ≤ bound, per group.
    pub satisfied_raw: Vec<bool>,
    /// Observed gap ≤ bound + slack, per group.
    pub satisfied: Vec<bool>,
    /// The two fine-tuning sets share `P(Y)` and `P(Y | A)` up to rounding.
    pub in_assumption: bool,
    pub assumption_notes: Vec<String>,
    /// Bound ≥ 1: holds for any accuracies.
    pub trivial: bool,
    pub kind: String,
}

impl BoundCheck {
    pub fn all_satisfied(&self) -> bool {
        self.satisfied.iter().all(|&s| s)
    }

    /// Largest `observed − bound` over groups.
    pub fn max_excess(&self) -> f64 {
        self.observed_subgroup_gaps
            .iter()
            .map(|(_, g)| g - self.bound_value)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub attribute: String,
    pub epsilon: f64,
    pub slack: f64,
    pub pairs: usize,
    pub in_assumption_pairs: usize,
    pub fraction_satisfied: f64,
    pub fraction_satisfied_raw: f64,
    pub fraction_satisfied_in_assumption: f64,
    /// Largest `observed − bound` over all pairs and groups.
    pub max_violation: f64,
    pub trivial_pairs: usize,
    pub checks: Vec<BoundCheck>,
}

fn assumption_notes(a: &RunRecord, b: &RunRecord, budget: usize) -> Vec<String> {
    let mut notes = Vec::new();
    let k = budget as f64;
    let py = |r: &RunRecord| (r.realized[1][0] + r.realized[1][1]) as f64 / k;
    let dpy = (py(a) - py(b)).abs();
    if dpy > 1.0 / k + 1e-12 {
        notes.push(format!("P(Y = 1) differs by {dpy:.4}"));
    }
    for g in 0..2 {
        let na = a.realized[0][g] + a.realized[1][g];
        let nb = b.realized[0][g] + b.realized[1][g];
        if na == 0 || nb == 0 {
            continue;
        }
        let pa = a.realized[1][g] as f64 / na as f64;
        let pb = b.realized[1][g] as f64 / nb as f64;
        if (pa - pb).abs() > 1.0 / na.min(nb) as f64 + 1e-12 {
            notes.push(format!("P(Y = 1 | A = {g}) differs by {:.4}", (pa - pb).abs()));
        }
    }
    notes
}

/// Checks every same-seed pair of allocations in `sweep` against the bound
/// with `ε` taken from `separation` (or `opts.epsilons`).
pub fn check_sweep_against_bound(
    sweep: &SweepResult,
    separation: &SeparationReport,
    opts: &BoundOptions,
) -> Result<BoundSummary> {
    if separation.attribute != sweep.attribute {
        return Err(Error::MismatchedRuns(format!(
            "separation is for `{}`, sweep for `{}`",
            separation.attribute, sweep.attribute
        )));
    }
    if let Some(h) = &separation.dataset_hash {
        if *h != sweep.eval_hash {
            return Err(Error::MismatchedRuns(
                "separation was measured on a different evaluation set than the sweep".into(),
            ));
        }
    }
    if !(opts.slack >= 0.0) {
        return Err(Error::Range(format!("slack {} must be ≥ 0", opts.slack)));
    }
    let epsilon = separation.epsilon_tv;
    let bound_of = |gap: f64| match opts.epsilons {
        Some((a, b)) => parity_bound_asymmetric(a, b, gap),
        None => parity_bound(epsilon, gap),
    };

    let mut checks = Vec::new();
    for &seed in &sweep.seeds {
        let runs: Vec<&RunRecord> = sweep.runs.iter().filter(|r| r.seed == seed).collect();
        for (i, a) in runs.iter().enumerate() {
            for b in &runs[i + 1..] {
                let (Some(acc_a), Some(acc_b)) = (a.overall(MetricKind::Accuracy), b.overall(MetricKind::Accuracy)) else {
                    continue;
                };
                let gap = (acc_a - acc_b).abs();
                let bound_value = bound_of(gap)?;
                let mut observed = Vec::new();
                for g in a.groups.iter().filter(|g| g.attribute == sweep.attribute) {
                    let Some(other) = b.group(&sweep.attribute, g.group) else { continue };
                    if let (Some(x), Some(y)) = (g.get(MetricKind::Accuracy), other.get(MetricKind::Accuracy)) {
                        observed.push((g.group, (x - y).abs()));
                    }
                }
                let satisfied_raw = observed.iter().map(|(_, o)| *o <= bound_value).collect();
                let satisfied = observed.iter().map(|(_, o)| *o <= bound_value + opts.slack).collect();
                let notes = assumption_notes(a, b, sweep.budget);
                checks.push(BoundCheck {
                    attribute: sweep.attribute.clone(),
                    alpha_a: a.alpha,
                    alpha_b: b.alpha,
                    seed,
                    epsilon,
                    overall_acc_gap: gap,
                    bound_value,
                    slack: opts.slack,
                    observed_subgroup_gaps: observed,
                    satisfied_raw,
                    satisfied,
                    in_assumption: notes.is_empty(),
                    assumption_notes: notes,
                    trivial: bound_value >= 1.0,
                    kind: "empirical".into(),
                });
            }
        }
    }

    let pairs = checks.len();
    let frac = |f: &dyn Fn(&BoundCheck) -> bool, set: &[&BoundCheck]| {
        if set.is_empty() {
            1.0
        } else {
            set.iter().filter(|c| f(c)).count() as f64 / set.len() as f64
        }
    };
    let all: Vec<&BoundCheck> = checks.iter().collect();
    let in_a: Vec<&BoundCheck> = checks.iter().filter(|c| c.in_assumption).collect();
    Ok(BoundSummary {
        attribute: sweep.attribute.clone(),
        epsilon,
        slack: opts.slack,
        pairs,
        in_assumption_pairs: in_a.len(),
        fraction_satisfied: frac(&|c| c.all_satisfied(), &all),
        fraction_satisfied_raw: frac(&|c| c.satisfied_raw.iter().all(|&s| s), &all),
        fraction_satisfied_in_assumption: frac(&|c| c.all_satisfied(), &in_a),
        max_violation: checks.iter().map(BoundCheck::max_excess).fold(f64::NEG_INFINITY, f64::max),
        trivial_pairs: checks.iter().filter(|c| c.trivial).count(),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_group_conditionals_give_zero() {
        // P(z | y, a) independent of a
        let base = [0.1, 0.3, 0.6];
        let mut table = vec![0.0; 12];
        for z in 0..3 {
            for y in 0..2 {
                for a in 0..2 {
                    table[(z * 2 + y) * 2 + a] = base[z] * 0.25;
                }
            }
        }
        let j = DiscreteJoint::new(3, table).unwrap();
        let c = mixture_check(&j).unwrap();
        assert!(c.residual < 1e-15);
        assert!(c.epsilon.iter().all(|&e| e < 1e-15));
        assert!(c.bound_gap <= 1e-15);
    }

    #[test]
    fn half_prevalence_halves_the_distance() {
        // μ₁ = (0.7, 0.3), μ₀ = (0.3, 0.7) in both classes: TV = 0.4, π = 0.5
        let mut table = vec![0.0; 8];
        let mu1 = [0.7, 0.3];
        let mu0 = [0.3, 0.7];
        for z in 0..2 {
            for y in 0..2 {
                table[(z * 2 + y) * 2 + 1] = mu1[z] * 0.25;
                table[(z * 2 + y) * 2] = mu0[z] * 0.25;
            }
        }
        let j = DiscreteJoint::new(2, table).unwrap();
        let c = mixture_check(&j).unwrap();
        assert!((c.epsilon[0] - 0.4).abs() < 1e-15);
        assert!((c.group_to_mixture[0][1] - 0.2).abs() < 1e-15);
        assert!((c.pi[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_joint_identity() {
        let j = DiscreteJoint::random(4, 11);
        let c = mixture_check(&j).unwrap();
        assert!(c.residual < 1e-14);
        assert!(c.bound_gap <= 1e-15);
    }

    #[test]
    fn empty_group_is_degenerate() {
        let mut table = vec![0.0; 8];
        // A = 1 never occurs with Y = 0
        table[0] = 0.5;
        table[3] = 0.25;
        table[2] = 0.25;
        let j = DiscreteJoint::new(2, table).unwrap();
        assert!(matches!(mixture_check(&j), Err(Error::DegenerateConditional(_))));
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(parity_bound(0.0, 0.0).unwrap(), 0.0);
        assert!((parity_bound(0.1, 0.02).unwrap() - 0.42).abs() < 1e-15);
        assert!((parity_bound_asymmetric(0.1, 0.1, 0.02).unwrap() - 0.42).abs() < 1e-15);
        assert!(matches!(parity_bound(1.5, 0.0), Err(Error::Range(_))));
        assert!(matches!(parity_bound(0.1, -0.1), Err(Error::Range(_))));
    }

    #[test]
    fn table_must_normalize() {
        assert!(DiscreteJoint::new(1, vec![0.25, 0.25, 0.25, 0.2]).is_err());
        assert!(DiscreteJoint::new(1, vec![0.25; 3]).is_err());
    }
}
