use std::path::{Path, PathBuf};

use latsep::bound::{check_sweep_against_bound, BoundOptions};
use latsep::dataset::{summarize, EmbeddingSet, MetricKind};
use latsep::fits::{correlate as correlate_reports, fit_linear, fit_powerlaw_sweep, PowerLawBounds, SensitivityFit};
use latsep::harness::allocation::parse_grid;
use latsep::harness::sweep::check_pool;
use latsep::harness::{embed, holdout, pretrain_encoder, run_sweep_with, AllocationSpec, EncoderConfig, SweepResult};
use latsep::io::{self, allocation_curve, curve_rows, format_float, load_json};
use latsep::separation::{separation_report, DimensionWeighting, SeparationOptions, SeparationReport};
use latsep::synthetic::{generate, Preset, SynthConfig};
use latsep::{rng, Error, Result};

use crate::args::{BoundArgs, CorrelateArgs, FitArgs, GlobalArgs, Model, ProbeKind, SeparationArgs, SweepArgs, SynthArgs};
use crate::output::{sparkline, Output};

/// Metrics fitted after every sweep.
const SWEEP_FITS: [MetricKind; 4] = [
    MetricKind::Loss,
    MetricKind::BalancedAccuracy,
    MetricKind::Auc,
    MetricKind::Accuracy,
];

fn separation_options(a: &SeparationArgs) -> Result<SeparationOptions> {
    if a.bins < 2 {
        return Err(Error::Config(format!("--bins {} (need ≥ 2)", a.bins)));
    }
    Ok(SeparationOptions {
        bins: a.bins,
        class_weighting: a.class_weights.into(),
        dimension_weighting: if a.variance_weighted {
            DimensionWeighting::Variance
        } else {
            DimensionWeighting::Unweighted
        },
        variance_fraction: (!a.no_pca).then_some(a.variance),
        metrics: a.metric.iter().map(|&m| m.into()).collect(),
        ..Default::default()
    })
}

pub fn separation(global: &GlobalArgs, a: &SeparationArgs) -> Result<()> {
    let ds = io::load_dataset(&a.embeddings)?;
    let opts = separation_options(a)?;
    let attributes: Vec<String> = if a.all_attributes {
        ds.attribute_names().into_iter().map(String::from).collect()
    } else {
        for name in &a.attribute {
            ds.attribute(name)?;
        }
        a.attribute.clone()
    };
    let mut out = Output::begin(global, "separation", a, &[&a.embeddings])?;
    let mut reports = Vec::new();
    for name in &attributes {
        let r = separation_report(&ds, name, &opts, global.seed)?;
        for w in &r.warnings {
            eprintln!("warning: {name}: {w}");
        }
        out.report(&format!("separation-{name}"), &r)?;
        reports.push(r);
    }
    reports.sort_by(|x, y| y.epsilon_tv.total_cmp(&x.epsilon_tv).then(x.attribute.cmp(&y.attribute)));
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.attribute.clone(),
                format_float(r.epsilon_tv),
                opt(r.wd),
                opt(r.fd),
                r.k.to_string(),
            ]
        })
        .collect();
    out.plot("separation-summary", &["attribute", "tv", "wd", "fd", "k"], &rows)?;
    println!("{:<24} {:>8} {:>10} {:>10} {:>4}", "attribute", "tv", "wd", "fd", "k");
    for r in &reports {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<24} {:>8.4} {:>10} {:>10} {:>4}",
            r.attribute,
            r.epsilon_tv,
            cell(r.wd),
            cell(r.fd),
            r.k
        );
    }
    out.finish()
}

fn parse_seeds(spec: &str, base: u64) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("--seeds `{spec}` is neither a count nor a comma-separated list"));
    if spec.contains(',') {
        return spec.split(',').map(|s| s.trim().parse::<u64>().map_err(|_| bad())).collect();
    }
    let n: u64 = spec.trim().parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok((0..n).map(|i| base + i).collect())
}

fn eval_split(global: &GlobalArgs, a: &SweepArgs, ds: EmbeddingSet) -> Result<(EmbeddingSet, EmbeddingSet)> {
    match &a.eval {
        Some(path) => Ok((ds, io::load_dataset(path)?)),
        None => holdout(&ds, a.holdout, global.seed),
    }
}

pub fn sweep(global: &GlobalArgs, a: &SweepArgs) -> Result<()> {
    let ds = io::load_dataset(&a.embeddings)?;
    ds.attribute(&a.attribute)?;
    let mut spec = AllocationSpec::new(&a.attribute, a.budget);
    spec.grid = parse_grid(&a.grid)?;
    spec.seeds = parse_seeds(&a.seeds, global.seed)?;
    spec.hold_py = a.hold_py;
    spec.hold_py_given_a = !a.no_hold_py_given_a;
    spec.probe.epochs = a.probe_epochs;
    spec.probe.l2 = a.l2;
    spec.check()?;
    let use_encoder = a.probe == ProbeKind::Mlp || a.lambda.is_some();

    let (mut pool, mut eval) = eval_split(global, a, ds)?;
    let mut pretrain = None;
    if use_encoder {
        let (rest, pre) = holdout(&pool, a.pretrain_fraction, rng::derive(global.seed, &[30]))?;
        pool = rest;
        pretrain = Some(pre);
    }
    // fail on a short pool before anything is written or trained
    check_pool(&pool, &spec)?;

    let mut inputs: Vec<&Path> = vec![&a.embeddings];
    if let Some(e) = &a.eval {
        inputs.push(e);
    }
    let mut out = Output::begin(global, "sweep", a, &inputs)?;
    if let Some(pretrain) = pretrain {
        let config = EncoderConfig {
            hidden: a.hidden,
            epochs: a.encoder_epochs,
            ..Default::default()
        };
        let lambda = a.lambda.unwrap_or(0.0);
        let enc = pretrain_encoder(&pretrain, lambda, &a.attribute, &config, global.seed)?;
        eprintln!(
            "encoder: {} pre-training rows, λ = {lambda}, final task loss {:.4}",
            pretrain.n(),
            enc.trace.task_loss.last().copied().unwrap_or(f64::NAN)
        );
        out.json(&format!("encoder-{}", a.attribute), &enc)?;
        pool = embed(&enc, &pool)?;
        eval = embed(&enc, &eval)?;
    }

    let total = spec.grid.len() * spec.seeds.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let result = run_sweep_with(&pool, &spec, &eval, |_| {
        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        if k == total || k.is_multiple_of(10) {
            eprintln!("sweep: {k}/{total} runs");
        }
    })?;
    let stem = format!("sweep-{}", a.attribute);
    out.report(&stem, &result)?;

    for kind in SWEEP_FITS {
        let fit = fit_linear(&result, kind)?;
        out.report(&format!("fit-{}-{}", a.attribute, kind.as_str()), &fit)?;
        let curve = allocation_curve(&result, kind);
        out.plot(
            &format!("curve-{}-{}", a.attribute, kind.as_str()),
            &["series", "alpha", "mean", "std", "seeds"],
            &curve_rows(&curve),
        )?;
        if kind == MetricKind::Loss || kind == MetricKind::Accuracy {
            print_fit(&fit);
            for series in ["group_0", "group_1"] {
                let means: Vec<f64> = curve.iter().filter(|c| c.series == series).map(|c| c.mean).collect();
                println!("  {series} {} (α₁ = 0 … 1)", sparkline(&means));
            }
        }
    }
    let sep = separation_report(&eval, &a.attribute, &SeparationOptions::default(), global.seed)?;
    out.report(&format!("separation-eval-{}", a.attribute), &sep)?;
    println!("evaluation-set TV for `{}`: {:.4}", a.attribute, sep.epsilon_tv);
    out.finish()
}

fn print_fit(f: &SensitivityFit) {
    println!(
        "{} {}: slope {:+.4} ± {:.4} (seed std), r² {:.3}",
        f.attribute, f.metric, f.slope, f.slope_std, f.r_squared
    );
    if let Some(gaps) = &f.delta_endpoint {
        for g in gaps {
            println!("  group {} endpoint gap {:+.4} ± {:.4}", g.group, g.mean, g.std);
        }
    }
}

fn load_all<T: serde::de::DeserializeOwned>(paths: &[PathBuf]) -> Result<Vec<T>> {
    paths.iter().map(|p| load_json(p)).collect()
}

pub fn correlate(global: &GlobalArgs, a: &CorrelateArgs) -> Result<()> {
    let seps: Vec<SeparationReport> = load_all(&a.separation)?;
    let fits: Vec<SensitivityFit> = load_all(&a.fit)?;
    let inputs: Vec<&Path> = a.separation.iter().chain(&a.fit).map(PathBuf::as_path).collect();
    let mut out = Output::begin(global, "correlate", a, &inputs)?;
    let report = correlate_reports(&seps, &fits, a.axis.into()).map_err(|e| match e {
        // too few matched pairs means the artifacts supplied do not line up
        Error::InsufficientPoints { needed, got } => {
            Error::MismatchedAttributes(format!("{got} matched attribute(s); need at least {needed}"))
        }
        other => other,
    })?;
    out.report("correlation", &report)?;
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|p| {
            vec![
                p.attribute.clone(),
                format_float(p.separation),
                format_float(p.slope),
                format_float(p.slope_std),
            ]
        })
        .collect();
    out.plot("correlation-points", &["attribute", "separation", "slope", "slope_std"], &rows)?;
    println!(
        "{} vs {} slope over {} attributes: r = {:+.3}, p = {:.3e}",
        report.separation_metric.as_str(),
        report.sensitivity_metric,
        report.points.len(),
        report.pearson_r,
        report.p_value
    );
    out.finish()
}

pub fn bound(global: &GlobalArgs, a: &BoundArgs) -> Result<()> {
    let sweep: SweepResult = load_json(&a.sweep)?;
    let sep: SeparationReport = load_json(&a.separation)?;
    let opts = BoundOptions {
        slack: a.slack,
        epsilons: a.epsilons.as_ref().map(|e| (e[0], e[1])),
    };
    let mut out = Output::begin(global, "bound", a, &[&a.sweep, &a.separation])?;
    let summary = check_sweep_against_bound(&sweep, &sep, &opts)?;
    out.report(&format!("bound-{}", summary.attribute), &summary)?;
    println!(
        "{}: ε = {:.4}, {} pairs ({} within assumptions, {} trivial)",
        summary.attribute, summary.epsilon, summary.pairs, summary.in_assumption_pairs, summary.trivial_pairs
    );
    println!(
        "  satisfied: {:.1}% raw, {:.1}% with slack {}, {:.1}% of in-assumption pairs; max violation {:+.4}",
        100.0 * summary.fraction_satisfied_raw,
        100.0 * summary.fraction_satisfied,
        summary.slack,
        100.0 * summary.fraction_satisfied_in_assumption,
        summary.max_violation
    );
    println!("  empirical check: trained probes are not Bayes optimal");
    out.finish()
}

pub fn synth(global: &GlobalArgs, a: &SynthArgs) -> Result<()> {
    let ext = if a.binary { "bin" } else { "csv" };
    let (ds, name) = match (&a.preset, &a.config) {
        (Some(p), _) => {
            let preset: Preset = p.parse()?;
            let n = a.n.unwrap_or(preset.default_n());
            (preset.build(n, a.levels, global.seed)?, preset.name().to_string())
        }
        (None, Some(path)) => {
            let mut config: SynthConfig = load_json(path)?;
            if let Some(n) = a.n {
                config.n = n;
            }
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or("synthetic".into());
            (generate(&config)?, stem)
        }
        (None, None) => return Err(Error::Config("either --preset or --config is required".into())),
    };
    let inputs: Vec<&Path> = a.config.iter().map(PathBuf::as_path).collect();
    let mut out = Output::begin(global, "synth", a, &inputs)?;
    let path = a.output.clone().unwrap_or_else(|| global.out.join(format!("{name}.{ext}")));
    io::save_dataset(&ds, &path)?;
    if a.binary {
        let (bin, header) = io::binary_paths(&path);
        out.external(&bin);
        out.external(&header);
    } else {
        out.external(&path);
    }
    println!("{} rows, {} dims → {}", ds.n(), ds.d(), path.display());
    println!("{:<16} {:>6} {:>8} {:>10}", "attribute", "group", "share", "P(Y=1|A)");
    for attr in ds.attribute_names() {
        let s = summarize(&ds, attr)?;
        for (g, (share, rate)) in s.gamma.iter().zip(&s.class_given_group).enumerate() {
            println!("{attr:<16} {g:>6} {share:>8.4} {rate:>10.4}");
        }
    }
    out.finish()
}

pub fn fit(global: &GlobalArgs, a: &FitArgs) -> Result<()> {
    let sweep: SweepResult = load_json(&a.sweep)?;
    let mut out = Output::begin(global, "fit", a, &[&a.sweep])?;
    match a.model {
        Model::Linear => {
            let kind: MetricKind = a.metric.into();
            let f = fit_linear(&sweep, kind)?;
            out.report(&format!("fit-{}-{}", sweep.attribute, kind.as_str()), &f)?;
            print_fit(&f);
        }
        Model::Powerlaw => {
            let fits = fit_powerlaw_sweep(&sweep, &PowerLawBounds::default())?;
            out.report(&format!("powerlaw-{}", sweep.attribute), &fits)?;
            for f in &fits {
                let p = f.params;
                let std = |i: usize| f.stds[i].map(|s| format!("{s:.3}")).unwrap_or_else(|| "n/a".into());
                println!(
                    "group {}: σ {:.4} ({}) p {:.4} ({}) τ {:.4} ({}) q {:.4} ({}) δ {:.4} ({}){}",
                    f.group.unwrap_or(0),
                    p.sigma,
                    std(0),
                    p.p,
                    std(1),
                    p.tau,
                    std(2),
                    p.q,
                    std(3),
                    p.delta,
                    std(4),
                    if f.unstable { "  [unstable]" } else { "" }
                );
            }
        }
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_count_or_list() {
        assert_eq!(parse_seeds("3", 10).unwrap(), vec![10, 11, 12]);
        assert_eq!(parse_seeds("4,2", 0).unwrap(), vec![4, 2]);
        assert!(parse_seeds("0", 0).is_err());
        assert!(parse_seeds("x", 0).is_err());
    }
}
