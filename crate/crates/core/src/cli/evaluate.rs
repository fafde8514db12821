use super::tables::{
    read_diagnoses, read_reads, read_reference, Prediction, CONFUSION, OPERATING_POINTS, PERMUTATION, ROC, ROC_BAND,
    SUMMARY,
};
use super::{digests, Completion, RunContext};
use crate::grading::Verdict;
use crate::report::svg::{confusion_svg, roc_svg};
use crate::report::{fmt_f64, write_table, ReportError};
use crate::rng;
use crate::stats::{
    self, bootstrap_roc, operating_point, permutation_test_indexed, roc, youden_point, BootstrapOptions, BootstrapRoc,
    OrdinalScale, RocCurve, Statistic, StatsError,
};
use anyhow::{Context, Result};
use std::collections::BTreeMap;
use std::path::Path;

const GG_LABELS: [&str; 6] = ["benign", "GG1", "GG2", "GG3", "GG4", "GG5"];

/// Cases in reference order with the system's verdict and scores.
struct Aligned {
    ids: Vec<String>,
    reference: Vec<Verdict>,
    system: Vec<Verdict>,
    malignancy: Vec<f64>,
    aggressiveness: Vec<f64>,
}

fn align(
    predictions: &BTreeMap<String, Prediction>,
    reference: &BTreeMap<String, Verdict>,
) -> Result<Aligned, StatsError> {
    let missing: Vec<&str> = reference.keys().filter(|k| !predictions.contains_key(*k)).map(String::as_str).collect();
    let extra: Vec<&str> = predictions.keys().filter(|k| !reference.contains_key(*k)).map(String::as_str).collect();
    let unscored: Vec<&str> = predictions
        .iter()
        .filter(|(k, p)| {
            reference.contains_key(*k)
                && (p.verdict.is_none() || p.malignancy_score.is_none() || p.aggressiveness_score.is_none())
        })
        .map(|(k, _)| k.as_str())
        .collect();
    let mut problems = Vec::new();
    if !missing.is_empty() {
        problems.push(format!("no prediction for {}", missing.join(", ")));
    }
    if !extra.is_empty() {
        problems.push(format!("no reference for {}", extra.join(", ")));
    }
    if !unscored.is_empty() {
        problems.push(format!("prediction without verdict or scores for {}", unscored.join(", ")));
    }
    if !problems.is_empty() {
        return Err(StatsError::Alignment(problems.join("; ")));
    }
    let mut a = Aligned {
        ids: Vec::new(),
        reference: Vec::new(),
        system: Vec::new(),
        malignancy: Vec::new(),
        aggressiveness: Vec::new(),
    };
    for (id, v) in reference {
        let p = &predictions[id];
        a.ids.push(id.clone());
        a.reference.push(*v);
        a.system.push(p.verdict.expect("checked"));
        a.malignancy.push(p.malignancy_score.expect("checked"));
        a.aggressiveness.push(p.aggressiveness_score.expect("checked"));
    }
    Ok(a)
}

fn kappa_text(r: Result<f64, StatsError>) -> Result<String, StatsError> {
    match r {
        Ok(k) => Ok(fmt_f64(k)),
        Err(StatsError::DegenerateMarginals | StatsError::InsufficientData { .. }) => Ok("undefined".into()),
        Err(e) => Err(e),
    }
}

struct RocAnalysis {
    name: &'static str,
    title: &'static str,
    curve: RocCurve,
    boot: BootstrapRoc,
}

fn write_roc(ctx: &RunContext, a: &RocAnalysis) -> Result<(), ReportError> {
    let pts = a
        .curve
        .points
        .iter()
        .map(|p| vec![fmt_f64(p.threshold), fmt_f64(p.sensitivity), fmt_f64(p.false_positive_rate)]);
    write_table(
        &ctx.out.join(format!("roc_{}.csv", a.name)),
        ROC,
        &["threshold", "sensitivity", "false_positive_rate"],
        pts,
    )?;
    let band = a.boot.band.iter().map(|b| {
        vec![
            fmt_f64(b.false_positive_rate),
            fmt_f64(b.mean_sensitivity),
            fmt_f64(b.lower_sensitivity),
            fmt_f64(b.upper_sensitivity),
        ]
    });
    write_table(
        &ctx.out.join(format!("roc_{}_band.csv", a.name)),
        ROC_BAND,
        &["false_positive_rate", "mean_sensitivity", "lower_sensitivity", "upper_sensitivity"],
        band,
    )?;
    let svg = roc_svg(a.title, &[("system", &a.curve)], Some(&a.boot.band));
    let path = ctx.out.join(format!("roc_{}.svg", a.name));
    std::fs::write(&path, svg).map_err(|e| ReportError::io(&path, e))
}

pub(super) fn run(ctx: &RunContext, predictions: &Path, reference: &Path, panel: Option<&Path>) -> Result<Completion> {
    let s = &ctx.settings;
    let mut inputs = vec![predictions, reference];
    inputs.extend(panel);
    let params = serde_json::json!({
        "replicates": s.replicates,
        "iterations": s.iterations,
        "ci_level": s.ci_level,
        "grid_points": s.grid_points,
        "min_sensitivity": s.min_sensitivity,
    });
    ctx.manifest("evaluate", params, digests(&inputs, ctx.config_path.as_deref())?).write(&ctx.out)?;

    let preds = read_diagnoses(predictions)?;
    let refs = read_reference(reference)?;
    let a = align(&preds, &refs)?;

    let gg_scale = OrdinalScale::grade_groups();
    let ref_gg: Vec<u8> = a.reference.iter().map(Verdict::category).collect();
    let sys_gg: Vec<u8> = a.system.iter().map(Verdict::category).collect();
    let ref_sc: Vec<u8> = a.reference.iter().map(Verdict::score_category).collect();
    let sys_sc: Vec<u8> = a.system.iter().map(Verdict::score_category).collect();
    let cm = stats::confusion(&ref_gg, &sys_gg, &gg_scale)?;

    let rows = (0..cm.k()).map(|i| {
        let mut row = vec![GG_LABELS[i].to_string()];
        row.extend((0..cm.k()).map(|j| cm.get(i, j).to_string()));
        row
    });
    let mut header = vec!["reference".to_string()];
    header.extend(GG_LABELS.iter().map(|l| format!("pred_{l}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&ctx.out.join("confusion_gg.csv"), CONFUSION, &header, rows)?;
    let svg = confusion_svg("Grade group confusion", &cm, &GG_LABELS);
    std::fs::write(ctx.out.join("confusion_gg.svg"), svg).context("writing confusion_gg.svg")?;

    let mut summary: Vec<(String, String)> = vec![
        ("cases".into(), a.ids.len().to_string()),
        ("accuracy_grade_group".into(), fmt_f64(cm.accuracy())),
        ("kappa_grade_group".into(), kappa_text(stats::quadratic_kappa(&ref_gg, &sys_gg, &gg_scale))?),
        ("accuracy_gleason_score".into(), fmt_f64(stats::accuracy(&ref_sc, &sys_sc)?)),
        (
            "kappa_gleason_score".into(),
            kappa_text(stats::quadratic_kappa(&ref_sc, &sys_sc, &OrdinalScale::gleason_scores()))?,
        ),
    ];

    // benign vs malignant on the tumor fraction, GG>=2 on the pattern 4/5 fraction
    let specs: [(&str, &str, &[f64], u8); 2] = [
        ("malignancy", "Benign vs malignant", &a.malignancy, 1),
        ("gg2", "Grade group 2 or higher", &a.aggressiveness, 2),
    ];
    let mut op_rows = Vec::new();
    let mut youden_thresholds = BTreeMap::new();
    for (idx, (name, title, scores, cut)) in specs.into_iter().enumerate() {
        let truth: Vec<bool> = ref_gg.iter().map(|g| *g >= cut).collect();
        let curve = match roc(scores, &truth) {
            Ok(c) => c,
            Err(StatsError::SingleClassTruth) => {
                summary.push((format!("auc_{name}"), "undefined".into()));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let opts = BootstrapOptions {
            replicates: s.replicates,
            seed: rng::derive_seed(s.seed, rng::BOOTSTRAP, idx as u64),
            level: s.ci_level,
            grid_points: s.grid_points,
            ..BootstrapOptions::default()
        };
        let boot = bootstrap_roc(scores, &truth, &opts)?;
        summary.push((format!("auc_{name}"), fmt_f64(curve.auc)));
        summary.push((format!("auc_{name}_bootstrap_mean"), fmt_f64(boot.mean_auc)));
        summary.push((format!("auc_{name}_ci_lower"), fmt_f64(boot.auc_ci.0)));
        summary.push((format!("auc_{name}_ci_upper"), fmt_f64(boot.auc_ci.1)));
        let rule = format!("sensitivity>={}", fmt_f64(s.min_sensitivity));
        match operating_point(&curve, s.min_sensitivity) {
            Ok(op) => op_rows.push(vec![
                name.to_string(),
                rule,
                fmt_f64(op.threshold),
                fmt_f64(op.sensitivity),
                fmt_f64(op.specificity),
            ]),
            Err(StatsError::Unreachable(_)) => {
                op_rows.push(vec![name.to_string(), rule, "unreachable".into(), String::new(), String::new()])
            }
            Err(e) => return Err(e.into()),
        }
        let y = youden_point(&curve);
        youden_thresholds.insert(cut, y.threshold);
        op_rows.push(vec![
            name.to_string(),
            "youden".into(),
            fmt_f64(y.threshold),
            fmt_f64(y.sensitivity),
            fmt_f64(y.specificity),
        ]);
        write_roc(ctx, &RocAnalysis { name, title, curve, boot })?;
    }
    write_table(
        &ctx.out.join("operating_points.csv"),
        OPERATING_POINTS,
        &["analysis", "rule", "threshold", "sensitivity", "specificity"],
        op_rows,
    )?;

    if let Some(panel_path) = panel {
        let (rows, readers) = permutation_rows(ctx, panel_path, &a, &ref_gg, &sys_gg, &youden_thresholds)?;
        write_table(
            &ctx.out.join("permutation.csv"),
            PERMUTATION,
            &["statistic", "observed_statistic", "null_samples", "p_two_tailed", "readers"],
            rows,
        )?;
        summary.push(("panel_readers".into(), readers.to_string()));
    }

    write_table(
        &ctx.out.join("summary.csv"),
        SUMMARY,
        &["metric", "value"],
        summary.into_iter().map(|(k, v)| vec![k, v]),
    )?;
    Ok(Completion::Ok)
}

/// Round-1 reads per reader, aligned to the evaluated cases.
fn panel_labels(panel_path: &Path, ids: &[String]) -> Result<Vec<(String, Vec<u8>)>> {
    let reads = read_reads(panel_path)?;
    let mut by_reader: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
    for r in reads.iter().filter(|r| r.round == 1 && r.flags.is_empty()) {
        by_reader.entry(r.reader_id.clone()).or_default().insert(r.case_id.clone(), r.verdict.category());
    }
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (reader, cases) in by_reader {
        let missing: Vec<&str> = ids.iter().filter(|id| !cases.contains_key(*id)).map(String::as_str).collect();
        if !missing.is_empty() {
            problems.push(format!("reader {reader} has no read for {}", missing.join(", ")));
            continue;
        }
        out.push((reader, ids.iter().map(|id| cases[id]).collect()));
    }
    if !problems.is_empty() {
        return Err(StatsError::Alignment(problems.join("; ")).into());
    }
    if out.is_empty() {
        return Err(StatsError::Alignment("panel has no readers".into()).into());
    }
    Ok(out)
}

fn permutation_rows(
    ctx: &RunContext,
    panel_path: &Path,
    a: &Aligned,
    ref_gg: &[u8],
    sys_gg: &[u8],
    youden: &BTreeMap<u8, f64>,
) -> Result<(Vec<Vec<String>>, usize)> {
    let s = &ctx.settings;
    let panel = panel_labels(panel_path, &a.ids)?;
    let readers = panel.len();
    let idx = |v: &[u8]| v.iter().map(|&g| g as usize).collect::<Vec<usize>>();
    let reference = idx(ref_gg);
    let panel_idx: Vec<Vec<usize>> = panel.iter().map(|(_, l)| idx(l)).collect();
    let mut rows = Vec::new();
    let mut push = |r: stats::PermutationResult| {
        rows.push(vec![
            r.statistic.name(),
            fmt_f64(r.observed_statistic),
            r.null_samples.to_string(),
            fmt_f64(r.p_two_tailed),
            readers.to_string(),
        ]);
    };
    let system = idx(sys_gg);
    for (i, statistic) in [Statistic::KappaVsMedian, Statistic::AccuracyVsMedian].into_iter().enumerate() {
        let seed = rng::derive_seed(s.seed, rng::PERMUTATION, i as u64);
        push(permutation_test_indexed(&system, &panel_idx, &reference, 6, statistic, s.iterations, seed)?);
    }
    // F1 compares the system binarised at its Youden threshold
    for (i, (cut, scores)) in [(1u8, &a.malignancy), (2u8, &a.aggressiveness)].into_iter().enumerate() {
        let Some(&threshold) = youden.get(&cut) else { continue };
        let binary: Vec<usize> = scores.iter().map(|&x| if x >= threshold { cut as usize } else { 0 }).collect();
        let seed = rng::derive_seed(s.seed, rng::PERMUTATION, 2 + i as u64);
        let statistic = Statistic::F1VsMedian { positive_from: cut as usize };
        push(permutation_test_indexed(&binary, &panel_idx, &reference, 6, statistic, s.iterations, seed)?);
    }
    Ok((rows, readers))
}
