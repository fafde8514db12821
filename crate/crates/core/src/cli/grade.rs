use super::tables::{diagnosis_row, failed_row, DIAGNOSES, DIAGNOSES_HEADER};
use super::{digests, Completion, RunContext};
use crate::grading::{grade_mask, GradingError};
use crate::raster::pgm::load_pgm;
use crate::report::write_table;
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Expands directories to their `*.pgm` files; case ids are file stems.
fn collect_masks(inputs: &[PathBuf]) -> Result<BTreeMap<String, PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = std::fs::read_dir(input).with_context(|| format!("listing {}", input.display()))?;
            for e in entries {
                let p = e.with_context(|| format!("listing {}", input.display()))?.path();
                if p.is_file() && p.extension().is_some_and(|x| x == "pgm") {
                    files.push(p);
                }
            }
        } else {
            files.push(input.clone());
        }
    }
    let mut by_case = BTreeMap::new();
    for f in files {
        let id = f
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("{} has no usable file name", f.display()))?
            .to_string();
        if let Some(prev) = by_case.insert(id.clone(), f.clone()) {
            bail!("case id {id} is used by both {} and {}", prev.display(), f.display());
        }
    }
    Ok(by_case)
}

enum Outcome {
    Graded(Vec<String>),
    Ungradeable(Vec<String>),
    Failed(Vec<String>),
}

fn grade_one(ctx: &RunContext, case_id: &str, path: &Path) -> Outcome {
    match load_pgm(path) {
        Ok(mask) => match grade_mask(&mask, &ctx.settings.profile) {
            Ok(d) => Outcome::Graded(diagnosis_row(case_id, &d)),
            Err(e @ GradingError::NoEpithelium) => {
                Outcome::Ungradeable(failed_row(case_id, "ungradeable", &e.to_string()))
            }
            Err(e) => Outcome::Failed(failed_row(case_id, "error", &e.to_string())),
        },
        Err(e) => Outcome::Failed(failed_row(case_id, "error", &e.to_string())),
    }
}

pub(super) fn run(ctx: &RunContext, inputs: &[PathBuf]) -> Result<Completion> {
    let masks = collect_masks(inputs)?;
    let paths: Vec<&Path> = masks.values().map(PathBuf::as_path).collect();
    let params = serde_json::json!({
        "profile": ctx.settings.profile_name,
        "thresholds": ctx.settings.profile,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    ctx.manifest("grade", params, digests(&paths, ctx.config_path.as_deref())?).write(&ctx.out)?;

    let jobs: Vec<(&String, &PathBuf)> = masks.iter().collect();
    let outcomes: Vec<Outcome> = jobs.par_iter().map(|(id, p)| grade_one(ctx, id, p)).collect();
    let failed = outcomes.iter().any(|o| matches!(o, Outcome::Failed(_)));
    let rows = outcomes.into_iter().map(|o| match o {
        Outcome::Graded(r) | Outcome::Ungradeable(r) | Outcome::Failed(r) => r,
    });
    write_table(&ctx.out.join("diagnoses.csv"), DIAGNOSES, &DIAGNOSES_HEADER, rows)?;
    Ok(if failed { Completion::InputFailures } else { Completion::Ok })
}
