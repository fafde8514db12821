use super::tables::{read_ihc, read_reads, reference_row, REFERENCE, REFERENCE_HEADER, ROUTING, WORKLIST};
use super::{digests, Completion, InvariantViolation, RunContext};
use crate::consensus::{run_available, CaseStatus};
use crate::report::{fmt_f64, write_table};
use anyhow::Result;
use std::path::Path;

pub(super) fn run(ctx: &RunContext, reads_path: &Path, ihc_path: Option<&Path>) -> Result<Completion> {
    let mut inputs = vec![reads_path];
    inputs.extend(ihc_path);
    ctx.manifest("consensus", serde_json::json!({}), digests(&inputs, ctx.config_path.as_deref())?).write(&ctx.out)?;

    let reads = read_reads(reads_path)?;
    let ihc = match ihc_path {
        Some(p) => read_ihc(p)?,
        None => Vec::new(),
    };
    let outcome = run_available(&reads, &ihc)?;
    let first_round: usize = outcome.routing.iter().filter(|r| r.round == 1).map(|r| r.count).sum();
    if first_round != outcome.cases.len() {
        return Err(InvariantViolation(format!("round 1 routes {first_round} of {} cases", outcome.cases.len())).into());
    }

    let settled = outcome.cases.iter().filter(|c| c.status.is_terminal()).map(reference_row);
    write_table(&ctx.out.join("reference.csv"), REFERENCE, &REFERENCE_HEADER, settled)?;
    let routing = outcome
        .routing
        .iter()
        .map(|r| vec![r.round.to_string(), r.status.to_string(), r.count.to_string(), fmt_f64(r.percent)]);
    write_table(&ctx.out.join("routing.csv"), ROUTING, &["round", "status", "count", "percent"], routing)?;
    let open = outcome.cases.iter().filter_map(|c| match &c.status {
        CaseStatus::NeedsRound2 { dissenter } => {
            Some(vec![c.case_id.clone(), c.status.name().to_string(), "2".into(), dissenter.clone()])
        }
        CaseStatus::NeedsMeeting => {
            Some(vec![c.case_id.clone(), c.status.name().to_string(), "3".into(), String::new()])
        }
        _ => None,
    });
    write_table(&ctx.out.join("worklist.csv"), WORKLIST, &["case_id", "status", "round", "reader_id"], open)?;
    Ok(Completion::Ok)
}
