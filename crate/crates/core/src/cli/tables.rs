//! CSV schemas used by the commands and their row codecs.

use crate::consensus::{CaseState, CaseStatus, IhcRecord, IhcVerdict, Read, ReadFlag};
use crate::grading::{Diagnosis, GleasonScore, Verdict};
use crate::report::{fmt_f64, fmt_opt, parse_f64, read_table, ReportError, Schema, Table};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const DIAGNOSES: Schema = Schema::new("diagnoses", 1);
pub const READS: Schema = Schema::new("reads", 1);
pub const IHC: Schema = Schema::new("ihc", 1);
pub const REFERENCE: Schema = Schema::new("reference", 1);
pub const ROUTING: Schema = Schema::new("routing", 1);
pub const WORKLIST: Schema = Schema::new("worklist", 1);
pub const CONFUSION: Schema = Schema::new("confusion", 1);
pub const SUMMARY: Schema = Schema::new("summary", 1);
pub const ROC: Schema = Schema::new("roc", 1);
pub const ROC_BAND: Schema = Schema::new("roc_band", 1);
pub const OPERATING_POINTS: Schema = Schema::new("operating_points", 1);
pub const PERMUTATION: Schema = Schema::new("permutation", 1);

pub const DIAGNOSES_HEADER: [&str; 14] = [
    "case_id",
    "pct_benign",
    "pct_g3",
    "pct_g4",
    "pct_g5",
    "tumor_fraction",
    "verdict",
    "primary",
    "secondary",
    "tertiary",
    "grade_group",
    "malignancy_score",
    "aggressiveness_score",
    "errors",
];

pub const READS_HEADER: [&str; 10] = [
    "case_id",
    "reader_id",
    "round",
    "verdict",
    "primary",
    "secondary",
    "tertiary",
    "grade_group",
    "tumor_volume_pct",
    "flags",
];

pub const REFERENCE_HEADER: [&str; 8] =
    ["case_id", "status", "verdict", "primary", "secondary", "tertiary", "grade_group", "rounds"];

fn verdict_columns(v: &Verdict) -> [String; 5] {
    match v {
        Verdict::Benign => ["benign".into(), String::new(), String::new(), String::new(), String::new()],
        Verdict::Malignant { score, grade_group } => [
            "malignant".into(),
            score.primary.to_string(),
            score.secondary.to_string(),
            fmt_opt(score.tertiary),
            grade_group.value().to_string(),
        ],
    }
}

pub fn diagnosis_row(case_id: &str, d: &Diagnosis) -> Vec<String> {
    let p = d.profile;
    let [verdict, primary, secondary, tertiary, gg] = verdict_columns(&d.verdict);
    vec![
        case_id.to_string(),
        fmt_f64(p.pct_benign),
        fmt_f64(p.pct_g3),
        fmt_f64(p.pct_g4),
        fmt_f64(p.pct_g5),
        fmt_f64(d.tumor_fraction),
        verdict,
        primary,
        secondary,
        tertiary,
        gg,
        fmt_f64(d.risk_scores.malignancy_score),
        fmt_f64(d.risk_scores.aggressiveness_score),
        String::new(),
    ]
}

/// A row for a mask that produced no diagnosis; `verdict` is
/// `ungradeable` or `error`.
pub fn failed_row(case_id: &str, verdict: &str, message: &str) -> Vec<String> {
    let mut row = vec![String::new(); DIAGNOSES_HEADER.len()];
    row[0] = case_id.to_string();
    row[6] = verdict.to_string();
    row[13] = message.to_string();
    row
}

pub fn reference_row(state: &CaseState) -> Vec<String> {
    let [verdict, primary, secondary, tertiary, gg] = match state.status.verdict() {
        Some(v) => verdict_columns(&v),
        None => Default::default(),
    };
    let rounds = state.history.last().map_or(0, |h| h.0);
    vec![
        state.case_id.clone(),
        state.status.name().to_string(),
        verdict,
        primary,
        secondary,
        tertiary,
        gg,
        rounds.to_string(),
    ]
}

/// Per-row field access with line-numbered errors.
struct Fields<'a> {
    table: &'a Table,
    line: u64,
    record: &'a csv::StringRecord,
}

impl<'a> Fields<'a> {
    fn get(&self, column: &str) -> Result<&'a str, ReportError> {
        let i = self.table.column(column)?;
        Ok(self.record.get(i).unwrap_or("").trim())
    }

    fn err(&self, message: impl Into<String>) -> ReportError {
        ReportError::row(&self.table.path, self.line, message)
    }

    fn grade(&self, column: &str) -> Result<Option<u8>, ReportError> {
        match self.get(column)? {
            "" => Ok(None),
            s => match s.parse::<u8>() {
                Ok(g @ 3..=5) => Ok(Some(g)),
                _ => Err(self.err(format!("{column}: {s:?} is not a Gleason grade"))),
            },
        }
    }

    /// Verdict from `verdict`, `primary`, `secondary`, `tertiary` and,
    /// when present, a `grade_group` that must agree with the score.
    fn verdict(&self) -> Result<Option<Verdict>, ReportError> {
        let kind = self.get("verdict")?;
        let (p, s, t) = (self.grade("primary")?, self.grade("secondary")?, self.grade("tertiary")?);
        let gg = self.get("grade_group")?;
        match kind {
            "benign" => {
                if p.is_some() || s.is_some() || t.is_some() || !matches!(gg, "" | "0") {
                    return Err(self.err("benign verdict with grades"));
                }
                Ok(Some(Verdict::Benign))
            }
            "malignant" => {
                let (p, s) = match (p, s) {
                    (Some(p), Some(s)) => (p, s),
                    _ => return Err(self.err("malignant verdict needs primary and secondary")),
                };
                let score = GleasonScore::new(p, s, t).map_err(|e| self.err(e.to_string()))?;
                let v = Verdict::malignant(score);
                if !gg.is_empty() {
                    let expected = v.category().to_string();
                    if gg != expected {
                        return Err(self.err(format!("grade_group {gg} does not match score {score} (GG{expected})")));
                    }
                }
                Ok(Some(v))
            }
            "ungradeable" | "error" | "" => Ok(None),
            other => Err(self.err(format!("unknown verdict {other:?}"))),
        }
    }
}

fn rows(table: &Table) -> impl Iterator<Item = Fields<'_>> {
    table.rows.iter().map(move |(line, record)| Fields { table, line: *line, record })
}

fn check_columns(table: &Table, required: &[&str]) -> Result<(), ReportError> {
    for c in required {
        table.column(c)?;
    }
    Ok(())
}

fn check_unique(table: &Table, seen: &mut BTreeSet<String>, key: String, line: u64) -> Result<(), ReportError> {
    if !seen.insert(key.clone()) {
        return Err(ReportError::row(&table.path, line, format!("duplicate entry {key}")));
    }
    Ok(())
}

pub fn read_reads(path: &Path) -> Result<Vec<Read>, ReportError> {
    let table = read_table(path, &[READS])?;
    check_columns(&table, &READS_HEADER)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for f in rows(&table) {
        let case_id = f.get("case_id")?.to_string();
        let reader_id = f.get("reader_id")?.to_string();
        if case_id.is_empty() || reader_id.is_empty() {
            return Err(f.err("case_id and reader_id are required"));
        }
        let round = match f.get("round")?.parse::<u8>() {
            Ok(r @ 1..=3) => r,
            _ => return Err(f.err(format!("round {:?} is not 1, 2 or 3", f.get("round")?))),
        };
        check_unique(&table, &mut seen, format!("{case_id}/{reader_id}/round {round}"), f.line)?;
        let mut flags = BTreeSet::new();
        for flag in f.get("flags")?.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            match flag {
                "ungradeable" => flags.insert(ReadFlag::Ungradeable),
                other => return Err(f.err(format!("unknown flag {other:?}"))),
            };
        }
        let verdict = match f.verdict()? {
            Some(v) => v,
            // a read flagged ungradeable may omit its verdict
            None if !flags.is_empty() => Verdict::Benign,
            None => return Err(f.err("read has no verdict")),
        };
        let tumor_volume_estimate = match f.get("tumor_volume_pct")? {
            "" => None,
            s => {
                let v = parse_f64(s).map_err(|e| f.err(e))?;
                if !(0.0..=100.0).contains(&v) {
                    return Err(f.err(format!("tumor_volume_pct {s} outside [0, 100]")));
                }
                Some(v / 100.0)
            }
        };
        out.push(Read { case_id, reader_id, round, verdict, tumor_volume_estimate, flags });
    }
    Ok(out)
}

pub fn read_ihc(path: &Path) -> Result<Vec<IhcRecord>, ReportError> {
    let table = read_table(path, &[IHC])?;
    check_columns(&table, &["case_id", "verdict"])?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for f in rows(&table) {
        let case_id = f.get("case_id")?.to_string();
        check_unique(&table, &mut seen, case_id.clone(), f.line)?;
        let verdict = match f.get("verdict")? {
            "benign" => IhcVerdict::Benign,
            "malignant" => IhcVerdict::Malignant,
            other => return Err(f.err(format!("unknown ihc verdict {other:?}"))),
        };
        out.push(IhcRecord { case_id, verdict });
    }
    Ok(out)
}

/// One graded case from a diagnoses table.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub verdict: Option<Verdict>,
    pub malignancy_score: Option<f64>,
    pub aggressiveness_score: Option<f64>,
}

pub fn read_diagnoses(path: &Path) -> Result<BTreeMap<String, Prediction>, ReportError> {
    let table = read_table(path, &[DIAGNOSES])?;
    check_columns(&table, &DIAGNOSES_HEADER)?;
    diagnoses_from(&table)
}

fn diagnoses_from(table: &Table) -> Result<BTreeMap<String, Prediction>, ReportError> {
    let mut out = BTreeMap::new();
    for f in rows(table) {
        let case_id = f.get("case_id")?.to_string();
        let score = |c: &str| -> Result<Option<f64>, ReportError> {
            match f.get(c)? {
                "" => Ok(None),
                s => parse_f64(s).map(Some).map_err(|e| f.err(e)),
            }
        };
        let p = Prediction {
            verdict: f.verdict()?,
            malignancy_score: score("malignancy_score")?,
            aggressiveness_score: score("aggressiveness_score")?,
        };
        if out.insert(case_id.clone(), p).is_some() {
            return Err(f.err(format!("duplicate case {case_id}")));
        }
    }
    Ok(out)
}

/// Reference verdicts from a consensus reference table or a diagnoses
/// table. Cases without a verdict (excluded, ungradeable) are left out.
pub fn read_reference(path: &Path) -> Result<BTreeMap<String, Verdict>, ReportError> {
    let table = read_table(path, &[REFERENCE, DIAGNOSES])?;
    let with_verdicts: BTreeMap<String, Option<Verdict>> = if table.schema == REFERENCE {
        check_columns(&table, &REFERENCE_HEADER)?;
        let mut out = BTreeMap::new();
        for f in rows(&table) {
            let case_id = f.get("case_id")?.to_string();
            let status = f.get("status")?;
            if !CaseStatus::NAMES.contains(&status) {
                return Err(f.err(format!("unknown status {status:?}")));
            }
            if out.insert(case_id.clone(), f.verdict()?).is_some() {
                return Err(f.err(format!("duplicate case {case_id}")));
            }
        }
        out
    } else {
        check_columns(&table, &DIAGNOSES_HEADER)?;
        diagnoses_from(&table)?.into_iter().map(|(k, p)| (k, p.verdict)).collect()
    };
    Ok(with_verdicts.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::{diagnose, ThresholdProfile, VolumeProfile};
    use crate::report::write_table;

    fn reads_file(body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reads.csv");
        std::fs::write(&path, format!("# schema=reads/1\n{}\n{body}", READS_HEADER.join(","))).unwrap();
        (dir, path)
    }

    #[test]
    fn reads_parse_flags_and_volume() {
        let (_d, p) = reads_file("a,r1,1,malignant,4,3,5,3,40,\na,r2,1,,,,,,,ungradeable\n");
        let reads = read_reads(&p).unwrap();
        assert_eq!(reads[0].verdict, Verdict::malignant(GleasonScore::new(4, 3, Some(5)).unwrap()));
        assert_eq!(reads[0].tumor_volume_estimate, Some(0.4));
        assert!(reads[1].flags.contains(&ReadFlag::Ungradeable));
    }

    #[test]
    fn read_errors_carry_line_numbers() {
        let cases = [
            ("a,r1,1,malignant,3,4,,3,,\n", "grade_group 3"),
            ("a,r1,4,benign,,,,,,\n", "round"),
            ("a,r1,1,malignant,3,,,,,\n", "primary and secondary"),
            ("a,r1,1,benign,,,,,120,\n", "outside"),
            ("a,r1,1,benign,,,,,,\na,r1,1,benign,,,,,,\n", "duplicate"),
        ];
        for (body, needle) in cases {
            let (_d, p) = reads_file(body);
            let e = read_reads(&p).unwrap_err().to_string();
            assert!(e.contains(needle), "{e}");
            assert!(e.contains(":3:") || e.contains(":4:"), "{e}");
        }
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ihc.csv");
        std::fs::write(&p, "# schema=ihc/2\ncase_id,verdict\na,benign\n").unwrap();
        assert!(matches!(read_ihc(&p), Err(ReportError::WrongSchema { .. })));
    }

    #[test]
    fn diagnoses_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let d = diagnose(&VolumeProfile::new(0.2, 0.5, 0.3, 0.0).unwrap(), &ThresholdProfile::biopsy());
        let rows = vec![diagnosis_row("x", &d), failed_row("y", "error", "bad header")];
        write_table(&p, DIAGNOSES, &DIAGNOSES_HEADER, rows).unwrap();
        let back = read_diagnoses(&p).unwrap();
        assert_eq!(back["x"].verdict, Some(d.verdict));
        assert_eq!(back["x"].malignancy_score, Some(d.risk_scores.malignancy_score));
        assert_eq!(back["y"].verdict, None);
        let reference = read_reference(&p).unwrap();
        assert_eq!(reference.len(), 1);
    }
}
