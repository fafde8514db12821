//! Three-round consensus over recorded reads.
//!
//! Round 1 applies the agreement rules to three independent reads. A single
//! dissenting reader re-grades in round 2, after which the rules are applied
//! again. Cases still without consensus are settled by a panel in round 3.
//! Scores are compared on (primary, secondary); tertiary patterns are carried
//! along but never decide agreement.

use crate::grading::Verdict;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("case {case}: expected 3 round-1 reads, got {got}")]
    WrongReadCount { case: String, got: usize },
    #[error("case {case}: reader {reader} appears twice in round {round}")]
    DuplicateReader { case: String, reader: String, round: u8 },
    #[error("read for case {got} given to case {expected}")]
    CaseMismatch { expected: String, got: String },
    #[error("case {case}: expected a round-{expected} read, got round {got}")]
    WrongRound { case: String, expected: u8, got: u8 },
    #[error("case {case}: round-2 read must come from {expected}, got {got}")]
    WrongReader { case: String, expected: String, got: String },
    #[error("case {case}: operation not allowed in state {status}")]
    WrongState { case: String, status: String },
    #[error("case {case}: reader {reader} set a flag after round 1")]
    LateFlag { case: String, reader: String },
    #[error("case {case}: no round-{round} read")]
    MissingRead { case: String, round: u8 },
    #[error("case {case}: unexpected round-{round} read from {reader}")]
    UnexpectedRead { case: String, round: u8, reader: String },
    #[error("case {0}: more than one immunohistochemistry record")]
    DuplicateIhc(String),
    #[error("immunohistochemistry record for unknown case {0}")]
    UnknownIhcCase(String),
    #[error("case {case}: invalid tumor volume estimate {value}")]
    InvalidVolume { case: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReadFlag {
    Ungradeable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Read {
    pub case_id: String,
    pub reader_id: String,
    pub round: u8,
    pub verdict: Verdict,
    pub tumor_volume_estimate: Option<f64>,
    pub flags: BTreeSet<ReadFlag>,
}

impl Read {
    pub fn new(case_id: &str, reader_id: &str, round: u8, verdict: Verdict) -> Self {
        Read {
            case_id: case_id.to_string(),
            reader_id: reader_id.to_string(),
            round,
            verdict,
            tumor_volume_estimate: None,
            flags: BTreeSet::new(),
        }
    }

    pub fn flagged(mut self, flag: ReadFlag) -> Self {
        self.flags.insert(flag);
        self
    }

    fn pair(&self) -> Option<(u8, u8)> {
        self.verdict.score().map(|s| s.pattern_pair())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IhcVerdict {
    Benign,
    Malignant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IhcRecord {
    pub case_id: String,
    pub verdict: IhcVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CaseStatus {
    ConsensusFull(Verdict),
    ConsensusMajority(Verdict),
    NeedsRound2 { dissenter: String },
    NeedsMeeting,
    Excluded,
    Final(Verdict),
}

impl CaseStatus {
    /// Routing labels, in reporting order.
    pub const NAMES: [&'static str; 6] =
        ["consensus_full", "consensus_majority", "needs_round2", "needs_meeting", "excluded", "final"];

    pub fn name(&self) -> &'static str {
        match self {
            CaseStatus::ConsensusFull(_) => Self::NAMES[0],
            CaseStatus::ConsensusMajority(_) => Self::NAMES[1],
            CaseStatus::NeedsRound2 { .. } => Self::NAMES[2],
            CaseStatus::NeedsMeeting => Self::NAMES[3],
            CaseStatus::Excluded => Self::NAMES[4],
            CaseStatus::Final(_) => Self::NAMES[5],
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, CaseStatus::NeedsRound2 { .. } | CaseStatus::NeedsMeeting)
    }

    /// Reference verdict of a settled case; `None` while open or excluded.
    pub fn verdict(&self) -> Option<Verdict> {
        match self {
            CaseStatus::ConsensusFull(v) | CaseStatus::ConsensusMajority(v) | CaseStatus::Final(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for CaseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseStatus::NeedsRound2 { dissenter } => write!(f, "needs_round2({dissenter})"),
            s => f.write_str(s.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseState {
    pub case_id: String,
    pub status: CaseStatus,
    /// (round, status after that round), append-only.
    pub history: Vec<(u8, CaseStatus)>,
    /// Current read per reader, ordered by reader id.
    pub reads: Vec<Read>,
    pub ihc: Option<IhcVerdict>,
}

fn check_case(case: &str, read: &Read) -> Result<(), ConsensusError> {
    if read.case_id != case {
        return Err(ConsensusError::CaseMismatch { expected: case.to_string(), got: read.case_id.clone() });
    }
    if let Some(v) = read.tumor_volume_estimate {
        if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
            return Err(ConsensusError::InvalidVolume { case: case.to_string(), value: v.to_string() });
        }
    }
    Ok(())
}

fn check_round(case: &str, read: &Read, round: u8) -> Result<(), ConsensusError> {
    check_case(case, read)?;
    if read.round != round {
        return Err(ConsensusError::WrongRound { case: case.to_string(), expected: round, got: read.round });
    }
    if round > 1 && !read.flags.is_empty() {
        return Err(ConsensusError::LateFlag { case: case.to_string(), reader: read.reader_id.clone() });
    }
    Ok(())
}

/// The agreement rules over three reads ordered by reader id.
fn decide(reads: &[Read], ihc: Option<IhcVerdict>) -> CaseStatus {
    debug_assert_eq!(reads.len(), 3);
    if reads.iter().any(|r| r.flags.contains(&ReadFlag::Ungradeable)) {
        return CaseStatus::Excluded;
    }
    let round2 = |r: &Read| CaseStatus::NeedsRound2 { dissenter: r.reader_id.clone() };

    let malignant = reads.iter().filter(|r| r.verdict.is_malignant()).count();
    match ihc {
        Some(label) => {
            let truth = label == IhcVerdict::Malignant;
            let dissent: Vec<&Read> = reads.iter().filter(|r| r.verdict.is_malignant() != truth).collect();
            match dissent.len() {
                0 => {}
                1 => return round2(dissent[0]),
                _ => return CaseStatus::NeedsMeeting,
            }
        }
        None if malignant == 1 => {
            return round2(reads.iter().find(|r| r.verdict.is_malignant()).expect("one malignant read"))
        }
        None if malignant == 2 => {
            return round2(reads.iter().find(|r| !r.verdict.is_malignant()).expect("one benign read"))
        }
        None => {}
    }
    if malignant == 0 {
        return CaseStatus::ConsensusFull(Verdict::Benign);
    }

    let gg: Vec<u8> = reads.iter().map(|r| r.verdict.category()).collect();
    if gg[0] == gg[1] && gg[1] == gg[2] {
        let pairs: Vec<Option<(u8, u8)>> = reads.iter().map(Read::pair).collect();
        if pairs[0] == pairs[1] && pairs[1] == pairs[2] {
            return CaseStatus::ConsensusFull(reads[0].verdict);
        }
        // modal score among the three, if any
        return match reads.iter().position(|r| pairs.iter().filter(|p| **p == r.pair()).count() == 2) {
            Some(i) => CaseStatus::ConsensusMajority(reads[i].verdict),
            None => CaseStatus::NeedsMeeting,
        };
    }
    for (i, j, d) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)] {
        if gg[i] != gg[j] {
            continue;
        }
        if reads[i].pair() != reads[j].pair() {
            return round2(&reads[d]);
        }
        return if gg[d].abs_diff(gg[i]) == 1 {
            CaseStatus::ConsensusMajority(reads[i].verdict)
        } else {
            round2(&reads[d])
        };
    }
    CaseStatus::NeedsMeeting
}

pub fn round1(reads: &[Read], ihc: Option<&IhcRecord>) -> Result<CaseState, ConsensusError> {
    let case = match reads.first() {
        Some(r) => r.case_id.clone(),
        None => return Err(ConsensusError::WrongReadCount { case: String::new(), got: 0 }),
    };
    if reads.len() != 3 {
        return Err(ConsensusError::WrongReadCount { case, got: reads.len() });
    }
    for r in reads {
        check_round(&case, r, 1)?;
    }
    if let Some(rec) = ihc {
        if rec.case_id != case {
            return Err(ConsensusError::CaseMismatch { expected: case, got: rec.case_id.clone() });
        }
    }
    let mut reads = reads.to_vec();
    reads.sort_by(|a, b| a.reader_id.cmp(&b.reader_id));
    if let Some(w) = reads.windows(2).find(|w| w[0].reader_id == w[1].reader_id) {
        return Err(ConsensusError::DuplicateReader { case, reader: w[0].reader_id.clone(), round: 1 });
    }
    let ihc = ihc.map(|r| r.verdict);
    let status = decide(&reads, ihc);
    Ok(CaseState { case_id: case, history: vec![(1, status.clone())], status, reads, ihc })
}

pub fn round2(state: &CaseState, updated: &Read) -> Result<CaseState, ConsensusError> {
    let dissenter = match &state.status {
        CaseStatus::NeedsRound2 { dissenter } => dissenter,
        s => return Err(ConsensusError::WrongState { case: state.case_id.clone(), status: s.to_string() }),
    };
    check_round(&state.case_id, updated, 2)?;
    if &updated.reader_id != dissenter {
        return Err(ConsensusError::WrongReader {
            case: state.case_id.clone(),
            expected: dissenter.clone(),
            got: updated.reader_id.clone(),
        });
    }
    let mut next = state.clone();
    for r in next.reads.iter_mut().filter(|r| &r.reader_id == dissenter) {
        *r = updated.clone();
    }
    next.status = match decide(&next.reads, next.ihc) {
        CaseStatus::ConsensusFull(v) | CaseStatus::ConsensusMajority(v) => CaseStatus::ConsensusMajority(v),
        _ => CaseStatus::NeedsMeeting,
    };
    next.history.push((2, next.status.clone()));
    Ok(next)
}

pub fn round3(state: &CaseState, adjudication: &Read) -> Result<CaseState, ConsensusError> {
    if state.status != CaseStatus::NeedsMeeting {
        return Err(ConsensusError::WrongState { case: state.case_id.clone(), status: state.status.to_string() });
    }
    check_round(&state.case_id, adjudication, 3)?;
    let mut next = state.clone();
    next.status = CaseStatus::Final(adjudication.verdict);
    next.history.push((3, next.status.clone()));
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingRow {
    pub round: u8,
    pub status: &'static str,
    pub count: usize,
    /// Share of all cases, in percent.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolOutcome {
    /// One state per case, ordered by case id.
    pub cases: Vec<CaseState>,
    pub routing: Vec<RoutingRow>,
}

impl ProtocolOutcome {
    /// Settled reference verdicts; excluded cases are absent.
    pub fn reference(&self) -> BTreeMap<String, Verdict> {
        self.cases.iter().filter_map(|c| c.status.verdict().map(|v| (c.case_id.clone(), v))).collect()
    }

    pub fn count(&self, round: u8, status: &str) -> usize {
        self.routing.iter().find(|r| r.round == round && r.status == status).map_or(0, |r| r.count)
    }
}

fn routing_table(cases: &[CaseState]) -> Vec<RoutingRow> {
    let mut rows = Vec::new();
    for round in 1..=3u8 {
        for name in CaseStatus::NAMES {
            let count = cases.iter().filter(|c| c.history.iter().any(|(r, s)| *r == round && s.name() == name)).count();
            if count > 0 {
                rows.push(RoutingRow {
                    round,
                    status: name,
                    count,
                    percent: 100.0 * count as f64 / cases.len() as f64,
                });
            }
        }
    }
    rows
}

/// Drives every case to a terminal state using the recorded reads of all
/// rounds. Reads of a round a case never reaches are rejected.
pub fn run_protocol(reads: &[Read], ihc: &[IhcRecord]) -> Result<ProtocolOutcome, ConsensusError> {
    drive(reads, ihc, true)
}

/// Like [`run_protocol`] but cases whose next-round read is not recorded
/// yet stay open (`NeedsRound2` or `NeedsMeeting`) instead of failing.
pub fn run_available(reads: &[Read], ihc: &[IhcRecord]) -> Result<ProtocolOutcome, ConsensusError> {
    drive(reads, ihc, false)
}

fn drive(reads: &[Read], ihc: &[IhcRecord], complete: bool) -> Result<ProtocolOutcome, ConsensusError> {
    let mut by_case: BTreeMap<&str, [Vec<&Read>; 3]> = BTreeMap::new();
    for r in reads {
        let slot = match r.round {
            1..=3 => r.round as usize - 1,
            got => return Err(ConsensusError::WrongRound { case: r.case_id.clone(), expected: 1, got }),
        };
        by_case.entry(&r.case_id).or_default()[slot].push(r);
    }
    let mut ihc_by_case: BTreeMap<&str, &IhcRecord> = BTreeMap::new();
    for rec in ihc {
        if !by_case.contains_key(rec.case_id.as_str()) {
            return Err(ConsensusError::UnknownIhcCase(rec.case_id.clone()));
        }
        if ihc_by_case.insert(&rec.case_id, rec).is_some() {
            return Err(ConsensusError::DuplicateIhc(rec.case_id.clone()));
        }
    }

    let mut cases = Vec::with_capacity(by_case.len());
    for (case, [r1, r2, r3]) in by_case {
        let first: Vec<Read> = r1.into_iter().cloned().collect();
        if first.is_empty() {
            return Err(ConsensusError::WrongReadCount { case: case.to_string(), got: 0 });
        }
        let mut state = round1(&first, ihc_by_case.get(case).copied())?;
        for (round, later) in [(2u8, &r2), (3u8, &r3)] {
            let wanted =
                matches!((round, &state.status), (2, CaseStatus::NeedsRound2 { .. }) | (3, CaseStatus::NeedsMeeting));
            match (wanted, later.as_slice()) {
                (true, [read]) => {
                    state = if round == 2 { round2(&state, read)? } else { round3(&state, read)? };
                }
                (true, []) if complete => return Err(ConsensusError::MissingRead { case: case.to_string(), round }),
                (true, []) => {}
                (true, [_, extra, ..]) if round == 3 => {
                    return Err(ConsensusError::UnexpectedRead {
                        case: case.to_string(),
                        round,
                        reader: extra.reader_id.clone(),
                    })
                }
                (true, many) => {
                    // several round-2 reads: only the dissenter's is admissible
                    let dissenter = match &state.status {
                        CaseStatus::NeedsRound2 { dissenter } => dissenter.clone(),
                        _ => unreachable!("round 2 requires a dissenter"),
                    };
                    let other = many.iter().find(|r| r.reader_id != dissenter).unwrap_or(&many[1]);
                    return Err(ConsensusError::UnexpectedRead {
                        case: case.to_string(),
                        round,
                        reader: other.reader_id.clone(),
                    });
                }
                (false, []) => {}
                (false, [read, ..]) => {
                    return Err(ConsensusError::UnexpectedRead {
                        case: case.to_string(),
                        round,
                        reader: read.reader_id.clone(),
                    })
                }
            }
        }
        debug_assert!(!complete || state.status.is_terminal());
        cases.push(state);
    }
    let routing = routing_table(&cases);
    Ok(ProtocolOutcome { cases, routing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::GleasonScore;
    use proptest::prelude::*;

    fn v(p: u8, s: u8) -> Verdict {
        Verdict::malignant(GleasonScore::new(p, s, None).unwrap())
    }

    fn three(verdicts: [Verdict; 3]) -> Vec<Read> {
        ["r1", "r2", "r3"].iter().zip(verdicts).map(|(id, vd)| Read::new("c", id, 1, vd)).collect()
    }

    fn r2(d: &str) -> CaseStatus {
        CaseStatus::NeedsRound2 { dissenter: d.to_string() }
    }

    #[test]
    fn full_consensus() {
        let s = round1(&three([v(3, 4); 3]), None).unwrap();
        assert_eq!(s.status, CaseStatus::ConsensusFull(v(3, 4)));
    }

    #[test]
    fn pattern_order_majority() {
        let s = round1(&three([v(4, 5), v(5, 4), v(4, 5)]), None).unwrap();
        assert_eq!(s.status, CaseStatus::ConsensusMajority(v(4, 5)));
    }

    #[test]
    fn one_group_deviation_majority() {
        let s = round1(&three([v(3, 4), v(3, 4), v(4, 3)]), None).unwrap();
        assert_eq!(s.status, CaseStatus::ConsensusMajority(v(3, 4)));
    }

    #[test]
    fn benign_malignant_disagreement() {
        let s = round1(&three([Verdict::Benign, v(3, 3), v(3, 3)]), None).unwrap();
        assert_eq!(s.status, r2("r1"));
        let s = round1(&three([Verdict::Benign, v(3, 3), Verdict::Benign]), None).unwrap();
        assert_eq!(s.status, r2("r2"));
    }

    #[test]
    fn ihc_picks_dissenters() {
        let ihc = IhcRecord { case_id: "c".into(), verdict: IhcVerdict::Benign };
        let s = round1(&three([Verdict::Benign, v(3, 3), v(3, 3)]), Some(&ihc)).unwrap();
        assert_eq!(s.status, CaseStatus::NeedsMeeting);
        let s = round1(&three([Verdict::Benign, Verdict::Benign, v(3, 3)]), Some(&ihc)).unwrap();
        assert_eq!(s.status, r2("r3"));
        let ihc = IhcRecord { case_id: "c".into(), verdict: IhcVerdict::Malignant };
        let s = round1(&three([v(3, 4), v(3, 4), v(3, 4)]), Some(&ihc)).unwrap();
        assert_eq!(s.status, CaseStatus::ConsensusFull(v(3, 4)));
    }

    #[test]
    fn total_disagreement_goes_to_meeting() {
        let s = round1(&three([v(3, 3), v(4, 3), v(4, 5)]), None).unwrap();
        assert_eq!(s.status, CaseStatus::NeedsMeeting);
        let s = round1(&three([v(4, 4), v(3, 5), v(5, 3)]), None).unwrap();
        assert_eq!(s.status, CaseStatus::NeedsMeeting);
    }

    #[test]
    fn wide_deviation_and_split_pair() {
        let s = round1(&three([v(3, 3), v(3, 3), v(4, 4)]), None).unwrap();
        assert_eq!(s.status, r2("r3"));
        let s = round1(&three([v(4, 4), v(3, 5), v(4, 5)]), None).unwrap();
        assert_eq!(s.status, r2("r3"));
    }

    #[test]
    fn ungradeable_excludes() {
        let mut reads = three([v(3, 4); 3]);
        reads[1] = reads[1].clone().flagged(ReadFlag::Ungradeable);
        assert_eq!(round1(&reads, None).unwrap().status, CaseStatus::Excluded);
    }

    #[test]
    fn read_count_and_duplicates() {
        let reads = three([v(3, 4); 3]);
        assert!(matches!(round1(&reads[..2], None), Err(ConsensusError::WrongReadCount { got: 2, .. })));
        let mut dup = reads.clone();
        dup[2].reader_id = "r1".into();
        assert!(matches!(round1(&dup, None), Err(ConsensusError::DuplicateReader { .. })));
    }

    #[test]
    fn round2_paths() {
        let s = round1(&three([v(3, 4), v(3, 4), v(4, 4)]), None).unwrap();
        assert_eq!(s.status, r2("r3"));
        let joined = round2(&s, &Read::new("c", "r3", 2, v(3, 4))).unwrap();
        assert_eq!(joined.status, CaseStatus::ConsensusMajority(v(3, 4)));
        assert_eq!(joined.history.len(), 2);
        let stuck = round2(&s, &Read::new("c", "r3", 2, v(4, 4))).unwrap();
        assert_eq!(stuck.status, CaseStatus::NeedsMeeting);
        assert!(matches!(round2(&s, &Read::new("c", "r1", 2, v(3, 4))), Err(ConsensusError::WrongReader { .. })));
        let flagged = Read::new("c", "r3", 2, v(3, 4)).flagged(ReadFlag::Ungradeable);
        assert!(matches!(round2(&s, &flagged), Err(ConsensusError::LateFlag { .. })));
        let full = round1(&three([v(3, 4); 3]), None).unwrap();
        assert!(matches!(round2(&full, &Read::new("c", "r3", 2, v(3, 4))), Err(ConsensusError::WrongState { .. })));
    }

    #[test]
    fn round3_paths() {
        let s = round1(&three([v(3, 3), v(4, 3), v(4, 5)]), None).unwrap();
        let f = round3(&s, &Read::new("c", "panel", 3, v(4, 4))).unwrap();
        assert_eq!(f.status, CaseStatus::Final(v(4, 4)));
        assert_eq!(f.status.verdict().unwrap().category(), 4);
        let full = round1(&three([v(3, 4); 3]), None).unwrap();
        assert!(matches!(round3(&full, &Read::new("c", "p", 3, v(4, 4))), Err(ConsensusError::WrongState { .. })));
        let mut reads = three([v(3, 4); 3]);
        reads[0].flags.insert(ReadFlag::Ungradeable);
        let ex = round1(&reads, None).unwrap();
        assert!(matches!(round3(&ex, &Read::new("c", "p", 3, v(4, 4))), Err(ConsensusError::WrongState { .. })));
    }

    #[test]
    fn protocol_rejects_stray_reads() {
        let mut reads = three([v(3, 4); 3]);
        reads.push(Read::new("c", "r1", 2, v(3, 4)));
        assert!(matches!(run_protocol(&reads, &[]), Err(ConsensusError::UnexpectedRead { round: 2, .. })));
        let reads = three([v(3, 4), v(3, 4), v(5, 5)]);
        assert!(matches!(run_protocol(&reads, &[]), Err(ConsensusError::MissingRead { round: 2, .. })));
    }

    #[test]
    fn incomplete_reads_leave_cases_open() {
        let mut reads = three([v(3, 4), v(3, 4), v(5, 5)]);
        for r in three([v(3, 3), v(4, 3), v(4, 5)]) {
            reads.push(Read { case_id: "d".into(), ..r });
        }
        let out = run_available(&reads, &[]).unwrap();
        assert_eq!(out.cases[0].status, r2("r3"));
        assert_eq!(out.cases[1].status, CaseStatus::NeedsMeeting);
        assert!(out.reference().is_empty());
        // a round-3 read for a case still waiting on round 2 is stray
        reads.push(Read::new("c", "panel", 3, v(4, 4)));
        assert!(matches!(run_available(&reads, &[]), Err(ConsensusError::UnexpectedRead { round: 3, .. })));
    }

    #[test]
    fn protocol_all_agree_and_all_flagged() {
        let mut reads = Vec::new();
        for c in 0..5 {
            for r in ["a", "b", "c"] {
                reads.push(Read::new(&format!("case{c}"), r, 1, v(4, 3)));
            }
        }
        let out = run_protocol(&reads, &[]).unwrap();
        assert_eq!(out.count(1, "consensus_full"), 5);
        assert_eq!(out.routing.len(), 1);
        assert_eq!(out.routing[0].percent, 100.0);
        let flagged: Vec<Read> = reads.into_iter().map(|r| r.flagged(ReadFlag::Ungradeable)).collect();
        let out = run_protocol(&flagged, &[]).unwrap();
        assert_eq!(out.count(1, "excluded"), 5);
        assert!(out.reference().is_empty());
    }

    fn any_verdict() -> impl Strategy<Value = Verdict> {
        prop_oneof![
            1 => Just(Verdict::Benign),
            4 => (3u8..=5, 3u8..=5).prop_map(|(p, s)| v(p, s)),
        ]
    }

    fn any_ihc() -> impl Strategy<Value = Option<IhcVerdict>> {
        prop_oneof![Just(None), Just(Some(IhcVerdict::Benign)), Just(Some(IhcVerdict::Malignant))]
    }

    proptest! {
        #[test]
        fn protocol_terminates(
            first in proptest::array::uniform3(any_verdict()),
            update in any_verdict(),
            meeting in any_verdict(),
            ihc in any_ihc(),
            flag in proptest::option::of(0usize..3),
        ) {
            let mut reads = three(first);
            if let Some(i) = flag {
                reads[i].flags.insert(ReadFlag::Ungradeable);
            }
            let rec = ihc.map(|verdict| IhcRecord { case_id: "c".into(), verdict });
            let s1 = round1(&reads, rec.as_ref()).unwrap();
            prop_assert_eq!(&round1(&reads, rec.as_ref()).unwrap(), &s1);
            let mut all = reads.clone();
            if let CaseStatus::NeedsRound2 { dissenter } = &s1.status {
                let s2 = round2(&s1, &Read::new("c", dissenter, 2, update)).unwrap();
                // non-dissenting reads untouched
                for (a, b) in s1.reads.iter().zip(&s2.reads) {
                    if &a.reader_id != dissenter {
                        prop_assert_eq!(a, b);
                    }
                }
                all.push(Read::new("c", dissenter, 2, update));
                if s2.status == CaseStatus::NeedsMeeting {
                    all.push(Read::new("c", "panel", 3, meeting));
                }
            } else if s1.status == CaseStatus::NeedsMeeting {
                all.push(Read::new("c", "panel", 3, meeting));
            }
            let recs: Vec<IhcRecord> = rec.into_iter().collect();
            let out = run_protocol(&all, &recs).unwrap();
            prop_assert_eq!(out.cases.len(), 1);
            let state = &out.cases[0];
            prop_assert!(state.status.is_terminal());
            prop_assert!(state.history.len() <= 3);
            prop_assert_eq!(&state.history.last().unwrap().1, &state.status);
            if let CaseStatus::ConsensusMajority(verdict) = &state.status {
                let again = decide(&state.reads, state.ihc);
                prop_assert_eq!(again.verdict(), Some(*verdict));
            }
        }
    }
}
