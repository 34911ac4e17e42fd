//! Multi-talker word error rate.
//!
//! Reference and hypothesis words are aligned as single time-ordered
//! sequences, ignoring speakers. Among minimum-edit alignments the one with
//! the fewest speaker-mismatched pairs is chosen. Errors are then charged
//! per role: deletions, substitutions and attribution errors to the
//! reference word's role, insertions to the hypothesis word's role.

use num_rational::Ratio;
use thiserror::Error;

use crate::model::{SpeakerRole, Word};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("alignment refers to word {index} outside a list of {len}")]
    MismatchedAlignment { index: usize, len: usize },
    #[error("reference has no words")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlignOp {
    Match { r: usize, h: usize },
    Sub { r: usize, h: usize },
    Ins { h: usize },
    Del { r: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
}

impl Alignment {
    /// Number of substitutions, insertions and deletions.
    pub fn edit_cost(&self) -> usize {
        self.ops.iter().filter(|op| !matches!(op, AlignOp::Match { .. })).count()
    }

    /// Number of paired words (match or substitution) whose roles differ.
    pub fn attribution_mismatches(&self, reference: &[Word], hypothesis: &[Word]) -> usize {
        self.ops
            .iter()
            .filter(|op| match op {
                AlignOp::Match { r, h } | AlignOp::Sub { r, h } => reference[*r].role != hypothesis[*h].role,
                _ => false,
            })
            .count()
    }
}

#[derive(Clone, Copy)]
enum Step {
    Diag,
    Up,
    Left,
}

/// Minimum-edit alignment with attribution mismatches as a secondary cost.
///
/// The composite cost is `edits * K + mismatches` with `K` larger than the
/// total word count, so edits always dominate.
pub fn align_words(reference: &[Word], hypothesis: &[Word]) -> Alignment {
    let n = reference.len();
    let m = hypothesis.len();
    let k = (n + m + 1) as u64;
    let width = m + 1;
    let mut cost = vec![0u64; (n + 1) * width];
    let mut back = vec![Step::Diag; (n + 1) * width];
    for i in 1..=n {
        cost[i * width] = i as u64 * k;
        back[i * width] = Step::Up;
    }
    for j in 1..=m {
        cost[j] = j as u64 * k;
        back[j] = Step::Left;
    }
    for i in 1..=n {
        let rw = &reference[i - 1];
        for j in 1..=m {
            let hw = &hypothesis[j - 1];
            let edit = if rw.text() == hw.text() { 0 } else { k };
            let attr = u64::from(rw.role != hw.role);
            // Preference order on ties: deletion, insertion, diagonal. Read
            // backwards from the end, this places gaps as late as possible.
            let mut best = (cost[(i - 1) * width + j] + k, Step::Up);
            let ins = cost[i * width + j - 1] + k;
            if ins < best.0 {
                best = (ins, Step::Left);
            }
            let diag = cost[(i - 1) * width + j - 1] + edit + attr;
            if diag < best.0 {
                best = (diag, Step::Diag);
            }
            cost[i * width + j] = best.0;
            back[i * width + j] = best.1;
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match back[i * width + j] {
            Step::Diag => {
                let (r, h) = (i - 1, j - 1);
                ops.push(if reference[r].text() == hypothesis[h].text() {
                    AlignOp::Match { r, h }
                } else {
                    AlignOp::Sub { r, h }
                });
                i -= 1;
                j -= 1;
            }
            Step::Up => {
                ops.push(AlignOp::Del { r: i - 1 });
                i -= 1;
            }
            Step::Left => {
                ops.push(AlignOp::Ins { h: j - 1 });
                j -= 1;
            }
        }
    }
    ops.reverse();
    Alignment { ops }
}

/// Error tallies for one role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorCounts {
    pub ins: u64,
    pub del: u64,
    pub sub: u64,
    pub attr: u64,
    pub nref: u64,
}

impl std::ops::AddAssign for ErrorCounts {
    fn add_assign(&mut self, o: Self) {
        self.ins += o.ins;
        self.del += o.del;
        self.sub += o.sub;
        self.attr += o.attr;
        self.nref += o.nref;
    }
}

/// Per-role error tallies, indexed by [`SpeakerRole::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoleErrorCounts {
    pub roles: [ErrorCounts; 2],
}

impl RoleErrorCounts {
    pub fn get(&self, role: SpeakerRole) -> &ErrorCounts {
        &self.roles[role.index()]
    }

    fn get_mut(&mut self, role: SpeakerRole) -> &mut ErrorCounts {
        &mut self.roles[role.index()]
    }
}

impl std::ops::AddAssign for RoleErrorCounts {
    fn add_assign(&mut self, o: Self) {
        self.roles[0] += o.roles[0];
        self.roles[1] += o.roles[1];
    }
}

pub fn classify_errors(a: &Alignment, reference: &[Word], hypothesis: &[Word]) -> Result<RoleErrorCounts, ScoreError> {
    let rget = |r: usize| reference.get(r).ok_or(ScoreError::MismatchedAlignment { index: r, len: reference.len() });
    let hget = |h: usize| hypothesis.get(h).ok_or(ScoreError::MismatchedAlignment { index: h, len: hypothesis.len() });
    let mut c = RoleErrorCounts::default();
    for w in reference {
        c.get_mut(w.role).nref += 1;
    }
    for op in &a.ops {
        match *op {
            AlignOp::Match { r, h } => {
                let (rw, hw) = (rget(r)?, hget(h)?);
                if rw.role != hw.role {
                    c.get_mut(rw.role).attr += 1;
                }
            }
            AlignOp::Sub { r, h } => {
                let (rw, hw) = (rget(r)?, hget(h)?);
                let e = c.get_mut(rw.role);
                e.sub += 1;
                if rw.role != hw.role {
                    e.attr += 1;
                }
            }
            AlignOp::Ins { h } => c.get_mut(hget(h)?.role).ins += 1,
            AlignOp::Del { r } => c.get_mut(rget(r)?.role).del += 1,
        }
    }
    Ok(c)
}

/// Exact ratios for one role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleScores {
    pub mtwer: Ratio<u64>,
    pub wer: Ratio<u64>,
    pub aer: Ratio<u64>,
    pub nref: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreReport {
    /// `None` for roles without reference words.
    pub roles: [Option<RoleScores>; 2],
    /// Unweighted means over roles present in the reference.
    pub macro_mtwer: Ratio<u64>,
    pub macro_wer: Ratio<u64>,
    pub macro_aer: Ratio<u64>,
}

impl ScoreReport {
    pub fn role(&self, role: SpeakerRole) -> Option<&RoleScores> {
        self.roles[role.index()].as_ref()
    }
}

pub fn score(counts: &RoleErrorCounts) -> Result<ScoreReport, ScoreError> {
    let mut roles = [None, None];
    for role in SpeakerRole::ALL {
        let c = counts.get(role);
        if c.nref == 0 {
            continue;
        }
        roles[role.index()] = Some(RoleScores {
            mtwer: Ratio::new(c.ins + c.del + c.sub + c.attr, c.nref),
            wer: Ratio::new(c.ins + c.del + c.sub, c.nref),
            aer: Ratio::new(c.attr, c.nref),
            nref: c.nref,
        });
    }
    let present: Vec<&RoleScores> = roles.iter().flatten().collect();
    if present.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let n = present.len() as u64;
    let mean = |f: fn(&RoleScores) -> Ratio<u64>| present.iter().map(|r| f(r)).sum::<Ratio<u64>>() / n;
    Ok(ScoreReport {
        macro_mtwer: mean(|r| r.mtwer),
        macro_wer: mean(|r| r.wer),
        macro_aer: mean(|r| r.aer),
        roles,
    })
}

/// Align, classify and count in one go.
pub fn count_errors(reference: &[Word], hypothesis: &[Word]) -> RoleErrorCounts {
    let a = align_words(reference, hypothesis);
    classify_errors(&a, reference, hypothesis).expect("alignment built from these lists")
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
