//! Training objective arithmetic: serialized-token cross-entropy, frame-level
//! diarization cross-entropy, and their weighted sum.

use thiserror::Error;

use crate::frames::FrameLabel;

pub const DEFAULT_LAMBDA_DIAR: f64 = 1.0;
/// Smallest probability accepted before taking a log.
pub const PROB_FLOOR: f64 = 1e-10;
const NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("no steps")]
    Empty,
    #[error("target at step {step} has probability zero")]
    Degenerate { step: usize },
    #[error("row {step} is not a normalized log-probability vector")]
    NotNormalized { step: usize },
    #[error("target {target} at step {step} is outside a vocabulary of {vocab}")]
    TargetOutOfRange { step: usize, target: usize, vocab: usize },
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
}

fn check_row(row: &[f64], step: usize) -> Result<(), LossError> {
    let total: f64 = row.iter().map(|lp| lp.exp()).sum();
    if row.iter().any(|lp| lp.is_nan() || *lp > 0.0) || (total - 1.0).abs() > NORM_TOL {
        return Err(LossError::NotNormalized { step });
    }
    Ok(())
}

/// Per-step log-probabilities over a vocabulary, with the target index of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLogProbs {
    rows: Vec<Vec<f64>>,
    targets: Vec<usize>,
}

impl TokenLogProbs {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<usize>) -> Result<Self, LossError> {
        if rows.len() != targets.len() {
            return Err(LossError::LengthMismatch { rows: rows.len(), targets: targets.len() });
        }
        for (step, (row, &target)) in rows.iter().zip(&targets).enumerate() {
            if target >= row.len() {
                return Err(LossError::TargetOutOfRange { step, target, vocab: row.len() });
            }
            check_row(row, step)?;
        }
        Ok(TokenLogProbs { rows, targets })
    }

    /// From probabilities, flooring at [`PROB_FLOOR`] before the log. A zero
    /// probability on a target step is reported as [`LossError::Degenerate`].
    pub fn from_probs(probs: Vec<Vec<f64>>, targets: Vec<usize>) -> Result<Self, LossError> {
        for (step, (row, &t)) in probs.iter().zip(&targets).enumerate() {
            if row.get(t) == Some(&0.0) {
                return Err(LossError::Degenerate { step });
            }
        }
        let rows = probs
            .into_iter()
            .map(|r| r.into_iter().map(|p| if p > 0.0 { p.max(PROB_FLOOR).ln() } else { f64::NEG_INFINITY }).collect())
            .collect();
        TokenLogProbs::new(rows, targets)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per-frame log-probabilities over (child, adult, silence) with a one-hot label.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLogProbs {
    rows: Vec<[f64; 3]>,
    labels: Vec<FrameLabel>,
}

fn class_index(l: FrameLabel) -> usize {
    match l {
        FrameLabel::Child => 0,
        FrameLabel::Adult => 1,
        FrameLabel::Silence => 2,
    }
}

impl FrameLogProbs {
    pub fn new(rows: Vec<[f64; 3]>, labels: Vec<FrameLabel>) -> Result<Self, LossError> {
        if rows.len() != labels.len() {
            return Err(LossError::LengthMismatch { rows: rows.len(), targets: labels.len() });
        }
        for (step, row) in rows.iter().enumerate() {
            check_row(row, step)?;
        }
        Ok(FrameLogProbs { rows, labels })
    }

    pub fn from_probs(probs: Vec<[f64; 3]>, labels: Vec<FrameLabel>) -> Result<Self, LossError> {
        for (step, (row, l)) in probs.iter().zip(&labels).enumerate() {
            if row[class_index(*l)] == 0.0 {
                return Err(LossError::Degenerate { step });
            }
        }
        let rows = probs
            .into_iter()
            .map(|r| r.map(|p| if p > 0.0 { p.max(PROB_FLOOR).ln() } else { f64::NEG_INFINITY }))
            .collect();
        FrameLogProbs::new(rows, labels)
    }
}

fn mean_nll(values: impl Iterator<Item = f64>, n: usize) -> Result<f64, LossError> {
    if n == 0 {
        return Err(LossError::Empty);
    }
    let mut total = 0.0;
    for (step, lp) in values.enumerate() {
        if lp == f64::NEG_INFINITY {
            return Err(LossError::Degenerate { step });
        }
        total -= lp;
    }
    // -0.0 for perfect predictions reads poorly.
    Ok((total / n as f64).max(0.0))
}

/// `-(1/T) Σ_t log P(y_t)` over every position, structural tokens included.
pub fn serialized_ce(p: &TokenLogProbs) -> Result<f64, LossError> {
    mean_nll(p.rows.iter().zip(&p.targets).map(|(r, &t)| r[t]), p.len())
}

/// `-(1/N) Σ_n log ŝ_n[label_n]`.
pub fn frame_ce(p: &FrameLogProbs) -> Result<f64, LossError> {
    mean_nll(p.rows.iter().zip(&p.labels).map(|(r, l)| r[class_index(*l)]), p.rows.len())
}

pub fn total_loss(l_asr: f64, l_diar: f64, lambda_diar: f64) -> f64 {
    l_asr + lambda_diar * l_diar
}
