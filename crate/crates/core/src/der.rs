//! Diarization error rate over role segments, computed with an exact sweep
//! over all segment boundaries.
//!
//! Roles are fixed labels, so no speaker permutation is searched. In every
//! elementary interval with `r` active reference roles, `h` active
//! hypothesis roles and `c` roles active in both:
//! `MD += max(0, r-h)`, `FA += max(0, h-r)`, `SC += min(r, h) - c`, and
//! `TOTAL += r`, each weighted by the interval length.

use thiserror::Error;

use crate::frames::RoleSegment;
use crate::model::{SpeakerRole, TimeInterval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DerError {
    #[error("reference contains no scored speech")]
    EmptyReference,
    #[error("collar must be a non-negative finite number, got {0}")]
    InvalidCollar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerBreakdown {
    pub missed: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub total: f64,
    pub der: f64,
}

/// Union of the spans of one role, sorted and merged.
fn role_union(segs: &[RoleSegment], role: SpeakerRole) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> =
        segs.iter().filter(|s| s.role == role).map(|s| (s.span.start(), s.span.end())).collect();
    spans.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (a, b) in spans {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn active(spans: &[(f64, f64)], t: f64) -> bool {
    let idx = spans.partition_point(|s| s.0 <= t);
    idx > 0 && t < spans[idx - 1].1
}

pub fn der(reference: &[RoleSegment], hypothesis: &[RoleSegment], collar: f64) -> Result<DerBreakdown, DerError> {
    if !(collar.is_finite() && collar >= 0.0) {
        return Err(DerError::InvalidCollar(collar));
    }
    let refs: Vec<Vec<(f64, f64)>> = SpeakerRole::ALL.iter().map(|r| role_union(reference, *r)).collect();
    let hyps: Vec<Vec<(f64, f64)>> = SpeakerRole::ALL.iter().map(|r| role_union(hypothesis, *r)).collect();

    let mut collars: Vec<(f64, f64)> = Vec::new();
    if collar > 0.0 {
        for s in reference {
            for b in [s.span.start(), s.span.end()] {
                collars.push((b - collar, b + collar));
            }
        }
        collars.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(collars.len());
        for (a, b) in collars {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        collars = merged;
    }

    let mut points: Vec<f64> = refs
        .iter()
        .chain(hyps.iter())
        .chain(std::iter::once(&collars))
        .flat_map(|v| v.iter().flat_map(|(a, b)| [*a, *b]))
        .collect();
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    points.dedup();

    let mut out = DerBreakdown::default();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        if active(&collars, mid) {
            continue;
        }
        let r_on: Vec<bool> = refs.iter().map(|s| active(s, mid)).collect();
        let h_on: Vec<bool> = hyps.iter().map(|s| active(s, mid)).collect();
        let r = r_on.iter().filter(|x| **x).count();
        let h = h_on.iter().filter(|x| **x).count();
        let both = r_on.iter().zip(&h_on).filter(|(x, y)| **x && **y).count();
        out.total += r as f64 * len;
        out.missed += r.saturating_sub(h) as f64 * len;
        out.false_alarm += h.saturating_sub(r) as f64 * len;
        out.confusion += (r.min(h) - both) as f64 * len;
    }
    if out.total <= 0.0 {
        return Err(DerError::EmptyReference);
    }
    out.der = (out.missed + out.false_alarm + out.confusion) / out.total;
    Ok(out)
}

/// Segments from a transcript's utterances.
pub fn transcript_segments(t: &crate::model::Transcript) -> Vec<RoleSegment> {
    t.utterances()
        .iter()
        .filter(|u| u.span.duration() > 0.0)
        .map(|u| RoleSegment::new(u.role, u.span))
        .collect()
}

/// Shift every segment by `delta` seconds.
pub fn shift_segments(segs: &[RoleSegment], delta: f64) -> Vec<RoleSegment> {
    segs.iter()
        .map(|s| RoleSegment::new(s.role, TimeInterval::new(s.span.start() + delta, s.span.end() + delta).expect("shift keeps order")))
        .collect()
}
