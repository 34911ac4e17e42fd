//! Frame-level child/adult/silence signals: silence-region extraction for
//! suppression, label rasterization, word-level speaker attribution, and
//! postprocessing of role segments.
//!
//! Frame `n` covers `[n·Δ, (n+1)·Δ)`; membership tests use the frame center.

use thiserror::Error;

use crate::fsm::SuppressionSet;
use crate::model::{SpeakerRole, TimeInterval, Transcript, Word, TIME_EPS};

pub const DEFAULT_FRAME_PERIOD: f64 = 0.02;
pub const DEFAULT_SILENCE_THRESHOLD: f64 = 0.7;
pub const DEFAULT_SHRINK: f64 = 0.2;
pub const DEFAULT_MERGE_GAP: f64 = 0.3;
pub const DEFAULT_MIN_SEGMENT: f64 = 0.2;
const PROB_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame period must be positive, got {0}")]
    InvalidPeriod(f64),
    #[error("frame {index} probabilities are negative or do not sum to 1")]
    NotNormalized { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameLabel {
    Silence,
    Child,
    Adult,
}

impl FrameLabel {
    pub fn role(self) -> Option<SpeakerRole> {
        match self {
            FrameLabel::Silence => None,
            FrameLabel::Child => Some(SpeakerRole::Child),
            FrameLabel::Adult => Some(SpeakerRole::Adult),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameLabel::Silence => "silence",
            FrameLabel::Child => "child",
            FrameLabel::Adult => "adult",
        }
    }
}

impl From<SpeakerRole> for FrameLabel {
    fn from(r: SpeakerRole) -> Self {
        match r {
            SpeakerRole::Child => FrameLabel::Child,
            SpeakerRole::Adult => FrameLabel::Adult,
        }
    }
}

/// Per-frame `(p_child, p_adult, p_sil)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameProbs {
    pub child: f64,
    pub adult: f64,
    pub silence: f64,
}

impl FrameProbs {
    pub fn new(child: f64, adult: f64, silence: f64) -> Self {
        FrameProbs { child, adult, silence }
    }

    fn is_normalized(&self) -> bool {
        let all = [self.child, self.adult, self.silence];
        all.iter().all(|p| p.is_finite() && *p >= 0.0) && (all.iter().sum::<f64>() - 1.0).abs() <= 1e-6
    }

    pub fn argmax(&self) -> FrameLabel {
        if self.silence >= self.child && self.silence >= self.adult {
            FrameLabel::Silence
        } else if self.child >= self.adult {
            FrameLabel::Child
        } else {
            FrameLabel::Adult
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameProbSequence {
    frame_period: f64,
    probs: Vec<FrameProbs>,
}

impl FrameProbSequence {
    pub fn new(frame_period: f64, probs: Vec<FrameProbs>) -> Result<Self, FrameError> {
        if !(frame_period.is_finite() && frame_period > 0.0) {
            return Err(FrameError::InvalidPeriod(frame_period));
        }
        if let Some(index) = probs.iter().position(|p| !p.is_normalized()) {
            return Err(FrameError::NotNormalized { index });
        }
        Ok(FrameProbSequence { frame_period, probs })
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn probs(&self) -> &[FrameProbs] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn frame_start(&self, n: usize) -> f64 {
        n as f64 * self.frame_period
    }

    /// Hard labels by per-frame argmax.
    pub fn argmax_labels(&self) -> FrameLabelSequence {
        FrameLabelSequence {
            frame_period: self.frame_period,
            origin: 0.0,
            labels: self.probs.iter().map(FrameProbs::argmax).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabelSequence {
    pub frame_period: f64,
    /// Start time of frame 0.
    pub origin: f64,
    pub labels: Vec<FrameLabel>,
}

impl FrameLabelSequence {
    pub fn frame_start(&self, n: usize) -> f64 {
        self.origin + n as f64 * self.frame_period
    }

    /// Maximal runs of speech frames with the same label.
    pub fn to_segments(&self) -> Vec<RoleSegment> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.labels.len() {
            let label = self.labels[i];
            let mut j = i;
            while j + 1 < self.labels.len() && self.labels[j + 1] == label {
                j += 1;
            }
            if let Some(role) = label.role() {
                let span = TimeInterval::new(self.frame_start(i), self.frame_start(j + 1)).expect("ordered frames");
                out.push(RoleSegment { role, span });
            }
            i = j + 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleSegment {
    pub role: SpeakerRole,
    pub span: TimeInterval,
}

impl RoleSegment {
    pub fn new(role: SpeakerRole, span: TimeInterval) -> Self {
        RoleSegment { role, span }
    }
}

/// Silence regions for timestamp suppression: maximal runs of frames with
/// `p_sil >= threshold`, each shrunk by `shrink` at both ends. Runs that
/// vanish after shrinking are dropped.
pub fn silence_regions(f: &FrameProbSequence, threshold: f64, shrink: f64) -> SuppressionSet {
    let mut regions = Vec::new();
    let n = f.len();
    let mut i = 0;
    while i < n {
        if f.probs[i].silence < threshold {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && f.probs[j + 1].silence >= threshold {
            j += 1;
        }
        let start = f.frame_start(i) + shrink;
        let end = f.frame_start(j + 1) - shrink;
        if end - start > TIME_EPS {
            regions.push(TimeInterval::new(start, end).expect("shrunk run is ordered"));
        }
        i = j + 1;
    }
    SuppressionSet::new(regions).expect("runs are disjoint and sorted")
}

/// Label each frame of `span` with the role of the utterance covering its
/// center, or silence.
pub fn rasterize_labels(t: &Transcript, frame_period: f64, span: TimeInterval) -> FrameLabelSequence {
    let n = (span.duration() / frame_period + 1e-6).floor() as usize;
    let utts = t.utterances();
    let mut labels = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let center = span.start() + (i as f64 + 0.5) * frame_period;
        while k < utts.len() && utts[k].span.end() <= center {
            k += 1;
        }
        let label = match utts.get(k) {
            Some(u) if u.span.start() <= center => FrameLabel::from(u.role),
            _ => FrameLabel::Silence,
        };
        labels.push(label);
    }
    FrameLabelSequence { frame_period, origin: span.start(), labels }
}

/// Assign each word the role with the higher mean log probability over the
/// frames whose centers fall inside the word. Ties go to `Child`. A word
/// covering no frame center uses the nearest frame.
pub fn attribute_words(words: &[(String, TimeInterval)], f: &FrameProbSequence) -> Vec<Word> {
    let dt = f.frame_period;
    words
        .iter()
        .filter_map(|(text, span)| {
            if f.is_empty() {
                return None;
            }
            // Frames with start + dt/2 in [span.start, span.end).
            let first = ((span.start() / dt - 0.5).ceil().max(0.0)) as usize;
            let mut sum_child = 0.0;
            let mut sum_adult = 0.0;
            let mut count = 0usize;
            let mut n = first;
            while n < f.len() && (n as f64 + 0.5) * dt < span.end() {
                if (n as f64 + 0.5) * dt >= span.start() {
                    let p = f.probs[n];
                    sum_child += p.child.max(PROB_FLOOR).ln();
                    sum_adult += p.adult.max(PROB_FLOOR).ln();
                    count += 1;
                }
                n += 1;
            }
            if count == 0 {
                let mid = span.midpoint();
                let nearest = ((mid / dt - 0.5).round().max(0.0) as usize).min(f.len() - 1);
                let p = f.probs[nearest];
                sum_child = p.child.max(PROB_FLOOR).ln();
                sum_adult = p.adult.max(PROB_FLOOR).ln();
                count = 1;
            }
            let role = if sum_child / count as f64 >= sum_adult / count as f64 {
                SpeakerRole::Child
            } else {
                SpeakerRole::Adult
            };
            Word::new(text.clone(), *span, role).ok()
        })
        .collect()
}

fn merge_pass(segs: &[RoleSegment], merge_gap: f64) -> Vec<RoleSegment> {
    let mut out: Vec<RoleSegment> = Vec::with_capacity(segs.len());
    for s in segs {
        if let Some(last) = out.last_mut() {
            if last.role == s.role && s.span.start() - last.span.end() < merge_gap - TIME_EPS {
                let end = last.span.end().max(s.span.end());
                last.span = TimeInterval::new(last.span.start(), end).expect("ordered");
                continue;
            }
        }
        out.push(*s);
    }
    out
}

/// Merge consecutive same-role segments separated by less than `merge_gap`,
/// then drop segments shorter than `min_dur`. Repeats until stable, since a
/// dropped segment can bring two same-role neighbours together.
pub fn postprocess_segments(segs: &[RoleSegment], merge_gap: f64, min_dur: f64) -> Vec<RoleSegment> {
    let mut cur = segs.to_vec();
    loop {
        let merged = merge_pass(&cur, merge_gap);
        let kept: Vec<RoleSegment> =
            merged.into_iter().filter(|s| s.span.duration() >= min_dur - TIME_EPS).collect();
        if kept == cur {
            return kept;
        }
        cur = kept;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Utterance;

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    fn seg(role: SpeakerRole, a: f64, b: f64) -> RoleSegment {
        RoleSegment::new(role, iv(a, b))
    }

    /// Frames at 0.02 s with p_sil = 0.9 on `[a, b)` and speech elsewhere.
    fn with_silence(total: f64, runs: &[(f64, f64)]) -> FrameProbSequence {
        let n = (total / 0.02).round() as usize;
        let probs = (0..n)
            .map(|i| {
                let c = (i as f64 + 0.5) * 0.02;
                if runs.iter().any(|(a, b)| c >= *a && c < *b) {
                    FrameProbs::new(0.05, 0.05, 0.9)
                } else {
                    FrameProbs::new(0.9, 0.05, 0.05)
                }
            })
            .collect();
        FrameProbSequence::new(0.02, probs).unwrap()
    }

    #[test]
    fn silence_run_is_shrunk() {
        let f = with_silence(8.0, &[(2.0, 5.0)]);
        let s = silence_regions(&f, 0.7, 0.2);
        assert_eq!(s.regions(), &[iv(2.2, 4.8)]);
    }

    #[test]
    fn short_silence_run_dropped() {
        let f = with_silence(3.0, &[(1.0, 1.3)]);
        assert!(silence_regions(&f, 0.7, 0.2).is_empty());
    }

    #[test]
    fn all_speech_has_no_regions() {
        let f = with_silence(3.0, &[]);
        assert!(silence_regions(&f, 0.7, 0.2).is_empty());
    }

    #[test]
    fn threshold_is_inclusive() {
        let f = FrameProbSequence::new(0.02, vec![FrameProbs::new(0.15, 0.15, 0.7); 50]).unwrap();
        assert_eq!(silence_regions(&f, 0.7, 0.0).regions().len(), 1);
    }

    #[test]
    fn rasterize_center_rule() {
        let t = Transcript::from_utterances(vec![Utterance::from_text(SpeakerRole::Child, iv(0.0, 1.0), "a")]).unwrap();
        let l = rasterize_labels(&t, 0.02, iv(0.0, 2.0));
        assert_eq!(l.labels.len(), 100);
        assert!(l.labels[..50].iter().all(|x| *x == FrameLabel::Child));
        assert!(l.labels[50..].iter().all(|x| *x == FrameLabel::Silence));

        let t = Transcript::from_utterances(vec![
            Utterance::from_text(SpeakerRole::Child, iv(0.0, 1.0), "a"),
            Utterance::from_text(SpeakerRole::Adult, iv(1.0, 2.0), "b"),
        ])
        .unwrap();
        let l = rasterize_labels(&t, 0.02, iv(0.0, 2.0));
        assert_eq!(l.labels[49], FrameLabel::Child);
        assert_eq!(l.labels[50], FrameLabel::Adult);

        let empty = Transcript::empty(iv(0.0, 1.0));
        assert!(rasterize_labels(&empty, 0.02, iv(0.0, 1.0)).labels.iter().all(|x| *x == FrameLabel::Silence));
    }

    #[test]
    fn attribute_dominant_tie_and_nearest() {
        let f = FrameProbSequence::new(0.02, vec![FrameProbs::new(0.9, 0.05, 0.05); 100]).unwrap();
        let w = attribute_words(&[("hi".into(), iv(1.0, 1.5))], &f);
        assert_eq!(w[0].role, SpeakerRole::Child);

        let alt: Vec<FrameProbs> = (0..100)
            .map(|i| if i % 2 == 0 { FrameProbs::new(0.8, 0.1, 0.1) } else { FrameProbs::new(0.1, 0.8, 0.1) })
            .collect();
        let f = FrameProbSequence::new(0.02, alt).unwrap();
        let w = attribute_words(&[("x".into(), iv(0.0, 0.4))], &f);
        assert_eq!(w[0].role, SpeakerRole::Child);

        let mut probs = vec![FrameProbs::new(0.1, 0.8, 0.1); 10];
        probs[0] = FrameProbs::new(0.1, 0.85, 0.05);
        let f = FrameProbSequence::new(0.02, probs).unwrap();
        // [0, 0.005] covers no frame center; nearest is frame 0 (adult).
        let w = attribute_words(&[("uh".into(), iv(0.0, 0.005))], &f);
        assert_eq!(w[0].role, SpeakerRole::Adult);
    }

    #[test]
    fn postprocess_examples() {
        use SpeakerRole::*;
        assert_eq!(postprocess_segments(&[seg(Child, 0.0, 1.0), seg(Child, 1.2, 2.0)], 0.3, 0.2), vec![seg(Child, 0.0, 2.0)]);
        assert!(postprocess_segments(&[seg(Child, 0.0, 0.15)], 0.3, 0.2).is_empty());
        let mixed = vec![seg(Child, 0.0, 1.0), seg(Adult, 1.1, 2.0)];
        assert_eq!(postprocess_segments(&mixed, 0.3, 0.2), mixed);
    }

    #[test]
    fn postprocess_reaches_fixpoint() {
        use SpeakerRole::*;
        let segs = vec![seg(Child, 0.0, 1.0), seg(Adult, 1.05, 1.1), seg(Child, 1.2, 2.0)];
        let once = postprocess_segments(&segs, 0.3, 0.2);
        assert_eq!(once, vec![seg(Child, 0.0, 2.0)]);
        assert_eq!(postprocess_segments(&once, 0.3, 0.2), once);
    }

    #[test]
    fn rejects_unnormalized() {
        assert_eq!(
            FrameProbSequence::new(0.02, vec![FrameProbs::new(0.5, 0.5, 0.5)]),
            Err(FrameError::NotNormalized { index: 0 })
        );
        assert!(FrameProbSequence::new(0.0, vec![]).is_err());
    }

    #[test]
    fn segments_from_labels() {
        let l = FrameLabelSequence {
            frame_period: 0.5,
            origin: 0.0,
            labels: vec![FrameLabel::Silence, FrameLabel::Child, FrameLabel::Child, FrameLabel::Adult],
        };
        assert_eq!(
            l.to_segments(),
            vec![seg(SpeakerRole::Child, 0.5, 1.5), seg(SpeakerRole::Adult, 1.5, 2.0)]
        );
    }
}
