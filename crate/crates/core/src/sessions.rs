//! Corpus preprocessing (word cleanup, utterance formation, 30 s windows) and
//! per-child conversational speech measures.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::analysis::{pearson, AnalysisError};
use crate::grammar::WINDOW_SECONDS;
use crate::model::{SpeakerRole, TimeInterval, Transcript, Utterance, Word, TIME_EPS};

pub const DEFAULT_MAX_WORD_DURATION: f64 = 2.0;
pub const DEFAULT_UTTERANCE_GAP: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("no {0} utterances")]
    NoSpeech(SpeakerRole),
    #[error("need at least 2 children present in both sources, got {0}")]
    InsufficientData(usize),
}

/// Drop words longer than `max_dur` (strictly).
pub fn clean_words(words: &[Word], max_dur: f64) -> Vec<Word> {
    words.iter().filter(|w| w.span.duration() <= max_dur + TIME_EPS).cloned().collect()
}

/// Join same-role words whose gap is strictly below `gap` into utterances.
/// The session span is `[0, last end]`.
pub fn merge_words_to_utterances(words: &[Word], gap: f64) -> Transcript {
    let mut utts: Vec<Utterance> = Vec::new();
    for w in words {
        if let Some(last) = utts.last_mut() {
            if last.role == w.role && w.span.start() - last.span.end() < gap - TIME_EPS {
                let end = last.span.end().max(w.span.end());
                last.span = TimeInterval::new(last.span.start(), end).expect("ordered");
                last.words.push(w.text().to_string());
                continue;
            }
        }
        utts.push(Utterance::new(w.role, w.span, vec![w.text().to_string()]));
    }
    Transcript::from_utterances(utts).expect("time-ordered words give ordered utterances")
}

/// A window of complete utterances, with times relative to its start.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub span: TimeInterval,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Windowing {
    pub segments: Vec<Segment>,
    /// Utterances longer than the window; skipped.
    pub oversized: Vec<Utterance>,
}

fn make_segment(span: TimeInterval, utts: &[Utterance]) -> Segment {
    let shift = -span.start();
    let rel: Vec<Utterance> = utts
        .iter()
        .map(|u| {
            let s = (u.span.start() + shift).max(0.0);
            let e = (u.span.end() + shift).max(s);
            Utterance::new(u.role, TimeInterval::new(s, e).expect("inside segment"), u.words.clone())
        })
        .collect();
    let local = TimeInterval::new(0.0, span.duration()).expect("valid");
    Segment { span, transcript: Transcript::new(rel, local).expect("segment keeps utterance order") }
}

/// Greedy packing of one run of utterances into windows between `lo` and `hi`.
fn window_run(utts: &[Utterance], lo: f64, hi: f64, max_dur: f64, out: &mut Vec<Segment>) {
    let n = utts.len();
    let cut_after = |j: usize, b: f64| -> f64 {
        if j + 1 < n {
            0.5 * (utts[j].span.end() + utts[j + 1].span.start())
        } else {
            hi.min(b + max_dur)
        }
    };
    let mut b = lo.min(utts.first().map_or(lo, |u| u.span.start()));
    let mut i = 0;
    while i < n {
        // A window must hold utterance i and end by its cut point; trim
        // leading silence when it would not.
        if utts[i].span.end() - b > max_dur + TIME_EPS {
            b = utts[i].span.end() - max_dur;
        }
        if cut_after(i, b) - b > max_dur + TIME_EPS {
            b = b.max(cut_after(i, b) - max_dur).min(utts[i].span.start());
        }
        let mut j = i;
        while j + 1 < n && utts[j + 1].span.end() - b <= max_dur + TIME_EPS && cut_after(j + 1, b) - b <= max_dur + TIME_EPS {
            j += 1;
        }
        let end = cut_after(j, b).min(b + max_dur).max(utts[j].span.end());
        out.push(make_segment(TimeInterval::new(b, end).expect("ordered"), &utts[i..=j]));
        b = end;
        i = j + 1;
    }
}

/// Split a transcript into windows of at most `max_dur` seconds holding
/// complete utterances. Interior boundaries sit at the midpoint of the
/// silence between consecutive utterances; the last window ends at the
/// session end. Utterances longer than `max_dur` are skipped and force a
/// window break.
pub fn window_segments(t: &Transcript, max_dur: f64) -> Windowing {
    let mut out = Windowing::default();
    let session = t.session_span();
    let mut run: Vec<Utterance> = Vec::new();
    let mut lo = session.start();
    for u in t.utterances() {
        if u.span.duration() > max_dur + TIME_EPS {
            if !run.is_empty() {
                window_run(&run, lo, u.span.start(), max_dur, &mut out.segments);
                run.clear();
            }
            lo = u.span.end();
            out.oversized.push(u.clone());
        } else {
            run.push(u.clone());
        }
    }
    if !run.is_empty() {
        window_run(&run, lo, session.end(), max_dur, &mut out.segments);
    }
    out
}

pub fn window_segments_default(t: &Transcript) -> Windowing {
    window_segments(t, WINDOW_SECONDS)
}

/// Speech measures for one role. Rates are per minute.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeasureSet {
    pub words_per_minute: f64,
    pub utterances_per_minute: f64,
    pub mean_words_per_utterance: f64,
    pub mean_utterance_duration_s: f64,
    /// Words per minute of the role's own speaking time.
    pub speaking_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Measure {
    WordsPerMinute,
    UtterancesPerMinute,
    MeanWordsPerUtterance,
    MeanUtteranceDuration,
    SpeakingRate,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::WordsPerMinute,
        Measure::UtterancesPerMinute,
        Measure::MeanWordsPerUtterance,
        Measure::MeanUtteranceDuration,
        Measure::SpeakingRate,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Measure::WordsPerMinute => "words_per_minute",
            Measure::UtterancesPerMinute => "utterances_per_minute",
            Measure::MeanWordsPerUtterance => "mean_words_per_utterance",
            Measure::MeanUtteranceDuration => "mean_utterance_duration_s",
            Measure::SpeakingRate => "speaking_rate_wpm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Measure::WordsPerMinute => "Words per minute",
            Measure::UtterancesPerMinute => "Utterances per minute",
            Measure::MeanWordsPerUtterance => "Mean words per utterance",
            Measure::MeanUtteranceDuration => "Mean utterance duration (s)",
            Measure::SpeakingRate => "Speaking rate (words/min)",
        }
    }

    pub fn category(self) -> &'static str {
        match self {
            Measure::WordsPerMinute | Measure::UtterancesPerMinute => "Speech Quantity",
            Measure::MeanWordsPerUtterance | Measure::MeanUtteranceDuration => "Utterance Length",
            Measure::SpeakingRate => "Fluency",
        }
    }
}

impl MeasureSet {
    pub fn get(&self, m: Measure) -> f64 {
        match m {
            Measure::WordsPerMinute => self.words_per_minute,
            Measure::UtterancesPerMinute => self.utterances_per_minute,
            Measure::MeanWordsPerUtterance => self.mean_words_per_utterance,
            Measure::MeanUtteranceDuration => self.mean_utterance_duration_s,
            Measure::SpeakingRate => self.speaking_rate,
        }
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        MeasureSet {
            words_per_minute: v[0],
            utterances_per_minute: v[1],
            mean_words_per_utterance: v[2],
            mean_utterance_duration_s: v[3],
            speaking_rate: v[4],
        }
    }
}

/// Measures for `role` over the given segments, which may come from several
/// sessions of the same child. Per-minute rates use the summed segment
/// durations; the speaking rate uses the role's summed utterance durations.
pub fn speech_measures(segments: &[Segment], role: SpeakerRole) -> Result<MeasureSet, SessionError> {
    let session_s: f64 = segments.iter().map(|s| s.span.duration()).sum();
    let mut words = 0usize;
    let mut utts = 0usize;
    let mut speaking_s = 0.0;
    for u in segments.iter().flat_map(|s| s.transcript.utterances()).filter(|u| u.role == role) {
        utts += 1;
        words += u.words.len();
        speaking_s += u.span.duration();
    }
    if utts == 0 {
        return Err(SessionError::NoSpeech(role));
    }
    let (w, n) = (words as f64, utts as f64);
    let per_minute = |count: f64, seconds: f64| if seconds > 0.0 { count * 60.0 / seconds } else { 0.0 };
    Ok(MeasureSet {
        words_per_minute: per_minute(w, session_s),
        utterances_per_minute: per_minute(n, session_s),
        mean_words_per_utterance: w / n,
        mean_utterance_duration_s: speaking_s / n,
        speaking_rate: per_minute(w, speaking_s),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureAgreement {
    pub measure: Measure,
    pub gt_mean: f64,
    pub pred_mean: f64,
    /// `None` when either side has zero variance across children.
    pub pcc: Option<f64>,
}

/// Per-measure means and Pearson correlation across children present in both maps.
pub fn agreement(
    gt: &BTreeMap<String, MeasureSet>,
    pred: &BTreeMap<String, MeasureSet>,
) -> Result<Vec<MeasureAgreement>, SessionError> {
    let ids: Vec<&String> = gt.keys().filter(|k| pred.contains_key(*k)).collect();
    if ids.len() < 2 {
        return Err(SessionError::InsufficientData(ids.len()));
    }
    let n = ids.len() as f64;
    Ok(Measure::ALL
        .iter()
        .map(|&m| {
            let x: Vec<f64> = ids.iter().map(|id| gt[*id].get(m)).collect();
            let y: Vec<f64> = ids.iter().map(|id| pred[*id].get(m)).collect();
            let pcc = match pearson(&x, &y) {
                Ok(r) => Some(r),
                Err(AnalysisError::ZeroVariance) => None,
                Err(e) => unreachable!("lengths checked: {e}"),
            };
            MeasureAgreement {
                measure: m,
                gt_mean: x.iter().sum::<f64>() / n,
                pred_mean: y.iter().sum::<f64>() / n,
                pcc,
            }
        })
        .collect())
}
