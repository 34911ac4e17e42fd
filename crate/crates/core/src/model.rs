//! Shared domain types: speaker roles, time intervals, words, utterances and
//! transcripts, plus the minimal text normalizer used before scoring.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for comparisons on times that are not grid-quantized.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid interval [{start}, {end}]")]
    InvalidInterval { start: f64, end: f64 },
    #[error("unknown speaker role {0:?}")]
    UnknownRole(String),
    #[error("utterance {index} starts before the previous one ends")]
    Overlap { index: usize },
    #[error("utterance {index} is out of time order")]
    Unordered { index: usize },
    #[error("utterance {index} lies outside the session span")]
    OutsideSession { index: usize },
    #[error("word text must be a non-empty token without whitespace: {0:?}")]
    InvalidWord(String),
}

/// The two semantic speaker roles. `Child` orders before `Adult`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    Child,
    Adult,
}

impl SpeakerRole {
    pub const ALL: [SpeakerRole; 2] = [SpeakerRole::Child, SpeakerRole::Adult];

    pub fn as_str(self) -> &'static str {
        match self {
            SpeakerRole::Child => "child",
            SpeakerRole::Adult => "adult",
        }
    }

    pub fn other(self) -> SpeakerRole {
        match self {
            SpeakerRole::Child => SpeakerRole::Adult,
            SpeakerRole::Adult => SpeakerRole::Child,
        }
    }

    /// Dense index, `Child = 0`, `Adult = 1`.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SpeakerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeakerRole {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "child" => Ok(SpeakerRole::Child),
            "adult" => Ok(SpeakerRole::Adult),
            _ => Err(ModelError::UnknownRole(s.to_string())),
        }
    }
}

/// A closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    start: f64,
    end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Result<Self, ModelError> {
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || start > end {
            return Err(ModelError::InvalidInterval { start, end });
        }
        Ok(TimeInterval { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    /// Shared length of two intervals; zero when they only touch.
    pub fn overlap(&self, other: &TimeInterval) -> f64 {
        interval_overlap(self, other)
    }

    /// Whether `other` lies within `self`, up to [`TIME_EPS`].
    pub fn contains_interval(&self, other: &TimeInterval) -> bool {
        other.start >= self.start - TIME_EPS && other.end <= self.end + TIME_EPS
    }

    pub fn shifted(&self, by: f64) -> Result<Self, ModelError> {
        TimeInterval::new(self.start + by, self.end + by)
    }
}

pub fn interval_overlap(a: &TimeInterval, b: &TimeInterval) -> f64 {
    (a.end.min(b.end) - a.start.max(b.start)).max(0.0)
}

/// A single role-attributed word with its time span.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    text: String,
    pub span: TimeInterval,
    pub role: SpeakerRole,
}

impl Word {
    pub fn new(text: impl Into<String>, span: TimeInterval, role: SpeakerRole) -> Result<Self, ModelError> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return Err(ModelError::InvalidWord(text));
        }
        Ok(Word { text, span, role })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub role: SpeakerRole,
    pub span: TimeInterval,
    pub words: Vec<String>,
}

impl Utterance {
    pub fn new(role: SpeakerRole, span: TimeInterval, words: Vec<String>) -> Self {
        Utterance { role, span, words }
    }

    /// Build from free text, splitting on whitespace.
    pub fn from_text(role: SpeakerRole, span: TimeInterval, text: &str) -> Self {
        Utterance::new(role, span, text.split_whitespace().map(str::to_string).collect())
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    /// Words with spans interpolated uniformly across the utterance span.
    /// Text is normalized; words that normalize to nothing are skipped.
    pub fn explode(&self) -> Vec<Word> {
        let n = self.words.len();
        if n == 0 {
            return Vec::new();
        }
        let step = self.span.duration() / n as f64;
        self.words
            .iter()
            .enumerate()
            .filter_map(|(i, w)| {
                let text = normalize_word(w)?;
                let start = self.span.start + step * i as f64;
                let end = if i + 1 == n { self.span.end } else { self.span.start + step * (i + 1) as f64 };
                let span = TimeInterval::new(start, end.max(start)).ok()?;
                Word::new(text, span, self.role).ok()
            })
            .collect()
    }
}

/// Time-ordered, non-overlapping utterances within a session span.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    utterances: Vec<Utterance>,
    session_span: TimeInterval,
}

impl Transcript {
    pub fn new(utterances: Vec<Utterance>, session_span: TimeInterval) -> Result<Self, ModelError> {
        for (i, u) in utterances.iter().enumerate() {
            if !session_span.contains_interval(&u.span) {
                return Err(ModelError::OutsideSession { index: i });
            }
            if i > 0 {
                let prev = &utterances[i - 1];
                if u.span.start < prev.span.start {
                    return Err(ModelError::Unordered { index: i });
                }
                if u.span.start < prev.span.end - TIME_EPS {
                    return Err(ModelError::Overlap { index: i });
                }
            }
        }
        Ok(Transcript { utterances, session_span })
    }

    /// Session span `[0, last end]`.
    pub fn from_utterances(utterances: Vec<Utterance>) -> Result<Self, ModelError> {
        let end = utterances.iter().map(|u| u.span.end).fold(0.0, f64::max);
        Transcript::new(utterances, TimeInterval::new(0.0, end)?)
    }

    pub fn empty(session_span: TimeInterval) -> Self {
        Transcript { utterances: Vec::new(), session_span }
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn into_utterances(self) -> Vec<Utterance> {
        self.utterances
    }

    pub fn session_span(&self) -> TimeInterval {
        self.session_span
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    /// All words in alignment order: by start time, then role.
    pub fn words(&self) -> Vec<Word> {
        let mut words: Vec<Word> = self.utterances.iter().flat_map(Utterance::explode).collect();
        words.sort_by(|a, b| {
            a.span
                .start
                .partial_cmp(&b.span.start)
                .unwrap_or(Ordering::Equal)
                .then(a.role.cmp(&b.role))
        });
        words
    }
}

/// Lowercase and strip leading/trailing punctuation. `None` if nothing is left.
pub fn normalize_word(word: &str) -> Option<String> {
    let trimmed = word.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Normalize free text into scoring tokens.
pub fn normalize_text(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_word).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(interval_overlap(&iv(0.0, 5.0), &iv(3.0, 10.0)), 2.0);
        assert_eq!(interval_overlap(&iv(0.0, 5.0), &iv(5.0, 9.0)), 0.0);
        assert_eq!(interval_overlap(&iv(2.0, 4.0), &iv(2.0, 4.0)), 2.0);
    }

    #[test]
    fn rejects_inverted_and_negative_intervals() {
        assert!(TimeInterval::new(2.0, 1.0).is_err());
        assert!(TimeInterval::new(-0.5, 1.0).is_err());
        assert!(TimeInterval::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn transcript_rejects_overlap() {
        let a = Utterance::from_text(SpeakerRole::Child, iv(0.0, 2.0), "a");
        let b = Utterance::from_text(SpeakerRole::Adult, iv(1.5, 3.0), "b");
        assert_eq!(
            Transcript::from_utterances(vec![a, b]).unwrap_err(),
            ModelError::Overlap { index: 1 }
        );
    }

    #[test]
    fn transcript_rejects_outside_session() {
        let a = Utterance::from_text(SpeakerRole::Child, iv(0.0, 2.0), "a");
        assert!(Transcript::new(vec![a], iv(0.5, 3.0)).is_err());
    }

    #[test]
    fn normalizer() {
        assert_eq!(normalize_text("  Hello, World!  don't -- "), vec!["hello", "world", "don't"]);
        assert_eq!(normalize_word("..."), None);
    }

    #[test]
    fn explode_interpolates() {
        let u = Utterance::from_text(SpeakerRole::Adult, iv(1.0, 2.0), "I am good thanks");
        let w = u.explode();
        assert_eq!(w.len(), 4);
        assert_eq!(w[0].span, iv(1.0, 1.25));
        assert_eq!(w[3].span.end(), 2.0);
        assert_eq!(w[0].text(), "i");
    }

    #[test]
    fn role_parse_and_order() {
        assert_eq!("Child".parse::<SpeakerRole>().unwrap(), SpeakerRole::Child);
        assert!("parent".parse::<SpeakerRole>().is_err());
        assert!(SpeakerRole::Child < SpeakerRole::Adult);
    }
}
