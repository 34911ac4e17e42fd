//! Serialized output (SOT) token streams: transcript serialization, the
//! recovering parser and the structural error taxonomy.
//!
//! A well-formed stream is
//! `Header (Timestamp Speaker Text+ Timestamp)* EndOfTranscript`, with
//! timestamps on a 0.02 s grid covering a 30 s window.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SpeakerRole, TimeInterval, Transcript, Utterance, TIME_EPS};

/// Timestamp grid step in seconds.
pub const GRID_STEP: f64 = 0.02;
/// Largest timestamp grid index (30 s).
pub const MAX_TS_INDEX: u16 = 1500;
/// Decoding token budget.
pub const MAX_TOKENS: usize = 256;
/// Length of the decoding window in seconds.
pub const WINDOW_SECONDS: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("utterance {index} has a time {time} outside [0, 30] s")]
    OutOfRange { index: usize, time: f64 },
    #[error("utterance {index} has no words")]
    EmptyUtterance { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Header,
    Timestamp(u16),
    SpeakerChild,
    SpeakerAdult,
    Text(String),
    EndOfTranscript,
}

/// The class of a token without its payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenKind {
    Header,
    Timestamp,
    SpeakerChild,
    SpeakerAdult,
    Text,
    EndOfTranscript,
}

impl TokenKind {
    pub const ALL: [TokenKind; 6] = [
        TokenKind::Header,
        TokenKind::Timestamp,
        TokenKind::SpeakerChild,
        TokenKind::SpeakerAdult,
        TokenKind::Text,
        TokenKind::EndOfTranscript,
    ];
}

impl TokenClass {
    pub fn kind(&self) -> TokenKind {
        match self {
            TokenClass::Header => TokenKind::Header,
            TokenClass::Timestamp(_) => TokenKind::Timestamp,
            TokenClass::SpeakerChild => TokenKind::SpeakerChild,
            TokenClass::SpeakerAdult => TokenKind::SpeakerAdult,
            TokenClass::Text(_) => TokenKind::Text,
            TokenClass::EndOfTranscript => TokenKind::EndOfTranscript,
        }
    }

    pub fn speaker(role: SpeakerRole) -> TokenClass {
        match role {
            SpeakerRole::Child => TokenClass::SpeakerChild,
            SpeakerRole::Adult => TokenClass::SpeakerAdult,
        }
    }

    pub fn role(&self) -> Option<SpeakerRole> {
        match self {
            TokenClass::SpeakerChild => Some(SpeakerRole::Child),
            TokenClass::SpeakerAdult => Some(SpeakerRole::Adult),
            _ => None,
        }
    }
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenClass::Header => f.write_str("<|startoftranscript|>"),
            TokenClass::Timestamp(v) => write!(f, "<|{:.2}|>", ts_seconds(*v)),
            TokenClass::SpeakerChild => f.write_str("<child>"),
            TokenClass::SpeakerAdult => f.write_str("<adult>"),
            TokenClass::Text(w) => f.write_str(w),
            TokenClass::EndOfTranscript => f.write_str("<|endoftranscript|>"),
        }
    }
}

/// Seconds for a grid index.
pub fn ts_seconds(index: u16) -> f64 {
    index as f64 * GRID_STEP
}

/// Nearest grid index for a time, or `None` outside `[0, 30]` s.
pub fn quantize(seconds: f64) -> Option<u16> {
    if !seconds.is_finite() || seconds < -TIME_EPS || seconds > WINDOW_SECONDS + TIME_EPS {
        return None;
    }
    Some(((seconds / GRID_STEP).round() as i64).clamp(0, MAX_TS_INDEX as i64) as u16)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenStream {
    pub tokens: Vec<TokenClass>,
    /// The producing decoder hit the token budget.
    pub truncated: bool,
}

impl TokenStream {
    pub fn new(tokens: Vec<TokenClass>) -> Self {
        TokenStream { tokens, truncated: false }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Structural error counts for one decoded segment.
///
/// Each malformed utterance group increments at most one of the three
/// missing-token counters; `miss_both` takes precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructuralErrorReport {
    /// Utterance groups seen in the stream, malformed ones included.
    pub utterances: usize,
    pub miss_speaker: usize,
    pub miss_timestamp: usize,
    pub miss_both: usize,
    /// Groups dropped for reasons outside the taxonomy: no words, an
    /// inverted span, or a span that overlaps the previous utterance.
    pub malformed: usize,
    pub infinite_loop: bool,
}

impl StructuralErrorReport {
    pub fn missing_total(&self) -> usize {
        self.miss_speaker + self.miss_timestamp + self.miss_both
    }

    pub fn is_clean(&self) -> bool {
        self.missing_total() == 0 && self.malformed == 0 && !self.infinite_loop
    }
}

pub fn serialize_transcript(t: &Transcript) -> Result<TokenStream, GrammarError> {
    let mut tokens = Vec::with_capacity(2 + t.len() * 6);
    tokens.push(TokenClass::Header);
    for (index, u) in t.utterances().iter().enumerate() {
        if u.words.is_empty() {
            return Err(GrammarError::EmptyUtterance { index });
        }
        let start = quantize(u.span.start()).ok_or(GrammarError::OutOfRange { index, time: u.span.start() })?;
        let end = quantize(u.span.end()).ok_or(GrammarError::OutOfRange { index, time: u.span.end() })?;
        tokens.push(TokenClass::Timestamp(start));
        tokens.push(TokenClass::speaker(u.role));
        tokens.extend(u.words.iter().map(|w| TokenClass::Text(w.clone())));
        tokens.push(TokenClass::Timestamp(end));
    }
    tokens.push(TokenClass::EndOfTranscript);
    Ok(TokenStream::new(tokens))
}

#[derive(Debug, Default)]
struct Group {
    start: Option<u16>,
    role: Option<SpeakerRole>,
    words: Vec<String>,
    end: Option<u16>,
}

impl Group {
    fn is_empty(&self) -> bool {
        self.start.is_none() && self.role.is_none() && self.words.is_empty()
    }
}

/// Split a token sequence into utterance groups. A timestamp after text
/// closes the group, except when a speaker token follows it: then it is
/// read as the next group's start and the current group lacks its end. A
/// speaker token after text opens a new group.
fn group_tokens(tokens: &[TokenClass]) -> Vec<Group> {
    let mut groups = Vec::new();
    let mut cur = Group::default();
    for (i, tok) in tokens.iter().enumerate() {
        match tok {
            TokenClass::Header => {}
            TokenClass::Timestamp(v) => {
                if !cur.words.is_empty() {
                    let opens_next = tokens.get(i + 1).is_some_and(|n| n.role().is_some());
                    if opens_next {
                        groups.push(std::mem::take(&mut cur));
                        cur.start = Some(*v);
                    } else {
                        cur.end = Some(*v);
                        groups.push(std::mem::take(&mut cur));
                    }
                } else if cur.role.is_none() {
                    // A repeated leading timestamp replaces the stray one.
                    cur.start = Some(*v);
                }
            }
            TokenClass::SpeakerChild | TokenClass::SpeakerAdult => {
                if !cur.words.is_empty() {
                    groups.push(std::mem::take(&mut cur));
                }
                cur.role = tok.role();
            }
            TokenClass::Text(w) => cur.words.push(w.clone()),
            TokenClass::EndOfTranscript => break,
        }
    }
    if !cur.is_empty() {
        groups.push(cur);
    }
    groups
}

/// Parse a token stream into a transcript on the `[0, 30]` s window. Never
/// fails: structural problems are counted in the report.
pub fn parse_token_stream(s: &TokenStream) -> (Transcript, StructuralErrorReport) {
    let mut groups = group_tokens(&s.tokens);
    let mut report = StructuralErrorReport::default();
    if s.truncated {
        report.infinite_loop = true;
        groups.pop();
    }
    report.utterances = groups.len();

    let mut utterances: Vec<Utterance> = Vec::with_capacity(groups.len());
    for i in 0..groups.len() {
        let g = &groups[i];
        let missing_ts = g.start.is_none() || g.end.is_none();
        match (g.role, missing_ts) {
            (None, true) => {
                report.miss_both += 1;
                continue;
            }
            (None, false) => {
                report.miss_speaker += 1;
                continue;
            }
            (Some(_), true) => report.miss_timestamp += 1,
            (Some(_), false) => {}
        }
        let role = g.role.expect("checked above");
        let Some(start) = g.start else { continue };
        let end = match g.end {
            Some(e) => e,
            // Repair a missing end with the next group's start.
            None => match groups.get(i + 1).and_then(|n| n.start) {
                Some(e) => e,
                None => continue,
            },
        };
        // A group already counted as missing a timestamp is not counted again.
        if g.words.is_empty() || end < start || end > MAX_TS_INDEX {
            report.malformed += usize::from(!missing_ts);
            continue;
        }
        let span = TimeInterval::new(ts_seconds(start), ts_seconds(end)).expect("grid times are valid");
        if let Some(prev) = utterances.last() {
            if span.start() < prev.span.end() - TIME_EPS {
                report.malformed += usize::from(!missing_ts);
                continue;
            }
        }
        utterances.push(Utterance::new(role, span, g.words.clone()));
    }
    let window = TimeInterval::new(0.0, WINDOW_SECONDS).expect("valid window");
    let t = Transcript::new(utterances, window).expect("parser keeps utterances ordered");
    (t, report)
}

pub fn validate_structure(s: &TokenStream) -> StructuralErrorReport {
    parse_token_stream(s).1
}
