//! Forced decoding: a finite-state machine over token classes that yields
//! the legal next tokens at every step, and greedy decode drivers built on it.
//!
//! States follow the serialized layout:
//!
//! ```text
//! S1 header -> S2 start time -> S3 speaker -> S4 text (loops) -> S5 end time
//! S5 -> S2 (next utterance) | S6 done
//! ```
//!
//! The state names the slot the *next* token fills. Emitting an end
//! timestamp from S4 moves to S5, from which a timestamp opens the next
//! utterance (passing through S2) and `EndOfTranscript` finishes.

use thiserror::Error;

use crate::grammar::{ts_seconds, TokenClass, TokenKind, TokenStream, MAX_TOKENS, MAX_TS_INDEX, WINDOW_SECONDS};
use crate::model::{TimeInterval, TIME_EPS};

/// Repetition penalty applied to text tokens already emitted in the current utterance.
pub const REPETITION_PENALTY: f64 = 1.1;

/// Text emitted when the scorer offers no legal text candidate.
pub const FALLBACK_WORD: &str = "<unk>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FsmError {
    #[error("no timestamp satisfies the floor {floor} and the suppression regions")]
    Exhausted { floor: u16 },
    #[error("token {token} is not legal in state {state:?}")]
    IllegalTransition { state: Phase, token: TokenClass },
    #[error("token budget of {MAX_TOKENS} exhausted")]
    BudgetExhausted,
    #[error("decoding has finished")]
    Finished,
    #[error("suppression regions must be sorted, disjoint and of positive length")]
    InvalidSuppression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// S1: transcription start.
    Header,
    /// S2: start time.
    StartTime,
    /// S3: speaker.
    Speaker,
    /// S4: text.
    Text,
    /// S5: an end time was just emitted.
    EndTime,
    /// S6: transcription end.
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecodeState {
    pub phase: Phase,
    /// Monotonic timestamp floor.
    pub last_ts: u16,
    pub current_start: Option<u16>,
    pub tokens_emitted: usize,
    pub text_count_in_utt: usize,
}

pub fn init_state() -> DecodeState {
    DecodeState { phase: Phase::Header, last_ts: 0, current_start: None, tokens_emitted: 0, text_count_in_utt: 0 }
}

impl Default for DecodeState {
    fn default() -> Self {
        init_state()
    }
}

impl DecodeState {
    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn budget_exhausted(&self) -> bool {
        self.tokens_emitted >= MAX_TOKENS
    }

    /// Between utterances, where `EndOfTranscript` is legal.
    pub fn at_boundary(&self) -> bool {
        matches!(self.phase, Phase::StartTime | Phase::EndTime)
    }
}

/// Diarization-predicted silence regions in which timestamps are forbidden.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuppressionSet {
    regions: Vec<TimeInterval>,
}

impl SuppressionSet {
    pub fn empty() -> Self {
        SuppressionSet::default()
    }

    /// Regions must be sorted, pairwise disjoint and have positive length.
    pub fn new(regions: Vec<TimeInterval>) -> Result<Self, FsmError> {
        let ok = regions.iter().all(|r| r.duration() > 0.0)
            && regions.windows(2).all(|w| w[0].end() <= w[1].start());
        if !ok {
            return Err(FsmError::InvalidSuppression);
        }
        Ok(SuppressionSet { regions })
    }

    pub fn regions(&self) -> &[TimeInterval] {
        &self.regions
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Whether a time lies strictly inside some region.
    pub fn suppresses_time(&self, t: f64) -> bool {
        // Regions are sorted; find the last one starting before t.
        let idx = self.regions.partition_point(|r| r.start() + TIME_EPS < t);
        idx > 0 && t < self.regions[idx - 1].end() - TIME_EPS
    }

    pub fn suppresses(&self, ts: u16) -> bool {
        self.suppresses_time(ts_seconds(ts))
    }

    /// Everything in `[0, 30]` s suppressed except the two endpoints.
    pub fn full_window() -> Self {
        SuppressionSet { regions: vec![TimeInterval::new(0.0, WINDOW_SECONDS).expect("valid")] }
    }
}

/// Legal next tokens for one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub allowed: Vec<TokenKind>,
    /// Inclusive lower bound for timestamp values.
    pub ts_min: u16,
    /// Timestamps strictly inside these regions are forbidden.
    pub suppressed: Vec<TimeInterval>,
}

impl MaskSpec {
    /// Every token class, every timestamp.
    pub fn unconstrained() -> Self {
        MaskSpec { allowed: TokenKind::ALL.to_vec(), ts_min: 0, suppressed: Vec::new() }
    }

    pub fn allows(&self, kind: TokenKind) -> bool {
        self.allowed.contains(&kind)
    }

    fn timestamp_ok(&self, v: u16) -> bool {
        if v < self.ts_min || v > MAX_TS_INDEX {
            return false;
        }
        let t = ts_seconds(v);
        !self.suppressed.iter().any(|r| t > r.start() + TIME_EPS && t < r.end() - TIME_EPS)
    }

    pub fn permits(&self, tok: &TokenClass) -> bool {
        if !self.allows(tok.kind()) {
            return false;
        }
        match tok {
            TokenClass::Timestamp(v) => self.timestamp_ok(*v),
            _ => true,
        }
    }

    /// Legal timestamp values in increasing order (empty if timestamps are not allowed).
    pub fn legal_timestamps(&self) -> impl Iterator<Item = u16> + '_ {
        let lo = if self.allows(TokenKind::Timestamp) { self.ts_min } else { MAX_TS_INDEX + 1 };
        (lo..=MAX_TS_INDEX).filter(move |v| self.timestamp_ok(*v))
    }

    /// The first legal token in canonical order, used when the scorer offers
    /// nothing legal.
    pub fn fallback_token(&self) -> Option<TokenClass> {
        for kind in TokenKind::ALL {
            if !self.allows(kind) {
                continue;
            }
            let tok = match kind {
                TokenKind::Header => TokenClass::Header,
                TokenKind::Timestamp => match self.legal_timestamps().next() {
                    Some(v) => TokenClass::Timestamp(v),
                    None => continue,
                },
                TokenKind::SpeakerChild => TokenClass::SpeakerChild,
                TokenKind::SpeakerAdult => TokenClass::SpeakerAdult,
                TokenKind::Text => TokenClass::Text(FALLBACK_WORD.to_string()),
                TokenKind::EndOfTranscript => TokenClass::EndOfTranscript,
            };
            return Some(tok);
        }
        None
    }
}

fn structural_kinds(d: &DecodeState) -> (Vec<TokenKind>, u16) {
    use TokenKind as K;
    match d.phase {
        Phase::Header => (vec![K::Header], 0),
        Phase::StartTime | Phase::EndTime => (vec![K::Timestamp, K::EndOfTranscript], d.last_ts),
        Phase::Speaker => (vec![K::SpeakerChild, K::SpeakerAdult], d.last_ts),
        Phase::Text if d.text_count_in_utt == 0 => (vec![K::Text], d.last_ts),
        Phase::Text => (vec![K::Text, K::Timestamp], d.current_start.unwrap_or(d.last_ts)),
        Phase::Done => (Vec::new(), d.last_ts),
    }
}

/// The legal next tokens in state `d` under suppression `supp`.
///
/// Returns [`FsmError::Exhausted`] when timestamps are part of the mask but
/// the floor and the suppression regions leave no legal value.
pub fn allowed_classes(d: &DecodeState, supp: &SuppressionSet) -> Result<MaskSpec, FsmError> {
    if d.phase == Phase::Done {
        return Err(FsmError::Finished);
    }
    let (allowed, ts_min) = structural_kinds(d);
    let mask = MaskSpec { allowed, ts_min, suppressed: supp.regions.clone() };
    if mask.allows(TokenKind::Timestamp) && mask.legal_timestamps().next().is_none() {
        return Err(FsmError::Exhausted { floor: ts_min });
    }
    Ok(mask)
}

/// Apply one token. Suppression is not rechecked here; the floor and the
/// token class are.
pub fn advance(d: &DecodeState, tok: &TokenClass) -> Result<DecodeState, FsmError> {
    if d.phase == Phase::Done {
        return Err(FsmError::Finished);
    }
    if d.budget_exhausted() {
        return Err(FsmError::BudgetExhausted);
    }
    let (allowed, ts_min) = structural_kinds(d);
    let illegal = || FsmError::IllegalTransition { state: d.phase, token: tok.clone() };
    if !allowed.contains(&tok.kind()) {
        return Err(illegal());
    }
    let mut next = *d;
    next.tokens_emitted += 1;
    match (d.phase, tok) {
        (Phase::Header, _) => next.phase = Phase::StartTime,
        (Phase::StartTime | Phase::EndTime, TokenClass::Timestamp(v)) => {
            if *v < ts_min || *v > MAX_TS_INDEX {
                return Err(illegal());
            }
            next.phase = Phase::Speaker;
            next.last_ts = *v;
            next.current_start = Some(*v);
            next.text_count_in_utt = 0;
        }
        (Phase::StartTime | Phase::EndTime, _) => next.phase = Phase::Done,
        (Phase::Speaker, _) => next.phase = Phase::Text,
        (Phase::Text, TokenClass::Text(_)) => next.text_count_in_utt += 1,
        (Phase::Text, TokenClass::Timestamp(v)) => {
            if *v < ts_min || *v > MAX_TS_INDEX {
                return Err(illegal());
            }
            next.phase = Phase::EndTime;
            next.last_ts = *v;
        }
        _ => return Err(illegal()),
    }
    Ok(next)
}

/// A step oracle for greedy decoding.
///
/// Given the tokens emitted so far and the current mask, returns scores for
/// the candidates it considers. Legal candidates it leaves out score
/// negative infinity; illegal ones are discarded by the driver.
pub trait Scorer {
    fn score(&mut self, prefix: &[TokenClass], mask: &MaskSpec) -> Vec<(TokenClass, f64)>;
}

impl<F> Scorer for F
where
    F: FnMut(&[TokenClass], &MaskSpec) -> Vec<(TokenClass, f64)>,
{
    fn score(&mut self, prefix: &[TokenClass], mask: &MaskSpec) -> Vec<(TokenClass, f64)> {
        self(prefix, mask)
    }
}

fn penalize(score: f64) -> f64 {
    if score > 0.0 {
        score / REPETITION_PENALTY
    } else {
        score * REPETITION_PENALTY
    }
}

/// Greedy choice over the legal scored candidates, with the repetition
/// penalty on text already used in the current utterance. Ties keep the
/// first candidate.
fn pick(candidates: Vec<(TokenClass, f64)>, mask: &MaskSpec, utt_words: &[String]) -> Option<TokenClass> {
    let mut best: Option<(TokenClass, f64)> = None;
    for (tok, score) in candidates {
        if score.is_nan() || !mask.permits(&tok) {
            continue;
        }
        let score = match &tok {
            TokenClass::Text(w) if utt_words.iter().any(|u| u == w) => penalize(score),
            _ => score,
        };
        if best.as_ref().map_or(true, |(_, b)| score > *b) {
            best = Some((tok, score));
        }
    }
    best.map(|(t, _)| t)
}

fn track_utterance(words: &mut Vec<String>, tok: &TokenClass) {
    match tok {
        TokenClass::Text(w) => words.push(w.clone()),
        TokenClass::Timestamp(_) | TokenClass::SpeakerChild | TokenClass::SpeakerAdult => words.clear(),
        _ => {}
    }
}

/// Greedy decoding constrained by the state machine and silence suppression.
///
/// When suppression leaves no legal timestamp, the driver ends the
/// transcript at utterance boundaries and otherwise ignores suppression for
/// that step.
pub fn run_forced_decode<S: Scorer + ?Sized>(scorer: &mut S, supp: &SuppressionSet) -> TokenStream {
    let mut state = init_state();
    let mut tokens: Vec<TokenClass> = Vec::new();
    let mut utt_words: Vec<String> = Vec::new();
    let unsuppressed = SuppressionSet::empty();
    while !state.is_done() {
        if state.budget_exhausted() {
            return TokenStream { tokens, truncated: true };
        }
        let mask = match allowed_classes(&state, supp) {
            Ok(m) => m,
            Err(FsmError::Exhausted { .. }) if state.at_boundary() => {
                let mut m = allowed_classes(&state, &unsuppressed).expect("boundary state has a mask");
                m.allowed.retain(|k| *k == TokenKind::EndOfTranscript);
                m
            }
            Err(FsmError::Exhausted { .. }) => {
                allowed_classes(&state, &unsuppressed).expect("floor within the grid")
            }
            Err(e) => unreachable!("state machine invariant broken: {e}"),
        };
        let scored = scorer.score(&tokens, &mask);
        let tok = pick(scored, &mask, &utt_words)
            .or_else(|| mask.fallback_token())
            .expect("every live state has a legal token");
        state = advance(&state, &tok).expect("masked token is legal");
        track_utterance(&mut utt_words, &tok);
        tokens.push(tok);
    }
    TokenStream { tokens, truncated: false }
}

/// Greedy decoding with no grammar constraint. Stops at `EndOfTranscript`,
/// at the token budget, or when the scorer offers nothing.
pub fn run_unconstrained_decode<S: Scorer + ?Sized>(scorer: &mut S) -> TokenStream {
    let mask = MaskSpec::unconstrained();
    let mut tokens: Vec<TokenClass> = Vec::new();
    let mut utt_words: Vec<String> = Vec::new();
    loop {
        if tokens.len() >= MAX_TOKENS {
            return TokenStream { tokens, truncated: true };
        }
        let Some(tok) = pick(scorer.score(&tokens, &mask), &mask, &utt_words) else {
            tokens.push(TokenClass::EndOfTranscript);
            break;
        };
        track_utterance(&mut utt_words, &tok);
        let done = tok == TokenClass::EndOfTranscript;
        tokens.push(tok);
        if done {
            break;
        }
    }
    TokenStream { tokens, truncated: false }
}

/// Whether a complete token sequence is accepted by the state machine.
pub fn accepts(tokens: &[TokenClass]) -> bool {
    let mut state = init_state();
    for tok in tokens {
        match advance(&state, tok) {
            Ok(s) => state = s,
            Err(_) => return false,
        }
    }
    state.is_done()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::validate_structure;
    use TokenClass::*;

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    fn run(tokens: &[TokenClass]) -> DecodeState {
        tokens.iter().fold(init_state(), |s, t| advance(&s, t).unwrap())
    }

    #[test]
    fn initial_mask_is_header_only() {
        let m = allowed_classes(&init_state(), &SuppressionSet::empty()).unwrap();
        assert_eq!(m.allowed, vec![TokenKind::Header]);
        assert_eq!(run(&[Header]).phase, Phase::StartTime);
        assert_eq!(run(&[Header, Timestamp(10)]).phase, Phase::Speaker);
    }

    #[test]
    fn text_then_timestamp_becomes_legal() {
        let s = run(&[Header, Timestamp(25), SpeakerChild]);
        let m = allowed_classes(&s, &SuppressionSet::empty()).unwrap();
        assert_eq!(m.allowed, vec![TokenKind::Text]);
        let s = advance(&s, &Text("hi".into())).unwrap();
        let m = allowed_classes(&s, &SuppressionSet::empty()).unwrap();
        assert_eq!(m.allowed, vec![TokenKind::Text, TokenKind::Timestamp]);
        assert_eq!(m.ts_min, 25);
    }

    #[test]
    fn after_end_time_timestamp_or_eot() {
        let s = run(&[Header, Timestamp(25), SpeakerChild, Text("a".into()), Text("b".into())]);
        assert_eq!(s.text_count_in_utt, 2);
        let s = advance(&s, &Timestamp(62)).unwrap();
        assert_eq!(s.phase, Phase::EndTime);
        assert_eq!(s.last_ts, 62);
        let m = allowed_classes(&s, &SuppressionSet::empty()).unwrap();
        assert_eq!(m.allowed, vec![TokenKind::Timestamp, TokenKind::EndOfTranscript]);
        assert_eq!(advance(&s, &EndOfTranscript).unwrap().phase, Phase::Done);
        let s2 = advance(&s, &Timestamp(62)).unwrap();
        assert_eq!(s2.phase, Phase::Speaker);
        assert_eq!(s2.current_start, Some(62));
    }

    #[test]
    fn suppression_mask_excludes_interior_only() {
        let supp = SuppressionSet::new(vec![iv(2.2, 4.8)]).unwrap();
        let mut s = run(&[Header]);
        s.last_ts = 100;
        let m = allowed_classes(&s, &supp).unwrap();
        let legal: Vec<u16> = m.legal_timestamps().collect();
        // Grid points in (2.2, 4.8) are 111..=239.
        let expected: Vec<u16> = (100..=110).chain(240..=1500).collect();
        assert_eq!(legal, expected);
        assert!(m.permits(&Timestamp(110)));
        assert!(!m.permits(&Timestamp(111)));
        assert!(!m.permits(&Timestamp(99)));
    }

    #[test]
    fn illegal_transitions_error() {
        let s = init_state();
        assert!(matches!(advance(&s, &Timestamp(0)), Err(FsmError::IllegalTransition { .. })));
        let s = run(&[Header, Timestamp(30)]);
        assert!(matches!(advance(&s, &Text("x".into())), Err(FsmError::IllegalTransition { .. })));
        let s = run(&[Header, Timestamp(30), SpeakerAdult, Text("x".into())]);
        assert!(advance(&s, &Timestamp(29)).is_err());
        let s = run(&[Header, EndOfTranscript]);
        assert_eq!(advance(&s, &EndOfTranscript), Err(FsmError::Finished));
    }

    #[test]
    fn exhausted_when_everything_suppressed() {
        // Only timestamp 0 is on an edge; the floor rules it out.
        let supp = SuppressionSet::new(vec![iv(0.0, 31.0)]).unwrap();
        let mut s = run(&[Header]);
        s.last_ts = 1;
        assert_eq!(allowed_classes(&s, &supp), Err(FsmError::Exhausted { floor: 1 }));
    }

    #[test]
    fn exhausted_at_boundary_ends_transcript() {
        let supp = SuppressionSet::full_window();
        let mut scorer = |_: &[TokenClass], _: &MaskSpec| vec![(Timestamp(700), 0.0)];
        // Timestamp 0 sits on the region edge and stays legal.
        let out = run_forced_decode(&mut scorer, &supp);
        assert_eq!(out.tokens[0], Header);
        assert!(accepts(&out.tokens) || out.truncated);
    }

    #[test]
    fn replay_scorer_reproduces_stream() {
        let truth = vec![
            Header, Timestamp(25), SpeakerChild, Text("hi".into()), Text("there".into()), Timestamp(62),
            Timestamp(70), SpeakerAdult, Text("yes".into()), Timestamp(90), EndOfTranscript,
        ];
        let t2 = truth.clone();
        let mut scorer = move |p: &[TokenClass], _: &MaskSpec| vec![(t2[p.len()].clone(), 1.0)];
        let out = run_forced_decode(&mut scorer, &SuppressionSet::empty());
        assert_eq!(out.tokens, truth);
        assert!(!out.truncated);
    }

    #[test]
    fn speaker_mass_dropped_still_emits_speaker() {
        // Scorer always prefers text and gives the speakers a little mass.
        let mut scorer = |p: &[TokenClass], _: &MaskSpec| {
            if p.len() > 12 {
                return vec![(EndOfTranscript, 0.0), (Timestamp(100), -0.5)];
            }
            vec![
                (Text("w".into()), -0.1),
                (Timestamp(10), -1.0),
                (SpeakerAdult, -5.0),
                (SpeakerChild, -6.0),
            ]
        };
        let out = run_forced_decode(&mut scorer, &SuppressionSet::empty());
        assert!(out.tokens.contains(&SpeakerAdult));
        let r = validate_structure(&out);
        assert_eq!(r.missing_total(), 0);
    }

    #[test]
    fn looping_scorer_truncates() {
        let mut scorer = |p: &[TokenClass], _: &MaskSpec| match p.len() {
            0 => vec![(Header, 0.0)],
            1 => vec![(Timestamp(0), 0.0)],
            2 => vec![(SpeakerChild, 0.0)],
            _ => vec![(Text("la".into()), -0.1), (Timestamp(5), -3.0)],
        };
        let out = run_forced_decode(&mut scorer, &SuppressionSet::empty());
        assert!(out.truncated);
        assert_eq!(out.len(), MAX_TOKENS);
        assert!(validate_structure(&out).infinite_loop);
    }

    #[test]
    fn repetition_penalty_breaks_near_ties() {
        // "la" repeated once is penalized below "di".
        let mut scorer = |p: &[TokenClass], _: &MaskSpec| match p.len() {
            0..=2 => vec![(Header, 0.0), (Timestamp(0), 0.0), (SpeakerChild, 0.0)],
            3 => vec![(Text("la".into()), -1.0)],
            4 => vec![(Text("la".into()), -1.0), (Text("di".into()), -1.05)],
            _ => vec![(Timestamp(50), 0.0), (EndOfTranscript, -1.0)],
        };
        let out = run_forced_decode(&mut scorer, &SuppressionSet::empty());
        assert_eq!(out.tokens[4], Text("di".into()));
        assert_eq!(penalize(2.2), 2.0);
    }

    #[test]
    fn unconstrained_follows_scorer_blindly() {
        let mut scorer = |p: &[TokenClass], _: &MaskSpec| match p.len() {
            0 => vec![(Header, 0.0)],
            1 => vec![(Text("oops".into()), 0.0)],
            _ => vec![(EndOfTranscript, 0.0)],
        };
        let out = run_unconstrained_decode(&mut scorer);
        assert_eq!(out.tokens, vec![Header, Text("oops".into()), EndOfTranscript]);
        assert_eq!(validate_structure(&out).miss_both, 1);
    }

    #[test]
    fn suppression_set_validation() {
        assert!(SuppressionSet::new(vec![iv(1.0, 2.0), iv(1.5, 3.0)]).is_err());
        assert!(SuppressionSet::new(vec![iv(1.0, 1.0)]).is_err());
        let s = SuppressionSet::new(vec![iv(1.0, 2.0), iv(3.0, 4.0)]).unwrap();
        assert!(s.suppresses_time(3.5));
        assert!(!s.suppresses_time(3.0));
        assert!(!s.suppresses_time(2.5));
        assert!(!s.suppresses_time(0.5));
    }
}
