//! Synthetic dialogues and an error-injecting replay scorer, used to measure
//! structural decoding failures with and without forced decoding.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`; trial `i` of a
//! study uses stream `i + 1` of the master seed, so trials are independent
//! and identical across platforms and thread counts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::frames::{silence_regions, FrameProbSequence, FrameProbs, DEFAULT_FRAME_PERIOD, DEFAULT_SHRINK, DEFAULT_SILENCE_THRESHOLD};
use crate::fsm::{run_forced_decode, run_unconstrained_decode, MaskSpec, Scorer, SuppressionSet};
use crate::grammar::{serialize_transcript, validate_structure, StructuralErrorReport, TokenClass, TokenStream, GRID_STEP, WINDOW_SECONDS};
use crate::model::{SpeakerRole, TimeInterval, Transcript, Utterance};

/// Score of the token the mock decoder wants to emit.
const PROPOSAL_SCORE: f64 = -0.105_360_515_657_826_3; // ln 0.9
/// Score left on a dropped token.
const RESIDUAL_SCORE: f64 = -2.995_732_273_553_991; // ln 0.05
const MIN_WORD_FRAMES: u32 = 10;
const MAX_WORD_FRAMES: u32 = 25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("probability {name} = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("silence gap range must be positive and ordered")]
    GapRange,
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("max_words must be at least 1")]
    MaxWords,
    #[error("{n} utterances may not fit in the {WINDOW_SECONDS} s window")]
    TooLong { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub n_utterances: usize,
    pub vocab: Vec<String>,
    pub p_drop_speaker: f64,
    /// Applied to each timestamp token independently.
    pub p_drop_timestamp: f64,
    /// Chance that a decode falls into a text-repetition loop.
    pub p_loop: f64,
    /// Silence before each utterance, seconds.
    pub silence_gap_range: (f64, f64),
    pub max_words: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            n_utterances: 6,
            vocab: ["yeah", "look", "the", "ball", "is", "red", "no", "mine", "okay", "what", "that", "go"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            p_drop_speaker: 0.0,
            p_drop_timestamp: 0.0,
            p_loop: 0.0,
            silence_gap_range: (0.5, 1.5),
            max_words: 4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, value) in [
            ("p_drop_speaker", self.p_drop_speaker),
            ("p_drop_timestamp", self.p_drop_timestamp),
            ("p_loop", self.p_loop),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimError::Probability { name, value });
            }
        }
        let (lo, hi) = self.silence_gap_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(SimError::GapRange);
        }
        if self.vocab.is_empty() {
            return Err(SimError::EmptyVocab);
        }
        if self.max_words == 0 {
            return Err(SimError::MaxWords);
        }
        let worst_utt = self.max_words as f64 * MAX_WORD_FRAMES as f64 * GRID_STEP;
        if self.n_utterances as f64 * (worst_utt + hi) + hi > WINDOW_SECONDS {
            return Err(SimError::TooLong { n: self.n_utterances });
        }
        Ok(())
    }
}

fn grid_time(frames: u32) -> f64 {
    frames as f64 * GRID_STEP
}

fn synth_with_rng(c: &SimConfig, rng: &mut ChaCha8Rng) -> (Transcript, FrameProbSequence) {
    // Times are kept on the 0.02 s grid as integer frame counts.
    let gap_lo = (c.silence_gap_range.0 / GRID_STEP).round().max(1.0) as u32;
    let gap_hi = ((c.silence_gap_range.1 / GRID_STEP).round() as u32).max(gap_lo);
    let mut role = if rng.gen_bool(0.5) { SpeakerRole::Child } else { SpeakerRole::Adult };
    let mut cursor = 0u32;
    let mut utts = Vec::with_capacity(c.n_utterances);
    let mut spans = Vec::with_capacity(c.n_utterances);
    for _ in 0..c.n_utterances {
        cursor += rng.gen_range(gap_lo..=gap_hi);
        let n_words = rng.gen_range(1..=c.max_words);
        let words: Vec<String> =
            (0..n_words).map(|_| c.vocab.choose(rng).expect("non-empty vocab").clone()).collect();
        let len: u32 = (0..n_words).map(|_| rng.gen_range(MIN_WORD_FRAMES..=MAX_WORD_FRAMES)).sum();
        let span = TimeInterval::new(grid_time(cursor), grid_time(cursor + len)).expect("ordered");
        spans.push((cursor, cursor + len, role));
        utts.push(Utterance::new(role, span, words));
        cursor += len;
        role = role.other();
    }
    cursor += rng.gen_range(gap_lo..=gap_hi);
    let session = TimeInterval::new(0.0, grid_time(cursor)).expect("ordered");
    let transcript = Transcript::new(utts, session).expect("generated utterances are ordered");

    let mut probs = Vec::with_capacity(cursor as usize);
    let mut k = 0;
    for n in 0..cursor {
        while k < spans.len() && spans[k].1 <= n {
            k += 1;
        }
        let p = match spans.get(k) {
            Some(&(a, _, SpeakerRole::Child)) if a <= n => FrameProbs::new(0.9, 0.05, 0.05),
            Some(&(a, _, SpeakerRole::Adult)) if a <= n => FrameProbs::new(0.05, 0.9, 0.05),
            _ => FrameProbs::new(0.05, 0.05, 0.9),
        };
        probs.push(p);
    }
    let frames = FrameProbSequence::new(DEFAULT_FRAME_PERIOD, probs).expect("normalized");
    (transcript, frames)
}

/// A deterministic dialogue with alternating roles and frame probabilities
/// consistent with it: speech frames give the speaking role 0.9, silence
/// frames give silence 0.9.
pub fn synth_dialogue(c: &SimConfig) -> Result<(Transcript, FrameProbSequence), SimError> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    Ok(synth_with_rng(c, &mut rng))
}

/// Replays a reference token stream with injected failures.
///
/// Dropped tokens keep a small residual score while the following kept
/// token is proposed instead, so an unconstrained decoder skips them and a
/// forced decoder falls back to them when the proposal is illegal. Once the
/// loop position is emitted, the scorer proposes that word forever.
#[derive(Debug, Clone)]
pub struct MockScorer {
    truth: Vec<TokenClass>,
    dropped: Vec<bool>,
    loop_at: Option<usize>,
    ptr: usize,
    seen: usize,
    looping: Option<TokenClass>,
}

impl MockScorer {
    pub fn new(truth: Vec<TokenClass>, dropped: Vec<bool>, loop_at: Option<usize>) -> Self {
        assert_eq!(truth.len(), dropped.len());
        MockScorer { truth, dropped, loop_at, ptr: 0, seen: 0, looping: None }
    }

    fn next_kept(&self) -> usize {
        (self.ptr..self.truth.len()).find(|&i| !self.dropped[i]).unwrap_or(self.truth.len())
    }

    fn observe(&mut self, tok: &TokenClass) {
        if self.looping.is_some() {
            return;
        }
        let window_end = (self.next_kept() + 1).min(self.truth.len());
        if let Some(q) = (self.ptr..window_end).find(|&q| self.truth[q] == *tok) {
            self.ptr = q + 1;
            if self.loop_at == Some(q) {
                self.looping = Some(tok.clone());
            }
        }
    }
}

impl Scorer for MockScorer {
    fn score(&mut self, prefix: &[TokenClass], _mask: &MaskSpec) -> Vec<(TokenClass, f64)> {
        for tok in &prefix[self.seen..] {
            self.observe(tok);
        }
        self.seen = prefix.len();
        if let Some(word) = &self.looping {
            return vec![(word.clone(), PROPOSAL_SCORE)];
        }
        let k = self.next_kept();
        let mut out = Vec::with_capacity(k - self.ptr + 1);
        match self.truth.get(k) {
            Some(t) => out.push((t.clone(), PROPOSAL_SCORE)),
            None => out.push((TokenClass::EndOfTranscript, PROPOSAL_SCORE)),
        }
        out.extend((self.ptr..k).map(|j| (self.truth[j].clone(), RESIDUAL_SCORE)));
        out
    }
}

/// Build the injecting scorer for a reference stream, drawing the injected
/// failures from `rng`.
pub fn mock_scorer_with_rng(truth: &TokenStream, c: &SimConfig, rng: &mut impl Rng) -> MockScorer {
    let dropped: Vec<bool> = truth
        .tokens
        .iter()
        .map(|t| match t {
            TokenClass::SpeakerChild | TokenClass::SpeakerAdult => rng.gen_bool(c.p_drop_speaker),
            TokenClass::Timestamp(_) => rng.gen_bool(c.p_drop_timestamp),
            _ => false,
        })
        .collect();
    let text_positions: Vec<usize> =
        truth.tokens.iter().enumerate().filter(|(_, t)| matches!(t, TokenClass::Text(_))).map(|(i, _)| i).collect();
    let loop_at = if rng.gen_bool(c.p_loop) { text_positions.choose(rng).copied() } else { None };
    MockScorer::new(truth.tokens.clone(), dropped, loop_at)
}

pub fn mock_scorer(truth: &TokenStream, c: &SimConfig) -> MockScorer {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    mock_scorer_with_rng(truth, c, &mut rng)
}

/// One simulated decode under both conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub truth: Transcript,
    pub suppression: SuppressionSet,
    pub free: TokenStream,
    pub forced: TokenStream,
    pub free_report: StructuralErrorReport,
    pub forced_report: StructuralErrorReport,
}

pub fn simulate_trial(c: &SimConfig, trial: u64) -> Result<TrialOutcome, SimError> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    rng.set_stream(trial + 1);
    let (truth, frames) = synth_with_rng(c, &mut rng);
    let stream = serialize_transcript(&truth).expect("synthetic dialogue fits the window");
    let scorer = mock_scorer_with_rng(&stream, c, &mut rng);
    let suppression = silence_regions(&frames, DEFAULT_SILENCE_THRESHOLD, DEFAULT_SHRINK);
    let free = run_unconstrained_decode(&mut scorer.clone());
    let forced = run_forced_decode(&mut scorer.clone(), &suppression);
    Ok(TrialOutcome {
        free_report: validate_structure(&free),
        forced_report: validate_structure(&forced),
        truth,
        suppression,
        free,
        forced,
    })
}

/// Error rates for one decoding condition. Missing-token rates are over
/// decoded utterance groups; the loop rate is over decodes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConditionRates {
    pub miss_speaker: f64,
    pub miss_timestamp: f64,
    pub miss_both: f64,
    pub infinite_loop: f64,
}

impl ConditionRates {
    fn from_reports<'a>(reports: impl Iterator<Item = &'a StructuralErrorReport>) -> Self {
        let (mut groups, mut spk, mut ts, mut both, mut loops, mut n) = (0, 0, 0, 0, 0, 0);
        for r in reports {
            groups += r.utterances;
            spk += r.miss_speaker;
            ts += r.miss_timestamp;
            both += r.miss_both;
            loops += usize::from(r.infinite_loop);
            n += 1;
        }
        let rate = |x: usize, d: usize| if d == 0 { 0.0 } else { x as f64 / d as f64 };
        ConditionRates {
            miss_speaker: rate(spk, groups),
            miss_timestamp: rate(ts, groups),
            miss_both: rate(both, groups),
            infinite_loop: rate(loops, n),
        }
    }

    pub fn missing_total(&self) -> f64 {
        self.miss_speaker + self.miss_timestamp + self.miss_both
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStudyResult {
    pub trials: usize,
    pub without_fsm: ConditionRates,
    pub with_fsm: ConditionRates,
}

/// Run `n_trials` paired decodes. Trials run on the current rayon pool;
/// results do not depend on the thread count.
pub fn run_error_study(c: &SimConfig, n_trials: usize) -> Result<ErrorStudyResult, SimError> {
    c.validate()?;
    let outcomes: Vec<(StructuralErrorReport, StructuralErrorReport)> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| simulate_trial(c, i).map(|o| (o.free_report, o.forced_report)))
        .collect::<Result<_, _>>()?;
    Ok(ErrorStudyResult {
        trials: n_trials,
        without_fsm: ConditionRates::from_reports(outcomes.iter().map(|o| &o.0)),
        with_fsm: ConditionRates::from_reports(outcomes.iter().map(|o| &o.1)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm::accepts;
    use crate::grammar::parse_token_stream;

    #[test]
    fn synth_is_deterministic() {
        let c = SimConfig { seed: 42, ..SimConfig::default() };
        assert_eq!(synth_dialogue(&c).unwrap(), synth_dialogue(&c).unwrap());
        let other = SimConfig { seed: 43, ..SimConfig::default() };
        assert_ne!(synth_dialogue(&c).unwrap().0, synth_dialogue(&other).unwrap().0);
    }

    #[test]
    fn synth_empty_dialogue() {
        let c = SimConfig { n_utterances: 0, ..SimConfig::default() };
        let (t, f) = synth_dialogue(&c).unwrap();
        assert!(t.is_empty());
        assert!(f.probs().iter().all(|p| p.silence == 0.9));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { p_loop: 1.5, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { silence_gap_range: (0.0, 1.0), ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { n_utterances: 40, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { vocab: vec![], ..SimConfig::default() }.validate().is_err());
    }

    #[test]
    fn clean_replay_in_both_conditions() {
        let c = SimConfig { seed: 3, ..SimConfig::default() };
        for trial in 0..20 {
            let o = simulate_trial(&c, trial).unwrap();
            let truth = serialize_transcript(&o.truth).unwrap();
            assert_eq!(o.free, truth);
            assert_eq!(o.forced, truth);
            assert!(o.free_report.is_clean());
            assert!(accepts(&o.forced.tokens));
        }
    }

    #[test]
    fn all_timestamps_dropped_without_fsm() {
        let c = SimConfig { seed: 5, p_drop_timestamp: 1.0, ..SimConfig::default() };
        let o = simulate_trial(&c, 0).unwrap();
        assert!(!o.free.tokens.iter().any(|t| matches!(t, TokenClass::Timestamp(_))));
        assert_eq!(o.free_report.miss_timestamp, o.free_report.utterances);
        assert_eq!(o.forced_report.missing_total(), 0);
        assert_eq!(parse_token_stream(&o.forced).0.len(), o.truth.len());
    }

    #[test]
    fn speaker_drop_is_repaired_under_fsm() {
        let c = SimConfig { seed: 9, p_drop_speaker: 1.0, ..SimConfig::default() };
        let o = simulate_trial(&c, 1).unwrap();
        assert_eq!(o.free_report.miss_speaker, o.free_report.utterances);
        assert_eq!(o.forced_report.miss_speaker, 0);
        // Residual mass keeps the reference speaker.
        assert_eq!(parse_token_stream(&o.forced).0.utterances(), o.truth.utterances());
    }

    #[test]
    fn loops_truncate() {
        let c = SimConfig { seed: 11, p_loop: 1.0, ..SimConfig::default() };
        let o = simulate_trial(&c, 0).unwrap();
        assert!(o.free.truncated && o.forced.truncated);
        assert!(o.free_report.infinite_loop && o.forced_report.infinite_loop);
    }

    #[test]
    fn study_is_deterministic_and_zero_without_injection() {
        let c = SimConfig { seed: 1, ..SimConfig::default() };
        let r = run_error_study(&c, 50).unwrap();
        assert_eq!(r.without_fsm, ConditionRates::default());
        assert_eq!(r.with_fsm, ConditionRates::default());
        let c = SimConfig { seed: 1, p_drop_speaker: 0.3, p_drop_timestamp: 0.3, p_loop: 0.1, ..SimConfig::default() };
        assert_eq!(run_error_study(&c, 50).unwrap(), run_error_study(&c, 50).unwrap());
    }
}
