//! Mapping between a model vocabulary of integer ids and token classes, plus
//! a step-by-step handle for driving the decoding state machine from a host
//! decoder that works in ids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::{advance, allowed_classes, init_state, DecodeState, FsmError, MaskSpec, SuppressionSet};
use crate::grammar::{TokenClass, TokenKind, MAX_TS_INDEX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VocabError {
    #[error("token id {0} is claimed by more than one structural role")]
    Collision(u32),
    #[error("timestamp ids overflow u32")]
    Overflow,
    #[error("no header id")]
    NoHeader,
    #[error(transparent)]
    Fsm(#[from] FsmError),
}

/// Structural ids of a vocabulary. Timestamp `v` has id
/// `timestamp_id_base + v`; ids not claimed by any structural token are text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyMap {
    pub header_ids: Vec<u32>,
    pub child_id: u32,
    pub adult_id: u32,
    pub eot_id: u32,
    pub timestamp_id_base: u32,
}

/// What an id decodes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdClass {
    Header,
    Timestamp(u16),
    SpeakerChild,
    SpeakerAdult,
    Text,
    EndOfTranscript,
}

impl IdClass {
    pub fn kind(self) -> TokenKind {
        match self {
            IdClass::Header => TokenKind::Header,
            IdClass::Timestamp(_) => TokenKind::Timestamp,
            IdClass::SpeakerChild => TokenKind::SpeakerChild,
            IdClass::SpeakerAdult => TokenKind::SpeakerAdult,
            IdClass::Text => TokenKind::Text,
            IdClass::EndOfTranscript => TokenKind::EndOfTranscript,
        }
    }
}

impl VocabularyMap {
    pub fn validate(&self) -> Result<(), VocabError> {
        if self.header_ids.is_empty() {
            return Err(VocabError::NoHeader);
        }
        let ts_end = self.timestamp_id_base.checked_add(MAX_TS_INDEX as u32).ok_or(VocabError::Overflow)?;
        let mut ids: Vec<u32> = self.header_ids.clone();
        ids.extend([self.child_id, self.adult_id, self.eot_id]);
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(VocabError::Collision(w[0]));
        }
        if let Some(id) = ids.iter().find(|id| (self.timestamp_id_base..=ts_end).contains(id)) {
            return Err(VocabError::Collision(*id));
        }
        Ok(())
    }

    pub fn classify(&self, id: u32) -> IdClass {
        if self.header_ids.contains(&id) {
            IdClass::Header
        } else if id == self.child_id {
            IdClass::SpeakerChild
        } else if id == self.adult_id {
            IdClass::SpeakerAdult
        } else if id == self.eot_id {
            IdClass::EndOfTranscript
        } else if id >= self.timestamp_id_base && id - self.timestamp_id_base <= MAX_TS_INDEX as u32 {
            IdClass::Timestamp((id - self.timestamp_id_base) as u16)
        } else {
            IdClass::Text
        }
    }

    /// Token class of an id. Text ids carry the given surface form.
    pub fn to_token(&self, id: u32, text: impl FnOnce(u32) -> String) -> TokenClass {
        match self.classify(id) {
            IdClass::Header => TokenClass::Header,
            IdClass::Timestamp(v) => TokenClass::Timestamp(v),
            IdClass::SpeakerChild => TokenClass::SpeakerChild,
            IdClass::SpeakerAdult => TokenClass::SpeakerAdult,
            IdClass::EndOfTranscript => TokenClass::EndOfTranscript,
            IdClass::Text => TokenClass::Text(text(id)),
        }
    }

    /// Boolean mask over `0..vocab_size`: true where the id is legal.
    pub fn id_mask(&self, mask: &MaskSpec, vocab_size: usize) -> Vec<bool> {
        (0..vocab_size as u32)
            .map(|id| match self.classify(id) {
                IdClass::Timestamp(v) => mask.permits(&TokenClass::Timestamp(v)),
                c => mask.allows(c.kind()),
            })
            .collect()
    }
}

/// Incremental decoding state for an id-level host loop: ask for the mask,
/// choose an id, step.
#[derive(Debug, Clone)]
pub struct DecodeStepper {
    vocab: VocabularyMap,
    suppression: SuppressionSet,
    state: DecodeState,
}

impl DecodeStepper {
    pub fn new(vocab: VocabularyMap, suppression: SuppressionSet) -> Result<Self, VocabError> {
        vocab.validate()?;
        Ok(DecodeStepper { vocab, suppression, state: init_state() })
    }

    pub fn state(&self) -> &DecodeState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.is_done()
    }

    /// Legal ids for the next step. When suppression leaves no timestamp,
    /// it is lifted for this step, or only end of transcript is offered at an
    /// utterance boundary.
    pub fn mask(&self, vocab_size: usize) -> Result<Vec<bool>, VocabError> {
        let m = match allowed_classes(&self.state, &self.suppression) {
            Ok(m) => m,
            Err(FsmError::Exhausted { .. }) => {
                let mut m = allowed_classes(&self.state, &SuppressionSet::empty())?;
                if self.state.at_boundary() {
                    m.allowed.retain(|k| *k == TokenKind::EndOfTranscript);
                }
                m
            }
            Err(e) => return Err(e.into()),
        };
        Ok(self.vocab.id_mask(&m, vocab_size))
    }

    pub fn step(&mut self, id: u32) -> Result<(), VocabError> {
        // Text content does not affect the state machine.
        let tok = self.vocab.to_token(id, |_| String::from("w"));
        self.state = advance(&self.state, &tok)?;
        Ok(())
    }
}
