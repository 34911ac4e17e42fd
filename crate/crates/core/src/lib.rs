//! Joint transcription and child/adult role attribution for child-centered
//! dialogue.
//!
//! Transcripts are serialized into timestamped token streams with speaker
//! tags. A finite-state decoder keeps generated streams well formed, and
//! frame-level silence probabilities block timestamps inside silence.
//! Role-aware scoring splits errors into word errors and attribution errors.
//!
//! ```
//! use sotkit::grammar::{parse_token_stream, serialize_transcript};
//! use sotkit::model::{SpeakerRole, TimeInterval, Transcript, Utterance};
//!
//! let t = Transcript::from_utterances(vec![
//!     Utterance::from_text(SpeakerRole::Child, TimeInterval::new(0.0, 1.2).unwrap(), "ball"),
//!     Utterance::from_text(SpeakerRole::Adult, TimeInterval::new(1.6, 3.0).unwrap(), "the red ball"),
//! ])
//! .unwrap();
//! let tokens = serialize_transcript(&t).unwrap();
//! let (parsed, report) = parse_token_stream(&tokens);
//! assert!(report.is_clean());
//! assert_eq!(parsed.utterances(), t.utterances());
//! ```

pub mod analysis;
pub mod der;
pub mod formats;
pub mod frames;
pub mod fsm;
pub mod grammar;
pub mod loss;
pub mod model;
pub mod mtwer;
pub mod sessions;
pub mod sim;
pub mod vocab;
