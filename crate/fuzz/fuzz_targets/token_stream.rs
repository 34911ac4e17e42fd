#![no_main]

use libfuzzer_sys::fuzz_target;
use sotkit::fsm::accepts;
use sotkit::grammar::{parse_token_stream, validate_structure, TokenClass, TokenStream};

// Two bytes per token: a class selector and a payload.
fuzz_target!(|data: &[u8]| {
    let tokens: Vec<TokenClass> = data
        .chunks_exact(2)
        .map(|c| match c[0] % 6 {
            0 => TokenClass::Header,
            1 => TokenClass::Timestamp(u16::from(c[1]) * 6),
            2 => TokenClass::SpeakerChild,
            3 => TokenClass::SpeakerAdult,
            4 => TokenClass::Text(format!("w{}", c[1] % 4)),
            _ => TokenClass::EndOfTranscript,
        })
        .collect();
    let stream = TokenStream { tokens, truncated: data.len() % 2 == 1 };
    let report = validate_structure(&stream);
    let (transcript, parsed) = parse_token_stream(&stream);
    assert_eq!(report, parsed);
    if accepts(&stream.tokens) && !stream.truncated {
        assert_eq!(report.missing_total(), 0);
        assert_eq!(report.utterances, transcript.len());
    }
});
