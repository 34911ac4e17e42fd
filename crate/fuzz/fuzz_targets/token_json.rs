#![no_main]

use libfuzzer_sys::fuzz_target;
use sotkit::{formats, grammar};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(stream) = formats::read_token_json(s) {
        let _ = grammar::validate_structure(&stream);
        let _ = grammar::parse_token_stream(&stream);
        let again = formats::read_token_json(&formats::write_token_json(&stream)).expect("written tokens parse");
        assert_eq!(again, stream);
    }
});
