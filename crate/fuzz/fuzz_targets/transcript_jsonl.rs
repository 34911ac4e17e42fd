#![no_main]

use libfuzzer_sys::fuzz_target;
use sotkit::formats;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(t) = formats::read_transcript_jsonl(s) {
        let again = formats::read_transcript_jsonl(&formats::write_transcript_jsonl(&t)).expect("written transcript parses");
        assert_eq!(again, t);
    }
});
