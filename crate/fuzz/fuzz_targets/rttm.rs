#![no_main]

use libfuzzer_sys::fuzz_target;
use sotkit::formats;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(segs) = formats::read_rttm(s) {
        formats::read_rttm(&formats::write_rttm("fuzz", &segs)).expect("written rttm parses");
    }
});
