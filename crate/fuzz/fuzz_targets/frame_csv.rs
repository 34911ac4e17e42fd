#![no_main]

use libfuzzer_sys::fuzz_target;
use sotkit::formats;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = formats::read_frame_csv(s);
});
