#![no_main]

use libfuzzer_sys::fuzz_target;
use trimodal::datagen::{format_captions, parse_captions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse_captions(text, "fuzz") {
        let again = parse_captions(&format_captions(&entries), "fuzz").expect("formatted captions reparse");
        assert_eq!(entries, again);
    }
});
