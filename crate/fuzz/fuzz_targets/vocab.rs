#![no_main]

use libfuzzer_sys::fuzz_target;
use trimodal::datagen::Vocabulary;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = Vocabulary::parse(text, "fuzz") {
        let again = Vocabulary::parse(&v.to_file_string(), "fuzz").expect("written vocab reparses");
        assert_eq!(v, again);
        for (i, tok) in v.tokens().iter().enumerate().skip(1) {
            assert_eq!(v.id(tok), Some(i as u32));
        }
    }
});
