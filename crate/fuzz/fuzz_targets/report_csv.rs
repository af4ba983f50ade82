#![no_main]

use libfuzzer_sys::fuzz_target;
use trimodal::metrics::{format_csv, format_table, parse_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_csv(text, "fuzz") {
        let _ = format_table(&rows);
        if let Ok(csv) = format_csv(&rows) {
            let again = parse_csv(&csv, "fuzz").expect("formatted report reparses");
            assert_eq!(format_csv(&again).unwrap(), csv);
        }
    }
});
