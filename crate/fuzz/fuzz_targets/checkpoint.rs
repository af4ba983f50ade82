#![no_main]

use libfuzzer_sys::fuzz_target;
use trimodal::encoders::{decode_checkpoint, decode_tensors, encode_tensors};

fuzz_target!(|data: &[u8]| {
    if let Ok(tensors) = decode_tensors(data) {
        let bytes = encode_tensors(&tensors).expect("decoded tensors re-encode");
        let again = decode_tensors(&bytes).expect("encoded tensors decode");
        assert_eq!(encode_tensors(&again).unwrap(), bytes);
    }
    let _ = decode_checkpoint(data);
});
