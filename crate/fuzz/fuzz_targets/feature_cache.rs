#![no_main]

use libfuzzer_sys::fuzz_target;
use trimodal::datagen::FeatureCache;

fuzz_target!(|data: &[u8]| {
    if let Ok(cache) = FeatureCache::decode(data) {
        let bytes = cache.encode().expect("decoded cache re-encodes");
        let again = FeatureCache::decode(&bytes).expect("encoded cache decodes");
        assert_eq!(again.encode().unwrap(), bytes);
    }
});
