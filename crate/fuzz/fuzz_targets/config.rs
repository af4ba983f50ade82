#![no_main]

use libfuzzer_sys::fuzz_target;
use trimodal::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_sources(Some(text), None, &[]) {
        let written = cfg.to_toml();
        let again = ExperimentConfig::from_sources(Some(&written), None, &[]).expect("written config reloads");
        assert_eq!(again.to_toml(), written);
    }
});
