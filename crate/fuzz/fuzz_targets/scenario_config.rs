#![no_main]

use libfuzzer_sys::fuzz_target;
use ndp_core::harness::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ScenarioConfig::parse(text, None) {
        let _ = cfg.validate();
        let _ = cfg.fingerprint();
    }
});
