#![no_main]

use libfuzzer_sys::fuzz_target;
use ndp_core::harness::RunInfo;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(info) = RunInfo::parse(text) {
        let again = RunInfo::parse(&info.to_text()).expect("written run info parses");
        assert_eq!(info.fingerprint, again.fingerprint);
        assert_eq!(info.rounds, again.rounds);
    }
});
