#![no_main]

use libfuzzer_sys::fuzz_target;
use ndp_core::data::{parse_log, write_log};

fuzz_target!(|data: &[u8]| {
    let Ok(records) = parse_log(data) else { return };
    let mut out = Vec::new();
    write_log(&records, &mut out).expect("in-memory write");
    let again = parse_log(out.as_slice()).expect("written log parses");
    assert_eq!(records.len(), again.len());
});
