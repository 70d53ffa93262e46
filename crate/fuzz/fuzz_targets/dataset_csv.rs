#![no_main]

use libfuzzer_sys::fuzz_target;
use ndp_core::data::{parse_dataset, write_dataset};

fuzz_target!(|data: &[u8]| {
    let Ok(samples) = parse_dataset(data) else { return };
    let mut out = Vec::new();
    write_dataset(&samples, &mut out).expect("in-memory write");
    let again = parse_dataset(out.as_slice()).expect("written dataset parses");
    assert_eq!(samples.len(), again.len());
});
