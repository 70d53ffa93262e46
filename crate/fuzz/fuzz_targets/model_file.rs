#![no_main]

use libfuzzer_sys::fuzz_target;
use ndp_core::predictor::{parse_model, write_model};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = parse_model(text) else { return };
    if model.layers().iter().map(|l| l.weight.len()).sum::<usize>() > 1 << 16 {
        return;
    }
    let mut out = Vec::new();
    write_model(&model, &mut out).expect("in-memory write");
    let again = parse_model(std::str::from_utf8(&out).expect("utf-8 output")).expect("written model parses");
    assert_eq!(model.widths(), again.widths());
    let x = [0.1, -0.2, 0.5, 0.0, 0.3, 0.0];
    let (a, b) = (model.forward(&x), again.forward(&x));
    assert!(a == b || (a.iter().any(|v| !v.is_finite()) && b.iter().any(|v| !v.is_finite())));
});
