#![no_main]

use libfuzzer_sys::fuzz_target;
use ndp_core::trajectory::{allocate_times, min_snap, parse_waypoints};

fuzz_target!(|data: &[u8]| {
    let Ok(wps) = parse_waypoints(data) else { return };
    if wps.len() > 24 {
        return;
    }
    if let Ok(knots) = allocate_times(&wps, 0.5) {
        let _ = min_snap(&wps, &knots);
    }
});
