#![no_main]

use coherence_core::io::{parse_task_json, parse_task_spec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = parse_task_spec(s);
    if let Ok(t) = parse_task_json(s) {
        assert!(t.p_max() > 0.0);
    }
});
