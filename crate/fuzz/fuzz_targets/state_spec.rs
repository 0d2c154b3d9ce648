#![no_main]

use coherence_core::io::{build_state, parse_state_spec, StateSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_state_spec(s) {
        // only inline specs; file specs would touch the filesystem
        if !matches!(spec, StateSpec::File(_)) {
            if let Ok(rho) = build_state(&spec) {
                assert!(rho.dim() >= 1);
            }
        }
    }
});
