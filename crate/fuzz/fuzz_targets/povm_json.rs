#![no_main]

use coherence_core::io::{parse_povm, povm_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_povm(s) {
        parse_povm(&povm_to_json(&p)).expect("round trip");
    }
});
