#![no_main]

use coherence_core::io::{matrix_to_json, parse_density, parse_hermitian, parse_matrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_matrix(s) {
        let back = parse_matrix(&matrix_to_json(&m)).expect("round trip");
        assert_eq!(back, m);
    }
    let _ = parse_hermitian(s);
    let _ = parse_density(s);
});
