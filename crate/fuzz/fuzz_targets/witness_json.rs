#![no_main]

use coherence_core::io::parse_witness;
use coherence_core::witness::validate_witness;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok((w, k)) = parse_witness(s) {
        if w.dim() <= 8 {
            let _ = validate_witness(&w, k, 1e-9);
        }
    }
});
