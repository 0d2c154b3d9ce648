#![no_main]

use coherence_sdp::SdpProblem;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(p) = SdpProblem::from_json(s) {
        SdpProblem::from_json(&p.to_json()).expect("round trip");
    }
});
