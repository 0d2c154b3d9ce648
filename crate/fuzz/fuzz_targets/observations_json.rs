#![no_main]

use coherence_core::io::{observations_to_json, parse_observations};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(obs) = parse_observations(s) {
        let back = parse_observations(&observations_to_json(&obs)).expect("round trip");
        assert_eq!(back.len(), obs.len());
    }
});
