#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(reply) = std::str::from_utf8(data) else { return };
    let _ = debiasqa::detector::parse_llm_detector_reply(reply);
    let _ = debiasqa::guidance::parse_coherence_verdict(reply);
    let _ = debiasqa::guidance::parse_neutrality_verdict(reply);
});
