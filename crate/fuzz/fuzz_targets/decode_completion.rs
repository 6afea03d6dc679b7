#![no_main]

use debiasqa::llmclient::{decode_completion_response, Endpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(body) = std::str::from_utf8(data) {
        let _ = decode_completion_response(Endpoint::Completions, body);
        let _ = decode_completion_response(Endpoint::Chat, body);
    }
});
