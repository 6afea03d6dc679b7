#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(body) = std::str::from_utf8(data) {
        if let Ok(vectors) = debiasqa::textmetrics::decode_embeddings_response(body) {
            let dim = vectors.first().map(|v| v.values().len());
            assert!(vectors.iter().all(|v| Some(v.values().len()) == dim));
        }
    }
});
