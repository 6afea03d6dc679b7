#![no_main]

use debiasqa::llmclient::{Backend, GenerationParams, MockBackend, MockScript};
use libfuzzer_sys::fuzz_target;

// The script is everything before the first NUL; the rest is a prompt to answer.
fuzz_target!(|data: &[u8]| {
    let (script, prompt) = match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], &data[i + 1..]),
        None => (data, &[][..]),
    };
    let (Ok(script), Ok(prompt)) = (std::str::from_utf8(script), std::str::from_utf8(prompt)) else { return };
    if let Ok(script) = MockScript::parse(script) {
        if let Ok(backend) = MockBackend::new(script) {
            let _ = backend.generate(prompt, &GenerationParams::ANSWER);
        }
    }
});
