#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else { return };
    if let Some(s) = debiasqa::guidance::postprocess_guidance(raw) {
        assert!(!s.contains(['\n', '\r']));
        assert!(s.ends_with(['.', '!', '?']));
        assert_eq!(debiasqa::guidance::postprocess_guidance(&s).as_deref(), Some(s.as_str()));
    }
});
