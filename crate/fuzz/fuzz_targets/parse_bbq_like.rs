#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let scanned = debiasqa::corpus::scan_bbq_like(text);
        for r in scanned.iter().flatten() {
            assert!(r.validate().is_ok());
        }
        if let Ok(records) = debiasqa::corpus::parse_bbq_like(text) {
            assert_eq!(records.len(), scanned.len());
        }
    }
});
