#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&seed, rest)) = data.split_first() else { return };
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(records) = debiasqa::corpus::parse_unqover_like(text, seed as u64) {
            assert!(records.iter().all(|r| r.validate().is_ok()));
            assert_eq!(records, debiasqa::corpus::parse_unqover_like(text, seed as u64).unwrap());
        }
    }
});
