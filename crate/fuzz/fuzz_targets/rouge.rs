#![no_main]

use debiasqa::textmetrics::{rouge, tokenize, RougeVariant};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (reference, candidate) = text.split_once('\t').unwrap_or((text, ""));
    let (r, c) = (tokenize(reference), tokenize(candidate));
    for v in [RougeVariant::RougeL, RougeVariant::Rouge1, RougeVariant::Rouge2] {
        let score = rouge(v, &r, &c);
        assert!((0.0..=1.0).contains(&score), "{v:?} {score}");
        assert_eq!(score, rouge(v, &c, &r));
    }
});
