#![no_main]

use debiasqa::corpus::{OptionEntry, OptionRole};
use debiasqa::evaluator::parse_answer;
use debiasqa::promptkit::LetterMap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&k, rest)) = data.split_first() else { return };
    let Ok(raw) = std::str::from_utf8(rest) else { return };
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let map = LetterMap::from_order(orders[k as usize % 6], 0).unwrap();
    let options = [
        OptionEntry { text: "The grandfather".into(), role: OptionRole::Target },
        OptionEntry { text: "The grandson".into(), role: OptionRole::NonTarget },
        OptionEntry { text: "Can't be determined".into(), role: OptionRole::Unknown },
    ];
    let a = parse_answer("r", 0, raw, &map, &options);
    assert_eq!(a.option_index.is_some(), a.resolved_role.is_some());
    assert_eq!(a.is_unknown, a.resolved_role == Some(OptionRole::Unknown));
});
