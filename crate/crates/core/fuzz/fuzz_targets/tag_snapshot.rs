#![no_main]

use libfuzzer_sys::fuzz_target;
use tagchain::tag::TagState;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(tag) = TagState::from_json(text) {
        assert!(tag.t_prev <= tag.t_cur && tag.t_cur <= tag.t_max);
        let again = TagState::from_json(&tag.to_json()).expect("own snapshot loads");
        assert_eq!(again, tag);
    }
});
