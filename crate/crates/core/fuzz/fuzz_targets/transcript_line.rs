#![no_main]

use libfuzzer_sys::fuzz_target;
use tagchain::simnet::{Event, Transcript};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(event) = Event::from_json_line(text) {
        assert_eq!(Event::from_json_line(&event.to_json_line()).unwrap(), event);
    }
    let _ = Transcript::from_jsonl(text);
});
