#![no_main]

use libfuzzer_sys::fuzz_target;
use tagchain::tag::TagId;
use tagchain::Database;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mut db) = Database::from_json(text) {
        let again = Database::from_json(&db.to_json()).expect("own snapshot loads");
        assert_eq!(again, db);
        // A loaded database must survive normal use.
        let ids: Vec<TagId> = db.records.keys().copied().collect();
        for id in ids {
            let _ = db.issue_challenge(id);
            let _ = db.expected_tokens(id);
        }
    }
});
