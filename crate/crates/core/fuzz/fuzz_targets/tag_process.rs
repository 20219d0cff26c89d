#![no_main]

//! Arbitrary bits at a tag: never a panic, always the same op count.

use libfuzzer_sys::fuzz_target;
use tagchain::tag::{TagId, TagState};
use tagchain::wire::Bits;
use tagchain::{Rules, Scheme, Word64};

fuzz_target!(|data: &[u8]| {
    for scheme in Scheme::ALL {
        let mut tag = TagState::new(TagId(0), scheme, Word64(7), Word64(1 << 40), Word64(5), Word64(11));
        let before = tag.clone();
        let out = tag.process_bits(&Bits::from_bytes(data.to_vec()), &Rules::default());
        assert_eq!(out.ops_used, TagState::session_ops(scheme));
        if !out.genuine() {
            assert_eq!(tag.key, before.key);
            assert_eq!(tag.t_cur, before.t_cur);
        }
    }
});
