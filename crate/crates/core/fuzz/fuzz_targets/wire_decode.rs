#![no_main]

//! Every decoder under both schemes. The first byte picks a bit length
//! trim so non-byte-aligned inputs are covered too.

use libfuzzer_sys::fuzz_target;
use tagchain::wire::{decode, encode, Bits, MessageKind};
use tagchain::Scheme;

const KINDS: [MessageKind; 4] =
    [MessageKind::ReaderHello, MessageKind::TagResponse, MessageKind::BatchReport, MessageKind::ServerReply];

fuzz_target!(|data: &[u8]| {
    let Some((&trim, body)) = data.split_first() else {
        return;
    };
    let len = (body.len() * 8).saturating_sub((trim % 8) as usize);
    let bits = Bits::from_bytes_with_len(body.to_vec(), len);
    for kind in KINDS {
        for scheme in Scheme::ALL {
            if let Ok(msg) = decode(&bits, kind, scheme) {
                assert_eq!(msg.kind(), kind);
                assert_eq!(encode(&msg), bits, "re-encoding a decoded {kind} must be lossless");
            }
        }
    }
});
