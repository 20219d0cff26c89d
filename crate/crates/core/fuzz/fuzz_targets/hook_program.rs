#![no_main]

use libfuzzer_sys::fuzz_target;
use tagchain::simnet::{ChannelName, HookContext, HookProgram};
use tagchain::tag::TagId;

fuzz_target!(|data: &[u8]| {
    let Ok(program) = serde_json::from_slice::<HookProgram>(data) else {
        return;
    };
    for channel in ChannelName::ALL {
        for index in 0..3 {
            let ctx = HookContext { channel, index, session: 1, tag: Some(TagId(0)) };
            let _ = program.action_for(&ctx);
        }
    }
    let json = serde_json::to_string(&program).unwrap();
    assert_eq!(serde_json::from_str::<HookProgram>(&json).unwrap(), program);
});
