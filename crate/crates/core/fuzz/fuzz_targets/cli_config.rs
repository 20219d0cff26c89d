#![no_main]

use libfuzzer_sys::fuzz_target;
use tagchain_cli::config::{parse_seed, FileConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = toml::from_str::<FileConfig>(text) {
        let _ = cfg.seed();
    }
    let _ = parse_seed(text);
});
