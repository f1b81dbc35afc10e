#![no_main]

use datastop::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    match parse_config(text) {
        Ok(entries) => assert!(entries.len() <= text.lines().count()),
        Err(e) => assert!(e.to_string().starts_with("configuration error: ")),
    }
});
