#![no_main]

use datastop::config::{build_experiment, parse_config, ConfigEntries, Preset};
use datastop::error::Error;
use libfuzzer_sys::fuzz_target;

// First line: override assignments separated by ';'. The rest: a config file.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (head, body) = text.split_once('\n').unwrap_or((text, ""));
    let overrides: Vec<String> = head.split(';').filter(|s| !s.is_empty()).map(String::from).collect();
    let file = parse_config(body).unwrap_or_else(|_| ConfigEntries::default());
    let preset = if body.len() % 2 == 0 { Some(Preset::Desk) } else { None };
    match build_experiment(&file, &overrides, None, None, preset) {
        Ok(config) => {
            config.validate().unwrap();
            config.gain_spec().unwrap();
        }
        Err(Error::Config(_)) => {}
        Err(e) => panic!("unexpected error kind: {e:?}"),
    }
});
