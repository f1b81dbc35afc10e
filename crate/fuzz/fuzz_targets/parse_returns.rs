#![no_main]

use datastop::returns_io::{format_returns, parse_returns};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(path) = parse_returns(text) {
        assert!(path.values().iter().all(|z| z.is_finite() && *z > 0.0));
        let again = parse_returns(&format_returns(path.values())).unwrap();
        assert_eq!(again.values(), path.values());
    }
});
