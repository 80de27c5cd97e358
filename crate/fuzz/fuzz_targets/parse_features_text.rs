#![no_main]

use dink_core::graph::io::{parse_features_text, write_features_text};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(x) = parse_features_text(text) {
        let mut out = Vec::new();
        write_features_text(&mut out, &x).unwrap();
        let again = parse_features_text(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(again, x);
    }
});
