#![no_main]

use dink_core::graph::io::{parse_labels, write_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(labels) = parse_labels(text) {
        let mut out = Vec::new();
        write_labels(&mut out, &labels).unwrap();
        assert_eq!(
            parse_labels(std::str::from_utf8(&out).unwrap()).unwrap(),
            labels
        );
    }
});
