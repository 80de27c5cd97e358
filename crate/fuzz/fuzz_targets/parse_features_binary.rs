#![no_main]

use dink_core::graph::io::{parse_features, parse_features_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let binary = parse_features_binary(data);
    // The auto-detecting entry point must agree whenever the magic is present.
    if binary.is_ok() {
        assert_eq!(parse_features(data).ok(), binary.ok());
    }
});
