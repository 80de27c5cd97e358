#![no_main]

use dink_core::pipeline::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_checkpoint(data) {
        let again = decode_checkpoint(&encode_checkpoint(&model)).unwrap();
        assert_eq!(again, model);
    }
});
