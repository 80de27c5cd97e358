#![no_main]

use dink_core::graph::io::parse_edges;
use libfuzzer_sys::fuzz_target;

// First byte: node count. Rest: the edge list text.
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    if let Ok(edges) = parse_edges(text, n as usize) {
        assert!(edges.iter().all(|&(u, v)| u < n as usize && v < n as usize));
    }
});
