//! Replays the fuzz corpus, plus truncated and mutated copies of it, through the same
//! checks the fuzz targets make. Runs on stable without libFuzzer.

use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dink_core::graph::io::{
    parse_edges, parse_features, parse_features_binary, parse_features_text, parse_labels,
    write_features_text, write_labels,
};
use dink_core::pipeline::{decode_checkpoint, encode_checkpoint, parse_log, TrainConfig};

fn features_text(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(x) = parse_features_text(text) {
        let mut out = Vec::new();
        write_features_text(&mut out, &x).unwrap();
        assert_eq!(
            parse_features_text(std::str::from_utf8(&out).unwrap()).unwrap(),
            x
        );
    }
}

fn features_binary(data: &[u8]) {
    let binary = parse_features_binary(data);
    if binary.is_ok() {
        assert_eq!(parse_features(data).ok(), binary.ok());
    }
}

fn edges(data: &[u8]) {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    if let Ok(edges) = parse_edges(text, n as usize) {
        assert!(edges.iter().all(|&(u, v)| u < n as usize && v < n as usize));
    }
}

fn labels(data: &[u8]) {
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
}

fn checkpoint(data: &[u8]) {
    if let Ok(model) = decode_checkpoint(data) {
        assert_eq!(
            decode_checkpoint(&encode_checkpoint(&model)).unwrap(),
            model
        );
    }
}

fn config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = TrainConfig::from_toml_str(text) {
        assert_eq!(
            TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );
    }
    let _ = TrainConfig::default().overlay_toml_str(text);
}

fn log(data: &[u8]) {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_log(text);
    }
}

type Check = fn(&[u8]);

const TARGETS: [(&str, Check); 7] = [
    ("parse_features_text", features_text),
    ("parse_features_binary", features_binary),
    ("parse_edges", edges),
    ("parse_labels", labels),
    ("decode_checkpoint", checkpoint),
    ("config_toml", config),
    ("parse_log", log),
];

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut seeds: Vec<Vec<u8>> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|entry| std::fs::read(entry.unwrap().path()).unwrap())
        .collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "no seeds for {target}");
    seeds
}

#[test]
fn corpus_seeds_parse() {
    assert!(decode_checkpoint(&corpus("decode_checkpoint")[0]).is_ok());
    for seed in corpus("parse_features_text") {
        assert!(parse_features(&seed).is_ok());
    }
    for seed in corpus("parse_features_binary") {
        assert!(parse_features_binary(&seed).is_ok());
    }
    for seed in corpus("config_toml") {
        assert!(TrainConfig::from_toml_str(std::str::from_utf8(&seed).unwrap()).is_ok());
    }
    for seed in corpus("parse_log") {
        assert!(!parse_log(std::str::from_utf8(&seed).unwrap())
            .unwrap()
            .is_empty());
    }
}

#[test]
fn truncated_seeds_do_not_panic() {
    for (name, check) in TARGETS {
        for seed in corpus(name) {
            for len in 0..=seed.len() {
                check(&seed[..len]);
            }
        }
    }
}

#[test]
fn mutated_seeds_do_not_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (name, check) in TARGETS {
        for seed in corpus(name) {
            for _ in 0..500 {
                let mut m = seed.clone();
                for _ in 0..rng.random_range(1..=4) {
                    let i = rng.random_range(0..m.len().max(1));
                    match rng.random_range(0..3) {
                        0 if !m.is_empty() => m[i] = rng.random(),
                        1 if !m.is_empty() => {
                            m.remove(i);
                        }
                        _ => m.insert(i.min(m.len()), rng.random()),
                    }
                }
                check(&m);
            }
        }
    }
}

proptest! {
    #[test]
    fn arbitrary_bytes_do_not_panic(data in prop::collection::vec(any::<u8>(), 0..256)) {
        for (_, check) in TARGETS {
            check(&data);
        }
    }
}
