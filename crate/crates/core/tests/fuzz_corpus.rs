//! Replays the checked-in fuzz corpus, plus truncated and bit-flipped
//! variants of each seed, through every parser with the same round-trip
//! invariants the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use trimodal::datagen::{format_captions, parse_captions, FeatureCache, Vocabulary};
use trimodal::encoders::{decode_checkpoint, decode_tensors, encode_tensors};
use trimodal::experiment::ExperimentConfig;
use trimodal::metrics::{format_csv, format_table, parse_csv, parse_obj};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds for {target}");
    paths.into_iter().map(|p| fs::read(p).unwrap()).collect()
}

fn check_captions(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse_captions(text, "fuzz") {
        let again = parse_captions(&format_captions(&entries), "fuzz").unwrap();
        assert_eq!(entries, again);
    }
}

fn check_vocab(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = Vocabulary::parse(text, "fuzz") {
        assert_eq!(Vocabulary::parse(&v.to_file_string(), "fuzz").unwrap(), v);
        for (i, tok) in v.tokens().iter().enumerate().skip(1) {
            assert_eq!(v.id(tok), Some(i as u32));
        }
    }
}

fn check_feature_cache(data: &[u8]) {
    if let Ok(cache) = FeatureCache::decode(data) {
        let bytes = cache.encode().unwrap();
        assert_eq!(FeatureCache::decode(&bytes).unwrap().encode().unwrap(), bytes);
    }
}

fn check_checkpoint(data: &[u8]) {
    if let Ok(tensors) = decode_tensors(data) {
        let bytes = encode_tensors(&tensors).unwrap();
        assert_eq!(encode_tensors(&decode_tensors(&bytes).unwrap()).unwrap(), bytes);
    }
    let _ = decode_checkpoint(data);
}

fn check_obj(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = parse_obj(text, "fuzz") {
        assert!(mesh.triangles.iter().flatten().all(|&i| i < mesh.vertices.len()));
        let _ = mesh.validate();
    }
}

fn check_config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_sources(Some(text), None, &[]) {
        let written = cfg.to_toml();
        let again = ExperimentConfig::from_sources(Some(&written), None, &[]).unwrap();
        assert_eq!(again.to_toml(), written);
    }
}

fn check_report(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_csv(text, "fuzz") {
        let _ = format_table(&rows);
        if let Ok(csv) = format_csv(&rows) {
            let again = parse_csv(&csv, "fuzz").unwrap();
            assert_eq!(format_csv(&again).unwrap(), csv);
        }
    }
}

type Check = fn(&[u8]);

const TARGETS: [(&str, Check); 7] = [
    ("captions", check_captions),
    ("vocab", check_vocab),
    ("feature_cache", check_feature_cache),
    ("checkpoint", check_checkpoint),
    ("obj", check_obj),
    ("config", check_config),
    ("report_csv", check_report),
];

#[test]
fn seeds_and_truncations() {
    for (target, check) in TARGETS {
        for seed in seeds(target) {
            check(&seed);
            let step = (seed.len() / 64).max(1);
            for cut in (0..seed.len()).step_by(step) {
                check(&seed[..cut]);
            }
        }
    }
}

#[test]
fn generated_seeds_parse() {
    assert!(parse_captions(std::str::from_utf8(&seeds("captions")[1]).unwrap(), "seed").is_ok());
    for cache in &seeds("feature_cache")[..1] {
        FeatureCache::decode(cache).unwrap();
    }
    decode_checkpoint(&seeds("checkpoint")[0]).unwrap();
    let tiny = String::from_utf8(seeds("config")[2].clone()).unwrap();
    ExperimentConfig::from_sources(Some(&tiny), None, &[]).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bit_flips_never_panic(target in 0usize..TARGETS.len(), seed_idx in 0usize..8, pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let (name, check) = TARGETS[target];
        let all = seeds(name);
        let mut data = all[seed_idx % all.len()].clone();
        if !data.is_empty() {
            let i = pos.index(data.len());
            data[i] ^= 1 << bit;
        }
        check(&data);
    }

    #[test]
    fn arbitrary_bytes_never_panic(target in 0usize..TARGETS.len(), data in prop::collection::vec(any::<u8>(), 0..256)) {
        (TARGETS[target].1)(&data);
    }
}
