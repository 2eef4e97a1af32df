//! Replays the checked-in fuzz corpora, plus seeded byte mutations of each
//! seed, through the same invariants the fuzz targets assert. This keeps the
//! decoders covered on stable toolchains without cargo-fuzz.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pim_gemv::codec;
use pim_gemv::config::SystemConfig;
use pim_gemv::e2e::parse_catalog;
use pim_gemv::planner::manifest::Manifest;

const MUTANTS: usize = 300;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn mutate(rng: &mut ChaCha8Rng, seed: &[u8]) -> Vec<u8> {
    let mut b = seed.to_vec();
    for _ in 0..rng.gen_range(1..=4) {
        match rng.gen_range(0..4) {
            0 if !b.is_empty() => {
                let i = rng.gen_range(0..b.len());
                b[i] ^= 1 << rng.gen_range(0..8);
            }
            1 if !b.is_empty() => {
                let i = rng.gen_range(0..b.len());
                b[i] = rng.gen();
            }
            2 if !b.is_empty() => {
                b.truncate(rng.gen_range(0..b.len()));
            }
            _ => {
                let i = rng.gen_range(0..=b.len());
                b.insert(i, rng.gen());
            }
        }
    }
    b
}

/// Runs `check` on every seed and on mutants of it; returns how many seeds parsed.
fn replay(target: &str, check: impl Fn(&[u8]) -> bool) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let all = seeds(target);
    let ok = all.iter().filter(|s| check(s)).count();
    for s in &all {
        for _ in 0..MUTANTS {
            check(&mutate(&mut rng, s));
        }
    }
    ok
}

#[test]
fn config_parse() {
    let ok = replay("config_parse", |d| {
        let Ok(text) = std::str::from_utf8(d) else { return false };
        match SystemConfig::parse(text) {
            Ok(cfg) => cfg.validate().is_ok(),
            Err(_) => false,
        }
    });
    assert_eq!(ok, seeds("config_parse").len());
}

#[test]
fn manifest_json() {
    let ok = replay("manifest_json", |d| {
        let Ok(text) = std::str::from_utf8(d) else { return false };
        let Ok(m) = Manifest::from_json(text) else { return false };
        let bytes = m.to_bytes();
        assert_eq!(Manifest::from_bytes(&bytes).unwrap().to_bytes(), bytes);
        true
    });
    assert_eq!(ok, seeds("manifest_json").len());
}

#[test]
fn manifest_binary() {
    let ok = replay("manifest_binary", |d| {
        let Ok(m) = Manifest::from_bytes(d) else { return false };
        assert_eq!(m.to_bytes(), d);
        true
    });
    assert_eq!(ok, seeds("manifest_binary").len());
}

#[test]
fn catalog_json() {
    let ok = replay("catalog_json", |d| {
        let Ok(text) = std::str::from_utf8(d) else { return false };
        let Ok(models) = parse_catalog(text) else { return false };
        for m in &models {
            for s in m.layer_gemvs().iter().chain([&m.lm_head()]) {
                assert!(s.m > 0 && s.k > 0);
            }
        }
        true
    });
    assert_eq!(ok, seeds("catalog_json").len());
}

#[test]
fn element_buffer() {
    let ok = replay("element_buffer", |d| {
        let Some((&sel, bytes)) = d.split_first() else { return false };
        let bits = [4, 8, 16, 3][sel as usize % 4];
        let _ = codec::decode_i64(bytes);
        let Ok(vals) = codec::decode_all(bytes, bits) else { return false };
        assert_eq!(codec::encode(&vals, bits).unwrap(), bytes);
        true
    });
    assert_eq!(ok, seeds("element_buffer").len());
}
