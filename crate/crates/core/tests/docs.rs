use std::path::PathBuf;

use pim_gemv::experiments::Experiment;
use pim_gemv::repro::{figure_map, manifest_json};

fn docs(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn checked_in_manifest_is_current() {
    assert_eq!(docs("repro.json"), manifest_json(), "regenerate with `pim-gemv manifest --out docs/repro.json`");
}

#[test]
fn result_map_covers_every_experiment() {
    let md = docs("figures.md");
    for e in Experiment::ALL {
        assert!(md.contains(&format!("`{}`", e.name())), "{e}");
    }
    for f in figure_map() {
        assert!(md.contains(&f.id), "{}", f.id);
    }
}
