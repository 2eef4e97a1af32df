//! Which experiment regenerates which result, and the commands that
//! reproduce every acceptance criterion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acceptance::{title, IDS};
use crate::error::Result;
use crate::experiments::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureEntry {
    pub id: String,
    pub title: String,
    pub experiments: Vec<Experiment>,
    /// Qualitative outcome the data should show.
    pub expected: String,
    pub tolerance: String,
    /// Whether the absolute numbers depend on unpublished timing constants.
    pub decision_bound: bool,
}

fn entry(id: &str, title: &str, experiments: &[Experiment], expected: &str, tolerance: &str, decision_bound: bool) -> FigureEntry {
    FigureEntry {
        id: id.into(),
        title: title.into(),
        experiments: experiments.to_vec(),
        expected: expected.into(),
        tolerance: tolerance.into(),
        decision_bound,
    }
}

pub fn figure_map() -> Vec<FigureEntry> {
    use Experiment::*;
    vec![
        entry(
            "page-size-table",
            "Preferred page size per memory configuration",
            &[],
            "256 KB for 8x16 banks and 512 KB for 16x16 banks with 2 KB rows",
            "exact",
            false,
        ),
        entry(
            "register-allocation",
            "Speedup of the planned layout against column-major, by IV register count",
            &[BaselineVsColmajor, RegAlloc],
            "column-major can be slower than the SoC; more IV registers help with diminishing returns",
            "iv_regs=8 within 5% of iv_regs=14 (catalog geomean)",
            true,
        ),
        entry(
            "cr-degree",
            "Speedup with maximal CR degree and chosen tile shapes",
            &[CrDegree],
            "maximal degree never loses to degree 1 and approaches the roofline on large models",
            "large GEMVs in [6.0, 7.0]",
            true,
        ),
        entry(
            "bank-count",
            "Speedup with 64, 128 and 256 banks and with other interleave granularities",
            &[BankSweep, GranSweep],
            "speedup scales with bank count; granularity leaves it unchanged",
            "64/256 banks within [85%, 100%] of 3.5x/14x",
            false,
        ),
        entry(
            "data-format",
            "Speedup for 4, 8 and 16 bit elements",
            &[FormatSweep],
            "similar across formats, lower for 4 bit on small models",
            "trend only",
            true,
        ),
        entry(
            "scale-factors",
            "Speedup with block scale factors of 32, 64 and 128 elements",
            &[SfSweep],
            "scale factors cost speedup; larger blocks recover it",
            "sf_ops non-increasing in block size",
            true,
        ),
        entry(
            "register-count",
            "Speedup with 8, 16 and 32 registers per ALU",
            &[RegCountSweep],
            "fewer registers cost some speedup, more registers gain a little",
            "trend only",
            true,
        ),
        entry(
            "end-to-end",
            "Per-token and end-to-end speedups across the model catalog",
            &[E2e],
            "token generation dominates; end-to-end speedup follows from the Amdahl identity",
            "token-gen share >= 0.85; per-token in [2.5, 7.0]",
            true,
        ),
        entry(
            "small-model-optimizations",
            "Split-K and reduction tree on the 125M model",
            &[SplitK, ReductionTree],
            "split-K and a reduction tree both raise small-model speedup",
            "trend only; magnitudes reported",
            true,
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub title: String,
    pub command: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproManifest {
    pub schema_version: u32,
    pub criteria: Vec<ManifestEntry>,
    pub figures: Vec<ManifestEntry>,
}

fn cmd(parts: &[&str]) -> Vec<String> {
    std::iter::once("pim-gemv").chain(parts.iter().copied()).map(String::from).collect()
}

pub fn repro_manifest() -> ReproManifest {
    let criteria = IDS
        .iter()
        .map(|id| ManifestEntry { id: id.to_string(), title: title(id).into(), command: cmd(&["check", id]) })
        .collect();
    let figures = figure_map()
        .into_iter()
        .flat_map(|f| {
            if f.experiments.is_empty() {
                vec![ManifestEntry { id: f.id.clone(), title: f.title.clone(), command: cmd(&["page-size"]) }]
            } else {
                f.experiments
                    .iter()
                    .map(|e| ManifestEntry {
                        id: f.id.clone(),
                        title: f.title.clone(),
                        command: cmd(&["sweep", e.name(), "--out", "results"]),
                    })
                    .collect()
            }
        })
        .collect();
    ReproManifest { schema_version: 1, criteria, figures }
}

pub fn manifest_json() -> String {
    serde_json::to_string_pretty(&repro_manifest()).expect("manifest serializes") + "\n"
}

pub fn emit_repro_manifest(path: &Path) -> Result<()> {
    std::fs::write(path, manifest_json())?;
    Ok(())
}
