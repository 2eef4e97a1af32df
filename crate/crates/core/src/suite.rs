//! Randomized oracle-equivalence and invariant battery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataFormat, FormatConfig, Knobs, MemoryConfig, SystemConfig};
use crate::e2e::catalog_models;
use crate::planner::{plan_gemv, PlannedGemv};
use crate::problem::{reference_gemv, GemvData, GemvProblem};
use crate::sim::{run_trace, verify_placement};
use crate::timing::report_for_trace;
use crate::trace::{generate_trace, CommandTrace, Counts};

pub const DEFAULT_SEED: u64 = 0x5EED_0001;
pub const DEFAULT_CASES: usize = 240;

/// One randomized small GEMV and the system it runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: usize,
    pub problem: GemvProblem,
    pub cfg: SystemConfig,
    pub data_seed: u64,
}

impl Instance {
    pub fn describe(&self) -> String {
        let p = &self.problem;
        format!(
            "#{} {}x{} {}b{} {}ch x {}b split {}",
            self.id,
            p.m,
            p.k,
            p.in_fmt.bits,
            p.in_fmt.sf_block.map_or(String::new(), |b| format!(" sf{b}")),
            self.cfg.memory.num_channels,
            self.cfg.memory.banks_per_channel,
            self.cfg.knobs.split_k
        )
    }
}

/// Draws one instance with M, K up to 1024 that every layout rule accepts.
pub fn random_instance<R: Rng>(id: usize, rng: &mut R) -> Instance {
    let channels = [1usize, 2, 4][rng.gen_range(0..3)];
    let banks = [2usize, 4, 8, 16][rng.gen_range(0..4)];
    let bits = [4u32, 8, 16][rng.gen_range(0..3)];
    let sf_block = if rng.gen_bool(0.5) { Some([16u32, 32, 64, 128][rng.gen_range(0..4)]) } else { None };
    let splits: Vec<usize> = [1usize, 2, 4].into_iter().filter(|s| *s <= channels).collect();
    let split = splits[rng.gen_range(0..splits.len())];
    // Each split slice must stay byte aligned and hold whole scale blocks.
    let mut unit = if bits == 4 { 2 } else { 1 };
    if let (Some(b), true) = (sf_block, split > 1) {
        unit = unit.max(b as usize);
    }
    let step = unit * split;
    let k = step * rng.gen_range(1..=(1024 / step).max(1));
    let m = if rng.gen_bool(0.25) { rng.gen_range(1..=64) } else { rng.gen_range(1..=1024) };
    let out_bits = 16;
    let in_fmt = DataFormat { bits, sf_block, sf_bits: 8 };
    let cfg = SystemConfig {
        memory: MemoryConfig { num_channels: channels, banks_per_channel: banks, ..MemoryConfig::default() },
        format: FormatConfig { in_bits: bits, out_bits, sf_block, sf_bits: 8 },
        knobs: Knobs { split_k: split, ..Knobs::default() },
        ..SystemConfig::default()
    };
    Instance { id, problem: GemvProblem { m, k, in_fmt, out_fmt: DataFormat::int(out_bits) }, cfg, data_seed: rng.gen() }
}

pub fn corpus(seed: u64, cases: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases).map(|i| random_instance(i, &mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    /// Named invariants that failed; empty on success.
    pub failures: Vec<String>,
}

impl CaseResult {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Trace-level invariants shared by corpus and catalog cases.
fn trace_checks(planned: &PlannedGemv, trace: &CommandTrace, cfg: &SystemConfig, failures: &mut Vec<String>) {
    for ch in &trace.channels {
        if Counts::of(&ch.commands, ch.spill_base) != ch.counts {
            failures.push(format!("counts_recompute: channel {}", ch.channel));
        }
    }
    let r = report_for_trace(planned, trace, cfg);
    let b = r.breakdown;
    let parts = [b.mac_ns, b.iv_ns, b.row_open_ns, b.turnaround_ns, b.reduce_ns, b.sf_ns, b.spill_ns, b.soc_reduce_ns];
    if parts.iter().any(|x| *x < 0.0) || (b.pim_ns() - r.pim_time_ns).abs() > 1e-9 * r.pim_time_ns.max(1.0) {
        failures.push("breakdown_sums".into());
    }
}

/// Runs the full battery on an already planned GEMV. A trace generation
/// error is reported alongside whatever placement checks still fail.
pub fn check_planned(planned: &PlannedGemv, cfg: &SystemConfig, data: Option<&GemvData>) -> Vec<String> {
    let mut failures = Vec::new();
    let trace = match generate_trace(planned, &cfg.pim) {
        Ok(t) => t,
        Err(e) => {
            failures.push(format!("trace_generation: {e}"));
            let empty = CommandTrace { geometry: planned.parts[0].map.geometry, split_k: planned.split_k, channels: vec![] };
            let report = verify_placement(planned, &empty, &cfg.pim);
            failures.extend(report.failures().into_iter().map(String::from));
            return failures;
        }
    };
    let report = verify_placement(planned, &trace, &cfg.pim);
    failures.extend(report.failures().into_iter().map(String::from));
    trace_checks(planned, &trace, cfg, &mut failures);
    if let Some(data) = data {
        match (run_trace(planned, &trace, data, &cfg.pim), reference_gemv(&planned.problem, data)) {
            (Ok(sim), Ok(want)) if sim.output == want => {}
            (Ok(_), Ok(_)) => failures.push("oracle_equivalence".into()),
            (Err(e), _) | (_, Err(e)) => failures.push(format!("oracle_equivalence: {e}")),
        }
    }
    failures
}

pub fn run_instance(inst: &Instance) -> CaseResult {
    let name = inst.describe();
    let planned = match plan_gemv(&inst.problem, &inst.cfg) {
        Ok(p) => p,
        Err(e) => return CaseResult { name, failures: vec![format!("planning: {e}")] },
    };
    let data = GemvData::random(&inst.problem, &mut ChaCha8Rng::seed_from_u64(inst.data_seed));
    CaseResult { name, failures: check_planned(&planned, &inst.cfg, Some(&data)) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub corpus: Vec<CaseResult>,
    pub catalog: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.corpus.iter().chain(&self.catalog).all(CaseResult::pass)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CaseResult> {
        self.corpus.iter().chain(&self.catalog).filter(|c| !c.pass())
    }

    pub fn summary(&self) -> String {
        format!(
            "{} corpus + {} catalog cases, {} failed (seed {})",
            self.corpus.len(),
            self.catalog.len(),
            self.failed().count(),
            self.seed
        )
    }
}

/// Corpus cases are simulated against the reference; catalog GEMVs are
/// too large to simulate and get the placement and trace checks only.
pub fn verify_suite(seed: u64, cases: usize, base: &SystemConfig) -> SuiteReport {
    let corpus = corpus(seed, cases).par_iter().map(run_instance).collect();
    let shapes: Vec<_> = catalog_models()
        .into_iter()
        .flat_map(|m| m.layer_gemvs().map(|s| (m.name.clone(), s)))
        .collect();
    let catalog = shapes
        .par_iter()
        .map(|(model, s)| {
            let name = format!("{model} {} {}x{}", s.kind.label(), s.m, s.k);
            let failures = GemvProblem::new(s.m, s.k, base.format.in_fmt(), base.format.out_fmt())
                .and_then(|p| plan_gemv(&p, base))
                .map(|planned| check_planned(&planned, base, None))
                .unwrap_or_else(|e| vec![format!("planning: {e}")]);
            CaseResult { name, failures }
        })
        .collect();
    SuiteReport { seed, corpus, catalog }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_seeded() {
        assert_eq!(corpus(7, 20), corpus(7, 20));
        assert_ne!(corpus(7, 20), corpus(8, 20));
        for inst in corpus(3, 200) {
            inst.problem.validate().unwrap();
            inst.cfg.validate().unwrap();
            assert!(inst.problem.m <= 1024 && inst.problem.k <= 1024);
        }
    }

    #[test]
    fn injected_register_overflow_is_named() {
        let cfg = SystemConfig::default();
        let mut planned = plan_gemv(&GemvProblem::int8(4096, 4096), &cfg).unwrap();
        planned.parts[0].plan.iv_regs = 15;
        let f = check_planned(&planned, &cfg, None);
        assert!(f.iter().any(|x| x == "register_budget"), "{f:?}");
        assert!(f.iter().any(|x| x.starts_with("trace_generation")));
    }

    #[test]
    fn small_corpus_passes() {
        for inst in corpus(11, 12) {
            let r = run_instance(&inst);
            assert!(r.pass(), "{}: {:?}", r.name, r.failures);
        }
    }
}
