//! Named parameter sweeps over the model catalog, emitted as CSV or JSON.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{effective_roofline, SystemConfig};
use crate::e2e::{catalog_models, evaluate_model, GemvShape, ModelSpec};
use crate::error::{Error, Result};
use crate::planner::plan_gemv;
use crate::problem::GemvProblem;
use crate::timing::{price_counts, report_for_trace};
use crate::trace::{generate_trace, Counts};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    BaselineVsColmajor,
    RegAlloc,
    CrDegree,
    BankSweep,
    GranSweep,
    FormatSweep,
    SfSweep,
    RegCountSweep,
    SplitK,
    ReductionTree,
    E2e,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::BaselineVsColmajor,
        Experiment::RegAlloc,
        Experiment::CrDegree,
        Experiment::BankSweep,
        Experiment::GranSweep,
        Experiment::FormatSweep,
        Experiment::SfSweep,
        Experiment::RegCountSweep,
        Experiment::SplitK,
        Experiment::ReductionTree,
        Experiment::E2e,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::BaselineVsColmajor => "baseline_vs_colmajor",
            Experiment::RegAlloc => "reg_alloc",
            Experiment::CrDegree => "cr_degree",
            Experiment::BankSweep => "bank_sweep",
            Experiment::GranSweep => "gran_sweep",
            Experiment::FormatSweep => "format_sweep",
            Experiment::SfSweep => "sf_sweep",
            Experiment::RegCountSweep => "reg_count_sweep",
            Experiment::SplitK => "split_k",
            Experiment::ReductionTree => "reduction_tree",
            Experiment::E2e => "e2e",
        }
    }

    /// Variant label and the overrides applied on top of the base config.
    pub fn variants(&self) -> Vec<(String, Vec<String>)> {
        fn v(label: &str, ov: &[&str]) -> (String, Vec<String>) {
            (label.to_string(), ov.iter().map(|s| s.to_string()).collect())
        }
        fn each<T: fmt::Display>(vals: &[T], label: impl Fn(&T) -> String, ov: impl Fn(&T) -> Vec<String>) -> Vec<(String, Vec<String>)> {
            vals.iter().map(|x| (label(x), ov(x))).collect()
        }
        match self {
            Experiment::BaselineVsColmajor => vec![
                v("col_major", &["knobs.layout=column_major", "knobs.cr_degree=1"]),
                v("pim_gemv", &["knobs.cr_degree=1"]),
            ],
            Experiment::RegAlloc => each(
                &[2usize, 4, 8, 14],
                |n| format!("iv_regs={n}"),
                |n| vec![format!("knobs.iv_regs={n}"), "knobs.cr_degree=1".into()],
            ),
            Experiment::CrDegree => vec![v("d=1", &["knobs.cr_degree=1"]), v("d=max", &["knobs.cr_degree=null"])],
            Experiment::BankSweep => each(
                &[8usize, 16, 32],
                |b| format!("banks={}", b * 8),
                |b| vec![format!("memory.banks_per_channel={b}")],
            ),
            Experiment::GranSweep => each(
                &[128usize, 256, 512],
                |g| format!("gran={g}"),
                |g| vec![format!("memory.interleave_gran_bytes={g}")],
            ),
            Experiment::FormatSweep => each(
                &[4u32, 8, 16],
                |b| format!("{b}b"),
                |b| vec![format!("format.in_bits={b}")],
            ),
            Experiment::SfSweep => {
                let mut out = Vec::new();
                for bits in [8u32, 4] {
                    out.push((format!("{bits}b"), vec![format!("format.in_bits={bits}"), "format.sf_block=null".into()]));
                    for blk in [32u32, 64, 128] {
                        out.push((
                            format!("{bits}b_sf{blk}"),
                            vec![format!("format.in_bits={bits}"), format!("format.sf_block={blk}")],
                        ));
                    }
                }
                out
            }
            Experiment::RegCountSweep => each(
                &[8usize, 16, 32],
                |r| format!("regs={r}"),
                |r| vec![format!("pim.regs_per_alu={r}"), "knobs.iv_regs=null".into()],
            ),
            Experiment::SplitK => each(
                &[1usize, 2, 4, 8],
                |d| format!("split_k={d}"),
                |d| vec![format!("knobs.split_k={d}")],
            ),
            Experiment::ReductionTree => vec![
                v("no_tree", &["pim.has_reduction_tree=false"]),
                v("tree", &["pim.has_reduction_tree=true"]),
            ],
            Experiment::E2e => vec![v("pim_gemv", &[])],
        }
    }

    /// Models the sweep runs over; the small-model studies use 125M only.
    pub fn models(&self) -> Vec<ModelSpec> {
        let all = catalog_models();
        match self {
            Experiment::SplitK | Experiment::ReductionTree => all.into_iter().filter(|m| m.name == "125M").collect(),
            _ => all,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// One GEMV; counts are those of the slowest channel.
    Gemv,
    /// Geometric mean of a model's GEMV speedups.
    Geomean,
    /// Whole-model latency.
    Model,
}

/// One output line. Fields that do not apply to the row kind are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub variant: String,
    pub kind: RowKind,
    pub model: String,
    pub gemv: String,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub in_bits: u32,
    pub sf_block: Option<u32>,
    pub m_tile: Option<usize>,
    pub k_tile: Option<usize>,
    pub iv_regs: Option<usize>,
    pub cr_degree: Option<usize>,
    pub split_k: usize,
    pub total_banks: usize,
    pub gran_bytes: usize,
    pub regs_per_alu: usize,
    pub reduction_tree: bool,
    pub macs: Option<u64>,
    pub iv_writes: Option<u64>,
    pub row_switches: Option<u64>,
    pub turnarounds: Option<u64>,
    pub lane_reduce_steps: Option<u64>,
    pub sf_ops: Option<u64>,
    pub spills: Option<u64>,
    pub reloads: Option<u64>,
    pub spill_row_opens: Option<u64>,
    pub slot_ns: f64,
    pub t_row_switch_ns: f64,
    pub t_turnaround_ns: f64,
    pub pim_ns: Option<f64>,
    pub soc_reduce_ns: Option<f64>,
    pub soc_ns: Option<f64>,
    pub speedup: f64,
    pub roofline: f64,
    pub token_gen_fraction: Option<f64>,
}

impl Row {
    fn base(exp: Experiment, variant: &str, kind: RowKind, model: &str, cfg: &SystemConfig) -> Row {
        let t = cfg.dram_timing();
        Row {
            experiment: exp.name().into(),
            variant: variant.into(),
            kind,
            model: model.into(),
            gemv: String::new(),
            m: None,
            k: None,
            in_bits: cfg.format.in_bits,
            sf_block: cfg.format.sf_block,
            m_tile: None,
            k_tile: None,
            iv_regs: None,
            cr_degree: None,
            split_k: cfg.knobs.split_k,
            total_banks: cfg.memory.total_banks(),
            gran_bytes: cfg.memory.interleave_gran_bytes,
            regs_per_alu: cfg.pim.regs_per_alu,
            reduction_tree: cfg.pim.has_reduction_tree,
            macs: None,
            iv_writes: None,
            row_switches: None,
            turnarounds: None,
            lane_reduce_steps: None,
            sf_ops: None,
            spills: None,
            reloads: None,
            spill_row_opens: None,
            slot_ns: t.pim_slot_ns(&cfg.pim),
            t_row_switch_ns: t.t_row_switch_ns,
            t_turnaround_ns: t.t_turnaround_ns,
            pim_ns: None,
            soc_reduce_ns: None,
            soc_ns: None,
            speedup: f64::NAN,
            roofline: effective_roofline(&cfg.memory, &cfg.pim, &t),
            token_gen_fraction: None,
        }
    }

    pub fn counts(&self) -> Option<Counts> {
        Some(Counts {
            macs: self.macs?,
            iv_writes: self.iv_writes?,
            row_switches: self.row_switches?,
            turnarounds: self.turnarounds?,
            lane_reduce_steps: self.lane_reduce_steps?,
            sf_ops: self.sf_ops?,
            spills: self.spills?,
            reloads: self.reloads?,
            spill_row_opens: self.spill_row_opens?,
        })
    }

    /// Speedup recomputed from this row's counts and timing constants alone.
    pub fn recomputed_speedup(&self) -> Option<f64> {
        let c = self.counts()?;
        let slot = self.slot_ns;
        let reduce = if self.reduction_tree { 0 } else { c.lane_reduce_steps };
        let pim = (c.macs + c.iv_writes + reduce + c.sf_ops + c.spills + c.reloads) as f64 * slot
            + (c.row_switches + c.spill_row_opens) as f64 * self.t_row_switch_ns
            + c.turnarounds as f64 * self.t_turnaround_ns;
        Some(self.soc_ns? / (pim + self.soc_reduce_ns?))
    }
}

/// Plans, traces and prices one GEMV of `model` under `cfg`.
pub fn gemv_row(exp: Experiment, variant: &str, model: &str, shape: &GemvShape, cfg: &SystemConfig) -> Result<Row> {
    let p = GemvProblem::new(shape.m, shape.k, cfg.format.in_fmt(), cfg.format.out_fmt())?;
    let planned = plan_gemv(&p, cfg)?;
    let trace = generate_trace(&planned, &cfg.pim)?;
    let r = report_for_trace(&planned, &trace, cfg);
    debug_assert_eq!(price_counts(&r.counts, &cfg.dram_timing(), &cfg.pim).pim_ns(), r.pim_time_ns);
    let plan = &planned.parts[0].plan;
    let c = r.counts;
    Ok(Row {
        gemv: shape.kind.label().into(),
        m: Some(shape.m),
        k: Some(shape.k),
        m_tile: Some(plan.m_tile),
        k_tile: Some(plan.k_tile),
        iv_regs: Some(plan.iv_regs),
        cr_degree: Some(plan.cr_degree),
        macs: Some(c.macs),
        iv_writes: Some(c.iv_writes),
        row_switches: Some(c.row_switches),
        turnarounds: Some(c.turnarounds),
        lane_reduce_steps: Some(c.lane_reduce_steps),
        sf_ops: Some(c.sf_ops),
        spills: Some(c.spills),
        reloads: Some(c.reloads),
        spill_row_opens: Some(c.spill_row_opens),
        pim_ns: Some(r.pim_time_ns),
        soc_reduce_ns: Some(r.breakdown.soc_reduce_ns),
        soc_ns: Some(r.soc_time_ns),
        speedup: r.speedup,
        ..Row::base(exp, variant, RowKind::Gemv, model, cfg)
    })
}

pub fn geomean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x.ln();
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (s / n as f64).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub rows: Vec<Row>,
}

impl ResultTable {
    pub fn rows_of(&self, variant: &str, kind: RowKind) -> impl Iterator<Item = &Row> {
        let variant = variant.to_string();
        self.rows.iter().filter(move |r| r.variant == variant && r.kind == kind)
    }

    /// Geomean speedup of `model` (or of every GEMV row when `model` is "all").
    pub fn summary(&self, variant: &str, model: &str) -> Option<f64> {
        self.rows_of(variant, RowKind::Geomean).find(|r| r.model == model).map(|r| r.speedup)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# schema_version={} experiment={}", self.schema_version, self.experiment)?;
        let mut cw = csv::Writer::from_writer(w);
        for r in &self.rows {
            cw.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Runs every variant of `exp` on top of `base`. Rows come out in variant,
/// model, GEMV order regardless of scheduling.
pub fn run_experiment(exp: Experiment, base: &SystemConfig) -> Result<ResultTable> {
    let models = exp.models();
    let variants = exp.variants();
    let cfgs = variants
        .iter()
        .map(|(label, ov)| Ok((label.clone(), base.with_overrides(ov.iter().map(String::as_str))?)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    if exp == Experiment::E2e {
        for (label, cfg) in &cfgs {
            let reports = models.par_iter().map(|m| evaluate_model(m, cfg)).collect::<Result<Vec<_>>>()?;
            for r in reports {
                let per_token = Row {
                    gemv: "per_token".into(),
                    pim_ns: Some(r.pim.gen_ns / cfg.e2e.gen_tokens.max(1) as f64),
                    soc_ns: Some(r.soc.gen_ns / cfg.e2e.gen_tokens.max(1) as f64),
                    speedup: r.per_token_speedup,
                    token_gen_fraction: Some(r.soc.token_gen_fraction),
                    ..Row::base(exp, label, RowKind::Model, &r.model, cfg)
                };
                let e2e = Row {
                    gemv: "end_to_end".into(),
                    pim_ns: Some(r.pim.total_ns),
                    soc_ns: Some(r.soc.total_ns),
                    speedup: r.e2e_speedup,
                    token_gen_fraction: Some(r.pim.token_gen_fraction),
                    ..Row::base(exp, label, RowKind::Model, &r.model, cfg)
                };
                let gemv = Row {
                    gemv: "gemv".into(),
                    speedup: r.gemv_speedup,
                    ..Row::base(exp, label, RowKind::Model, &r.model, cfg)
                };
                rows.extend([gemv, per_token, e2e]);
            }
        }
        return Ok(ResultTable { schema_version: SCHEMA_VERSION, experiment: exp, rows });
    }
    let jobs: Vec<(usize, usize, GemvShape)> = (0..cfgs.len())
        .flat_map(|v| models.iter().enumerate().flat_map(move |(mi, m)| m.layer_gemvs().map(|s| (v, mi, s))))
        .collect();
    let gemv_rows = jobs
        .par_iter()
        .map(|&(v, mi, s)| gemv_row(exp, &cfgs[v].0, &models[mi].name, &s, &cfgs[v].1))
        .collect::<Result<Vec<_>>>()?;
    let per_variant = models.len() * 4;
    for (v, (label, cfg)) in cfgs.iter().enumerate() {
        let chunk = &gemv_rows[v * per_variant..(v + 1) * per_variant];
        for (mi, m) in models.iter().enumerate() {
            let own = &chunk[mi * 4..(mi + 1) * 4];
            rows.extend_from_slice(own);
            rows.push(Row {
                speedup: geomean(own.iter().map(|r| r.speedup)),
                ..Row::base(exp, label, RowKind::Geomean, &m.name, cfg)
            });
        }
        rows.push(Row {
            speedup: geomean(chunk.iter().map(|r| r.speedup)),
            ..Row::base(exp, label, RowKind::Geomean, "all", cfg)
        });
    }
    Ok(ResultTable { schema_version: SCHEMA_VERSION, experiment: exp, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
            assert!(!e.variants().is_empty());
        }
        assert!("nope".parse::<Experiment>().is_err());
    }

    #[test]
    fn variant_overrides_are_valid() {
        let base = SystemConfig::default();
        for e in Experiment::ALL {
            for (label, ov) in e.variants() {
                base.with_overrides(ov.iter().map(String::as_str)).unwrap_or_else(|err| panic!("{e} {label}: {err}"));
            }
        }
    }

    #[test]
    fn geomean_of_constants() {
        assert!((geomean([2.0, 8.0]) - 4.0).abs() < 1e-12);
        assert!(geomean(std::iter::empty()).is_nan());
    }

    #[test]
    fn split_k_table_rows_recompute() {
        let t = run_experiment(Experiment::SplitK, &SystemConfig::default()).unwrap();
        assert_eq!(t.rows.len(), 4 * (4 + 1 + 1));
        for r in t.rows.iter().filter(|r| r.kind == RowKind::Gemv) {
            let s = r.recomputed_speedup().unwrap();
            assert!((s - r.speedup).abs() <= 1e-9 * r.speedup, "{r:?}");
        }
        let csv = t.to_csv();
        assert!(csv.starts_with("# schema_version=1 experiment=split_k\nexperiment,variant,kind"));
        assert_eq!(csv, run_experiment(Experiment::SplitK, &SystemConfig::default()).unwrap().to_csv());
    }
}
