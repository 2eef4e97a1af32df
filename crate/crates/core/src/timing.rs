//! DRAM-timing price of command traces and the SoC GEMV roofline.

use serde::{Deserialize, Serialize};

use crate::config::{DramTiming, PimConfig, SocConfig, SystemConfig};
use crate::error::Result;
use crate::planner::{plan_gemv, PlannedGemv};
use crate::problem::GemvProblem;
use crate::trace::{generate_trace, CommandTrace, Counts};

/// PIM time by cause, in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub mac_ns: f64,
    pub iv_ns: f64,
    pub row_open_ns: f64,
    pub turnaround_ns: f64,
    pub reduce_ns: f64,
    pub sf_ns: f64,
    pub spill_ns: f64,
    /// Host-side addition of split-K partial outputs; not part of PIM time.
    pub soc_reduce_ns: f64,
}

impl Breakdown {
    /// Sum of the PIM components.
    pub fn pim_ns(&self) -> f64 {
        self.mac_ns + self.iv_ns + self.row_open_ns + self.turnaround_ns + self.reduce_ns + self.sf_ns + self.spill_ns
    }
}

/// Prices one channel stream.
pub fn price_counts(c: &Counts, timing: &DramTiming, pim: &PimConfig) -> Breakdown {
    let slot = timing.pim_slot_ns(pim);
    Breakdown {
        mac_ns: c.macs as f64 * slot,
        iv_ns: c.iv_writes as f64 * slot,
        row_open_ns: c.row_switches as f64 * timing.t_row_switch_ns,
        turnaround_ns: c.turnarounds as f64 * timing.t_turnaround_ns,
        reduce_ns: if pim.has_reduction_tree { 0.0 } else { c.lane_reduce_steps as f64 * slot },
        sf_ns: c.sf_ops as f64 * slot,
        spill_ns: (c.spills + c.reloads) as f64 * slot + c.spill_row_opens as f64 * timing.t_row_switch_ns,
        soc_reduce_ns: 0.0,
    }
}

/// Channels run in parallel: the slowest channel sets the PIM time.
pub fn time_trace(trace: &CommandTrace, timing: &DramTiming, pim: &PimConfig) -> f64 {
    slowest(trace, timing, pim).map_or(0.0, |(_, b)| b.pim_ns())
}

fn slowest(trace: &CommandTrace, timing: &DramTiming, pim: &PimConfig) -> Option<(Counts, Breakdown)> {
    trace
        .channels
        .iter()
        .map(|c| (c.counts, price_counts(&c.counts, timing, pim)))
        .max_by(|a, b| a.1.pim_ns().total_cmp(&b.1.pim_ns()))
}

/// Roofline GEMV time on the SoC: compute or weight streaming, whichever is slower.
pub fn soc_gemv_time(p: &GemvProblem, soc: &SocConfig) -> f64 {
    let compute = 2.0 * p.m as f64 * p.k as f64 / (soc.tops * 1e3);
    let memory = p.matrix_bytes() / soc.mem_bw_gbps;
    compute.max(memory)
}

/// Host time to add `degree` partial output vectors.
pub fn soc_reduce_time(p: &GemvProblem, degree: usize, soc: &SocConfig) -> f64 {
    if degree <= 1 {
        return 0.0;
    }
    degree as f64 * p.m as f64 * (p.out_fmt.bits as f64 / 8.0) / soc.mem_bw_gbps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub pim_time_ns: f64,
    pub soc_time_ns: f64,
    pub speedup: f64,
    pub breakdown: Breakdown,
    /// Counts of the slowest channel.
    pub counts: Counts,
}

/// Prices an already generated trace.
pub fn report_for_trace(planned: &PlannedGemv, trace: &CommandTrace, cfg: &SystemConfig) -> TimingReport {
    let timing = cfg.dram_timing();
    let (counts, mut breakdown) = slowest(trace, &timing, &cfg.pim).unwrap_or_default();
    breakdown.soc_reduce_ns = soc_reduce_time(&planned.problem, planned.split_k, &cfg.soc);
    let pim_time_ns = breakdown.pim_ns();
    let soc_time_ns = soc_gemv_time(&planned.problem, &cfg.soc);
    TimingReport {
        pim_time_ns,
        soc_time_ns,
        speedup: soc_time_ns / (pim_time_ns + breakdown.soc_reduce_ns),
        breakdown,
        counts,
    }
}

/// Plans, traces and prices `p` on PIM against the SoC roofline.
pub fn pim_speedup(p: &GemvProblem, cfg: &SystemConfig) -> Result<TimingReport> {
    let planned = plan_gemv(p, cfg)?;
    let trace = generate_trace(&planned, &cfg.pim)?;
    Ok(report_for_trace(&planned, &trace, cfg))
}
