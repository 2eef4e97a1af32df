use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::config::{LayoutKind, PimConfig};
use crate::planner::{is_permutation, PlannedGemv, ShapeExit};
use crate::trace::{CommandTrace, Op, Scope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Placement and trace invariants of one planned GEMV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub checks: Vec<Check>,
}

impl PlacementReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn push(checks: &mut Vec<Check>, name: &str, pass: bool, detail: String) {
    checks.push(Check { name: name.into(), pass, detail });
}

/// Checks that rows stay inside one bank, banks are balanced, each bank
/// opens each of its rows once, the register budget holds and all MAC and
/// IV-write commands are channel-wide broadcasts.
pub fn verify_placement(planned: &PlannedGemv, trace: &CommandTrace, pim: &PimConfig) -> PlacementReport {
    let mut checks = Vec::new();
    let (mut span_bad, mut perm_bad, mut budget_bad) = (Vec::new(), Vec::new(), Vec::new());
    let mut uneven = Vec::new();
    let mut rows_bad = Vec::new();
    for (i, part) in planned.parts.iter().enumerate() {
        let map = &part.map;
        if !is_permutation(&map.tile_order) || map.tile_order.len() != map.num_tiles() {
            perm_bad.push(i);
        }
        for rb in 0..map.m_tm {
            let banks: HashSet<(u32, u32)> =
                (0..map.k_tm).map(|cj| map.tile_coords[rb * map.k_tm + cj]).map(|c| (c.channel, c.bank)).collect();
            if banks.len() > 1 && rb * map.m_tile < map.m {
                span_bad.push(rb);
            }
        }
        let (lo, hi) = (map.rows_per_bank.iter().min(), map.rows_per_bank.iter().max());
        if part.plan.exit == ShapeExit::EvenDistribution && lo != hi {
            uneven.push(i);
        }
        if part.plan.layout == LayoutKind::Planned && part.plan.register_demand() > pim.regs_per_alu {
            budget_bad.push(i);
        }
        for ch in trace.channels.iter().filter(|c| c.part == i) {
            let local = ch.channel - map.channel_offset;
            let mut opens = vec![0usize; map.banks_per_channel];
            for c in ch.commands.iter() {
                if let Op::Activate { row, restore: false } = c.op {
                    if row < ch.spill_base {
                        match c.scope {
                            Scope::AllBanks => opens.iter_mut().for_each(|o| *o += 1),
                            Scope::Bank(b) => opens[b as usize] += 1,
                        }
                    }
                }
            }
            for (b, &n) in opens.iter().enumerate() {
                let g = map.global_bank(local, b);
                let want = map.bytes_per_bank(g).div_ceil(map.row_buffer_bytes);
                if n != want {
                    rows_bad.push(format!("channel {} bank {b}: {n} opens, {want} rows", ch.channel));
                }
            }
        }
    }
    push(&mut checks, "tile_order_permutation", perm_bad.is_empty(), format!("bad parts {perm_bad:?}"));
    push(
        &mut checks,
        "rows_within_one_bank",
        span_bad.is_empty(),
        format!("{} row-blocks span banks", span_bad.len()),
    );
    push(&mut checks, "uniform_rows_per_bank", uneven.is_empty(), format!("uneven parts {uneven:?}"));
    push(
        &mut checks,
        "row_switches_match_footprint",
        rows_bad.is_empty(),
        rows_bad.first().cloned().unwrap_or_default(),
    );
    push(&mut checks, "register_budget", budget_bad.is_empty(), format!("over budget parts {budget_bad:?}"));
    let bcast = trace.channels.iter().map(|c| c.broadcast_fraction()).fold(1.0f64, f64::min);
    push(&mut checks, "broadcast_commands", bcast == 1.0, format!("min broadcast fraction {bcast:.4}"));
    PlacementReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Knobs, MemoryConfig, SystemConfig};
    use crate::planner::plan_gemv;
    use crate::problem::GemvProblem;
    use crate::trace::generate_trace;

    fn report(p: GemvProblem, cfg: &SystemConfig) -> PlacementReport {
        let planned = plan_gemv(&p, cfg).unwrap();
        let trace = generate_trace(&planned, &cfg.pim).unwrap();
        verify_placement(&planned, &trace, &cfg.pim)
    }

    #[test]
    fn planned_large_gemv_passes() {
        let r = report(GemvProblem::int8(4096, 4096), &SystemConfig::default());
        assert!(r.all_pass(), "{}", r.to_json());
    }

    #[test]
    fn row_major_interleaved_spans_banks() {
        let cfg = SystemConfig { knobs: Knobs { layout: LayoutKind::RowMajor, ..Knobs::default() }, ..SystemConfig::default() };
        let r = report(GemvProblem::int8(768, 768), &cfg);
        assert!(!r.get("rows_within_one_bank").unwrap().pass);
        let cfg = SystemConfig { knobs: Knobs { layout: LayoutKind::ColumnMajor, ..Knobs::default() }, ..SystemConfig::default() };
        let r = report(GemvProblem::int8(768, 768), &cfg);
        assert!(!r.get("rows_within_one_bank").unwrap().pass);
    }

    #[test]
    fn single_bank_passes() {
        let cfg = SystemConfig {
            memory: MemoryConfig { num_channels: 1, banks_per_channel: 1, ..MemoryConfig::default() },
            ..SystemConfig::default()
        };
        let r = report(GemvProblem::int8(40, 96), &cfg);
        assert!(r.get("uniform_rows_per_bank").unwrap().pass);
        assert!(r.all_pass(), "{}", r.to_json());
    }
}
