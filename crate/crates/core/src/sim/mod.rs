//! Functional model of the PIM banks: executes command traces on per-bank
//! state and gathers the output vector.

mod verify;

pub use verify::{verify_placement, Check, PlacementReport};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::config::{PimConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::planner::{pack_image, plan_gemv, Geometry, PlacedImage, PlacementMap, PlannedGemv};
use crate::problem::{fits_format, GemvData, GemvProblem};
use crate::trace::{generate_trace, ChannelTrace, CommandTrace, Op, Scope};

/// One accumulator slot: the running block partial and the scaled sum of
/// finished blocks. Without scale factors only `acc` is used.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Slot {
    pub acc: i64,
    pub total: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Empty,
    Iv,
    Acc,
}

/// Open row, register file and spill area of one bank.
#[derive(Debug, Clone)]
pub struct BankState {
    pub open_row: Option<u32>,
    regs: Vec<Vec<Slot>>,
    tags: Vec<Tag>,
    iv_scales: HashMap<u32, i64>,
    spill: HashMap<(u32, u32), Vec<Slot>>,
}

impl BankState {
    pub fn new(regs: usize, lanes: usize) -> Self {
        Self {
            open_row: None,
            regs: vec![vec![Slot::default(); lanes]; regs],
            tags: vec![Tag::Empty; regs],
            iv_scales: HashMap::new(),
            spill: HashMap::new(),
        }
    }

    /// Register `reg` as spilled at (`row`, `col`), if present.
    pub fn spilled(&self, row: u32, col: u32) -> Option<&[Slot]> {
        self.spill.get(&(row, col)).map(Vec::as_slice)
    }
}

/// Everything a bank needs besides its own state to execute a command.
struct Ctx<'a> {
    geo: &'a Geometry,
    image: &'a PlacedImage,
    g: usize,
    iv: &'a [i32],
    iv_scales: &'a [i32],
    sf_bits: u32,
}

fn fault(index: usize, reason: impl Into<String>) -> Error {
    Error::Sim { index, reason: reason.into() }
}

impl BankState {
    fn reg_range(&self, index: usize, base: u32, n: usize) -> Result<std::ops::Range<usize>> {
        let r = base as usize..base as usize + n;
        if r.end > self.regs.len() {
            return Err(fault(index, format!("register {} out of range", r.end - 1)));
        }
        Ok(r)
    }

    fn acc_regs(&self, index: usize, base: u32, n: usize) -> Result<std::ops::Range<usize>> {
        let r = self.reg_range(index, base, n)?;
        if self.tags[r.clone()].contains(&Tag::Iv) {
            return Err(fault(index, format!("accumulator at register {base} overlaps an IV register")));
        }
        Ok(r)
    }

    fn weight_row(&self, index: usize, ctx: &Ctx) -> Result<u32> {
        match self.open_row {
            Some(r) if (r as usize) < ctx.image.rows => Ok(r),
            Some(r) => Err(fault(index, format!("row {r} holds no weights"))),
            None => Err(fault(index, "no row open")),
        }
    }

    fn exec(&mut self, index: usize, op: &Op, ctx: &Ctx) -> Result<()> {
        let geo = ctx.geo;
        let out_lanes = geo.out_lanes;
        match *op {
            Op::Activate { row, .. } => self.open_row = Some(row),
            Op::WriteIvReg { reg, iv_word } => {
                let r = self.reg_range(index, reg, 1)?.start;
                if self.tags[r] == Tag::Acc {
                    return Err(fault(index, format!("IV write clobbers accumulator register {reg}")));
                }
                let first = iv_word as usize * geo.lanes;
                for (l, s) in self.regs[r].iter_mut().enumerate() {
                    *s = Slot { acc: ctx.iv.get(first + l).copied().unwrap_or(0) as i64, total: 0 };
                }
                self.tags[r] = Tag::Iv;
                if let Some(b) = geo.sf_block {
                    for blk in first / b..=(first + geo.lanes - 1) / b {
                        let s = ctx.iv_scales.get(blk).copied().unwrap_or(0) as i64;
                        self.iv_scales.insert(blk as u32, s);
                    }
                }
            }
            Op::Mac { iv_reg, iv_lane, acc, col, init } => {
                let row = self.weight_row(index, ctx)?;
                if col as usize + geo.word_bytes > ctx.image.row_bytes {
                    return Err(fault(index, format!("column {col} past the row end")));
                }
                let ivr = self.reg_range(index, iv_reg, 1)?.start;
                if self.tags[ivr] != Tag::Iv {
                    return Err(fault(index, format!("register {iv_reg} holds no IV word")));
                }
                let accs = self.acc_regs(index, acc, geo.regs_per_unit)?;
                let bytes = &ctx.image.row(ctx.g, row as usize)[col as usize..col as usize + geo.word_bytes];
                let x: Vec<i64> = (0..geo.lanes)
                    .map(|l| {
                        let at = iv_lane as usize + geo.lane_col(l);
                        self.regs[ivr].get(at).map(|s| s.acc).ok_or_else(|| fault(index, format!("IV lane {at} out of range")))
                    })
                    .collect::<Result<_>>()?;
                if init {
                    for r in accs.clone() {
                        self.regs[r].fill(Slot::default());
                    }
                }
                for r in accs.clone() {
                    self.tags[r] = Tag::Acc;
                }
                for (l, xv) in x.into_iter().enumerate() {
                    let w = codec::element(bytes, geo.in_bits, l) as i64;
                    self.regs[accs.start + l / out_lanes][l % out_lanes].acc += w * xv;
                }
            }
            Op::LaneReduceStep { acc, half } => {
                let accs = self.acc_regs(index, acc, geo.regs_per_unit)?;
                let half = half as usize;
                if 2 * half > geo.lanes {
                    return Err(fault(index, format!("reduction half {half} exceeds the unit")));
                }
                for s in 0..half {
                    let hi = self.regs[accs.start + (s + half) / out_lanes][(s + half) % out_lanes];
                    let lo = &mut self.regs[accs.start + s / out_lanes][s % out_lanes];
                    lo.acc += hi.acc;
                    lo.total += hi.total;
                }
            }
            Op::SfMul { acc, col, word_col, blk_first, nblk, sf_words } => {
                let row = self.weight_row(index, ctx)?;
                let b = geo.sf_block.ok_or_else(|| fault(index, "scale multiply without scale factors"))?;
                let n = nblk as usize * geo.unit_rows();
                let len = codec::packed_len(n, ctx.sf_bits);
                if len > sf_words as usize * geo.word_bytes || col as usize + len > ctx.image.row_bytes {
                    return Err(fault(index, "scale entries exceed the words read"));
                }
                let entries = codec::decode(&ctx.image.row(ctx.g, row as usize)[col as usize..], ctx.sf_bits, n)?;
                let accs = self.acc_regs(index, acc, geo.regs_per_unit)?;
                for s in 0..geo.lanes {
                    let blk = (word_col as usize + geo.lane_col(s)) / b;
                    let e = blk
                        .checked_sub(blk_first as usize)
                        .map(|d| d * geo.unit_rows() + geo.slot_row(s))
                        .filter(|&e| e < n)
                        .ok_or_else(|| fault(index, format!("slot {s} reads block {blk} outside the entries")))?;
                    let ivs = *self
                        .iv_scales
                        .get(&(blk as u32))
                        .ok_or_else(|| fault(index, format!("no IV scale loaded for block {blk}")))?;
                    let slot = &mut self.regs[accs.start + s / out_lanes][s % out_lanes];
                    slot.total += slot.acc * entries[e] as i64 * ivs;
                    slot.acc = 0;
                }
            }
            Op::SpillOutput { reg, row, col } => {
                if self.open_row != Some(row) || (row as usize) < ctx.image.rows {
                    return Err(fault(index, format!("spill to row {row} which is not an open spill row")));
                }
                let r = self.reg_range(index, reg, 1)?.start;
                if self.tags[r] != Tag::Acc {
                    return Err(fault(index, format!("spill of non-accumulator register {reg}")));
                }
                self.spill.insert((row, col), self.regs[r][..out_lanes].to_vec());
            }
            Op::ReloadAcc { reg, row, col } => {
                if self.open_row != Some(row) {
                    return Err(fault(index, format!("reload from closed row {row}")));
                }
                let r = self.acc_regs(index, reg, 1)?.start;
                let saved = self.spill.get(&(row, col)).ok_or_else(|| fault(index, format!("nothing spilled at ({row}, {col})")))?;
                self.regs[r][..out_lanes].copy_from_slice(saved);
                self.tags[r] = Tag::Acc;
            }
        }
        Ok(())
    }
}

/// Output of a simulated GEMV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOutput {
    pub output: Vec<i64>,
    /// Every output value fits the output format.
    pub fits_out_fmt: bool,
}

/// Operands of one split-K part: its column slice of the matrix and vector.
fn slice_data(p: &GemvProblem, data: &GemvData, sub: &GemvProblem, k_offset: usize) -> GemvData {
    if sub.k == p.k {
        return data.clone();
    }
    let blocks = p.num_scale_blocks();
    let sub_blocks = sub.num_scale_blocks();
    let b0 = p.sf_block().map_or(0, |b| k_offset / b);
    GemvData {
        weights: (0..p.m).flat_map(|r| data.weights[r * p.k + k_offset..r * p.k + k_offset + sub.k].iter().copied()).collect(),
        iv: data.iv[k_offset..k_offset + sub.k].to_vec(),
        weight_scales: (0..p.m)
            .flat_map(|r| data.weight_scales[r * blocks + b0..r * blocks + b0 + sub_blocks].iter().copied())
            .collect(),
        iv_scales: data.iv_scales.get(b0..b0 + sub_blocks).map(<[i32]>::to_vec).unwrap_or_default(),
    }
}

fn run_channel(
    ch: &ChannelTrace,
    map: &PlacementMap,
    image: &PlacedImage,
    data: &GemvData,
    sf_bits: u32,
    pim: &PimConfig,
    out: &mut [i64],
) -> Result<()> {
    let geo = &map.geometry;
    let local = ch.channel - map.channel_offset;
    let banks: Vec<usize> = (0..map.banks_per_channel).map(|b| map.global_bank(local, b)).collect();
    let mut state: Vec<BankState> = banks.iter().map(|_| BankState::new(pim.regs_per_alu, geo.lanes)).collect();
    for (index, cmd) in ch.commands.iter().enumerate() {
        let targets = match cmd.scope {
            Scope::AllBanks => 0..banks.len(),
            Scope::Bank(b) if (b as usize) < banks.len() => b as usize..b as usize + 1,
            Scope::Bank(b) => return Err(fault(index, format!("bank {b} outside the channel"))),
        };
        for b in targets {
            let ctx = Ctx { geo, image, g: banks[b], iv: &data.iv, iv_scales: &data.iv_scales, sf_bits };
            state[b].exec(index, &cmd.op, &ctx)?;
        }
    }
    for f in ch.finals.iter() {
        let targets = match f.scope {
            Scope::AllBanks => 0..banks.len(),
            Scope::Bank(b) => b as usize..b as usize + 1,
        };
        for b in targets {
            let rb = map.bank_rbs[banks[b]][f.lrb as usize] as usize;
            for j in 0..f.regs as usize {
                let col = f.col + (j * geo.word_bytes) as u32;
                let slots = state[b]
                    .spilled(f.row, col)
                    .ok_or_else(|| Error::Sim { index: ch.commands.len(), reason: format!("final output missing at ({}, {col})", f.row) })?;
                for (i, s) in slots.iter().enumerate() {
                    let slot = j * geo.out_lanes + i;
                    let within = if f.reduced {
                        if slot >= geo.m_tile {
                            continue;
                        }
                        slot
                    } else {
                        f.unit as usize * geo.lanes + slot
                    };
                    let row = rb * geo.m_tile + within;
                    if row < out.len() {
                        out[row] += s.acc + s.total;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Executes `trace` on banks loaded with `data` as placed by `planned`,
/// then gathers outputs (adding split-K partials on the host).
pub fn run_trace(planned: &PlannedGemv, trace: &CommandTrace, data: &GemvData, pim: &PimConfig) -> Result<SimOutput> {
    let p = &planned.problem;
    data.check(p)?;
    let mut out = vec![0i64; p.m];
    for (i, part) in planned.parts.iter().enumerate() {
        let sub_data = slice_data(p, data, &part.sub.problem, part.sub.k_offset);
        let image = pack_image(&part.sub.problem, &sub_data, &part.map)?;
        let mut padded = sub_data.clone();
        padded.iv.resize(part.map.k_pad, 0);
        for ch in trace.channels.iter().filter(|c| c.part == i) {
            run_channel(ch, &part.map, &image, &padded, p.in_fmt.sf_bits, pim, &mut out)?;
        }
    }
    let fits_out_fmt = fits_format(&out, &p.out_fmt);
    Ok(SimOutput { output: out, fits_out_fmt })
}

/// Plans, traces and simulates `p` under `cfg`.
pub fn simulate(p: &GemvProblem, cfg: &SystemConfig, data: &GemvData) -> Result<SimOutput> {
    let planned = plan_gemv(p, cfg)?;
    let trace = generate_trace(&planned, &cfg.pim)?;
    run_trace(&planned, &trace, data, &cfg.pim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DataFormat, Knobs, LayoutKind, MemoryConfig};
    use crate::problem::reference_gemv;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(channels: usize, banks: usize) -> SystemConfig {
        let mut cfg = SystemConfig::default();
        cfg.memory = MemoryConfig { num_channels: channels, banks_per_channel: banks, ..MemoryConfig::default() };
        cfg
    }

    fn check(p: GemvProblem, cfg: &SystemConfig, seed: u64) {
        let data = GemvData::random(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        let got = simulate(&p, cfg, &data).unwrap().output;
        assert_eq!(got, reference_gemv(&p, &data).unwrap(), "{p:?}");
    }

    #[test]
    fn two_by_two() {
        let p = GemvProblem::int8(2, 2);
        let data = GemvData { weights: vec![1, 2, 3, 4], iv: vec![1, 1], weight_scales: vec![], iv_scales: vec![] };
        assert_eq!(simulate(&p, &small_cfg(1, 2), &data).unwrap().output, vec![3, 7]);
    }

    #[test]
    fn zero_vector_gives_zero() {
        let p = GemvProblem::int8(64, 96);
        let mut data = GemvData::random(&p, &mut ChaCha8Rng::seed_from_u64(3));
        data.iv.fill(0);
        assert!(simulate(&p, &small_cfg(2, 4), &data).unwrap().output.iter().all(|&v| v == 0));
    }

    #[test]
    fn small_instance_matches_reference() {
        check(GemvProblem::int8(128, 256), &small_cfg(2, 4), 7);
    }

    #[test]
    fn lane_mode_and_padding() {
        check(GemvProblem::int8(100, 72), &small_cfg(2, 4), 8);
        check(GemvProblem::int8(768, 768), &SystemConfig::default(), 9);
    }

    #[test]
    fn scaled_formats() {
        for (bits, block) in [(8, 32), (4, 16), (16, 64), (8, 128)] {
            let p = GemvProblem {
                m: 96,
                k: 512,
                in_fmt: DataFormat::with_scales(bits, block),
                out_fmt: DataFormat::int(bits.max(16)),
            };
            check(p, &small_cfg(1, 4), bits as u64);
        }
    }

    #[test]
    fn split_k_and_baselines() {
        let mut cfg = small_cfg(4, 2);
        cfg.knobs.split_k = 4;
        check(GemvProblem::int8(64, 512), &cfg, 11);
        for layout in [LayoutKind::ColumnMajor, LayoutKind::RowMajor] {
            let cfg = SystemConfig { knobs: Knobs { layout, ..Knobs::default() }, ..small_cfg(2, 2) };
            check(GemvProblem::int8(96, 640), &cfg, 12);
            let p = GemvProblem { in_fmt: DataFormat::with_scales(8, 32), ..GemvProblem::int8(64, 256) };
            check(p, &cfg, 13);
        }
    }
}
