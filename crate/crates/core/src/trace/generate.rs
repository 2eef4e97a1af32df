use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use super::{ChannelTrace, Command, CommandTrace, Counts, FinalRecord, Op, Scope};
use crate::config::{IntraTileOrder, LayoutKind, PimConfig};
use crate::error::{Error, Result};
use crate::planner::{BankLayout, Geometry, PlacementMap, PlannedGemv, TilePlan, NO_EVENT};

type Key = (u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LocalFinal {
    lrb: u32,
    unit: u32,
    row: u32,
    col: u32,
    regs: u32,
    reduced: bool,
}

#[derive(Debug, Default)]
struct Program {
    ops: Vec<Op>,
    finals: Vec<LocalFinal>,
}

/// Emits one bank's commands. Accumulator units live in register frames
/// after the IV registers; when frames run out the least recently used
/// unit is spilled to a reserved row and reloaded on its next use.
struct Builder<'a> {
    map: &'a PlacementMap,
    geo: &'a Geometry,
    prog: Program,
    open: Option<u32>,
    last_weight: Option<u32>,
    frames: Vec<Option<Key>>,
    stamp: Vec<u64>,
    clock: u64,
    resident: HashMap<Key, usize>,
    spilled: HashMap<Key, (u32, u32)>,
    touched: Vec<Key>,
    touched_set: HashSet<Key>,
    spill_row: u32,
    spill_col: usize,
    iv_regs: usize,
}

impl<'a> Builder<'a> {
    fn new(map: &'a PlacementMap, tot_reg: usize) -> Self {
        let geo = &map.geometry;
        let n_frames = (tot_reg - map.iv_regs) / geo.regs_per_unit;
        Self {
            map,
            geo,
            prog: Program::default(),
            open: None,
            last_weight: None,
            frames: vec![None; n_frames],
            stamp: vec![0; n_frames],
            clock: 0,
            resident: HashMap::new(),
            spilled: HashMap::new(),
            touched: Vec::new(),
            touched_set: HashSet::new(),
            spill_row: map.weight_rows() as u32,
            spill_col: 0,
            iv_regs: map.iv_regs,
        }
    }

    fn base(&self, frame: usize) -> u32 {
        (self.iv_regs + frame * self.geo.regs_per_unit) as u32
    }

    fn open_weight(&mut self, row: u32) {
        if self.open != Some(row) {
            let restore = self.last_weight == Some(row);
            self.prog.ops.push(Op::Activate { row, restore });
            self.open = Some(row);
        }
        self.last_weight = Some(row);
    }

    fn open_spill(&mut self, row: u32) {
        if self.open != Some(row) {
            self.prog.ops.push(Op::Activate { row, restore: false });
            self.open = Some(row);
        }
    }

    fn alloc(&mut self, regs: usize) -> (u32, u32) {
        let bytes = regs * self.geo.word_bytes;
        if self.spill_col + bytes > self.map.row_buffer_bytes {
            self.spill_row += 1;
            self.spill_col = 0;
        }
        let at = (self.spill_row, self.spill_col as u32);
        self.spill_col += bytes;
        at
    }

    fn spill(&mut self, base: u32, regs: usize) -> (u32, u32) {
        let (row, col) = self.alloc(regs);
        self.open_spill(row);
        for j in 0..regs {
            let c = col + (j * self.geo.word_bytes) as u32;
            self.prog.ops.push(Op::SpillOutput { reg: base + j as u32, row, col: c });
        }
        (row, col)
    }

    /// Makes `key` resident; returns its base register and whether it is new.
    fn acquire(&mut self, key: Key) -> (u32, bool) {
        self.clock += 1;
        if self.touched_set.insert(key) {
            self.touched.push(key);
        }
        if let Some(&f) = self.resident.get(&key) {
            self.stamp[f] = self.clock;
            return (self.base(f), false);
        }
        let f = match self.frames.iter().position(Option::is_none) {
            Some(f) => f,
            None => {
                let f = (0..self.frames.len()).min_by_key(|&f| self.stamp[f]).expect("at least one frame");
                let victim = self.frames[f].take().expect("occupied");
                self.resident.remove(&victim);
                let loc = self.spill(self.base(f), self.geo.regs_per_unit);
                self.spilled.insert(victim, loc);
                f
            }
        };
        self.frames[f] = Some(key);
        self.stamp[f] = self.clock;
        self.resident.insert(key, f);
        let base = self.base(f);
        match self.spilled.remove(&key) {
            Some((row, col)) => {
                self.open_spill(row);
                for j in 0..self.geo.regs_per_unit {
                    let c = col + (j * self.geo.word_bytes) as u32;
                    self.prog.ops.push(Op::ReloadAcc { reg: base + j as u32, row, col: c });
                }
                (base, false)
            }
            None => (base, true),
        }
    }

    fn release(&mut self, key: Key) {
        if let Some(f) = self.resident.remove(&key) {
            self.frames[f] = None;
        }
    }

    fn finish_group(&mut self) {
        let keys = std::mem::take(&mut self.touched);
        self.touched_set.clear();
        for key in keys {
            let (lrb, unit) = key;
            if !self.geo.row_mode() {
                let (base, _) = self.acquire(key);
                self.touched.clear();
                self.touched_set.clear();
                let mut half = self.geo.lanes / 2;
                while half >= self.geo.m_tile {
                    self.prog.ops.push(Op::LaneReduceStep { acc: base, half: half as u32 });
                    half /= 2;
                }
                let regs = self.geo.final_regs();
                let (row, col) = self.spill(base, regs);
                self.prog.finals.push(LocalFinal { lrb, unit, row, col, regs: regs as u32, reduced: true });
                self.release(key);
            } else {
                let regs = self.geo.regs_per_unit;
                let (row, col) = match self.resident.get(&key) {
                    Some(&f) => {
                        let loc = self.spill(self.base(f), regs);
                        self.release(key);
                        loc
                    }
                    None => self.spilled.remove(&key).expect("touched unit is resident or spilled"),
                };
                self.prog.finals.push(LocalFinal { lrb, unit, row, col, regs: regs as u32, reduced: false });
            }
        }
    }

    fn run(mut self, layout: &BankLayout) -> Program {
        let geo = self.geo;
        let wpt = geo.words_per_tile;
        let mut group = None;
        for burst in &layout.bursts {
            if group.is_some_and(|g| g != burst.group) {
                self.finish_group();
            }
            group = Some(burst.group);
            for (reg, &iv_word) in burst.iv_words.iter().enumerate() {
                self.prog.ops.push(Op::WriteIvReg { reg: reg as u32, iv_word });
            }
            for &seq in &layout.exec[burst.words.clone()] {
                let t = layout.tiles[seq as usize / wpt];
                let wi = geo.word(t.cj as usize, seq as usize % wpt);
                let iw = geo.iv_word(wi.first_col) as u32;
                let iv_reg = burst.iv_words.iter().position(|&w| w == iw).expect("word reads a burst IV word") as u32;
                let (acc, init) = self.acquire((t.lrb, wi.unit as u32));
                let (row, col) = self.map.word_location(seq);
                self.open_weight(row);
                let iv_lane = geo.iv_lane(wi.first_col) as u32;
                self.prog.ops.push(Op::Mac { iv_reg, iv_lane, acc, col, init });
                let ev = layout.event_at.get(seq as usize).copied().unwrap_or(NO_EVENT);
                if ev != NO_EVENT {
                    let e = &layout.events[ev as usize];
                    let bytes = geo.sf_bytes(e.entries(geo));
                    self.prog.ops.push(Op::SfMul {
                        acc,
                        col: e.byte_offset,
                        word_col: wi.first_col as u32,
                        blk_first: e.blk_first,
                        nblk: e.nblk,
                        sf_words: bytes.div_ceil(geo.word_bytes) as u32,
                    });
                }
            }
        }
        if group.is_some() {
            self.finish_group();
        }
        self.prog
    }
}

fn check_plan(plan: &TilePlan, map: &PlacementMap, pim: &PimConfig) -> Result<()> {
    if plan.intra_tile_order == IntraTileOrder::RowMajor {
        return Err(Error::Trace("row-major intra-tile order has no command schedule".into()));
    }
    let geo = &map.geometry;
    if plan.layout == LayoutKind::Planned && plan.register_demand() > pim.regs_per_alu {
        return Err(Error::Trace(format!(
            "knobs exceed the register budget: {} needed, {} available",
            plan.register_demand(),
            pim.regs_per_alu
        )));
    }
    if plan.iv_regs + geo.regs_per_unit > pim.regs_per_alu {
        return Err(Error::Trace(format!(
            "{} IV registers leave no room for a {}-register accumulator",
            plan.iv_regs, geo.regs_per_unit
        )));
    }
    if (!geo.row_mode() && geo.final_regs() > geo.regs_per_unit) || geo.regs_per_unit * geo.word_bytes > map.row_buffer_bytes {
        return Err(Error::Trace("accumulator unit does not fit a spill row".into()));
    }
    Ok(())
}

fn broadcast(ops: &[Op]) -> Vec<Command> {
    ops.iter().map(|&op| Command { scope: Scope::AllBanks, op }).collect()
}

fn finals_of(p: &Program, scope: Scope) -> impl Iterator<Item = FinalRecord> + '_ {
    p.finals.iter().map(move |f| FinalRecord {
        scope,
        lrb: f.lrb,
        unit: f.unit,
        row: f.row,
        col: f.col,
        regs: f.regs,
        reduced: f.reduced,
    })
}

/// Interleaves per-bank programs op by op; an op every bank issues
/// identically at the same position becomes one all-bank command.
fn merge(programs: &[&Program]) -> (Vec<Command>, Vec<FinalRecord>) {
    let len = programs.iter().map(|p| p.ops.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let first = programs[0].ops.get(i);
        if let Some(&op) = first.filter(|_| programs.iter().all(|p| p.ops.get(i) == first)) {
            out.push(Command { scope: Scope::AllBanks, op });
        } else {
            for (b, p) in programs.iter().enumerate() {
                if let Some(&op) = p.ops.get(i) {
                    out.push(Command { scope: Scope::Bank(b as u32), op });
                }
            }
        }
    }
    let finals = programs.iter().enumerate().flat_map(|(b, p)| finals_of(p, Scope::Bank(b as u32))).collect();
    (out, finals)
}

/// Channel streams for one split-K part.
pub fn generate_part_trace(part: usize, plan: &TilePlan, map: &PlacementMap, pim: &PimConfig) -> Result<Vec<ChannelTrace>> {
    check_plan(plan, map, pim)?;
    let programs: Vec<Program> = map.layouts.iter().map(|l| Builder::new(map, pim.regs_per_alu).run(l)).collect();
    let spill_base = map.weight_rows() as u32;
    let mut uniform: HashMap<u32, (Arc<Vec<Command>>, Arc<Vec<FinalRecord>>, Counts)> = HashMap::new();
    let mut out = Vec::with_capacity(map.num_channels);
    for ch in 0..map.num_channels {
        let ids: Vec<u32> = (0..map.banks_per_channel).map(|b| map.bank_layout[map.global_bank(ch, b)]).collect();
        let (commands, finals, counts) = if ids.iter().all(|&id| id == ids[0]) {
            uniform
                .entry(ids[0])
                .or_insert_with(|| {
                    let p = &programs[ids[0] as usize];
                    let cmds = broadcast(&p.ops);
                    let counts = Counts::of(&cmds, spill_base);
                    (Arc::new(cmds), Arc::new(finals_of(p, Scope::AllBanks).collect()), counts)
                })
                .clone()
        } else {
            let progs: Vec<&Program> = ids.iter().map(|&id| &programs[id as usize]).collect();
            let (cmds, finals) = merge(&progs);
            let counts = Counts::of(&cmds, spill_base);
            (Arc::new(cmds), Arc::new(finals), counts)
        };
        out.push(ChannelTrace { channel: map.channel_offset + ch, part, spill_base, commands, finals, counts });
    }
    Ok(out)
}

/// Command streams for every channel of a planned GEMV.
pub fn generate_trace(planned: &PlannedGemv, pim: &PimConfig) -> Result<CommandTrace> {
    let mut channels = Vec::new();
    for (i, part) in planned.parts.iter().enumerate() {
        channels.extend(generate_part_trace(i, &part.plan, &part.map, pim)?);
    }
    channels.sort_by_key(|c| c.channel);
    let geometry = planned
        .parts
        .first()
        .map(|p| p.map.geometry)
        .ok_or_else(|| Error::Trace("no parts to trace".into()))?;
    Ok(CommandTrace { geometry, split_k: planned.split_k, channels })
}
