//! PIM command traces: one ordered command stream per channel.

mod generate;

pub use generate::{generate_part_trace, generate_trace};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::planner::Geometry;

/// Banks a command addresses within its channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    AllBanks,
    Bank(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    /// Opens `row`; `restore` marks reopening a weight row left for a spill.
    Activate { row: u32, restore: bool },
    /// Loads input-vector word `iv_word` (and the scales of its blocks) into `reg`.
    WriteIvReg { reg: u32, iv_word: u32 },
    /// Multiplies the word at `col` of the open row by `iv_reg` lanes starting
    /// at `iv_lane` and accumulates into the unit starting at `acc`.
    /// `init` discards the unit's previous contents first.
    Mac { iv_reg: u32, iv_lane: u32, acc: u32, col: u32, init: bool },
    /// Adds slot `s + half` into slot `s` for every `s < half` of the unit.
    LaneReduceStep { acc: u32, half: u32 },
    /// Scales the unit's block partials by the entries at `col` and folds
    /// them into its running sums. `word_col` is the first matrix column
    /// of the word that triggered the event.
    SfMul { acc: u32, col: u32, word_col: u32, blk_first: u32, nblk: u32, sf_words: u32 },
    SpillOutput { reg: u32, row: u32, col: u32 },
    ReloadAcc { reg: u32, row: u32, col: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Command {
    pub scope: Scope,
    pub op: Op,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Write,
    Read,
}

impl Op {
    fn dir(&self) -> Option<Dir> {
        match self {
            Op::WriteIvReg { .. } | Op::SpillOutput { .. } => Some(Dir::Write),
            Op::Mac { .. } | Op::SfMul { .. } | Op::ReloadAcc { .. } => Some(Dir::Read),
            Op::Activate { .. } | Op::LaneReduceStep { .. } => None,
        }
    }
}

/// Command totals of one channel stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub macs: u64,
    pub iv_writes: u64,
    /// Activations of weight rows not previously left for a spill.
    pub row_switches: u64,
    pub turnarounds: u64,
    pub lane_reduce_steps: u64,
    /// Scale-factor word reads plus one multiply per event.
    pub sf_ops: u64,
    pub spills: u64,
    pub reloads: u64,
    /// Activations of spill rows and reactivations of the weight row after them.
    pub spill_row_opens: u64,
}

impl Counts {
    /// Recounts a command list. `spill_base` is the first spill row.
    pub fn of(commands: &[Command], spill_base: u32) -> Self {
        let mut c = Counts::default();
        let mut dir = None;
        for cmd in commands {
            match cmd.op {
                Op::Activate { row, restore } => {
                    if restore || row >= spill_base {
                        c.spill_row_opens += 1;
                    } else {
                        c.row_switches += 1;
                    }
                }
                Op::WriteIvReg { .. } => c.iv_writes += 1,
                Op::Mac { .. } => c.macs += 1,
                Op::LaneReduceStep { .. } => c.lane_reduce_steps += 1,
                Op::SfMul { sf_words, .. } => c.sf_ops += 1 + sf_words as u64,
                Op::SpillOutput { .. } => c.spills += 1,
                Op::ReloadAcc { .. } => c.reloads += 1,
            }
            if let Some(d) = cmd.op.dir() {
                if dir.is_some_and(|p| p != d) {
                    c.turnarounds += 1;
                }
                dir = Some(d);
            }
        }
        c
    }

    pub fn add(&mut self, o: &Counts) {
        self.macs += o.macs;
        self.iv_writes += o.iv_writes;
        self.row_switches += o.row_switches;
        self.turnarounds += o.turnarounds;
        self.lane_reduce_steps += o.lane_reduce_steps;
        self.sf_ops += o.sf_ops;
        self.spills += o.spills;
        self.reloads += o.reloads;
        self.spill_row_opens += o.spill_row_opens;
    }
}

/// Where a finished accumulator unit was left for the host to collect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub scope: Scope,
    /// Bank-local row-block (see `PlacementMap::bank_rbs`).
    pub lrb: u32,
    pub unit: u32,
    pub row: u32,
    pub col: u32,
    /// Consecutive registers stored from `col` on.
    pub regs: u32,
    /// Lane partials were folded; slot `s` holds row `s` of the row-block.
    pub reduced: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelTrace {
    /// Absolute channel index.
    pub channel: usize,
    /// Split-K part this channel serves.
    pub part: usize,
    pub spill_base: u32,
    pub commands: Arc<Vec<Command>>,
    pub finals: Arc<Vec<FinalRecord>>,
    pub counts: Counts,
}

impl ChannelTrace {
    /// Share of MAC and IV-write commands that address all banks at once.
    pub fn broadcast_fraction(&self) -> f64 {
        let (mut all, mut n) = (0usize, 0usize);
        for c in self.commands.iter() {
            if matches!(c.op, Op::Mac { .. } | Op::WriteIvReg { .. }) {
                n += 1;
                all += (c.scope == Scope::AllBanks) as usize;
            }
        }
        if n == 0 {
            1.0
        } else {
            all as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandTrace {
    pub geometry: Geometry,
    pub split_k: usize,
    pub channels: Vec<ChannelTrace>,
}

impl CommandTrace {
    /// Channel stream with the largest command count.
    pub fn busiest(&self) -> Option<&ChannelTrace> {
        self.channels.iter().max_by_key(|c| c.commands.len())
    }

    pub fn total_counts(&self) -> Counts {
        let mut c = Counts::default();
        for ch in &self.channels {
            c.add(&ch.counts);
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(op: Op) -> Command {
        Command { scope: Scope::AllBanks, op }
    }

    #[test]
    fn counts_direction_changes() {
        let iv = cmd(Op::WriteIvReg { reg: 0, iv_word: 0 });
        let mac = cmd(Op::Mac { iv_reg: 0, iv_lane: 0, acc: 8, col: 0, init: true });
        let act = cmd(Op::Activate { row: 0, restore: false });
        let list = [act, iv, iv, mac, act, mac, iv, mac];
        let c = Counts::of(&list, 10);
        assert_eq!((c.iv_writes, c.macs, c.row_switches, c.turnarounds), (3, 3, 2, 3));
    }

    #[test]
    fn spill_rows_are_separate() {
        let list = [
            cmd(Op::Activate { row: 12, restore: false }),
            cmd(Op::SpillOutput { reg: 8, row: 12, col: 0 }),
            cmd(Op::Activate { row: 3, restore: true }),
            cmd(Op::SfMul { acc: 8, col: 0, word_col: 0, blk_first: 0, nblk: 1, sf_words: 2 }),
        ];
        let c = Counts::of(&list, 10);
        assert_eq!((c.row_switches, c.spill_row_opens, c.spills, c.sf_ops, c.turnarounds), (0, 2, 1, 3, 1));
    }
}
