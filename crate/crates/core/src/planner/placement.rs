use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::geometry::Geometry;
use super::order::{column_order, get_tile_cr_order, row_order};
use super::TilePlan;
use crate::config::{LayoutKind, MemoryConfig, PimConfig};
use crate::error::{Error, Result};
use crate::problem::GemvProblem;

/// Physical home of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileCoord {
    pub channel: u32,
    pub bank: u32,
    pub row: u32,
    /// Byte offset inside the row buffer.
    pub col: u32,
}

/// Content of one DRAM row; identical in every bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowComposition {
    /// First per-bank tile slot stored in this row.
    pub first_slot: usize,
    pub tiles: usize,
    /// Scale-factor bytes the fullest bank stores after the tiles.
    pub sf_bytes: usize,
}

/// A tile as seen from inside its bank: `lrb` indexes the bank's row-block list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalTile {
    pub lrb: u32,
    pub cj: u32,
}

/// Point after which the block partials of one accumulator unit are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleEvent {
    /// Word (bank-local sequence number) that triggers the event.
    pub word: u32,
    pub lrb: u32,
    pub unit: u32,
    pub blk_first: u32,
    pub nblk: u32,
    pub row: u32,
    /// Byte offset of the event's scale entries in `row`.
    pub byte_offset: u32,
}

impl ScaleEvent {
    pub fn entries(&self, geo: &Geometry) -> usize {
        self.nblk as usize * geo.unit_rows()
    }
}

/// IV words written together, followed by every word of the group that uses them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    pub group: u32,
    pub iv_words: Vec<u32>,
    /// Range into [`BankLayout::exec`].
    pub words: Range<usize>,
}

pub const NO_EVENT: u32 = u32::MAX;

/// Tile arrangement and execution schedule shared by every bank whose
/// content has the same shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankLayout {
    pub tiles: Vec<LocalTile>,
    /// Row-block groups that are finished together, as tile-position ranges.
    pub groups: Vec<Range<usize>>,
    /// Word sequence numbers (`slot * words_per_tile + w`) in execution order.
    pub exec: Vec<u32>,
    pub bursts: Vec<Burst>,
    pub events: Vec<ScaleEvent>,
    /// Event index per word sequence number, [`NO_EVENT`] if none.
    pub event_at: Vec<u32>,
}

/// Where every tile of a (sub-)problem lives and how each bank walks it.
#[derive(Debug, Clone)]
pub struct PlacementMap {
    pub layout: LayoutKind,
    pub m: usize,
    pub k: usize,
    pub m_tile: usize,
    pub k_tile: usize,
    pub m_pad: usize,
    pub k_pad: usize,
    pub m_tm: usize,
    pub k_tm: usize,
    /// CR degree actually used (capped by row-blocks per bank).
    pub cr_degree: usize,
    pub channel_offset: usize,
    pub num_channels: usize,
    pub banks_per_channel: usize,
    pub tot_bank: usize,
    pub row_buffer_bytes: usize,
    pub geometry: Geometry,
    pub iv_regs: usize,
    pub tile_order: Vec<u32>,
    /// Indexed by row-order tile index.
    pub tile_coords: Vec<TileCoord>,
    /// Real (unpadded) matrix rows with data in each bank.
    pub rows_per_bank: Vec<usize>,
    pub rows: Vec<RowComposition>,
    /// Row index of each per-bank tile slot.
    pub slot_row: Vec<u32>,
    pub layouts: Vec<BankLayout>,
    /// Global bank → index into `layouts`.
    pub bank_layout: Vec<u32>,
    /// Global bank → local row-block → row-block.
    pub bank_rbs: Vec<Vec<u32>>,
}

impl PlacementMap {
    pub fn num_tiles(&self) -> usize {
        self.m_tm * self.k_tm
    }

    /// Channel (absolute) and bank of global bank index `g`.
    pub fn bank_coords(&self, g: usize) -> (usize, usize) {
        (self.channel_offset + g % self.num_channels, g / self.num_channels)
    }

    pub fn global_bank(&self, channel_local: usize, bank: usize) -> usize {
        bank * self.num_channels + channel_local
    }

    /// Weight rows per bank; spill rows start here.
    pub fn weight_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn layout_of(&self, g: usize) -> &BankLayout {
        &self.layouts[self.bank_layout[g] as usize]
    }

    /// Tiles stored in bank `g`.
    pub fn bank_tile_count(&self, g: usize) -> usize {
        self.layout_of(g).tiles.len()
    }

    /// Row and byte column of bank-local word `seq`.
    pub fn word_location(&self, seq: u32) -> (u32, u32) {
        let wpt = self.geometry.words_per_tile;
        let slot = seq as usize / wpt;
        let row = self.slot_row[slot];
        let r = &self.rows[row as usize];
        let col = (slot - r.first_slot) * self.geometry.gran_bytes + (seq as usize % wpt) * self.geometry.word_bytes;
        (row, col as u32)
    }

    /// Bytes a bank occupies, counting unused chunks at the end of full rows.
    pub fn bytes_per_bank(&self, g: usize) -> usize {
        let n = self.bank_tile_count(g);
        if n == 0 {
            return 0;
        }
        let last = self.slot_row[n - 1] as usize;
        let r = &self.rows[last];
        let gran = self.geometry.gran_bytes;
        let layout = self.layout_of(g);
        let sf: usize = layout
            .events
            .iter()
            .filter(|e| e.row as usize == last)
            .map(|e| self.geometry.sf_bytes(e.entries(&self.geometry)))
            .sum();
        last * self.row_buffer_bytes + (n - r.first_slot) * gran + sf.div_ceil(gran) * gran
    }
}

fn round_up(x: usize, m: usize) -> usize {
    x.div_ceil(m) * m
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Lays the tiles of `p` out over the banks of `mem`, whose channels are
/// numbered from `channel_offset` in the full system.
pub fn build_placement_map(
    p: &GemvProblem,
    plan: &TilePlan,
    mem: &MemoryConfig,
    pim: &PimConfig,
    channel_offset: usize,
) -> Result<PlacementMap> {
    let geo = Geometry::new(p, mem, pim, plan.m_tile, plan.k_tile);
    let tot_bank = mem.total_banks();
    let (m_tile, k_tile) = (plan.m_tile, plan.k_tile);
    if m_tile * k_tile * p.in_fmt.bits as usize != mem.interleave_gran_bytes * 8 {
        return Err(Error::Planner(format!("tile {m_tile}x{k_tile} does not fill one interleave chunk")));
    }
    if geo.words_per_tile == 0 || !mem.interleave_gran_bytes.is_multiple_of(mem.word_bytes()) {
        return Err(Error::Planner("interleave chunk is not a whole number of DRAM words".into()));
    }
    if geo.lanes * p.in_fmt.bits as usize != mem.word_bytes() * 8 {
        return Err(Error::Planner("SIMD register width must equal the DRAM word".into()));
    }
    let k_align = match p.sf_block() {
        Some(b) => k_tile / gcd(k_tile, b) * b,
        None => k_tile,
    };
    let k_pad = round_up(p.k, k_align);
    let k_tm = k_pad / k_tile;
    let mut m_tm = p.m.div_ceil(m_tile);
    let (order, cr_degree) = match plan.layout {
        LayoutKind::Planned => {
            m_tm = round_up(m_tm, tot_bank);
            let d = plan.cr_degree.min(m_tm / tot_bank).max(1);
            (get_tile_cr_order(m_tm, k_tm, tot_bank, d)?, d)
        }
        LayoutKind::ColumnMajor => (column_order(m_tm, k_tm), 1),
        LayoutKind::RowMajor => (row_order(m_tm, k_tm), 1),
    };
    let m_pad = m_tm * m_tile;

    // Distribute tiles round-robin over banks.
    let mut bank_tiles: Vec<Vec<u32>> = vec![Vec::with_capacity(order.len() / tot_bank + 1); tot_bank];
    for (u, &t) in order.iter().enumerate() {
        bank_tiles[u % tot_bank].push(t);
    }

    let spread = tot_bank * cr_degree;
    let num_abs = m_tm / spread;
    let group_of = |rb: usize| -> usize {
        match plan.layout {
            LayoutKind::Planned => (rb / spread).min(num_abs),
            _ => 0,
        }
    };

    let mut layouts: Vec<BankLayout> = Vec::new();
    let mut index: HashMap<(Vec<LocalTile>, Vec<Range<usize>>), u32> = HashMap::new();
    let mut bank_layout = Vec::with_capacity(tot_bank);
    let mut bank_rbs = Vec::with_capacity(tot_bank);
    for tiles in &bank_tiles {
        let mut rbs: Vec<u32> = Vec::new();
        let mut local: HashMap<u32, u32> = HashMap::new();
        let mut lt = Vec::with_capacity(tiles.len());
        let mut groups: Vec<Range<usize>> = Vec::new();
        let mut cur_group = usize::MAX;
        for (pos, &t) in tiles.iter().enumerate() {
            let rb = t / k_tm as u32;
            let cj = t % k_tm as u32;
            let lrb = *local.entry(rb).or_insert_with(|| {
                rbs.push(rb);
                rbs.len() as u32 - 1
            });
            lt.push(LocalTile { lrb, cj });
            let gid = group_of(rb as usize);
            if gid != cur_group {
                if let Some(g) = groups.last_mut() {
                    g.end = pos;
                }
                groups.push(pos..tiles.len());
                cur_group = gid;
            }
        }
        let key = (lt, groups);
        let id = match index.get(&key) {
            Some(&id) => id,
            None => {
                let id = layouts.len() as u32;
                let (lt, groups) = key.clone();
                layouts.push(schedule(&geo, lt, groups, plan.iv_regs));
                index.insert(key, id);
                id
            }
        };
        bank_layout.push(id);
        bank_rbs.push(rbs);
    }

    let (rows, slot_row) = compose_rows(&geo, mem, &mut layouts)?;

    let mut tile_coords = vec![TileCoord { channel: 0, bank: 0, row: 0, col: 0 }; order.len()];
    for (g, tiles) in bank_tiles.iter().enumerate() {
        let channel = (channel_offset + g % mem.num_channels) as u32;
        let bank = (g / mem.num_channels) as u32;
        for (slot, &t) in tiles.iter().enumerate() {
            let row = slot_row[slot];
            let col = ((slot - rows[row as usize].first_slot) * mem.interleave_gran_bytes) as u32;
            tile_coords[t as usize] = TileCoord { channel, bank, row, col };
        }
    }

    let rows_per_bank = bank_rbs
        .iter()
        .map(|rbs| {
            rbs.iter()
                .map(|&rb| {
                    let lo = rb as usize * m_tile;
                    (lo + m_tile).min(p.m).saturating_sub(lo)
                })
                .sum()
        })
        .collect();

    Ok(PlacementMap {
        layout: plan.layout,
        m: p.m,
        k: p.k,
        m_tile,
        k_tile,
        m_pad,
        k_pad,
        m_tm,
        k_tm,
        cr_degree,
        channel_offset,
        num_channels: mem.num_channels,
        banks_per_channel: mem.banks_per_channel,
        tot_bank,
        row_buffer_bytes: mem.row_buffer_bytes,
        geometry: geo,
        iv_regs: plan.iv_regs,
        tile_order: order,
        tile_coords,
        rows_per_bank,
        rows,
        slot_row,
        layouts,
        bank_layout,
        bank_rbs,
    })
}

/// Orders a bank's words into IV bursts and derives its scale events.
///
/// Within each group, a burst takes the first `iv_regs` distinct IV words
/// of the not-yet-executed words in memory order and then executes every
/// remaining word of the group that reads one of them, in memory order.
fn schedule(geo: &Geometry, tiles: Vec<LocalTile>, groups: Vec<Range<usize>>, iv_regs: usize) -> BankLayout {
    let wpt = geo.words_per_tile;
    let n_words = tiles.len() * wpt;
    let word_of = |seq: usize| {
        let t = tiles[seq / wpt];
        (t, geo.word(t.cj as usize, seq % wpt))
    };

    let mut exec = Vec::with_capacity(n_words);
    let mut bursts = Vec::new();
    let mut done = vec![false; n_words];
    for (gi, g) in groups.iter().enumerate() {
        let seqs = g.start * wpt..g.end * wpt;
        let mut queues: HashMap<u32, std::collections::VecDeque<u32>> = HashMap::new();
        for s in seqs.clone() {
            let iw = geo.iv_word(word_of(s).1.first_col) as u32;
            queues.entry(iw).or_default().push_back(s as u32);
        }
        let mut cursor = seqs.start;
        loop {
            while cursor < seqs.end && done[cursor] {
                cursor += 1;
            }
            if cursor == seqs.end {
                break;
            }
            let mut ivs: Vec<u32> = Vec::with_capacity(iv_regs);
            let mut s = cursor;
            while s < seqs.end && ivs.len() < iv_regs {
                if !done[s] {
                    let iw = geo.iv_word(word_of(s).1.first_col) as u32;
                    if !ivs.contains(&iw) {
                        ivs.push(iw);
                    }
                }
                s += 1;
            }
            let start = exec.len();
            for iw in &ivs {
                exec.extend(queues.remove(iw).unwrap_or_default());
            }
            exec[start..].sort_unstable();
            for &w in &exec[start..] {
                done[w as usize] = true;
            }
            bursts.push(Burst { group: gi as u32, iv_words: ivs, words: start..exec.len() });
        }
    }

    let mut events = Vec::new();
    let mut event_at = Vec::new();
    if geo.sf_block.is_some() {
        event_at = vec![NO_EVENT; n_words];
        let mut next: HashMap<(u32, u32), (usize, usize)> = HashMap::new();
        for &seq in exec.iter().rev() {
            let (t, wi) = word_of(seq as usize);
            let blk = geo.blocks(&wi).expect("scales present");
            let key = (t.lrb, wi.unit as u32);
            let fire = blk.0 != blk.1 || next.get(&key) != Some(&blk);
            next.insert(key, blk);
            if fire {
                event_at[seq as usize] = events.len() as u32;
                events.push(ScaleEvent {
                    word: seq,
                    lrb: t.lrb,
                    unit: wi.unit as u32,
                    blk_first: blk.0 as u32,
                    nblk: (blk.1 - blk.0 + 1) as u32,
                    row: 0,
                    byte_offset: 0,
                });
            }
        }
        // Renumber so event indices follow execution order.
        events.reverse();
        let n = events.len() as u32;
        for e in event_at.iter_mut().filter(|e| **e != NO_EVENT) {
            *e = n - 1 - *e;
        }
    }
    BankLayout { tiles, groups, exec, bursts, events, event_at }
}

/// Packs tile slots into DRAM rows, leaving room after the tiles of each row
/// for the scale entries of words stored there. Every bank uses the same
/// composition so that rows line up across banks.
fn compose_rows(geo: &Geometry, mem: &MemoryConfig, layouts: &mut [BankLayout]) -> Result<(Vec<RowComposition>, Vec<u32>)> {
    let chunks = mem.chunks_per_row();
    let gran = geo.gran_bytes;
    let wpt = geo.words_per_tile;
    let slots = layouts.iter().map(|l| l.tiles.len()).max().unwrap_or(0);

    let sf_per_slot: Vec<Vec<usize>> = layouts
        .iter()
        .map(|l| {
            let mut v = vec![0usize; l.tiles.len()];
            for e in &l.events {
                v[e.word as usize / wpt] += geo.sf_bytes(e.entries(geo));
            }
            v
        })
        .collect();

    let mut rows = Vec::new();
    let mut slot_row = Vec::with_capacity(slots);
    let mut s = 0;
    while s < slots {
        let mut n = 0;
        let mut sf_max = 0;
        let mut sums = vec![0usize; layouts.len()];
        while s + n < slots {
            let mut worst = 0;
            for (li, v) in sf_per_slot.iter().enumerate() {
                worst = worst.max(sums[li] + v.get(s + n).copied().unwrap_or(0));
            }
            if n + 1 + worst.div_ceil(gran) > chunks {
                break;
            }
            for (li, v) in sf_per_slot.iter().enumerate() {
                sums[li] += v.get(s + n).copied().unwrap_or(0);
            }
            sf_max = worst;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Config(format!(
                "scale factors of one tile do not fit a {}-byte row next to the tile",
                mem.row_buffer_bytes
            )));
        }
        slot_row.extend(std::iter::repeat_n(rows.len() as u32, n));
        rows.push(RowComposition { first_slot: s, tiles: n, sf_bytes: sf_max });
        s += n;
    }

    for l in layouts.iter_mut() {
        let mut order: Vec<usize> = (0..l.events.len()).collect();
        order.sort_by_key(|&i| l.events[i].word);
        let mut fill: HashMap<u32, usize> = HashMap::new();
        for i in order {
            let e = &mut l.events[i];
            let row = slot_row[e.word as usize / wpt];
            let used = fill.entry(row).or_insert(0);
            e.row = row;
            e.byte_offset = (rows[row as usize].tiles * gran + *used) as u32;
            *used += geo.sf_bytes(e.nblk as usize * geo.unit_rows());
        }
    }
    Ok((rows, slot_row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DataFormat, Knobs};
    use crate::planner::plan_tiles;

    fn mem(channels: usize, banks: usize) -> MemoryConfig {
        MemoryConfig { num_channels: channels, banks_per_channel: banks, ..MemoryConfig::default() }
    }

    fn place(p: &GemvProblem, mem: &MemoryConfig, knobs: &Knobs) -> PlacementMap {
        let pim = PimConfig::default();
        let plan = plan_tiles(p, mem, &pim, knobs, 1).unwrap();
        build_placement_map(p, &plan, mem, &pim, 0).unwrap()
    }

    #[test]
    fn two_banks_round_robin() {
        // 6 row-blocks of 32 rows, 2 tile columns, 2 banks.
        let m = mem(1, 2);
        let map = place(&GemvProblem::int8(192, 16), &m, &Knobs { cr_degree: Some(1), ..Knobs::default() });
        assert_eq!((map.m_tile, map.k_tile), (32, 8));
        assert_eq!(map.tile_order[..8], [0, 2, 1, 3, 4, 6, 5, 7]);
        let bank = |t: usize| map.tile_coords[t].bank;
        assert_eq!((bank(0), bank(1), bank(2), bank(3)), (0, 0, 1, 1));
        assert_eq!(map.tile_coords[1].col, 256);
    }

    #[test]
    fn default_large_gemv_is_balanced() {
        let map = place(&GemvProblem::int8(4096, 4096), &MemoryConfig::default(), &Knobs::default());
        assert!(map.rows_per_bank.iter().all(|&r| r == 32));
        assert_eq!(map.layouts.len(), 1);
        assert_eq!(map.weight_rows(), 64);
        assert_eq!(map.layouts[0].bursts.len(), 16);
        assert!(map.layouts[0].bursts.iter().all(|b| b.iv_words.len() == 8));
    }

    #[test]
    fn single_bank_fills_rows_densely() {
        let map = place(&GemvProblem::int8(64, 64), &mem(1, 1), &Knobs::default());
        assert_eq!(map.rows.len(), map.num_tiles().div_ceil(8));
        let inv = crate::planner::inverse(&map.tile_order);
        for (t, c) in map.tile_coords.iter().enumerate() {
            let slot = inv[t] as usize;
            assert_eq!(c.row as usize, slot / 8);
            assert_eq!(c.col as usize, (slot % 8) * 256);
        }
    }

    #[test]
    fn scale_entries_share_row_with_weights() {
        let p = GemvProblem {
            in_fmt: DataFormat::with_scales(8, 32),
            ..GemvProblem::int8(256, 512)
        };
        let map = place(&p, &mem(1, 4), &Knobs::default());
        for l in &map.layouts {
            assert!(!l.events.is_empty());
            for e in &l.events {
                let (row, _) = map.word_location(e.word);
                assert_eq!(row, e.row);
                let end = e.byte_offset as usize + map.geometry.sf_bytes(e.entries(&map.geometry));
                assert!(end <= map.row_buffer_bytes);
            }
        }
        assert!(map.rows[..map.rows.len() - 1].iter().all(|r| r.tiles == 7));
    }

    #[test]
    fn ragged_rows_are_padded() {
        let map = place(&GemvProblem::int8(100, 24), &mem(2, 2), &Knobs::default());
        assert_eq!(map.m_pad % map.m_tile, 0);
        assert!(map.m_pad >= 100 && map.k_pad >= 24);
        assert_eq!(map.rows_per_bank.iter().sum::<usize>(), 100);
    }
}
