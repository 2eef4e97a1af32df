use serde::{Deserialize, Serialize};

use crate::config::{MemoryConfig, PimConfig};
use crate::problem::GemvProblem;

/// How DRAM words of a column-major tile map onto SIMD lanes and
/// accumulator slots. Shared by the placement, the trace generator and the
/// bank model so all three agree on one definition.
///
/// A word holds `lanes` elements. When the tile is at least `lanes` rows
/// tall a word is a slice of one column, and lane `l` accumulates row
/// `l` of its accumulator unit ("row mode"). When the tile is shorter, a
/// word spans `lanes / m_tile` columns and lane `l` keeps a private partial
/// sum for row `l % m_tile` until a lane reduction ("lane mode").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub m_tile: usize,
    pub k_tile: usize,
    pub in_bits: u32,
    pub out_bits: u32,
    pub lanes: usize,
    pub word_bytes: usize,
    pub gran_bytes: usize,
    pub words_per_tile: usize,
    /// Output values per register.
    pub out_lanes: usize,
    /// Registers holding one accumulator unit (`lanes` slots).
    pub regs_per_unit: usize,
    pub sf_block: Option<usize>,
    pub sf_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordInfo {
    /// Accumulator unit within the row-block.
    pub unit: usize,
    /// First and last matrix column touched (absolute, padded space).
    pub first_col: usize,
    pub last_col: usize,
}

impl Geometry {
    pub fn new(p: &GemvProblem, mem: &MemoryConfig, pim: &PimConfig, m_tile: usize, k_tile: usize) -> Self {
        let lanes = pim.lanes(p.in_fmt.bits);
        let out_lanes = pim.reg_size_bits / p.out_fmt.bits as usize;
        Self {
            m_tile,
            k_tile,
            in_bits: p.in_fmt.bits,
            out_bits: p.out_fmt.bits,
            lanes,
            word_bytes: mem.word_bytes(),
            gran_bytes: mem.interleave_gran_bytes,
            words_per_tile: mem.interleave_gran_bytes / mem.word_bytes(),
            out_lanes,
            regs_per_unit: (lanes / out_lanes).max(1),
            sf_block: p.sf_block(),
            sf_bits: p.in_fmt.sf_bits,
        }
    }

    pub fn row_mode(&self) -> bool {
        self.m_tile >= self.lanes
    }

    /// Accumulator units per row-block.
    pub fn units_per_rb(&self) -> usize {
        if self.row_mode() {
            self.m_tile / self.lanes
        } else {
            1
        }
    }

    /// Distinct matrix rows whose outputs live in one unit.
    pub fn unit_rows(&self) -> usize {
        self.m_tile.min(self.lanes)
    }

    /// Registers a whole row-block occupies while accumulating.
    pub fn acc_regs(&self) -> usize {
        self.units_per_rb() * self.regs_per_unit
    }

    /// Registers holding one row-block's finished outputs.
    pub fn final_regs(&self) -> usize {
        (self.m_tile * self.out_bits as usize).div_ceil(self.out_lanes * self.out_bits as usize)
    }

    /// Lane-halving steps to fold lane partials into `m_tile` outputs.
    pub fn reduce_steps(&self) -> usize {
        if self.row_mode() {
            0
        } else {
            (self.lanes / self.m_tile).trailing_zeros() as usize
        }
    }

    /// Word `w` of the tile in tile-column `cj`.
    pub fn word(&self, cj: usize, w: usize) -> WordInfo {
        let e0 = w * self.lanes;
        let base = cj * self.k_tile;
        if self.row_mode() {
            let r0 = e0 % self.m_tile;
            let c = base + e0 / self.m_tile;
            WordInfo { unit: r0 / self.lanes, first_col: c, last_col: c }
        } else {
            let first = base + e0 / self.m_tile;
            WordInfo { unit: 0, first_col: first, last_col: first + self.lanes / self.m_tile - 1 }
        }
    }

    /// Column offset from the word's first column seen by lane `l`.
    #[inline]
    pub fn lane_col(&self, l: usize) -> usize {
        if self.row_mode() {
            0
        } else {
            l / self.m_tile
        }
    }

    /// Row within the unit whose output slot `s` feeds.
    #[inline]
    pub fn slot_row(&self, s: usize) -> usize {
        if self.row_mode() {
            s
        } else {
            s % self.m_tile
        }
    }

    /// Input-vector word (register-sized group of IV elements) holding `col`.
    pub fn iv_word(&self, col: usize) -> usize {
        col / self.lanes
    }

    pub fn iv_lane(&self, col: usize) -> usize {
        col % self.lanes
    }

    /// Scale blocks spanned by a word, inclusive.
    pub fn blocks(&self, wi: &WordInfo) -> Option<(usize, usize)> {
        self.sf_block.map(|b| (wi.first_col / b, wi.last_col / b))
    }

    /// Whether `w` is the last word touching its column(s) in this tile.
    pub fn closes_column(&self, w: usize) -> bool {
        if self.row_mode() {
            ((w + 1) * self.lanes).is_multiple_of(self.m_tile)
        } else {
            true
        }
    }

    pub fn sf_bytes(&self, entries: usize) -> usize {
        entries * self.sf_bits as usize / 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(m: usize, k: usize) -> Geometry {
        Geometry::new(&GemvProblem::int8(64, 64), &MemoryConfig::default(), &PimConfig::default(), m, k)
    }

    #[test]
    fn row_mode_words() {
        let g = geo(32, 8);
        assert!(g.row_mode());
        assert_eq!(g.words_per_tile, 8);
        assert_eq!(g.acc_regs(), 2);
        assert_eq!(g.final_regs(), 2);
        assert_eq!(g.word(1, 3), WordInfo { unit: 0, first_col: 11, last_col: 11 });
        let g = geo(64, 4);
        assert_eq!(g.units_per_rb(), 2);
        assert_eq!(g.word(0, 1), WordInfo { unit: 1, first_col: 0, last_col: 0 });
        assert!(!g.closes_column(0) && g.closes_column(1));
    }

    #[test]
    fn lane_mode_words() {
        let g = geo(2, 128);
        assert!(!g.row_mode());
        assert_eq!(g.reduce_steps(), 4);
        assert_eq!(g.acc_regs(), 2);
        assert_eq!(g.final_regs(), 1);
        assert_eq!(g.word(1, 2), WordInfo { unit: 0, first_col: 160, last_col: 175 });
        assert_eq!(g.lane_col(5), 2);
        assert_eq!(g.slot_row(5), 1);
    }
}
