use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::config::{elements_per_tile, MemoryConfig, PimConfig};
use crate::error::Result;
use crate::problem::GemvProblem;

/// Which branch of the tile-shape search produced the shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeExit {
    /// Rows divide evenly over banks and registers suffice.
    EvenDistribution,
    /// Rows divide evenly with one-row tiles but registers do not suffice.
    RegisterFallback,
    /// Even with one-row tiles the rows do not divide evenly.
    RowVectorFallback,
    /// Shape fixed by a baseline layout, no search.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileShape {
    pub m_tile: usize,
    pub k_tile: usize,
    pub exit: ShapeExit,
}

/// Input/output registers one tile needs, in bits throughout.
///
/// The input count is computed through the real-valued register total so
/// that tiles narrower than one register still share a register.
pub fn get_param(
    m_tile: usize,
    k_tile: usize,
    in_bits: usize,
    out_bits: usize,
    reg_size: usize,
    gran_bits: usize,
) -> (usize, usize) {
    let in_reg_tot = Ratio::new(k_tile * in_bits, reg_size);
    let in_reg = ((in_reg_tot * reg_size) / gran_bits).ceil().to_integer();
    let out_reg = Ratio::new(m_tile * out_bits, reg_size).ceil().to_integer();
    (in_reg, out_reg)
}

/// Register parameters of a concrete problem/shape pair.
pub fn get_param_for(p: &GemvProblem, mem: &MemoryConfig, pim: &PimConfig, m_tile: usize, k_tile: usize) -> (usize, usize) {
    get_param(
        m_tile,
        k_tile,
        p.in_fmt.bits as usize,
        p.out_fmt.bits as usize,
        pim.reg_size_bits,
        mem.interleave_gran_bytes * 8,
    )
}

/// Sweeps tile height from a column vector down to a row vector, halving,
/// and stops at the first height that spreads rows evenly over all banks
/// within the register budget.
pub fn get_tile_shape(p: &GemvProblem, mem: &MemoryConfig, pim: &PimConfig) -> Result<TileShape> {
    let elem_per_tile = elements_per_tile(mem, &p.in_fmt)?;
    let tot_bank = mem.total_banks();
    let mut m_tile = elem_per_tile;
    let mut k_tile = elem_per_tile / m_tile;
    while m_tile >= 1 {
        if p.m.is_multiple_of(tot_bank * m_tile) {
            let (in_reg, out_reg) = get_param_for(p, mem, pim, m_tile, k_tile);
            if in_reg + out_reg <= pim.regs_per_alu {
                return Ok(TileShape { m_tile, k_tile, exit: ShapeExit::EvenDistribution });
            } else if m_tile > 1 {
                m_tile /= 2;
                k_tile = elem_per_tile / m_tile;
            } else {
                return Ok(TileShape { m_tile, k_tile, exit: ShapeExit::RegisterFallback });
            }
        } else if m_tile == 1 {
            return Ok(TileShape { m_tile, k_tile, exit: ShapeExit::RowVectorFallback });
        } else {
            m_tile /= 2;
            k_tile = elem_per_tile / m_tile;
        }
    }
    unreachable!("tile height sweep always exits at m_tile == 1")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_hand_traces() {
        // reg 256b, gran 2048b, 8b in, 16b out
        assert_eq!(get_param(32, 8, 8, 16, 256, 2048), (1, 2));
        assert_eq!(get_param(2, 128, 8, 16, 256, 2048), (1, 1));
        assert_eq!(get_param(256, 1, 8, 16, 256, 2048), (1, 16));
        assert_eq!(get_param(1, 256, 8, 16, 256, 2048), (1, 1));
    }

    #[test]
    fn shape_hand_traces() {
        let mem = MemoryConfig::default();
        let pim = PimConfig::default();
        let s = get_tile_shape(&GemvProblem::int8(4096, 4096), &mem, &pim).unwrap();
        assert_eq!((s.m_tile, s.k_tile, s.exit), (32, 8, ShapeExit::EvenDistribution));
        let s = get_tile_shape(&GemvProblem::int8(768, 768), &mem, &pim).unwrap();
        assert_eq!((s.m_tile, s.k_tile), (2, 128));
        let s = get_tile_shape(&GemvProblem::int8(1, 77 * 8), &mem, &pim).unwrap();
        assert_eq!((s.m_tile, s.k_tile, s.exit), (1, 256, ShapeExit::RowVectorFallback));
    }

    #[test]
    fn register_fallback_branch() {
        // Two registers cannot hold one input and a 16-row output block of 16b
        // once the output needs two; force it with 32-bit wide outputs.
        let mem = MemoryConfig { num_channels: 1, banks_per_channel: 1, ..MemoryConfig::default() };
        let pim = PimConfig { regs_per_alu: 2, ..PimConfig::default() };
        let s = get_tile_shape(&GemvProblem::int8(64, 64), &mem, &pim).unwrap();
        // 16-row tiles need one output register: 1 + 1 <= 2.
        assert_eq!((s.m_tile, s.exit), (16, ShapeExit::EvenDistribution));
    }
}
