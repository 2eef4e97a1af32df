use serde::{Deserialize, Serialize};

use crate::config::{elements_per_tile, MemoryConfig};
use crate::error::{Error, Result};
use crate::problem::GemvProblem;

/// How weight chunks and their scale-factor chunks alternate in memory
/// when every row-block's scales follow the weights they scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleLayout {
    /// Scale bytes belonging to one weight tile.
    pub sf_bytes_per_tile: usize,
    /// Weight tiles whose scales fill one interleave chunk.
    pub tiles_per_sf_chunk: usize,
    /// Weight tiles per DRAM row, leaving room for their scales.
    pub tiles_per_row: usize,
    pub sf_chunks_per_row: usize,
}

/// Steady-state interleaving of weights and scale factors. Without scale
/// factors every chunk of a row holds weights.
pub fn interleave_scale_factors(p: &GemvProblem, mem: &MemoryConfig) -> Result<ScaleLayout> {
    let chunks = mem.chunks_per_row();
    let gran = mem.interleave_gran_bytes;
    let Some(block) = p.sf_block() else {
        return Ok(ScaleLayout { sf_bytes_per_tile: 0, tiles_per_sf_chunk: 0, tiles_per_row: chunks, sf_chunks_per_row: 0 });
    };
    let elem = elements_per_tile(mem, &p.in_fmt)?;
    let sf_bytes_per_tile = (elem / block).max(1) * p.in_fmt.sf_bits as usize / 8;
    if sf_bytes_per_tile > gran {
        return Err(Error::Config(format!(
            "{sf_bytes_per_tile} scale bytes per tile exceed the {gran}-byte interleave chunk"
        )));
    }
    let tiles_per_sf_chunk = gran / sf_bytes_per_tile;
    let tiles_per_row = (1..=chunks)
        .rev()
        .find(|&n| n + (n * sf_bytes_per_tile).div_ceil(gran) <= chunks)
        .ok_or_else(|| Error::Config(format!("scale chunk does not fit a {}-byte row", mem.row_buffer_bytes)))?;
    Ok(ScaleLayout {
        sf_bytes_per_tile,
        tiles_per_sf_chunk,
        tiles_per_row,
        sf_chunks_per_row: (tiles_per_row * sf_bytes_per_tile).div_ceil(gran),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DataFormat;

    fn scaled(block: u32) -> GemvProblem {
        GemvProblem { in_fmt: DataFormat::with_scales(8, block), ..GemvProblem::int8(64, 64) }
    }

    #[test]
    fn chunk_ratios() {
        let mem = MemoryConfig::default();
        // 256 scale bytes cover 256 * block weights, i.e. `block` tiles of 256.
        let l = interleave_scale_factors(&scaled(32), &mem).unwrap();
        assert_eq!((l.sf_bytes_per_tile, l.tiles_per_sf_chunk), (8, 32));
        assert_eq!((l.tiles_per_row, l.sf_chunks_per_row), (7, 1));
        let l = interleave_scale_factors(&scaled(128), &mem).unwrap();
        assert_eq!(l.tiles_per_sf_chunk, 128);
    }

    #[test]
    fn no_scales_is_identity() {
        let l = interleave_scale_factors(&GemvProblem::int8(64, 64), &MemoryConfig::default()).unwrap();
        assert_eq!((l.tiles_per_row, l.sf_chunks_per_row), (8, 0));
    }

    #[test]
    fn oversized_scales_fail() {
        let mem = MemoryConfig { row_buffer_bytes: 256, ..MemoryConfig::default() };
        assert!(interleave_scale_factors(&scaled(32), &mem).is_err());
    }
}
