use serde::{Deserialize, Serialize};

use super::placement::PlacementMap;
use crate::codec;
use crate::config::IntraTileOrder;
use crate::error::{Error, Result};
use crate::problem::{GemvData, GemvProblem};

fn tile_element(map: &PlacementMap, order: IntraTileOrder, e: usize) -> (usize, usize) {
    match order {
        IntraTileOrder::ColumnMajor => (e % map.m_tile, e / map.m_tile),
        IntraTileOrder::RowMajor => (e / map.k_tile, e % map.k_tile),
    }
}

/// Reorders a row-major M×K buffer into placement order: tile after tile in
/// `map.tile_order`, each tile's elements in `order`. Padding is zero.
pub fn rearrange_matrix(weights: &[i32], map: &PlacementMap, order: IntraTileOrder) -> Result<Vec<i32>> {
    if weights.len() != map.m * map.k {
        return Err(Error::SizeMismatch { expected: map.m * map.k, actual: weights.len() });
    }
    let elem = map.m_tile * map.k_tile;
    let mut out = Vec::with_capacity(map.num_tiles() * elem);
    for &t in &map.tile_order {
        let (rb, cj) = (t as usize / map.k_tm, t as usize % map.k_tm);
        for e in 0..elem {
            let (r, c) = tile_element(map, order, e);
            let (row, col) = (rb * map.m_tile + r, cj * map.k_tile + c);
            out.push(if row < map.m && col < map.k { weights[row * map.k + col] } else { 0 });
        }
    }
    Ok(out)
}

/// Inverse of [`rearrange_matrix`]; padding is dropped.
pub fn restore_matrix(placed: &[i32], map: &PlacementMap, order: IntraTileOrder) -> Result<Vec<i32>> {
    let elem = map.m_tile * map.k_tile;
    if placed.len() != map.num_tiles() * elem {
        return Err(Error::SizeMismatch { expected: map.num_tiles() * elem, actual: placed.len() });
    }
    let mut out = vec![0i32; map.m * map.k];
    for (pos, &t) in map.tile_order.iter().enumerate() {
        let (rb, cj) = (t as usize / map.k_tm, t as usize % map.k_tm);
        for e in 0..elem {
            let (r, c) = tile_element(map, order, e);
            let (row, col) = (rb * map.m_tile + r, cj * map.k_tile + c);
            if row < map.m && col < map.k {
                out[row * map.k + col] = placed[pos * elem + e];
            }
        }
    }
    Ok(out)
}

/// Byte image of every bank's weight rows, scale entries included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedImage {
    pub row_bytes: usize,
    pub rows: usize,
    /// Global bank → `rows * row_bytes` bytes.
    pub banks: Vec<Vec<u8>>,
}

impl PlacedImage {
    pub fn row(&self, g: usize, row: usize) -> &[u8] {
        &self.banks[g][row * self.row_bytes..(row + 1) * self.row_bytes]
    }
}

/// Writes weights (column-major inside tiles) and their scale entries into
/// per-bank DRAM rows as laid out by `map`.
pub fn pack_image(p: &GemvProblem, data: &GemvData, map: &PlacementMap) -> Result<PlacedImage> {
    data.check(p)?;
    if p.m != map.m || p.k != map.k {
        return Err(Error::Planner("placement was built for a different problem".into()));
    }
    let geo = &map.geometry;
    let elem = map.m_tile * map.k_tile;
    let row_bytes = map.row_buffer_bytes;
    let rows = map.weight_rows();
    let blocks = p.num_scale_blocks();
    let mut banks = Vec::with_capacity(map.tot_bank);
    let mut tile = vec![0i32; elem];
    for g in 0..map.tot_bank {
        let layout = map.layout_of(g);
        let rbs = &map.bank_rbs[g];
        let mut img = vec![0u8; rows * row_bytes];
        for (slot, lt) in layout.tiles.iter().enumerate() {
            let rb = rbs[lt.lrb as usize] as usize;
            for (e, v) in tile.iter_mut().enumerate() {
                let (r, c) = (rb * map.m_tile + e % map.m_tile, lt.cj as usize * map.k_tile + e / map.m_tile);
                *v = if r < p.m && c < p.k { data.weights[r * p.k + c] } else { 0 };
            }
            let row = map.slot_row[slot] as usize;
            let col = (slot - map.rows[row].first_slot) * geo.gran_bytes;
            let at = row * row_bytes + col;
            codec::encode_into(&tile, p.in_fmt.bits, &mut img[at..at + geo.gran_bytes])?;
        }
        for ev in &layout.events {
            let rb = rbs[ev.lrb as usize] as usize;
            let mut entries = Vec::with_capacity(ev.entries(geo));
            for b in ev.blk_first as usize..(ev.blk_first + ev.nblk) as usize {
                for i in 0..geo.unit_rows() {
                    let r = rb * map.m_tile + ev.unit as usize * geo.lanes + i;
                    let ok = r < p.m && b < blocks;
                    entries.push(if ok { data.weight_scales[r * blocks + b] } else { 0 });
                }
            }
            let at = ev.row as usize * row_bytes + ev.byte_offset as usize;
            let len = geo.sf_bytes(entries.len());
            codec::encode_into(&entries, p.in_fmt.sf_bits, &mut img[at..at + len])?;
        }
        banks.push(img);
    }
    Ok(PlacedImage { row_bytes, rows, banks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Knobs, MemoryConfig, PimConfig};
    use crate::planner::{build_placement_map, plan_tiles};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn map_for(p: &GemvProblem, channels: usize, banks: usize, knobs: &Knobs) -> PlacementMap {
        let mem = MemoryConfig { num_channels: channels, banks_per_channel: banks, ..MemoryConfig::default() };
        let pim = PimConfig::default();
        let plan = plan_tiles(p, &mem, &pim, knobs, 1).unwrap();
        build_placement_map(p, &plan, &mem, &pim, 0).unwrap()
    }

    #[test]
    fn tile_sequence_follows_order() {
        let p = GemvProblem::int8(192, 16);
        let map = map_for(&p, 1, 2, &Knobs { cr_degree: Some(1), ..Knobs::default() });
        let w: Vec<i32> = (0..192 * 16).map(|i| (i % 97) - 48).collect();
        let placed = rearrange_matrix(&w, &map, IntraTileOrder::ColumnMajor).unwrap();
        // Second tile placed is T10: rows 32.., columns 0..8, column-major.
        assert_eq!(placed[256], w[32 * 16]);
        assert_eq!(placed[257], w[33 * 16]);
        assert_eq!(placed[256 + 32], w[32 * 16 + 1]);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let p = GemvProblem::int8(64, 64);
        let map = map_for(&p, 1, 1, &Knobs::default());
        assert!(rearrange_matrix(&[0; 5], &map, IntraTileOrder::ColumnMajor).is_err());
    }

    #[test]
    fn image_holds_tile_bytes() {
        let p = GemvProblem::int8(64, 64);
        let map = map_for(&p, 1, 2, &Knobs::default());
        let data = GemvData::random(&p, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let img = pack_image(&p, &data, &map).unwrap();
        for (t, c) in map.tile_coords.iter().enumerate().take(8) {
            let (rb, cj) = (t / map.k_tm, t % map.k_tm);
            let at = c.row as usize * img.row_bytes + c.col as usize;
            let first = img.banks[c.bank as usize][at] as i8 as i32;
            assert_eq!(first, data.weights[rb * map.m_tile * 64 + cj * map.k_tile]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn rearrange_round_trips(m in 1usize..80, kq in 1usize..40, banks in 1usize..5, row_major in any::<bool>(), seed in any::<u64>()) {
            let p = GemvProblem::int8(m, kq * 4);
            let order = if row_major { IntraTileOrder::RowMajor } else { IntraTileOrder::ColumnMajor };
            let map = map_for(&p, 1, banks, &Knobs::default());
            let data = GemvData::random(&p, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let placed = rearrange_matrix(&data.weights, &map, order).unwrap();
            prop_assert_eq!(restore_matrix(&placed, &map, order).unwrap(), data.weights);
        }
    }
}
