//! Tile orders. Tiles are named by their row-order index `ri * k_tm + cj`;
//! an order is the sequence of those indices as laid into linear memory.

use crate::error::{Error, Result};

/// Column-row order: within each spread of `tot_bank * p` row-blocks, walk
/// tile columns outermost so consecutive tiles land in consecutive banks.
///
/// A trailing partial spread is allowed when its row-block count is still a
/// multiple of `tot_bank`; it is laid out with the smaller degree that fits.
pub fn get_tile_cr_order(m_tm: usize, k_tm: usize, tot_bank: usize, p: usize) -> Result<Vec<u32>> {
    if tot_bank == 0 || p == 0 {
        return Err(Error::Planner("tot_bank and CR degree must be positive".into()));
    }
    if !m_tm.is_multiple_of(tot_bank) {
        return Err(Error::Planner(format!(
            "{m_tm} row-blocks do not fill whole spreads over {tot_bank} banks"
        )));
    }
    let tiled_matrix: Vec<u32> = (0..(m_tm * k_tm) as u32).collect();
    let mut tiled_cro_matrix = vec![0u32; m_tm * k_tm];

    let num_abs = m_tm / (tot_bank * p);
    let tile_per_abs = tot_bank * p * k_tm;
    for q in 0..num_abs {
        for cj in 0..k_tm {
            for ri in 0..tot_bank * p {
                tiled_cro_matrix[q * tile_per_abs + cj * tot_bank * p + ri] =
                    tiled_matrix[q * tile_per_abs + ri * k_tm + cj];
            }
        }
    }

    let done = num_abs * tot_bank * p;
    if done < m_tm {
        let tail_p = (m_tm - done) / tot_bank;
        let base = num_abs * tile_per_abs;
        for cj in 0..k_tm {
            for ri in 0..tot_bank * tail_p {
                tiled_cro_matrix[base + cj * tot_bank * tail_p + ri] = tiled_matrix[base + ri * k_tm + cj];
            }
        }
    }
    Ok(tiled_cro_matrix)
}

/// Column order over the whole tile grid.
pub fn column_order(m_tm: usize, k_tm: usize) -> Vec<u32> {
    (0..k_tm).flat_map(|cj| (0..m_tm).map(move |ri| (ri * k_tm + cj) as u32)).collect()
}

/// Row order: the identity.
pub fn row_order(m_tm: usize, k_tm: usize) -> Vec<u32> {
    (0..(m_tm * k_tm) as u32).collect()
}

/// Spread index (group of row-blocks that share input-vector reuse) of a
/// row-block under CR order with degree `p`.
pub fn cr_spread_of(rb: usize, tot_bank: usize, p: usize) -> usize {
    rb / (tot_bank * p)
}

pub fn is_permutation(order: &[u32]) -> bool {
    let mut seen = vec![false; order.len()];
    for &t in order {
        match seen.get_mut(t as usize) {
            Some(s) if !*s => *s = true,
            _ => return false,
        }
    }
    true
}

pub fn inverse(order: &[u32]) -> Vec<u32> {
    let mut inv = vec![0u32; order.len()];
    for (pos, &t) in order.iter().enumerate() {
        inv[t as usize] = pos as u32;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(m_tm: usize, k_tm: usize, order: &[u32]) -> Vec<String> {
        assert_eq!(order.len(), m_tm * k_tm);
        order.iter().map(|&t| format!("T{}{}", t as usize / k_tm, t as usize % k_tm)).collect()
    }

    #[test]
    fn four_by_two_over_two_banks() {
        let order = get_tile_cr_order(4, 2, 2, 1).unwrap();
        assert_eq!(
            names(4, 2, &order),
            ["T00", "T10", "T01", "T11", "T20", "T30", "T21", "T31"]
        );
    }

    #[test]
    fn single_tile_column_is_identity() {
        for m_tm in [1, 2, 8] {
            assert_eq!(get_tile_cr_order(m_tm, 1, 1, 1).unwrap(), row_order(m_tm, 1));
        }
        assert_eq!(get_tile_cr_order(8, 1, 4, 2).unwrap(), row_order(8, 1));
    }

    #[test]
    fn one_bank_degree_one_is_identity() {
        assert_eq!(get_tile_cr_order(2, 2, 1, 1).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn degree_two_interleaves_two_row_blocks_per_bank() {
        // 4 row-blocks, 2 banks, p=2: one spread; banks alternate, each bank
        // sees row-blocks {0,2} and {1,3} column by column.
        let order = get_tile_cr_order(4, 2, 2, 2).unwrap();
        assert_eq!(names(4, 2, &order), ["T00", "T10", "T20", "T30", "T01", "T11", "T21", "T31"]);
    }

    #[test]
    fn ragged_tail_uses_smaller_degree() {
        // 6 row-blocks over 2 banks at p=2: one full spread of 4, tail of 2 at p=1.
        let order = get_tile_cr_order(6, 2, 2, 2).unwrap();
        assert!(is_permutation(&order));
        assert_eq!(&names(6, 2, &order)[8..], ["T40", "T50", "T41", "T51"]);
        assert!(get_tile_cr_order(5, 2, 2, 1).is_err());
    }

    #[test]
    fn column_order_small() {
        assert_eq!(column_order(2, 3), vec![0, 3, 1, 4, 2, 5]);
    }

    proptest! {
        #[test]
        fn cr_order_is_permutation(banks in 1usize..6, mult in 1usize..5, k_tm in 1usize..7, p in 1usize..4) {
            let m_tm = banks * mult;
            let order = get_tile_cr_order(m_tm, k_tm, banks, p).unwrap();
            prop_assert!(is_permutation(&order));
            let inv = inverse(&order);
            for (pos, &t) in order.iter().enumerate() {
                prop_assert_eq!(inv[t as usize] as usize, pos);
            }
            // Round-robin keeps each row-block inside one bank.
            let mut bank_of = vec![usize::MAX; m_tm];
            for (pos, &t) in order.iter().enumerate() {
                let rb = t as usize / k_tm;
                let b = pos % banks;
                prop_assert!(bank_of[rb] == usize::MAX || bank_of[rb] == b);
                bank_of[rb] = b;
            }
        }
    }
}
