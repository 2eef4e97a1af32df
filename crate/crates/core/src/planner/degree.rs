/// Largest number of row-blocks per bank whose partial outputs fit in
/// registers next to the input-vector registers. Never below 1.
pub fn get_cro_max_degree(
    m: usize,
    m_tile: usize,
    tot_bank: usize,
    in_reg: usize,
    out_reg: usize,
    tot_reg: usize,
) -> usize {
    let rowblk_per_bank = m / (m_tile * tot_bank);
    let mut max_deg = 1;
    let mut cur_deg = 1;
    while cur_deg <= rowblk_per_bank {
        if cur_deg * out_reg + in_reg <= tot_reg {
            max_deg = cur_deg;
        }
        cur_deg += 1;
    }
    max_deg
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scans every degree independently of the loop above.
    fn brute(m: usize, m_tile: usize, banks: usize, i: usize, o: usize, regs: usize) -> usize {
        (1..=m / (m_tile * banks)).filter(|d| d * o + i <= regs).max().unwrap_or(1)
    }

    #[test]
    fn hand_traces() {
        assert_eq!(get_cro_max_degree(8192, 32, 128, 8, 2, 16), 2);
        assert_eq!(get_cro_max_degree(4096, 32, 128, 8, 2, 16), 1);
        assert_eq!(get_cro_max_degree(8192, 32, 128, 8, 2, 1024), 2);
        assert_eq!(get_cro_max_degree(768, 2, 128, 8, 2, 16), 3);
    }

    #[test]
    fn agrees_with_brute_force() {
        for m in [128usize, 256, 768, 1024, 4096, 8192, 12288] {
            for m_tile in [1, 2, 8, 32] {
                for banks in [8, 64, 128] {
                    for (i, o) in [(1, 1), (8, 2), (8, 4), (14, 2), (4, 1)] {
                        for regs in [8, 16, 32] {
                            assert_eq!(
                                get_cro_max_degree(m, m_tile, banks, i, o, regs),
                                brute(m, m_tile, banks, i, o, regs)
                            );
                        }
                    }
                }
            }
        }
    }
}
