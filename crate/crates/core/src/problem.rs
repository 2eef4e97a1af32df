use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{signed_range, DataFormat};
use crate::error::{Error, Result};

/// An M×K GEMV: `out = W · iv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemvProblem {
    pub m: usize,
    pub k: usize,
    pub in_fmt: DataFormat,
    pub out_fmt: DataFormat,
}

impl GemvProblem {
    pub fn new(m: usize, k: usize, in_fmt: DataFormat, out_fmt: DataFormat) -> Result<Self> {
        let p = Self { m, k, in_fmt, out_fmt };
        p.validate()?;
        Ok(p)
    }

    /// 8-bit weights with 16-bit outputs, no scale factors.
    pub fn int8(m: usize, k: usize) -> Self {
        Self { m, k, in_fmt: DataFormat::int(8), out_fmt: DataFormat::int(16) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::Problem(format!("empty matrix {}x{}", self.m, self.k)));
        }
        self.in_fmt.validate()?;
        self.out_fmt.validate()?;
        if !(self.k * self.in_fmt.bits as usize).is_multiple_of(8) {
            return Err(Error::Problem(format!(
                "rows of {} {}-bit elements are not byte aligned",
                self.k, self.in_fmt.bits
            )));
        }
        if self.out_fmt.bits < self.in_fmt.bits {
            return Err(Error::Problem(format!(
                "output width {} narrower than input width {}",
                self.out_fmt.bits, self.in_fmt.bits
            )));
        }
        Ok(())
    }

    pub fn sf_block(&self) -> Option<usize> {
        self.in_fmt.sf_block.map(|b| b as usize)
    }

    /// Scale blocks along K (per row for weights, once for the vector).
    pub fn num_scale_blocks(&self) -> usize {
        self.sf_block().map_or(0, |b| self.k.div_ceil(b))
    }

    /// Bytes of the weight matrix including weight scale factors.
    pub fn matrix_bytes(&self) -> f64 {
        let weights = (self.m * self.k) as f64 * self.in_fmt.bits as f64 / 8.0;
        let scales = (self.m * self.num_scale_blocks()) as f64 * self.in_fmt.sf_bits as f64 / 8.0;
        weights + scales
    }
}

/// Operand values for one GEMV; weights row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemvData {
    pub weights: Vec<i32>,
    pub iv: Vec<i32>,
    /// `m × num_scale_blocks` weight scales, row-major. Empty without scales.
    pub weight_scales: Vec<i32>,
    /// One scale per block of the input vector.
    pub iv_scales: Vec<i32>,
}

impl GemvData {
    pub fn check(&self, p: &GemvProblem) -> Result<()> {
        expect_len(self.weights.len(), p.m * p.k)?;
        expect_len(self.iv.len(), p.k)?;
        let blocks = p.num_scale_blocks();
        expect_len(self.weight_scales.len(), p.m * blocks)?;
        expect_len(self.iv_scales.len(), blocks)?;
        Ok(())
    }

    /// Uniform random operands spanning each format's full signed range.
    pub fn random<R: Rng>(p: &GemvProblem, rng: &mut R) -> Self {
        let (lo, hi) = p.in_fmt.range();
        let (slo, shi) = signed_range(p.in_fmt.sf_bits);
        let blocks = p.num_scale_blocks();
        Self {
            weights: (0..p.m * p.k).map(|_| rng.gen_range(lo..=hi)).collect(),
            iv: (0..p.k).map(|_| rng.gen_range(lo..=hi)).collect(),
            weight_scales: (0..p.m * blocks).map(|_| rng.gen_range(slo..=shi)).collect(),
            iv_scales: (0..blocks).map(|_| rng.gen_range(slo..=shi)).collect(),
        }
    }
}

fn expect_len(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::SizeMismatch { expected, actual });
    }
    Ok(())
}

/// Exact row-major GEMV in 64-bit integers, applying block scales when present.
pub fn reference_gemv(p: &GemvProblem, data: &GemvData) -> Result<Vec<i64>> {
    data.check(p)?;
    let blocks = p.num_scale_blocks();
    let mut out = vec![0i64; p.m];
    for (r, o) in out.iter_mut().enumerate() {
        let row = &data.weights[r * p.k..(r + 1) * p.k];
        match p.sf_block() {
            None => {
                *o = row.iter().zip(&data.iv).map(|(&w, &x)| w as i64 * x as i64).sum();
            }
            Some(bs) => {
                for b in 0..blocks {
                    let cols = b * bs..((b + 1) * bs).min(p.k);
                    let partial: i64 =
                        cols.map(|c| row[c] as i64 * data.iv[c] as i64).sum();
                    *o += partial
                        * data.weight_scales[r * blocks + b] as i64
                        * data.iv_scales[b] as i64;
                }
            }
        }
    }
    Ok(out)
}

/// Whether every output fits the signed output format.
pub fn fits_format(out: &[i64], fmt: &DataFormat) -> bool {
    let (lo, hi) = signed_range(fmt.bits);
    out.iter().all(|&v| v >= lo as i64 && v <= hi as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(weights: Vec<i32>, iv: Vec<i32>) -> GemvData {
        GemvData { weights, iv, weight_scales: vec![], iv_scales: vec![] }
    }

    #[test]
    fn small_reference_cases() {
        let p = GemvProblem::int8(2, 2);
        assert_eq!(reference_gemv(&p, &data(vec![1, 2, 3, 4], vec![1, 1])).unwrap(), vec![3, 7]);
        let p = GemvProblem::int8(3, 3);
        let eye = vec![1, 0, 0, 0, 1, 0, 0, 0, 1];
        assert_eq!(reference_gemv(&p, &data(eye, vec![5, -6, 7])).unwrap(), vec![5, -6, 7]);
        assert!(matches!(
            reference_gemv(&p, &data(vec![0; 8], vec![0; 3])),
            Err(Error::SizeMismatch { expected: 9, actual: 8 })
        ));
    }

    #[test]
    fn random_reference_matches_column_loop() {
        // Accumulate column by column, a different loop nest than the reference.
        let p = GemvProblem::int8(64, 64);
        let d = GemvData::random(&p, &mut ChaCha8Rng::seed_from_u64(7));
        let mut expect = vec![0i64; 64];
        for c in 0..64 {
            for r in 0..64 {
                expect[r] += d.weights[r * 64 + c] as i64 * d.iv[c] as i64;
            }
        }
        assert_eq!(reference_gemv(&p, &d).unwrap(), expect);
    }

    #[test]
    fn scaled_reference_applies_block_scales() {
        let p = GemvProblem {
            m: 1,
            k: 4,
            in_fmt: DataFormat::with_scales(8, 2),
            out_fmt: DataFormat::int(16),
        };
        let d = GemvData {
            weights: vec![1, 2, 3, 4],
            iv: vec![1, 1, 1, 1],
            weight_scales: vec![2, 3],
            iv_scales: vec![5, 7],
        };
        // (1+2)*2*5 + (3+4)*3*7
        assert_eq!(reference_gemv(&p, &d).unwrap(), vec![30 + 147]);
    }

    #[test]
    fn problem_validation() {
        assert!(GemvProblem::new(0, 4, DataFormat::int(8), DataFormat::int(16)).is_err());
        assert!(GemvProblem::new(4, 3, DataFormat::int(4), DataFormat::int(16)).is_err());
        assert!(GemvProblem::new(4, 4, DataFormat::int(16), DataFormat::int(8)).is_err());
        assert!(GemvProblem::new(4, 4, DataFormat::int(4), DataFormat::int(16)).is_ok());
        assert!(fits_format(&[32767, -32768], &DataFormat::int(16)));
        assert!(!fits_format(&[32768], &DataFormat::int(16)));
    }
}
