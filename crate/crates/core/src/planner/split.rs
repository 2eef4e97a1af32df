use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::config::MemoryConfig;
use crate::error::{Error, Result};
use crate::problem::GemvProblem;

/// One vertical slice of a split-K decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubProblem {
    pub index: usize,
    pub problem: GemvProblem,
    /// First column of the parent matrix covered by this slice.
    pub k_offset: usize,
    pub channels: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitK {
    pub degree: usize,
    pub parts: Vec<SubProblem>,
    /// The host must add `degree` partial output vectors.
    pub needs_soc_reduction: bool,
}

/// Splits `p` into `degree` M×(K/degree) slices on disjoint channel subsets.
pub fn apply_split_k(p: &GemvProblem, mem: &MemoryConfig, degree: usize) -> Result<SplitK> {
    if degree == 0 || !degree.is_power_of_two() {
        return Err(Error::Planner(format!("split-K degree {degree} is not a power of two")));
    }
    if !mem.num_channels.is_multiple_of(degree) {
        return Err(Error::Planner(format!(
            "split-K degree {degree} does not divide {} channels",
            mem.num_channels
        )));
    }
    if !p.k.is_multiple_of(degree) {
        return Err(Error::Planner(format!("K={} not divisible by split-K degree {degree}", p.k)));
    }
    let k = p.k / degree;
    if let Some(b) = p.sf_block() {
        if degree > 1 && !k.is_multiple_of(b) {
            return Err(Error::Planner(format!(
                "split-K slice width {k} cuts scale blocks of {b}"
            )));
        }
    }
    let sub = GemvProblem { k, ..*p };
    sub.validate()?;
    let per = mem.num_channels / degree;
    let parts = (0..degree)
        .map(|i| SubProblem { index: i, problem: sub, k_offset: i * k, channels: i * per..(i + 1) * per })
        .collect();
    Ok(SplitK { degree, parts, needs_soc_reduction: degree > 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_way_split() {
        let s = apply_split_k(&GemvProblem::int8(768, 768), &MemoryConfig::default(), 2).unwrap();
        assert!(s.needs_soc_reduction);
        assert_eq!(s.parts.len(), 2);
        assert_eq!((s.parts[0].problem.m, s.parts[0].problem.k), (768, 384));
        assert_eq!(s.parts[0].channels, 0..4);
        assert_eq!(s.parts[1].channels, 4..8);
        assert_eq!(s.parts[1].k_offset, 384);
    }

    #[test]
    fn degree_one_is_identity() {
        let p = GemvProblem::int8(768, 768);
        let s = apply_split_k(&p, &MemoryConfig::default(), 1).unwrap();
        assert!(!s.needs_soc_reduction);
        assert_eq!(s.parts[0].problem, p);
        assert_eq!(s.parts[0].channels, 0..8);
    }

    #[test]
    fn eight_way_one_channel_each() {
        let s = apply_split_k(&GemvProblem::int8(768, 768), &MemoryConfig::default(), 8).unwrap();
        assert!(s.parts.iter().all(|p| p.problem.k == 96 && p.channels.len() == 1));
    }

    #[test]
    fn indivisible_inputs_fail() {
        let mem = MemoryConfig::default();
        assert!(apply_split_k(&GemvProblem::int8(8, 100), &mem, 8).is_err());
        assert!(apply_split_k(&GemvProblem::int8(8, 96), &mem, 3).is_err());
        assert!(apply_split_k(&GemvProblem::int8(8, 96), &mem, 16).is_err());
        let mut p = GemvProblem::int8(8, 96);
        p.in_fmt.sf_block = Some(64);
        assert!(apply_split_k(&p, &mem, 2).is_err());
    }
}
