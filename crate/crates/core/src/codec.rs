//! Little-endian packing of signed elements.
//!
//! 4-bit elements pack two per byte, low nibble first. 8- and 16-bit
//! elements are plain two's complement.

use crate::config::signed_range;
use crate::error::{Error, Result};

pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

/// Packs `values` at `bits` per element. Values must fit the width.
pub fn encode(values: &[i32], bits: u32) -> Result<Vec<u8>> {
    let mut out = vec![0u8; packed_len(values.len(), bits)];
    encode_into(values, bits, &mut out)?;
    Ok(out)
}

pub fn encode_into(values: &[i32], bits: u32, out: &mut [u8]) -> Result<()> {
    check_bits(bits)?;
    if out.len() < packed_len(values.len(), bits) {
        return Err(Error::SizeMismatch { expected: packed_len(values.len(), bits), actual: out.len() });
    }
    let (lo, hi) = signed_range(bits);
    for (i, &v) in values.iter().enumerate() {
        if v < lo || v > hi {
            return Err(Error::Decode(format!("value {v} does not fit {bits} bits")));
        }
        match bits {
            4 => {
                let nib = (v as u8) & 0x0f;
                let b = &mut out[i / 2];
                if i % 2 == 0 {
                    *b = (*b & 0xf0) | nib;
                } else {
                    *b = (*b & 0x0f) | (nib << 4);
                }
            }
            8 => out[i] = v as i8 as u8,
            _ => out[2 * i..2 * i + 2].copy_from_slice(&(v as i16).to_le_bytes()),
        }
    }
    Ok(())
}

/// Decodes `count` elements; fails if `bytes` is too short.
pub fn decode(bytes: &[u8], bits: u32, count: usize) -> Result<Vec<i32>> {
    check_bits(bits)?;
    let need = packed_len(count, bits);
    if bytes.len() < need {
        return Err(Error::SizeMismatch { expected: need, actual: bytes.len() });
    }
    Ok((0..count).map(|i| element(bytes, bits, i)).collect())
}

/// Decodes a whole buffer; the length must be an exact multiple of the width.
pub fn decode_all(bytes: &[u8], bits: u32) -> Result<Vec<i32>> {
    check_bits(bits)?;
    if bits == 16 && !bytes.len().is_multiple_of(2) {
        return Err(Error::Decode(format!("{} bytes is not a whole number of 16-bit elements", bytes.len())));
    }
    let count = bytes.len() * 8 / bits as usize;
    decode(bytes, bits, count)
}

/// Reads element `i` without bounds beyond the slice itself.
#[inline]
pub fn element(bytes: &[u8], bits: u32, i: usize) -> i32 {
    match bits {
        4 => {
            let b = bytes[i / 2];
            let nib = if i.is_multiple_of(2) { b & 0x0f } else { b >> 4 };
            ((nib << 4) as i8 >> 4) as i32
        }
        8 => bytes[i] as i8 as i32,
        _ => i16::from_le_bytes([bytes[2 * i], bytes[2 * i + 1]]) as i32,
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if matches!(bits, 4 | 8 | 16) {
        Ok(())
    } else {
        Err(Error::Decode(format!("unsupported element width {bits}")))
    }
}

/// Output vectors are exchanged as little-endian i64.
pub fn encode_i64(values: &[i64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_i64(bytes: &[u8]) -> Result<Vec<i64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Decode(format!("{} bytes is not a whole number of i64", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nibble_order() {
        assert_eq!(encode(&[1, -1], 4).unwrap(), vec![0xf1]);
        assert_eq!(encode(&[-8, 7, 3], 4).unwrap(), vec![0x78, 0x03]);
        assert_eq!(decode(&[0xf1], 4, 2).unwrap(), vec![1, -1]);
        assert_eq!(encode(&[-2], 16).unwrap(), vec![0xfe, 0xff]);
    }

    #[test]
    fn rejects_out_of_range_and_short_input() {
        assert!(encode(&[8], 4).is_err());
        assert!(encode(&[128], 8).is_err());
        assert!(decode(&[0u8; 3], 16, 2).is_err());
        assert!(decode(&[0u8; 3], 5, 1).is_err());
        assert!(decode_i64(&[0u8; 7]).is_err());
        assert!(decode_all(&[0u8; 3], 16).is_err());
        assert_eq!(decode_all(&[0x21], 4).unwrap(), vec![1, 2]);
    }

    proptest! {
        #[test]
        fn round_trip(bits in prop::sample::select(vec![4u32, 8, 16]), seed in prop::collection::vec(any::<i32>(), 0..64)) {
            let (lo, hi) = signed_range(bits);
            let span = (hi - lo + 1) as i64;
            let vals: Vec<i32> = seed.iter().map(|&s| (lo as i64 + (s as i64).rem_euclid(span)) as i32).collect();
            let bytes = encode(&vals, bits).unwrap();
            prop_assert_eq!(decode(&bytes, bits, vals.len()).unwrap(), vals);
        }
    }
}
