//! Multi-level Gray-coded quantization of subband power vectors.
//!
//! Each frame is quantized against its own range: the K power values (in
//! linear or decibel domain) are binned into Q evenly spaced cells between
//! the frame's min and max, and each level index is emitted as a
//! `log2(Q)`-bit binary-reflected Gray codeword, MSB first. Per-frame range
//! normalization makes the output invariant to overall scale, so no transmit
//! power information survives into the bits.

use crate::error::{Error, Result};
use crate::filterbank::PowerVector;
use crate::scalar::Real;
use crate::Node;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantDomain {
    Linear,
    Decibel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    /// Number of levels Q, a power of two >= 2.
    pub levels: u32,
    pub domain: QuantDomain,
}

impl QuantConfig {
    pub fn new(levels: u32, domain: QuantDomain) -> Result<Self> {
        let cfg = Self { levels, domain };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 || !self.levels.is_power_of_two() {
            return Err(Error::Config(format!(
                "levels must be a power of two >= 2, got {}",
                self.levels
            )));
        }
        Ok(())
    }

    /// Bits per power measurement, `log2(Q)`.
    pub fn bits_per_measurement(&self) -> usize {
        self.levels.trailing_zeros() as usize
    }
}

/// Fixed-length binary sequence (quantizer output or reconciled block).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitBlock {
    pub node: Node,
    pub frame_index: u64,
    /// One bit per entry, values 0/1.
    pub bits: Vec<u8>,
}

impl BitBlock {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn hamming_distance(&self, other: &BitBlock) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::Input(format!(
                "block length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count())
    }

    /// Pack MSB-first into bytes, zero-padded at the tail.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        pack_bits_msb_first(&self.bits)
    }
}

/// MSB-first bit packing with zero padding to a byte boundary.
pub fn pack_bits_msb_first(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b != 0 {
            out[i / 8] |= 1 << (7 - (i % 8));
        }
    }
    out
}

/// Inverse of [`pack_bits_msb_first`] for a known bit count.
pub fn unpack_bits_msb_first(bytes: &[u8], bit_len: usize) -> Result<Vec<u8>> {
    if bytes.len() < bit_len.div_ceil(8) {
        return Err(Error::Truncated {
            needed: bit_len.div_ceil(8) as u64,
            got: bytes.len() as u64,
        });
    }
    Ok((0..bit_len)
        .map(|i| (bytes[i / 8] >> (7 - (i % 8))) & 1)
        .collect())
}

/// Binary-reflected Gray code of a level index.
pub fn gray_code(level: u32) -> u32 {
    level ^ (level >> 1)
}

/// Quantize one frame's power vector into a Gray-coded bit block.
///
/// Levels are evenly spaced over the frame's own [min, max]; the top edge
/// maps to level Q-1, interior cells are half-open. A degenerate range (all
/// powers equal) maps every measurement to level 0.
pub fn quantize_frame<R: Real>(p: &PowerVector<R>, cfg: &QuantConfig) -> Result<BitBlock> {
    cfg.validate()?;
    if p.powers.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 subband powers per frame, got {}",
            p.powers.len()
        )));
    }
    let mut values = Vec::with_capacity(p.powers.len());
    for &raw in &p.powers {
        let v = raw.to_f64_lossy();
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Input(format!("power value {v} is not finite and nonnegative")));
        }
        values.push(v);
    }
    if let QuantDomain::Decibel = cfg.domain {
        let peak = values.iter().cloned().fold(0.0f64, f64::max);
        // Relative floor keeps log10 finite; an all-zero frame stays
        // degenerate and quantizes to level 0 everywhere.
        let floor = peak * 1e-30;
        for v in values.iter_mut() {
            *v = if *v <= floor { floor } else { *v };
            *v = if floor == 0.0 { 0.0 } else { 10.0 * v.log10() };
        }
    }

    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let q = cfg.levels;
    let bits_per = cfg.bits_per_measurement();

    let mut bits = Vec::with_capacity(values.len() * bits_per);
    for &v in &values {
        let level = if hi == lo {
            0
        } else if v >= hi {
            q - 1
        } else {
            let idx = ((v - lo) / (hi - lo) * q as f64).floor() as i64;
            idx.clamp(0, (q - 1) as i64) as u32
        };
        let code = gray_code(level);
        for b in (0..bits_per).rev() {
            bits.push(((code >> b) & 1) as u8);
        }
    }
    Ok(BitBlock {
        node: p.node,
        frame_index: p.frame_index,
        bits,
    })
}

/// Mean fraction of differing bits between two block sequences.
pub fn mismatch_probability(a: &[BitBlock], b: &[BitBlock]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "sequence length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Input("empty block sequences".into()));
    }
    let mut total_bits = 0usize;
    let mut errors = 0usize;
    for (x, y) in a.iter().zip(b) {
        errors += x.hamming_distance(y)?;
        total_bits += x.len();
    }
    Ok(errors as f64 / total_bits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn pv(powers: Vec<f64>) -> PowerVector<f64> {
        PowerVector {
            node: Node::Alice,
            frame_index: 0,
            powers,
        }
    }

    #[test]
    fn gray_code_q4_table() {
        assert_eq!(gray_code(0), 0b00);
        assert_eq!(gray_code(1), 0b01);
        assert_eq!(gray_code(2), 0b11);
        assert_eq!(gray_code(3), 0b10);
    }

    #[test]
    fn gray_adjacency_for_level_grid() {
        for q in [4u32, 8, 16, 32] {
            for l in 0..q - 1 {
                let d = (gray_code(l) ^ gray_code(l + 1)).count_ones();
                assert_eq!(d, 1, "levels {l},{} differ in {d} bits at Q={q}", l + 1);
            }
        }
    }

    #[test]
    fn block_length_is_k_log2q() {
        let cfg = QuantConfig::new(16, QuantDomain::Decibel).unwrap();
        let powers: Vec<f64> = (1..=16).map(|i| i as f64).collect();
        let block = quantize_frame(&pv(powers), &cfg).unwrap();
        assert_eq!(block.len(), 64);
    }

    #[test]
    fn equal_powers_give_all_zero_block() {
        let cfg = QuantConfig::new(4, QuantDomain::Linear).unwrap();
        let block = quantize_frame(&pv(vec![2.5; 8]), &cfg).unwrap();
        assert!(block.bits.iter().all(|&b| b == 0));
        let zero = quantize_frame(&pv(vec![0.0; 8]), &cfg).unwrap();
        assert!(zero.bits.iter().all(|&b| b == 0));
    }

    #[test]
    fn extremes_map_to_bottom_and_top_levels() {
        let cfg = QuantConfig::new(4, QuantDomain::Linear).unwrap();
        let block = quantize_frame(&pv(vec![0.0, 1.0, 2.0, 4.0]), &cfg).unwrap();
        // min -> level 0 -> 00, max -> level 3 -> 10 (Gray).
        assert_eq!(&block.bits[0..2], &[0, 0]);
        assert_eq!(&block.bits[6..8], &[1, 0]);
    }

    #[test]
    fn nonfinite_power_is_rejected() {
        let cfg = QuantConfig::new(4, QuantDomain::Linear).unwrap();
        assert!(quantize_frame(&pv(vec![1.0, f64::NAN, 2.0]), &cfg).is_err());
        assert!(quantize_frame(&pv(vec![1.0, f64::INFINITY]), &cfg).is_err());
    }

    #[test]
    fn rejects_non_power_of_two_levels() {
        assert!(QuantConfig::new(6, QuantDomain::Linear).is_err());
        assert!(QuantConfig::new(1, QuantDomain::Linear).is_err());
    }

    #[test]
    fn mismatch_probability_identical_and_complementary() {
        let a = BitBlock {
            node: Node::Alice,
            frame_index: 0,
            bits: vec![0, 1, 1, 0],
        };
        let b = BitBlock {
            node: Node::Bob,
            frame_index: 0,
            bits: vec![1, 0, 0, 1],
        };
        assert_eq!(mismatch_probability(&[a.clone()], &[a.clone()]).unwrap(), 0.0);
        assert_eq!(mismatch_probability(&[a.clone()], &[b]).unwrap(), 1.0);
        let short = BitBlock {
            node: Node::Bob,
            frame_index: 0,
            bits: vec![1, 0],
        };
        assert!(mismatch_probability(&[a], &[short]).is_err());
    }

    #[test]
    fn random_blocks_mismatch_near_half() {
        let mut rng = derive_rng(42, Stream::EstimatorSplit, 0);
        let make = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<BitBlock> {
            (0..10_000u64)
                .map(|i| BitBlock {
                    node: Node::Alice,
                    frame_index: i,
                    bits: (0..16).map(|_| rng.gen_range(0..=1u8)).collect(),
                })
                .collect()
        };
        let a = make(&mut rng);
        let b = make(&mut rng);
        let m = mismatch_probability(&a, &b).unwrap();
        assert!((m - 0.5).abs() < 0.01, "mismatch {m}");
    }

    #[test]
    fn decibel_scale_invariance_fixed_vector() {
        let cfg = QuantConfig::new(16, QuantDomain::Decibel).unwrap();
        let base: Vec<f64> = vec![1e-6, 3e-5, 2e-4, 9e-4, 5e-6, 7e-5, 4e-4, 1e-3];
        let b1 = quantize_frame(&pv(base.clone()), &cfg).unwrap();
        let b2 = quantize_frame(&pv(base.iter().map(|p| p * 4.0).collect()), &cfg).unwrap();
        assert_eq!(b1.bits, b2.bits);
    }

    proptest! {
        #[test]
        fn linear_scale_invariance_power_of_two(
            powers in proptest::collection::vec(0.01f64..100.0, 4..24),
            exp in -8i32..8,
        ) {
            let cfg = QuantConfig::new(8, QuantDomain::Linear).unwrap();
            let alpha = (2.0f64).powi(exp);
            let b1 = quantize_frame(&pv(powers.clone()), &cfg).unwrap();
            let b2 = quantize_frame(
                &pv(powers.iter().map(|p| p * alpha).collect()),
                &cfg,
            ).unwrap();
            prop_assert_eq!(b1.bits, b2.bits);
        }

        #[test]
        fn binning_is_monotone(powers in proptest::collection::vec(0.0f64..1000.0, 4..24)) {
            let cfg = QuantConfig::new(16, QuantDomain::Linear).unwrap();
            let block = quantize_frame(&pv(powers.clone()), &cfg).unwrap();
            let bits_per = cfg.bits_per_measurement();
            // Recover level indices from Gray codes and check order agreement.
            let inv_gray = |g: u32| {
                let mut l = g;
                let mut shift = 1;
                while (g >> shift) > 0 { l ^= g >> shift; shift += 1; }
                l
            };
            let levels: Vec<u32> = (0..powers.len())
                .map(|k| {
                    let mut code = 0u32;
                    for b in 0..bits_per {
                        code = (code << 1) | block.bits[k * bits_per + b] as u32;
                    }
                    inv_gray(code)
                })
                .collect();
            for i in 0..powers.len() {
                for j in 0..powers.len() {
                    if powers[i] > powers[j] {
                        prop_assert!(levels[i] >= levels[j]);
                    }
                }
            }
        }

        #[test]
        fn pack_unpack_roundtrip(bits in proptest::collection::vec(0u8..=1, 0..130)) {
            let packed = pack_bits_msb_first(&bits);
            let back = unpack_bits_msb_first(&packed, bits.len()).unwrap();
            prop_assert_eq!(back, bits);
        }
    }
}
