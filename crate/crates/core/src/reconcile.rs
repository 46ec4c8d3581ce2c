//! Syndrome-based Slepian-Wolf reconciliation with polar codes.
//!
//! Alice applies the polar transform `u = x·G_n` (`G_n = F^{⊗log2 n}`,
//! natural order, no bit reversal; the transform is its own inverse over
//! GF(2)) to her bit block and publishes `u` restricted to the `m` least
//! reliable synthetic-channel positions as the syndrome. Bob runs successive
//! cancellation over a virtual BSC between his observed block and Alice's,
//! with the syndrome positions pinned to the published values, and inverts
//! the transform to recover her block. Eve, holding the same public syndrome
//! and her own observation, runs the identical decoder.
//!
//! Reliabilities come from the Bhattacharyya-parameter recursion
//! `Z⁻ = 2Z − Z²`, `Z⁺ = Z²` seeded with `Z = 2√(ε(1−ε))` for a design
//! BSC(ε).

use crate::error::{Error, Result};
use crate::quantize::BitBlock;
use crate::scalar::Real;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Slepian-Wolf polar code: block length, rate, and frozen-position layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    /// Block length n, a power of two (equals K·log2(Q) in the SKG chain).
    pub block_length: usize,
    /// Code rate r in (0,1); the syndrome carries (1-r)·n bits.
    pub rate: f64,
    /// Syndrome length m = ceil((1-r)·n).
    pub syndrome_length: usize,
    /// The m least reliable synthetic-channel indices, sorted ascending.
    pub syndrome_positions: Vec<usize>,
    /// Crossover probability the construction was designed for.
    pub design_param: f64,
    /// frozen_mask[i] is true iff i is a syndrome position.
    frozen_mask: Vec<bool>,
}

/// Public reconciliation side information for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Syndrome {
    pub frame_index: u64,
    pub bits: Vec<u8>,
}

/// Per-frame decode outcome for CSV reports.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeRecord {
    pub frame_index: u64,
    pub success: bool,
    pub bit_errors: usize,
}

/// Bhattacharyya parameters of the n synthetic channels in natural (decoding)
/// order, for a BSC with the given crossover probability.
fn bhattacharyya_profile(block_length: usize, crossover: f64) -> Vec<f64> {
    let z0 = 2.0 * (crossover * (1.0 - crossover)).sqrt();
    let mut z = vec![z0];
    while z.len() < block_length {
        let mut next = Vec::with_capacity(z.len() * 2);
        for &zi in &z {
            next.push((2.0 * zi - zi * zi).min(1.0)); // minus (worse) channel
            next.push(zi * zi); // plus (better) channel
        }
        z = next;
    }
    z
}

/// Build a code: syndrome positions are the `ceil((1-r)·n)` least reliable
/// indices under the design channel.
pub fn construct_code(block_length: usize, rate: f64, design_param: f64) -> Result<PolarCode> {
    if !block_length.is_power_of_two() || block_length < 2 {
        return Err(Error::Config(format!(
            "block length must be a power of two >= 2, got {block_length}"
        )));
    }
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Config(format!("code rate must lie in (0,1), got {rate}")));
    }
    if !(design_param > 0.0 && design_param < 0.5) {
        return Err(Error::Config(format!(
            "design crossover must lie in (0, 0.5), got {design_param}"
        )));
    }
    // Small guard absorbs float fuzz in (1-r)*n without changing the exact
    // ceiling for true integers.
    let m = (((1.0 - rate) * block_length as f64) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    let m = m.min(block_length);

    let z = bhattacharyya_profile(block_length, design_param);
    let mut order: Vec<usize> = (0..block_length).collect();
    // Least reliable first: larger Z is worse; ties break on index.
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
    let mut syndrome_positions: Vec<usize> = order[..m].to_vec();
    syndrome_positions.sort_unstable();

    let mut frozen_mask = vec![false; block_length];
    for &p in &syndrome_positions {
        frozen_mask[p] = true;
    }
    Ok(PolarCode {
        block_length,
        rate,
        syndrome_length: m,
        syndrome_positions,
        design_param,
        frozen_mask,
    })
}

/// In-place polar transform `x -> x·G_n` (involutive over GF(2)).
pub fn polar_transform(bits: &mut [u8]) {
    let n = bits.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                bits[j] ^= bits[j + h];
            }
            i += 2 * h;
        }
        h *= 2;
    }
}

/// Alice's public side information: the transform of her block restricted to
/// the syndrome positions.
pub fn make_syndrome(block: &BitBlock, code: &PolarCode) -> Result<Syndrome> {
    if block.len() != code.block_length {
        return Err(Error::Input(format!(
            "block length {} does not match code ({})",
            block.len(),
            code.block_length
        )));
    }
    let mut u = block.bits.clone();
    polar_transform(&mut u);
    Ok(Syndrome {
        frame_index: block.frame_index,
        bits: code.syndrome_positions.iter().map(|&p| u[p]).collect(),
    })
}

fn llr_f<R: Real>(a: R, b: R) -> R {
    // Exact check-node combination 2·atanh(tanh(a/2)·tanh(b/2)).
    let two = R::from_f64_lossy(2.0);
    let t = (a / two).tanh() * (b / two).tanh();
    let cap = R::one() - R::from_f64_lossy(1e-12);
    two * t.max(-cap).min(cap).atanh()
}

fn llr_g<R: Real>(a: R, b: R, u_left: u8) -> R {
    if u_left == 0 {
        a + b
    } else {
        b - a
    }
}

fn sc_recurse<R: Real>(llr: &[R], u_offset: usize, known: &[Option<u8>], x_out: &mut [u8]) {
    let n = llr.len();
    if n == 1 {
        x_out[0] = match known[u_offset] {
            Some(bit) => bit,
            None => u8::from(llr[0] < R::zero()),
        };
        return;
    }
    let half = n / 2;
    let mut child = vec![R::zero(); half];
    let (x_left, x_right) = x_out.split_at_mut(half);

    for i in 0..half {
        child[i] = llr_f(llr[i], llr[i + half]);
    }
    sc_recurse(&child, u_offset, known, x_left);

    for i in 0..half {
        child[i] = llr_g(llr[i], llr[i + half], x_left[i]);
    }
    sc_recurse(&child, u_offset + half, known, x_right);

    for i in 0..half {
        x_left[i] ^= x_right[i];
    }
}

/// Successive-cancellation decode of the source block from an observed block
/// and Alice's syndrome, modelling the observation as the output of a
/// BSC(`crossover`) applied to the source.
///
/// Returns the decoded block and a consistency hint (true iff the decoded
/// block reproduces the input syndrome, which holds by construction).
pub fn sw_decode<R: Real>(
    observed: &BitBlock,
    synd: &Syndrome,
    code: &PolarCode,
    crossover: R,
) -> Result<(BitBlock, bool)> {
    let n = code.block_length;
    if observed.len() != n {
        return Err(Error::Input(format!(
            "observed block length {} does not match code ({n})",
            observed.len()
        )));
    }
    if synd.bits.len() != code.syndrome_length {
        return Err(Error::Input(format!(
            "syndrome length {} does not match code ({})",
            synd.bits.len(),
            code.syndrome_length
        )));
    }
    let eps = crossover.to_f64_lossy();
    if !(0.0..=0.5).contains(&eps) || eps == 0.0 {
        return Err(Error::Input(format!(
            "crossover must lie in (0, 0.5], got {eps}"
        )));
    }

    let magnitude = R::from_f64_lossy(((1.0 - eps) / eps).ln());
    let llr: Vec<R> = observed
        .bits
        .iter()
        .map(|&b| if b == 0 { magnitude } else { -magnitude })
        .collect();

    let mut known: Vec<Option<u8>> = vec![None; n];
    for (&pos, &bit) in code.syndrome_positions.iter().zip(&synd.bits) {
        known[pos] = Some(bit);
    }

    let mut decoded_bits = vec![0u8; n];
    sc_recurse(&llr, 0, &known, &mut decoded_bits);

    let decoded = BitBlock {
        node: observed.node,
        frame_index: observed.frame_index,
        bits: decoded_bits,
    };
    let check = make_syndrome(&decoded, code)?;
    let consistent = check.bits == synd.bits;
    debug_assert!(consistent, "decoded block violates its own syndrome");
    Ok((decoded, consistent))
}

/// Fraction of frames where the decoded block differs from the reference.
pub fn frame_error_rate(reference: &[BitBlock], decoded: &[BitBlock]) -> Result<f64> {
    if reference.len() != decoded.len() {
        return Err(Error::Input(format!(
            "sequence length mismatch: {} vs {}",
            reference.len(),
            decoded.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Input("empty block sequences".into()));
    }
    let errors = reference
        .iter()
        .zip(decoded)
        .filter(|(r, d)| r.bits != d.bits)
        .count();
    Ok(errors as f64 / reference.len() as f64)
}

/// Decode report CSV: frame_index, success, bit_errors.
pub fn write_decode_report_csv<P: AsRef<Path>>(path: P, records: &[DecodeRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "frame_index,success,bit_errors")?;
    for r in records {
        writeln!(w, "{},{},{}", r.frame_index, r.success as u8, r.bit_errors)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_decode_report_csv`].
pub fn read_decode_report_csv<P: AsRef<Path>>(path: P) -> Result<Vec<DecodeRecord>> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "line {}: expected 3 columns",
                lineno + 1
            )));
        }
        out.push(DecodeRecord {
            frame_index: fields[0]
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?,
            success: fields[1] == "1",
            bit_errors: fields[2]
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use crate::Node;
    use proptest::prelude::*;
    use rand::Rng;

    fn block(bits: Vec<u8>) -> BitBlock {
        BitBlock {
            node: Node::Alice,
            frame_index: 0,
            bits,
        }
    }

    #[test]
    fn syndrome_lengths_follow_ceiling_rule() {
        assert_eq!(construct_code(64, 0.3, 0.1).unwrap().syndrome_length, 45);
        assert_eq!(construct_code(64, 0.9, 0.1).unwrap().syndrome_length, 7);
        assert_eq!(construct_code(64, 0.5, 0.1).unwrap().syndrome_length, 32);
        assert_eq!(construct_code(16, 0.999, 0.1).unwrap().syndrome_length, 1);
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(construct_code(48, 0.3, 0.1).is_err());
        assert!(construct_code(64, 0.0, 0.1).is_err());
        assert!(construct_code(64, 1.0, 0.1).is_err());
        assert!(construct_code(64, 0.5, 0.6).is_err());
    }

    #[test]
    fn bhattacharyya_natural_order_n4() {
        // BEC-style hand values for z0 = 0.5: [0.9375, 0.5625, 0.4375, 0.0625].
        // A BSC(eps) with 2*sqrt(eps(1-eps)) = 0.5 gives the same recursion.
        let eps = 0.5 * (1.0 - (1.0f64 - 0.25).sqrt());
        let z = bhattacharyya_profile(4, eps);
        let expect = [0.9375, 0.5625, 0.4375, 0.0625];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "profile {z:?}");
        }
    }

    #[test]
    fn syndrome_positions_are_least_reliable() {
        let code = construct_code(8, 0.5, 0.1).unwrap();
        // Index 0 passes only minus transforms: always among the worst.
        assert!(code.syndrome_positions.contains(&0));
        // Index 7 passes only plus transforms: always among the best.
        assert!(!code.syndrome_positions.contains(&7));
        let sorted = {
            let mut s = code.syndrome_positions.clone();
            s.sort_unstable();
            s
        };
        assert_eq!(sorted, code.syndrome_positions);
    }

    #[test]
    fn transform_matches_hand_example_n2() {
        let mut bits = vec![1, 0];
        polar_transform(&mut bits);
        assert_eq!(bits, vec![1, 0]); // u0 = x0^x1 = 1, u1 = x1 = 0
        let mut bits = vec![1, 1];
        polar_transform(&mut bits);
        assert_eq!(bits, vec![0, 1]);
    }

    #[test]
    fn all_zero_block_gives_all_zero_syndrome() {
        let code = construct_code(16, 0.5, 0.1).unwrap();
        let s = make_syndrome(&block(vec![0; 16]), &code).unwrap();
        assert!(s.bits.iter().all(|&b| b == 0));
    }

    #[test]
    fn noiseless_observation_decodes_exactly() {
        let mut rng = derive_rng(3, Stream::EstimatorSplit, 0);
        for &n in &[16usize, 64] {
            for &r in &[0.1, 0.3, 0.5, 0.7, 0.9] {
                let code = construct_code(n, r, 0.1).unwrap();
                for _ in 0..20 {
                    let a = block((0..n).map(|_| rng.gen_range(0..=1u8)).collect());
                    let s = make_syndrome(&a, &code).unwrap();
                    let (decoded, ok) = sw_decode(&a, &s, &code, 0.05f64).unwrap();
                    assert!(ok);
                    assert_eq!(decoded.bits, a.bits, "n={n} r={r}");
                }
            }
        }
    }

    #[test]
    fn full_syndrome_determines_block_regardless_of_observation() {
        // r -> 0+ pins every transform coordinate.
        let code = construct_code(16, 1e-6, 0.1).unwrap();
        assert_eq!(code.syndrome_length, 16);
        let mut rng = derive_rng(4, Stream::EstimatorSplit, 0);
        let a = block((0..16).map(|_| rng.gen_range(0..=1u8)).collect());
        let s = make_syndrome(&a, &code).unwrap();
        let garbage = block((0..16).map(|_| rng.gen_range(0..=1u8)).collect());
        for &eps in &[0.01f64, 0.2, 0.5] {
            let (decoded, ok) = sw_decode(&garbage, &s, &code, eps).unwrap();
            assert!(ok);
            assert_eq!(decoded.bits, a.bits);
        }
    }

    /// Exhaustive syndrome-constrained minimum-distance decoding; the set of
    /// all blocks at minimal Hamming distance from the observation among
    /// those consistent with the syndrome.
    fn ml_oracle(observed: &BitBlock, synd: &Syndrome, code: &PolarCode) -> Vec<Vec<u8>> {
        let n = code.block_length;
        let mut best = usize::MAX;
        let mut arg = Vec::new();
        for cand in 0..(1u64 << n) {
            let bits: Vec<u8> = (0..n).map(|i| ((cand >> i) & 1) as u8).collect();
            let cb = block(bits.clone());
            let s = make_syndrome(&cb, code).unwrap();
            if s.bits != synd.bits {
                continue;
            }
            let d = cb.hamming_distance(observed).unwrap();
            match d.cmp(&best) {
                std::cmp::Ordering::Less => {
                    best = d;
                    arg = vec![bits];
                }
                std::cmp::Ordering::Equal => arg.push(bits),
                std::cmp::Ordering::Greater => {}
            }
        }
        arg
    }

    #[test]
    fn sc_matches_ml_oracle_at_n8() {
        let code = construct_code(8, 0.25, 0.1).unwrap();
        assert_eq!(code.syndrome_length, 6);
        let mut rng = derive_rng(5, Stream::EstimatorSplit, 1);
        let trials = 1000;
        let mut agree = 0;
        for _ in 0..trials {
            let a = block((0..8).map(|_| rng.gen_range(0..=1u8)).collect());
            let s = make_syndrome(&a, &code).unwrap();
            let mut observed = a.clone();
            if rng.gen_bool(0.7) {
                let flip = rng.gen_range(0..8);
                observed.bits[flip] ^= 1;
            }
            let (decoded, ok) = sw_decode(&observed, &s, &code, 0.1f64).unwrap();
            assert!(ok);
            let oracle = ml_oracle(&observed, &s, &code);
            if oracle.contains(&decoded.bits) {
                agree += 1;
            }
        }
        assert!(
            agree * 100 >= trials * 99,
            "SC agreed with ML oracle on {agree}/{trials} trials"
        );
    }

    #[test]
    fn fer_counts_exact_frame_matches() {
        let a = vec![block(vec![0, 1]), block(vec![1, 1]), block(vec![0, 0])];
        let mut b = a.clone();
        assert_eq!(frame_error_rate(&a, &b).unwrap(), 0.0);
        b[0].bits[0] ^= 1;
        b[1].bits[1] ^= 1;
        assert!((frame_error_rate(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(frame_error_rate(&a, &b[..2]).is_err());
    }

    #[test]
    fn fer_decreases_with_rate_over_bsc_ensemble() {
        let mut rng = derive_rng(6, Stream::EstimatorSplit, 2);
        let n = 64;
        let eps = 0.02;
        let frames = 1000;
        let sources: Vec<BitBlock> = (0..frames)
            .map(|i| BitBlock {
                node: Node::Alice,
                frame_index: i,
                bits: (0..n).map(|_| rng.gen_range(0..=1u8)).collect(),
            })
            .collect();
        let observations: Vec<BitBlock> = sources
            .iter()
            .map(|s| BitBlock {
                node: Node::Bob,
                frame_index: s.frame_index,
                bits: s
                    .bits
                    .iter()
                    .map(|&b| if rng.gen_bool(eps) { b ^ 1 } else { b })
                    .collect(),
            })
            .collect();
        let mut last = -1.0f64;
        for &r in &[0.9, 0.7, 0.5, 0.3, 0.1] {
            let code = construct_code(n, r, 0.1).unwrap();
            let decoded: Vec<BitBlock> = sources
                .iter()
                .zip(&observations)
                .map(|(a, o)| {
                    let s = make_syndrome(a, &code).unwrap();
                    sw_decode(o, &s, &code, eps).unwrap().0
                })
                .collect();
            let fer = frame_error_rate(&sources, &decoded).unwrap();
            if last >= 0.0 {
                assert!(
                    fer <= last + 1e-12,
                    "FER should not increase as rate drops (r={r}: {fer} vs {last})"
                );
            }
            last = fer;
        }
        assert!(last < 0.01, "lowest-rate FER should be near zero, got {last}");
    }

    proptest! {
        #[test]
        fn transform_is_involutive(bits in proptest::collection::vec(0u8..=1, 1..=6).prop_map(|v| {
            let n = 1usize << v.len();
            (0..n).map(|i| v[i % v.len()]).collect::<Vec<u8>>()
        })) {
            let mut x = bits.clone();
            polar_transform(&mut x);
            polar_transform(&mut x);
            prop_assert_eq!(x, bits);
        }

        #[test]
        fn syndrome_is_linear(seed in 0u64..1000) {
            let mut rng = derive_rng(seed, Stream::EstimatorSplit, 9);
            let code = construct_code(32, 0.4, 0.1).unwrap();
            let a: Vec<u8> = (0..32).map(|_| rng.gen_range(0..=1u8)).collect();
            let b: Vec<u8> = (0..32).map(|_| rng.gen_range(0..=1u8)).collect();
            let xor: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let sa = make_syndrome(&block(a), &code).unwrap();
            let sb = make_syndrome(&block(b), &code).unwrap();
            let sx = make_syndrome(&block(xor), &code).unwrap();
            let expect: Vec<u8> = sa.bits.iter().zip(&sb.bits).map(|(x, y)| x ^ y).collect();
            prop_assert_eq!(sx.bits, expect);
        }
    }
}
