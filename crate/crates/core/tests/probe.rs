//! Scratch probe for acceptance-scenario calibration (temporary).

use skg_core::entropy::{conditional_min_entropy, EstimatorConfig, EstimatorKind, SecretObservationPair};
use skg_core::eval::*;
use skg_core::filterbank::*;
use skg_core::quantize::*;
use skg_core::reconcile::*;
use skg_core::waveform::*;
use std::collections::BTreeMap;

fn compact_chirp() -> ChirpConfig {
    ChirpConfig::new(10e6, 25.6e-6, 20e6).unwrap()
}

fn fb_cfg() -> FilterbankConfig {
    FilterbankConfig {
        num_filters: 16,
        rolloff: 0.25,
        prototype_taps: 129,
        bandwidth_hz: 10e6,
        sample_rate_hz: 20e6,
    }
}

fn gen_powers(
    scn: &ChannelScenario,
    frames: usize,
) -> (Vec<PowerVector<f64>>, Vec<PowerVector<f64>>, Vec<PowerVector<f64>>) {
    let chirp_cfg = compact_chirp();
    let chirp = generate_chirp::<f64>(&chirp_cfg).unwrap();
    let bank = build_filterbank::<f64>(&fb_cfg()).unwrap();
    let ex = bank.extractor(chirp_cfg.samples_per_frame).unwrap();
    use rayon::prelude::*;
    let all: Vec<_> = (0..frames as u64)
        .into_par_iter()
        .map(|i| {
            let (a, b, e) = synthesize_frame_with_chirp(&chirp, scn, i).unwrap();
            (
                ex.extract_power(&a).unwrap(),
                ex.extract_power(&b).unwrap(),
                ex.extract_power(&e).unwrap(),
            )
        })
        .collect();
    let mut out = (vec![], vec![], vec![]);
    for (a, b, e) in all {
        out.0.push(a);
        out.1.push(b);
        out.2.push(e);
    }
    out
}

fn quant_all(p: &[PowerVector<f64>], q: u32) -> Vec<BitBlock> {
    let cfg = QuantConfig::new(q, QuantDomain::Decibel).unwrap();
    p.iter().map(|x| quantize_frame(x, &cfg).unwrap()).collect()
}

fn decode_all(alice: &[BitBlock], obs: &[BitBlock], rate: f64) -> f64 {
    let code = construct_code(alice[0].len(), rate, 0.1).unwrap();
    let n = (alice.len() / 10).max(50).min(alice.len());
    let eps = mismatch_probability(&alice[..n], &obs[..n])
        .unwrap()
        .clamp(1e-3, 0.499);
    use rayon::prelude::*;
    let decoded: Vec<BitBlock> = alice
        .par_iter()
        .zip(obs.par_iter())
        .map(|(a, o)| {
            let s = make_syndrome(a, &code).unwrap();
            sw_decode(o, &s, &code, eps).unwrap().0
        })
        .collect();
    frame_error_rate(alice, &decoded).unwrap()
}

#[test]
#[ignore]
fn probe_criterion4_eve_chance_level() {
    let scn = ChannelScenario {
        num_taps: 8,
        tap_power_profile: ChannelScenario::uniform_profile(8),
        reciprocity_coeff: 1.0,
        eve_correlation: 0.0,
        snr_db: 25.0,
        dynamic: true,
        rng_seed: 1234,
    };
    let (a, _, e) = gen_powers(&scn, 1000);
    for q in [4u32, 16] {
        let alice = quant_all(&a, q);
        let eve = quant_all(&e, q);
        let mm = mismatch_probability(&alice, &eve).unwrap();
        println!("Q={q}: A-E mismatch = {mm:.4}");
        for r in [0.3, 0.5, 0.7, 0.9] {
            let fer = decode_all(&alice, &eve, r);
            println!("  r={r}: A-E FER = {fer}");
        }
    }
}

#[test]
#[ignore]
fn probe_criterion5_leakage_trend() {
    for (taps, snr) in [(8usize, 25.0), (6, 30.0), (12, 20.0)] {
        let scn = ChannelScenario {
            num_taps: taps,
            tap_power_profile: ChannelScenario::uniform_profile(taps),
            reciprocity_coeff: 0.99,
            eve_correlation: 0.9,
            snr_db: snr,
            dynamic: true,
            rng_seed: 77,
        };
        let (a, _, e) = gen_powers(&scn, 1000);
        let a4 = quant_all(&a, 4);
        let e4 = quant_all(&e, 4);
        let a16 = quant_all(&a, 16);
        let e16 = quant_all(&e, 16);
        let mm4 = mismatch_probability(&a4, &e4).unwrap();
        let mm16 = mismatch_probability(&a16, &e16).unwrap();
        let fer_low = decode_all(&a4, &e4, 0.1);
        let fer_high = decode_all(&a16, &e16, 0.9);
        println!(
            "taps={taps} snr={snr}: A-E mm Q4={mm4:.3} Q16={mm16:.3}; FER(Q4,r0.1)={fer_low:.4} FER(Q16,r0.9)={fer_high:.4}"
        );
    }
}

#[test]
#[ignore]
fn probe_criterion7_block_statistics() {
    for frames in [10_000usize] {
        for (label, dynamic, snr, ecorr) in [
            ("dynamic", true, 20.0, 0.3),
            ("dynamic-hisnr", true, 30.0, 0.3),
            ("static", false, 25.0, 0.3),
        ] {
            let scn = ChannelScenario {
                num_taps: 12,
                tap_power_profile: ChannelScenario::uniform_profile(12),
                reciprocity_coeff: 0.99,
                eve_correlation: ecorr,
                snr_db: snr,
                dynamic,
                rng_seed: 4321,
            };
            let (a, _, e) = gen_powers(&scn, frames);
            let alice = quant_all(&a, 16);
            let mut counts: BTreeMap<&[u8], usize> = BTreeMap::new();
            for blk in &alice {
                *counts.entry(blk.bits.as_slice()).or_insert(0) += 1;
            }
            let max_mult = counts.values().max().unwrap();
            let distinct = counts.len();
            println!(
                "{label} snr={snr} frames={frames}: distinct={distinct} max_multiplicity={max_mult}"
            );

            // Full CME with syndrome at r=0.3
            let code = construct_code(64, 0.3, 0.1).unwrap();
            let pairs: Vec<SecretObservationPair<f64>> = e
                .iter()
                .zip(&alice)
                .map(|(obs, sec)| {
                    let peak = obs.powers.iter().cloned().fold(0.0f64, f64::max);
                    let floor = peak * 1e-30;
                    let mut o: Vec<f64> = obs
                        .powers
                        .iter()
                        .map(|&v| if floor == 0.0 { 0.0 } else { 10.0 * v.max(floor).log10() })
                        .collect();
                    let synd = make_syndrome(sec, &code).unwrap();
                    o.extend(synd.bits.iter().map(|&b| b as f64));
                    SecretObservationPair {
                        secret: sec.clone(),
                        observation: o,
                    }
                })
                .collect();
            let t0 = std::time::Instant::now();
            let est = conditional_min_entropy(
                &pairs,
                &alice,
                EstimatorKind::Combined,
                &EstimatorConfig::default(),
            )
            .unwrap();
            println!(
                "  H_inf={:.3} leak={:.3} cme/bit={:.4} converged={} ({:?})",
                est.min_entropy_bits_per_block,
                est.leakage_bits,
                est.cme_per_bit,
                est.converged,
                t0.elapsed()
            );
        }
    }
}
