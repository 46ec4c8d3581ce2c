//! Pipeline stages. Every stage reads and writes the on-disk formats, so the
//! chain can be rerun from any point with the standalone subcommands.

use crate::config::PipelineConfig;
use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use skg_core::amplify::{distill_key, KeyManifest, KeyManifestEntry, KeyMaterial};
use skg_core::challenge::{
    check_evidence, default_plaintexts, make_challenge, parse_submission, read_bundle, seal_bundle,
    verify_attempt, EvidenceRef, CHALLENGE_ENTRIES,
};
use skg_core::dataio::{
    read_bit_blocks, read_syndromes, write_bit_blocks, write_syndromes, FrameStoreReader,
    FrameStoreWriter,
};
use skg_core::entropy::{
    apply_safety_margin, conditional_min_entropy, mcv_min_entropy, write_entropy_csv,
    EntropyEstimate, EntropyReportRow, SecretObservationPair,
};
use skg_core::eval::{default_scenarios, run_grid, write_grid_csv, ExperimentGrid};
use skg_core::filterbank::{
    build_filterbank, read_power_csv, welch_psd, write_power_csv, write_psd_csv, FilterbankConfig,
    PowerVector,
};
use skg_core::quantize::{mismatch_probability, quantize_frame, BitBlock, QuantConfig, QuantDomain};
use skg_core::reconcile::{
    construct_code, make_syndrome, read_decode_report_csv, sw_decode, write_decode_report_csv,
    DecodeRecord, PolarCode,
};
use skg_core::rng::{derive_seed, Stream};
use skg_core::waveform::{generate_chirp, synthesize_frame_with_chirp};
use skg_core::Node;
use std::path::{Path, PathBuf};

pub const ALICE_FRAMES: &str = "alice.iqf";
pub const BOB_FRAMES: &str = "bob.iqf";
pub const EVE_FRAMES: &str = "eve.iqf";
pub const ALICE_POWERS: &str = "alice_powers.csv";
pub const BOB_POWERS: &str = "bob_powers.csv";
pub const EVE_POWERS: &str = "eve_powers.csv";
pub const ALICE_BITS: &str = "alice.bits";
pub const BOB_BITS: &str = "bob.bits";
pub const EVE_BITS: &str = "eve.bits";
pub const SYNDROMES: &str = "alice.synd";
pub const CHECKS: &str = "alice_checks.bits";
pub const BOB_RECONCILED: &str = "bob_reconciled.bits";
pub const BOB_REPORT: &str = "bob_decode.csv";
pub const EVE_RECONCILED: &str = "eve_reconciled.bits";
pub const EVE_REPORT: &str = "eve_decode.csv";
pub const ENTROPY_REPORT: &str = "entropy.csv";
pub const KEY_MANIFEST: &str = "keys.toml";

/// Bits of the per-frame check value Alice publishes so Bob can recognize a
/// successful reconciliation (truncated SHA-256 of the packed block).
pub const CHECK_BITS: usize = 16;

/// Synthesize frames for all three nodes and store them as `.iqf` files.
pub fn simulate(cfg: &PipelineConfig, out_dir: &Path, frames: usize) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let chirp_cfg = cfg.chirp_config()?;
    let scenario = cfg.scenario_config()?;
    let chirp = generate_chirp::<f64>(&chirp_cfg)?;

    let mut writers = [
        FrameStoreWriter::create(
            out_dir.join(ALICE_FRAMES),
            Node::Alice,
            chirp_cfg.bandwidth_hz,
            chirp_cfg.sample_rate_hz,
        )?,
        FrameStoreWriter::create(
            out_dir.join(BOB_FRAMES),
            Node::Bob,
            chirp_cfg.bandwidth_hz,
            chirp_cfg.sample_rate_hz,
        )?,
        FrameStoreWriter::create(
            out_dir.join(EVE_FRAMES),
            Node::Eve,
            chirp_cfg.bandwidth_hz,
            chirp_cfg.sample_rate_hz,
        )?,
    ];

    // Chunked so arbitrarily long captures stream to disk.
    let chunk = 256usize;
    let mut start = 0usize;
    while start < frames {
        let end = (start + chunk).min(frames);
        let batch: Vec<_> = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| synthesize_frame_with_chirp(&chirp, &scenario, i))
            .collect::<skg_core::Result<_>>()?;
        for (a, b, e) in &batch {
            writers[0].append(a)?;
            writers[1].append(b)?;
            writers[2].append(e)?;
        }
        start = end;
    }
    for w in writers {
        w.finish()?;
    }
    Ok(())
}

/// Filterbank power extraction from an `.iqf` file into a power CSV, with an
/// optional Welch PSD diagnostic of the first frame.
pub fn extract(
    input: &Path,
    output: &Path,
    fb_overrides: (usize, f64, usize),
    psd: Option<(&Path, usize, usize)>,
) -> Result<()> {
    let reader = FrameStoreReader::<f64>::open(input)?;
    let header = reader.header().clone();
    let (num_filters, rolloff, prototype_taps) = fb_overrides;
    let fb_cfg = FilterbankConfig {
        num_filters,
        rolloff,
        prototype_taps,
        bandwidth_hz: header.bandwidth_hz,
        sample_rate_hz: header.sample_rate_hz,
    };
    let bank = build_filterbank::<f64>(&fb_cfg)?;
    if header.frame_count == 0 {
        write_power_csv::<f64, _>(output, &[])?;
        return Ok(());
    }
    let extractor = bank.extractor(header.samples_per_frame as usize)?;

    let mut powers: Vec<PowerVector<f64>> = Vec::with_capacity(header.frame_count as usize);
    let mut first_frame = None;
    let mut buffer = Vec::with_capacity(256);
    let mut frames_iter = reader;
    loop {
        buffer.clear();
        for frame in frames_iter.by_ref().take(256) {
            buffer.push(frame?);
        }
        if buffer.is_empty() {
            break;
        }
        if first_frame.is_none() {
            first_frame = Some(buffer[0].clone());
        }
        let mut batch: Vec<PowerVector<f64>> = buffer
            .par_iter()
            .map(|f| extractor.extract_power(f))
            .collect::<skg_core::Result<_>>()?;
        powers.append(&mut batch);
    }
    write_power_csv(output, &powers)?;

    if let Some((psd_path, segment, overlap)) = psd {
        let frame = first_frame.ok_or_else(|| anyhow!("no frames for PSD"))?;
        let (freqs, density) = welch_psd(&frame.samples, header.sample_rate_hz, segment, overlap)?;
        write_psd_csv(psd_path, &freqs, &density)?;
    }
    Ok(())
}

/// Gray-coded quantization of a power CSV into a `.bits` file.
pub fn quantize_stage(input: &Path, output: &Path, quant: &QuantConfig) -> Result<()> {
    let powers: Vec<PowerVector<f64>> = read_power_csv(input)?;
    let blocks = powers
        .iter()
        .map(|p| quantize_frame(p, quant))
        .collect::<skg_core::Result<Vec<_>>>()?;
    write_bit_blocks(output, &blocks)?;
    Ok(())
}

fn check_value(block: &BitBlock) -> BitBlock {
    let digest = skg_core::amplify::sha256_digest(&block.to_packed_bytes());
    BitBlock {
        node: block.node,
        frame_index: block.frame_index,
        bits: (0..CHECK_BITS)
            .map(|i| (digest[i / 8] >> (7 - (i % 8))) & 1)
            .collect(),
    }
}

/// Alice's side of reconciliation: syndromes plus per-frame check values.
pub fn syndrome_stage(
    input: &Path,
    out_syndromes: &Path,
    out_checks: &Path,
    rate: f64,
    design_param: f64,
) -> Result<PolarCode> {
    let blocks = read_bit_blocks(input, Node::Alice)?;
    if blocks.is_empty() {
        bail!("{} holds no blocks", input.display());
    }
    let code = construct_code(blocks[0].len(), rate, design_param)?;
    let syndromes = blocks
        .iter()
        .map(|b| make_syndrome(b, &code))
        .collect::<skg_core::Result<Vec<_>>>()?;
    write_syndromes(out_syndromes, &syndromes)?;
    let checks: Vec<BitBlock> = blocks.iter().map(check_value).collect();
    write_bit_blocks(out_checks, &checks)?;
    Ok(code)
}

/// How the decoder obtains its virtual-channel crossover probability.
pub enum CrossoverSpec {
    Fixed(f64),
    /// Estimate from the leading 10% of frames against a reference `.bits`
    /// file (simulation/benchmark use; a real attacker supplies a guess).
    CalibrateAgainst(PathBuf),
}

pub struct DecodeSummary {
    pub frames: usize,
    pub successes: usize,
    pub crossover: f64,
}

/// Syndrome-guided decoding of an observed `.bits` file; emits the decoded
/// blocks and a per-frame report. Success is judged against Alice's public
/// check values when available, otherwise left at syndrome consistency.
pub fn decode_stage(
    observed_path: &Path,
    syndromes_path: &Path,
    checks_path: Option<&Path>,
    output: &Path,
    report_path: &Path,
    rate: f64,
    design_param: f64,
    crossover: CrossoverSpec,
) -> Result<DecodeSummary> {
    let observed = read_bit_blocks(observed_path, Node::Bob)?;
    let syndromes = read_syndromes(syndromes_path)?;
    if observed.len() != syndromes.len() {
        bail!(
            "{} holds {} blocks but {} holds {} syndromes",
            observed_path.display(),
            observed.len(),
            syndromes_path.display(),
            syndromes.len()
        );
    }
    if observed.is_empty() {
        bail!("{} holds no blocks", observed_path.display());
    }
    let code = construct_code(observed[0].len(), rate, design_param)?;

    let eps = match crossover {
        CrossoverSpec::Fixed(e) => {
            if !(e > 0.0 && e <= 0.5) {
                bail!("crossover must lie in (0, 0.5], got {e}");
            }
            e
        }
        CrossoverSpec::CalibrateAgainst(ref reference) => {
            let reference_blocks = read_bit_blocks(reference, Node::Alice)?;
            if reference_blocks.len() != observed.len() {
                bail!(
                    "calibration reference {} has {} blocks, observed {}",
                    reference.display(),
                    reference_blocks.len(),
                    observed.len()
                );
            }
            let n = (observed.len() / 10).max(50).min(observed.len());
            mismatch_probability(&reference_blocks[..n], &observed[..n])?.clamp(1e-3, 0.499)
        }
    };

    let checks = match checks_path {
        Some(path) => Some(read_bit_blocks(path, Node::Alice)?),
        None => None,
    };
    if let Some(ref c) = checks {
        if c.len() != observed.len() {
            bail!("check file holds {} values, observed {} blocks", c.len(), observed.len());
        }
    }

    let decoded: Vec<(BitBlock, DecodeRecord)> = observed
        .par_iter()
        .zip(syndromes.par_iter())
        .map(|(obs, synd)| -> skg_core::Result<(BitBlock, DecodeRecord)> {
            let (block, consistent) = sw_decode(obs, synd, &code, eps)?;
            let corrections = block.hamming_distance(obs)?;
            let success = match checks {
                Some(ref c) => {
                    consistent && check_value(&block).bits == c[obs.frame_index as usize].bits
                }
                None => consistent,
            };
            let record = DecodeRecord {
                frame_index: obs.frame_index,
                success,
                bit_errors: corrections,
            };
            Ok((block, record))
        })
        .collect::<skg_core::Result<_>>()?;

    let blocks: Vec<BitBlock> = decoded.iter().map(|(b, _)| b.clone()).collect();
    let records: Vec<DecodeRecord> = decoded.iter().map(|(_, r)| r.clone()).collect();
    write_bit_blocks(output, &blocks)?;
    write_decode_report_csv(report_path, &records)?;
    Ok(DecodeSummary {
        frames: records.len(),
        successes: records.iter().filter(|r| r.success).count(),
        crossover: eps,
    })
}

/// Observation source for the entropy stage.
pub enum ObservationSource<'a> {
    /// Eve's raw power vectors (CSV), in the given quantizer domain.
    Powers(&'a Path, QuantDomain),
    /// Eve's quantized bits.
    Bits(&'a Path),
}

pub struct EntropyStageResult {
    pub estimate: EntropyEstimate,
    pub mcv_bits: f64,
}

/// Conditional min-entropy of Alice's blocks given Eve's observation and the
/// public syndromes; appends one row to the entropy CSV report.
#[allow(clippy::too_many_arguments)]
pub fn entropy_stage(
    secrets_path: &Path,
    observations: ObservationSource<'_>,
    syndromes_path: Option<&Path>,
    output: &Path,
    cfg: &PipelineConfig,
    scenario_label: &str,
    position_label: &str,
    rate: f64,
) -> Result<EntropyStageResult> {
    let secrets = read_bit_blocks(secrets_path, Node::Alice)?;
    if secrets.is_empty() {
        bail!("{} holds no blocks", secrets_path.display());
    }

    let mut observation_vectors: Vec<Vec<f64>> = match observations {
        ObservationSource::Powers(path, domain) => {
            let powers: Vec<PowerVector<f64>> = read_power_csv(path)?;
            powers
                .iter()
                .map(|p| match domain {
                    QuantDomain::Linear => p.powers.clone(),
                    QuantDomain::Decibel => {
                        let peak = p.powers.iter().cloned().fold(0.0f64, f64::max);
                        let floor = peak * 1e-30;
                        p.powers
                            .iter()
                            .map(|&v| if floor == 0.0 { 0.0 } else { 10.0 * v.max(floor).log10() })
                            .collect()
                    }
                })
                .collect()
        }
        ObservationSource::Bits(path) => read_bit_blocks(path, Node::Eve)?
            .into_iter()
            .map(|b| b.bits.iter().map(|&x| x as f64).collect())
            .collect(),
    };
    if observation_vectors.len() != secrets.len() {
        bail!(
            "observation count {} does not match secret count {}",
            observation_vectors.len(),
            secrets.len()
        );
    }
    if let Some(path) = syndromes_path {
        let syndromes = read_syndromes(path)?;
        if syndromes.len() != secrets.len() {
            bail!(
                "{} holds {} syndromes, expected {}",
                path.display(),
                syndromes.len(),
                secrets.len()
            );
        }
        for (obs, synd) in observation_vectors.iter_mut().zip(&syndromes) {
            obs.extend(synd.bits.iter().map(|&b| b as f64));
        }
    }

    let pairs: Vec<SecretObservationPair<f64>> = secrets
        .iter()
        .zip(observation_vectors)
        .map(|(secret, observation)| SecretObservationPair {
            secret: secret.clone(),
            observation,
        })
        .collect();

    let estimate = conditional_min_entropy(
        &pairs,
        &secrets,
        cfg.entropy.method,
        &cfg.estimator_config(),
    )?;
    let mcv_bits = mcv_min_entropy(&secrets)?;

    write_entropy_csv(
        output,
        &[EntropyReportRow {
            scenario: scenario_label,
            position: position_label,
            rate,
            estimate: &estimate,
        }],
    )?;
    Ok(EntropyStageResult { estimate, mcv_bits })
}

/// Entropy budget passed to distillation.
pub enum CmeSpec {
    /// Raw estimate; the 10% safety margin is applied here.
    Estimated(f64),
    /// Pre-margined value, used as-is.
    Effective(f64),
}

pub struct DistillArgs<'a> {
    pub blocks_path: &'a Path,
    pub report_path: Option<&'a Path>,
    pub start_frame_index: u64,
    pub cme: CmeSpec,
    pub cme_raw_for_manifest: f64,
    pub scenario_label: String,
    pub eve_position: String,
    pub eve_correlation: f64,
    pub manifest_path: &'a Path,
    pub append: bool,
    pub reveal: bool,
    pub eve_frames_file: Option<String>,
    pub syndrome_file: Option<String>,
}

/// Distill a 256-bit key from successfully reconciled blocks and record it in
/// the key manifest.
pub fn distill_stage(args: DistillArgs<'_>) -> Result<KeyMaterial> {
    let blocks = read_bit_blocks(args.blocks_path, Node::Bob)?;
    let successful: Vec<BitBlock> = match args.report_path {
        Some(path) => {
            let report = read_decode_report_csv(path)?;
            if report.len() != blocks.len() {
                bail!(
                    "decode report {} covers {} frames, blocks file has {}",
                    path.display(),
                    report.len(),
                    blocks.len()
                );
            }
            blocks
                .into_iter()
                .zip(report)
                .filter(|(_, r)| r.success)
                .map(|(b, _)| b)
                .collect()
        }
        None => blocks,
    };

    let effective = match args.cme {
        CmeSpec::Estimated(raw) => 0.9 * raw,
        CmeSpec::Effective(eff) => eff,
    };
    let key = distill_key(
        &args.scenario_label,
        &successful,
        args.start_frame_index,
        effective,
    )?;

    let entry = KeyManifestEntry {
        scenario: args.scenario_label.clone(),
        eve_position: args.eve_position.clone(),
        eve_correlation: args.eve_correlation,
        start_frame_index: args.start_frame_index,
        input_bits: key.input_bits.len(),
        cme_per_bit: args.cme_raw_for_manifest,
        cme_per_bit_effective: effective,
        fingerprint: key.fingerprint(),
        key_hex: args.reveal.then(|| key.key_hex()),
        eve_frames_file: args.eve_frames_file.clone(),
        syndrome_file: args.syndrome_file.clone(),
    };
    let mut manifest = if args.append && args.manifest_path.exists() {
        KeyManifest::load(args.manifest_path)?
    } else {
        KeyManifest::default()
    };
    manifest.entries.push(entry);
    manifest.save(args.manifest_path)?;
    Ok(key)
}

pub struct PipelineSummary {
    pub frames: usize,
    pub ab_mismatch: f64,
    pub ae_mismatch: f64,
    pub ab_fer: f64,
    pub ae_fer: f64,
    pub cme_per_bit: f64,
    pub cme_per_bit_effective: f64,
    pub mcv_bits: f64,
    pub key: KeyMaterial,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.with_context(|| format!("stage '{name}' failed"))
}

/// The full chain: simulate, extract, quantize, reconcile, estimate, distill.
/// Every intermediate artifact lands in `out_dir`; failures name the stage
/// and keep partial artifacts for inspection.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path, reveal: bool) -> Result<PipelineSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let frames = cfg.pipeline.frames;
    let fb = (
        cfg.filterbank.num_filters,
        cfg.filterbank.rolloff,
        cfg.filterbank.prototype_taps,
    );
    let quant = cfg.quant_config()?;

    stage("simulate", simulate(cfg, out_dir, frames))?;

    for (input, output) in [
        (ALICE_FRAMES, ALICE_POWERS),
        (BOB_FRAMES, BOB_POWERS),
        (EVE_FRAMES, EVE_POWERS),
    ] {
        stage(
            "extract",
            extract(&out_dir.join(input), &out_dir.join(output), fb, None),
        )?;
    }

    for (input, output) in [
        (ALICE_POWERS, ALICE_BITS),
        (BOB_POWERS, BOB_BITS),
        (EVE_POWERS, EVE_BITS),
    ] {
        stage(
            "quantize",
            quantize_stage(&out_dir.join(input), &out_dir.join(output), &quant),
        )?;
    }

    stage(
        "reconcile",
        syndrome_stage(
            &out_dir.join(ALICE_BITS),
            &out_dir.join(SYNDROMES),
            &out_dir.join(CHECKS),
            cfg.code.rate,
            cfg.code.design_param,
        )
        .map(|_| ()),
    )?;

    let decode = |observed: &str, decoded: &str, report: &str| -> Result<DecodeSummary> {
        decode_stage(
            &out_dir.join(observed),
            &out_dir.join(SYNDROMES),
            Some(&out_dir.join(CHECKS)),
            &out_dir.join(decoded),
            &out_dir.join(report),
            cfg.code.rate,
            cfg.code.design_param,
            CrossoverSpec::CalibrateAgainst(out_dir.join(ALICE_BITS)),
        )
    };
    let bob_summary = stage("reconcile", decode(BOB_BITS, BOB_RECONCILED, BOB_REPORT))?;
    let eve_summary = stage("reconcile", decode(EVE_BITS, EVE_RECONCILED, EVE_REPORT))?;

    let eve_bits_path = out_dir.join(EVE_BITS);
    let eve_powers_path = out_dir.join(EVE_POWERS);
    let observation = if cfg.entropy.use_eve_bits {
        ObservationSource::Bits(&eve_bits_path)
    } else {
        ObservationSource::Powers(&eve_powers_path, cfg.quant.domain)
    };
    let syndromes_path = out_dir.join(SYNDROMES);
    let entropy = stage(
        "entropy",
        entropy_stage(
            &out_dir.join(ALICE_BITS),
            observation,
            cfg.entropy.include_syndrome.then_some(syndromes_path.as_path()),
            &out_dir.join(ENTROPY_REPORT),
            cfg,
            &cfg.pipeline.scenario_label,
            &cfg.pipeline.eve_position,
            cfg.code.rate,
        ),
    )?;

    let key = stage(
        "distill",
        distill_stage(DistillArgs {
            blocks_path: &out_dir.join(BOB_RECONCILED),
            report_path: Some(&out_dir.join(BOB_REPORT)),
            start_frame_index: cfg.pipeline.start_frame_index,
            cme: CmeSpec::Estimated(entropy.estimate.cme_per_bit),
            cme_raw_for_manifest: entropy.estimate.cme_per_bit,
            scenario_label: cfg.pipeline.scenario_label.clone(),
            eve_position: cfg.pipeline.eve_position.clone(),
            eve_correlation: cfg.scenario.eve_correlation,
            manifest_path: &out_dir.join(KEY_MANIFEST),
            append: false,
            reveal,
            eve_frames_file: Some(EVE_FRAMES.to_string()),
            syndrome_file: Some(SYNDROMES.to_string()),
        }),
    )?;

    // Chain-level metrics for the summary line.
    let alice = read_bit_blocks(out_dir.join(ALICE_BITS), Node::Alice)?;
    let bob = read_bit_blocks(out_dir.join(BOB_BITS), Node::Bob)?;
    let eve = read_bit_blocks(out_dir.join(EVE_BITS), Node::Eve)?;
    let ab_mismatch = mismatch_probability(&alice, &bob)?;
    let ae_mismatch = mismatch_probability(&alice, &eve)?;

    Ok(PipelineSummary {
        frames,
        ab_mismatch,
        ae_mismatch,
        ab_fer: 1.0 - bob_summary.successes as f64 / bob_summary.frames as f64,
        ae_fer: 1.0 - eve_summary.successes as f64 / eve_summary.frames as f64,
        cme_per_bit: entropy.estimate.cme_per_bit,
        cme_per_bit_effective: apply_safety_margin(&entropy.estimate),
        mcv_bits: entropy.mcv_bits,
        key,
    })
}

/// Build the default experiment grid from a pipeline config.
pub fn experiment_grid(cfg: &PipelineConfig, frames: usize, seed: u64) -> Result<ExperimentGrid> {
    Ok(ExperimentGrid {
        chirp: cfg.chirp_config()?,
        filterbank: cfg.filterbank_config()?,
        scenarios: default_scenarios(),
        q_values: vec![4, 16],
        quant_domain: cfg.quant.domain,
        rate_values: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        frames_per_cell: frames,
        seed,
        design_param: cfg.code.design_param,
        estimator: cfg.estimator_config(),
        estimator_kind: cfg.entropy.method,
        include_syndrome_in_observation: cfg.entropy.include_syndrome,
    })
}

/// Run the grid and write the CSV.
pub fn eval_stage(cfg: &PipelineConfig, frames: usize, output: &Path) -> Result<()> {
    let grid = experiment_grid(cfg, frames, cfg.scenario.rng_seed)?;
    let rows = run_grid(&grid)?;
    write_grid_csv(output, &rows)?;
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    if failed > 0 {
        eprintln!("warning: {failed}/{} cells failed (see error column)", rows.len());
    }
    Ok(())
}

/// Generate the full challenge: run the pipeline for all 20 scenario ×
/// position combinations, collect keys and evidence, and seal the bundle.
///
/// The bundle directory is publishable; `keys_secret.toml` and
/// `plaintexts.bin` in `out_dir` are the organizer's withheld material.
pub fn challenge_sweep(
    cfg: &PipelineConfig,
    out_dir: &Path,
    frames: usize,
    plaintexts_file: Option<&Path>,
) -> Result<PathBuf> {
    let bundle_dir = out_dir.join("bundle");
    let work_dir = out_dir.join("work");
    std::fs::create_dir_all(&bundle_dir)?;
    std::fs::create_dir_all(&work_dir)?;

    let plaintexts = match plaintexts_file {
        Some(path) => read_plaintexts(path)?,
        None => default_plaintexts(),
    };

    let specs = default_scenarios();
    let mut keys: Vec<KeyMaterial> = Vec::with_capacity(CHALLENGE_ENTRIES);
    let mut evidence: Vec<EvidenceRef> = Vec::with_capacity(CHALLENGE_ENTRIES);
    let mut secret_manifest = KeyManifest::default();

    for (idx, spec) in specs.iter().enumerate() {
        let combo = format!("{}-{}", spec.label, spec.eve_position);
        let combo_work = work_dir.join(&combo);
        let mut combo_cfg = cfg.clone();
        combo_cfg.scenario.num_taps = spec.scenario.num_taps;
        combo_cfg.scenario.tap_power_profile = Some(spec.scenario.tap_power_profile.clone());
        combo_cfg.scenario.reciprocity_coeff = spec.scenario.reciprocity_coeff;
        combo_cfg.scenario.eve_correlation = spec.scenario.eve_correlation;
        combo_cfg.scenario.snr_db = spec.scenario.snr_db;
        combo_cfg.scenario.dynamic = spec.scenario.dynamic;
        combo_cfg.scenario.rng_seed =
            derive_seed(cfg.scenario.rng_seed, Stream::GridCell, idx as u64);
        combo_cfg.pipeline.frames = frames;
        combo_cfg.pipeline.scenario_label = spec.label.clone();
        combo_cfg.pipeline.eve_position = spec.eve_position.clone();

        let summary = run_pipeline(&combo_cfg, &combo_work, false)
            .with_context(|| format!("challenge combination '{combo}'"))?;

        let evidence_rel = format!("evidence/{combo}");
        let evidence_dir = bundle_dir.join(&evidence_rel);
        std::fs::create_dir_all(&evidence_dir)?;
        std::fs::copy(combo_work.join(EVE_FRAMES), evidence_dir.join("eve.iqf"))?;
        std::fs::copy(combo_work.join(SYNDROMES), evidence_dir.join("alice.synd"))?;

        evidence.push(EvidenceRef {
            scenario: spec.label.clone(),
            eve_position: spec.eve_position.clone(),
            eve_correlation: spec.scenario.eve_correlation,
            eve_frames_file: format!("{evidence_rel}/eve.iqf"),
            syndrome_file: format!("{evidence_rel}/alice.synd"),
            start_frame_index: combo_cfg.pipeline.start_frame_index,
            cme_per_bit: summary.cme_per_bit,
        });
        secret_manifest.entries.push(KeyManifestEntry {
            scenario: spec.label.clone(),
            eve_position: spec.eve_position.clone(),
            eve_correlation: spec.scenario.eve_correlation,
            start_frame_index: combo_cfg.pipeline.start_frame_index,
            input_bits: summary.key.input_bits.len(),
            cme_per_bit: summary.cme_per_bit,
            cme_per_bit_effective: summary.key.cme_per_bit_effective,
            fingerprint: summary.key.fingerprint(),
            key_hex: Some(summary.key.key_hex()),
            eve_frames_file: Some(format!("{evidence_rel}/eve.iqf")),
            syndrome_file: Some(format!("{evidence_rel}/alice.synd")),
        });
        keys.push(summary.key);
        eprintln!("[{}/{}] {combo}: key distilled", idx + 1, CHALLENGE_ENTRIES);
    }

    let mut bundle = make_challenge(&keys, &plaintexts, &evidence)?;
    seal_bundle(&mut bundle, &bundle_dir)?;
    secret_manifest.save(out_dir.join("keys_secret.toml"))?;
    write_plaintexts(&out_dir.join("plaintexts.bin"), &plaintexts)?;
    Ok(bundle_dir)
}

/// Assemble a bundle from an existing key manifest (written with reveal).
pub fn challenge_make(
    keys_manifest: &Path,
    bundle_dir: &Path,
    plaintexts_file: Option<&Path>,
    truth_out: &Path,
    evidence_root: &Path,
) -> Result<()> {
    let manifest = KeyManifest::load(keys_manifest)?;
    if manifest.entries.len() != CHALLENGE_ENTRIES {
        bail!(
            "key manifest holds {} entries; the challenge needs exactly {CHALLENGE_ENTRIES}",
            manifest.entries.len()
        );
    }
    let plaintexts = match plaintexts_file {
        Some(path) => read_plaintexts(path)?,
        None => default_plaintexts(),
    };

    std::fs::create_dir_all(bundle_dir)?;
    let mut keys = Vec::with_capacity(CHALLENGE_ENTRIES);
    let mut evidence = Vec::with_capacity(CHALLENGE_ENTRIES);
    for entry in &manifest.entries {
        let key_bytes = KeyManifest::key_bytes(entry)?;
        keys.push(KeyMaterial {
            scenario: entry.scenario.clone(),
            start_frame_index: entry.start_frame_index,
            input_bits: Vec::new(),
            cme_per_bit_effective: entry.cme_per_bit_effective,
            key: key_bytes,
        });
        let eve_frames_file = entry.eve_frames_file.clone().ok_or_else(|| {
            anyhow!("manifest entry '{}' lacks eve_frames_file", entry.scenario)
        })?;
        let syndrome_file = entry
            .syndrome_file
            .clone()
            .ok_or_else(|| anyhow!("manifest entry '{}' lacks syndrome_file", entry.scenario))?;
        for rel in [&eve_frames_file, &syndrome_file] {
            let src = evidence_root.join(rel);
            if !src.exists() {
                bail!("evidence file {} not found under {}", rel, evidence_root.display());
            }
            let dst = bundle_dir.join(rel);
            if let Some(parent) = dst.parent() {
                std::fs::create_dir_all(parent)?;
            }
            if src.canonicalize()? != dst.canonicalize().unwrap_or_default() {
                std::fs::copy(&src, &dst)?;
            }
        }
        evidence.push(EvidenceRef {
            scenario: entry.scenario.clone(),
            eve_position: entry.eve_position.clone(),
            eve_correlation: entry.eve_correlation,
            eve_frames_file,
            syndrome_file,
            start_frame_index: entry.start_frame_index,
            cme_per_bit: entry.cme_per_bit,
        });
    }
    let mut bundle = make_challenge(&keys, &plaintexts, &evidence)?;
    seal_bundle(&mut bundle, bundle_dir)?;
    write_plaintexts(truth_out, &plaintexts)?;
    Ok(())
}

/// Score a submission against the withheld plaintexts.
pub fn challenge_verify(bundle_dir: &Path, submission: &Path, truth: &Path) -> Result<String> {
    let bundle = read_bundle(bundle_dir)?;
    check_evidence(&bundle, bundle_dir)
        .map_err(|e| anyhow!("bundle evidence integrity check failed: {e}"))?;
    let claimed = parse_submission(&std::fs::read_to_string(submission)?)?;
    let truth_blocks = read_plaintexts(truth)?;
    let report = verify_attempt(&bundle, &claimed, &truth_blocks)?;
    Ok(report.to_string())
}

fn read_plaintexts(path: &Path) -> Result<Vec<[u8; 32]>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != CHALLENGE_ENTRIES * 32 {
        bail!(
            "plaintext store must be exactly {} bytes (20 x 32), got {}",
            CHALLENGE_ENTRIES * 32,
            bytes.len()
        );
    }
    Ok(bytes
        .chunks_exact(32)
        .map(|c| {
            let mut b = [0u8; 32];
            b.copy_from_slice(c);
            b
        })
        .collect())
}

fn write_plaintexts(path: &Path, blocks: &[[u8; 32]]) -> Result<()> {
    let mut bytes = Vec::with_capacity(blocks.len() * 32);
    for b in blocks {
        bytes.extend_from_slice(b);
    }
    std::fs::write(path, bytes)?;
    Ok(())
}
