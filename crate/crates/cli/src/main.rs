use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use skg_cli::config::PipelineConfig;
use skg_cli::stages::{self, CmeSpec, CrossoverSpec, DistillArgs, ObservationSource};
use skg_core::quantize::{QuantConfig, QuantDomain};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "skg",
    version,
    about = "Secret-key generation from reciprocal wireless channel measurements",
    long_about = "Simulates chirp sounding over fading channels, extracts subband power \
                  randomness, quantizes it to Gray-coded bits, reconciles Alice and Bob with \
                  syndrome-based polar codes, budgets the leakage to an eavesdropper via \
                  conditional min-entropy, hashes the result into 256-bit keys, and packages \
                  one-time-pad security challenges."
)]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize received chirp frames for Alice, Bob, and Eve.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory for alice.iqf / bob.iqf / eve.iqf.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Override [pipeline].frames.
        #[arg(long)]
        frames: Option<usize>,
        /// Override the scenario RNG seed (also via SKG_SEED).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Filterbank power extraction from an .iqf capture.
    Extract {
        #[command(flatten)]
        config: ConfigArg,
        /// Input .iqf file.
        #[arg(long)]
        input: PathBuf,
        /// Output power CSV (one row per frame, K power columns).
        #[arg(long)]
        output: PathBuf,
        /// Optional Welch PSD diagnostic CSV of the first frame.
        #[arg(long)]
        psd: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        psd_segment: usize,
        #[arg(long, default_value_t = 128)]
        psd_overlap: usize,
    },
    /// Gray-coded multi-level quantization of a power CSV.
    Quantize {
        /// Input power CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output .bits file.
        #[arg(long)]
        output: PathBuf,
        /// Quantization levels Q (power of two).
        #[arg(long, default_value_t = 16)]
        levels: u32,
        /// "linear" or "decibel".
        #[arg(long, default_value = "decibel")]
        domain: String,
    },
    /// Slepian-Wolf reconciliation.
    #[command(subcommand)]
    Reconcile(ReconcileCommand),
    /// Conditional min-entropy and leakage estimation.
    Entropy {
        /// Alice's .bits file (the secrets).
        #[arg(long)]
        secrets: PathBuf,
        /// Eve's power CSV (the observations).
        #[arg(long, conflicts_with = "eve_bits")]
        observations: Option<PathBuf>,
        /// Use Eve's quantized .bits instead of her power vectors.
        #[arg(long)]
        eve_bits: Option<PathBuf>,
        /// Public syndromes to include in the conditioning side.
        #[arg(long)]
        syndromes: Option<PathBuf>,
        /// Output CSV report.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        /// Labels recorded in the report.
        #[arg(long, default_value = "standalone")]
        scenario: String,
        #[arg(long, default_value = "-")]
        position: String,
        #[arg(long, default_value_t = 0.3)]
        rate: f64,
    },
    /// Hash successfully reconciled blocks into a 256-bit key.
    Distill {
        /// Reconciled .bits file.
        #[arg(long)]
        blocks: PathBuf,
        /// Decode report CSV; only frames marked successful are used.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Estimated per-bit conditional min-entropy (10% margin applied here).
        #[arg(long, conflicts_with = "cme_effective")]
        cme_per_bit: Option<f64>,
        /// Pre-margined per-bit budget, used as-is.
        #[arg(long)]
        cme_effective: Option<f64>,
        #[arg(long, default_value_t = 0)]
        start_index: u64,
        #[arg(long, default_value = "standalone")]
        scenario: String,
        #[arg(long, default_value = "-")]
        eve_position: String,
        #[arg(long, default_value_t = 0.0)]
        eve_correlation: f64,
        /// Key manifest to write (TOML).
        #[arg(long)]
        output: PathBuf,
        /// Append to an existing manifest instead of overwriting.
        #[arg(long)]
        append: bool,
        /// Include the raw key (hex) in the manifest. Keep such files secret.
        #[arg(long)]
        reveal: bool,
    },
    /// Security-challenge tooling.
    #[command(subcommand)]
    Challenge(ChallengeCommand),
    /// Sweep scenarios x quantizer levels x code rates and emit a CSV.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        output: PathBuf,
        /// Frames per grid cell (desk scale default).
        #[arg(long, default_value_t = 1000)]
        frames: usize,
        /// Campaign scale: 100000 frames per cell.
        #[arg(long)]
        full_scale: bool,
    },
    /// Run the whole chain and write every intermediate artifact.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Reveal the raw key in keys.toml. Keep revealed manifests secret.
        #[arg(long)]
        reveal: bool,
    },
}

#[derive(Subcommand)]
enum ReconcileCommand {
    /// Alice's side: emit syndromes and per-frame check values.
    Syndrome {
        /// Alice's .bits file.
        #[arg(long)]
        input: PathBuf,
        /// Output .synd file.
        #[arg(long)]
        output: PathBuf,
        /// Output check-value file (.bits format, 16 bits per frame).
        #[arg(long)]
        checks: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        rate: f64,
        #[arg(long, default_value_t = 0.1)]
        design_param: f64,
    },
    /// Bob's (or Eve's) side: decode observed blocks against syndromes.
    Decode {
        /// Observed .bits file.
        #[arg(long)]
        input: PathBuf,
        /// Alice's .synd file.
        #[arg(long)]
        syndromes: PathBuf,
        /// Alice's check-value file; enables per-frame success marking.
        #[arg(long)]
        checks: Option<PathBuf>,
        /// Output .bits file of decoded blocks.
        #[arg(long)]
        output: PathBuf,
        /// Output decode report CSV.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        rate: f64,
        #[arg(long, default_value_t = 0.1)]
        design_param: f64,
        /// Virtual-channel crossover probability in (0, 0.5].
        #[arg(long, conflicts_with = "calibrate_against")]
        crossover: Option<f64>,
        /// Estimate the crossover from the leading frames of a reference
        /// .bits file (simulation use).
        #[arg(long)]
        calibrate_against: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ChallengeCommand {
    /// Build a bundle from a revealed key manifest plus evidence files.
    Make {
        /// Key manifest written with --reveal, holding exactly 20 entries.
        #[arg(long)]
        keys: PathBuf,
        /// Bundle output directory.
        #[arg(long)]
        out: PathBuf,
        /// 640-byte plaintext store (20 x 32 bytes); defaults to built-in
        /// ASCII sentences.
        #[arg(long)]
        plaintexts: Option<PathBuf>,
        /// Where to save the withheld plaintexts. Never publish this file.
        #[arg(long)]
        truth_out: PathBuf,
        /// Directory the manifest's evidence paths are relative to.
        #[arg(long, default_value = ".")]
        evidence_root: PathBuf,
    },
    /// Score a submission against the withheld plaintexts (organizer side).
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        /// Submission: one "<entry_id> <64 hex chars>" per line.
        #[arg(long)]
        submission: PathBuf,
        /// The withheld plaintext store.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run all 20 scenario x position pipelines and seal a full bundle.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "challenge_out")]
        out: PathBuf,
        /// Frames per combination.
        #[arg(long, default_value_t = 1000)]
        frames: usize,
        #[arg(long)]
        plaintexts: Option<PathBuf>,
    },
}

fn parse_domain(s: &str) -> Result<QuantDomain> {
    match s {
        "linear" => Ok(QuantDomain::Linear),
        "decibel" | "db" => Ok(QuantDomain::Decibel),
        other => bail!("unknown quantization domain '{other}' (use linear|decibel)"),
    }
}

fn load_config(path: &PathBuf, seed: Option<u64>, frames: Option<usize>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.scenario.rng_seed = seed;
    }
    if let Some(frames) = frames {
        cfg.pipeline.frames = frames;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }

    match cli.command {
        Command::Simulate {
            config,
            out_dir,
            frames,
            seed,
        } => {
            let cfg = load_config(&config.config, seed, frames)?;
            stages::simulate(&cfg, &out_dir, cfg.pipeline.frames)?;
            println!(
                "wrote {} frames per node to {}",
                cfg.pipeline.frames,
                out_dir.display()
            );
        }
        Command::Extract {
            config,
            input,
            output,
            psd,
            psd_segment,
            psd_overlap,
        } => {
            let cfg = PipelineConfig::load(&config.config)?;
            stages::extract(
                &input,
                &output,
                (
                    cfg.filterbank.num_filters,
                    cfg.filterbank.rolloff,
                    cfg.filterbank.prototype_taps,
                ),
                psd.as_deref().map(|p| (p, psd_segment, psd_overlap)),
            )?;
            println!("wrote {}", output.display());
        }
        Command::Quantize {
            input,
            output,
            levels,
            domain,
        } => {
            let quant = QuantConfig::new(levels, parse_domain(&domain)?)?;
            stages::quantize_stage(&input, &output, &quant)?;
            println!("wrote {}", output.display());
        }
        Command::Reconcile(cmd) => match cmd {
            ReconcileCommand::Syndrome {
                input,
                output,
                checks,
                rate,
                design_param,
            } => {
                let code = stages::syndrome_stage(&input, &output, &checks, rate, design_param)?;
                println!(
                    "wrote {} ({} syndrome bits per {}-bit block)",
                    output.display(),
                    code.syndrome_length,
                    code.block_length
                );
            }
            ReconcileCommand::Decode {
                input,
                syndromes,
                checks,
                output,
                report,
                rate,
                design_param,
                crossover,
                calibrate_against,
            } => {
                let spec = match (crossover, calibrate_against) {
                    (Some(e), None) => CrossoverSpec::Fixed(e),
                    (None, Some(p)) => CrossoverSpec::CalibrateAgainst(p),
                    (None, None) => bail!(
                        "pass --crossover <p> (attacker guess) or --calibrate-against <alice.bits>"
                    ),
                    _ => unreachable!("clap conflicts_with"),
                };
                let summary = stages::decode_stage(
                    &input,
                    &syndromes,
                    checks.as_deref(),
                    &output,
                    &report,
                    rate,
                    design_param,
                    spec,
                )?;
                println!(
                    "decoded {} frames at crossover {:.4}: {} verified successful",
                    summary.frames, summary.crossover, summary.successes
                );
            }
        },
        Command::Entropy {
            secrets,
            observations,
            eve_bits,
            syndromes,
            output,
            config,
            scenario,
            position,
            rate,
        } => {
            let cfg = PipelineConfig::load(&config.config)?;
            let source = match (&observations, &eve_bits) {
                (Some(p), None) => ObservationSource::Powers(p, cfg.quant.domain),
                (None, Some(p)) => ObservationSource::Bits(p),
                _ => bail!("pass exactly one of --observations (power CSV) or --eve-bits"),
            };
            let result = stages::entropy_stage(
                &secrets,
                source,
                syndromes.as_deref(),
                &output,
                &cfg,
                &scenario,
                &position,
                rate,
            )?;
            let est = &result.estimate;
            println!(
                "H_inf {:.4} bits/block (mcv {:.4}), leakage {:.4}, CME {:.4} bits/block \
                 ({:.4}/bit), converged: {}",
                est.min_entropy_bits_per_block,
                result.mcv_bits,
                est.leakage_bits,
                est.cme_bits_per_block,
                est.cme_per_bit,
                est.converged
            );
        }
        Command::Distill {
            blocks,
            report,
            cme_per_bit,
            cme_effective,
            start_index,
            scenario,
            eve_position,
            eve_correlation,
            output,
            append,
            reveal,
        } => {
            let (cme, raw) = match (cme_per_bit, cme_effective) {
                (Some(raw), None) => (CmeSpec::Estimated(raw), raw),
                (None, Some(eff)) => (CmeSpec::Effective(eff), eff / 0.9),
                _ => bail!("pass exactly one of --cme-per-bit or --cme-effective"),
            };
            let key = stages::distill_stage(DistillArgs {
                blocks_path: &blocks,
                report_path: report.as_deref(),
                start_frame_index: start_index,
                cme,
                cme_raw_for_manifest: raw,
                scenario_label: scenario,
                eve_position,
                eve_correlation,
                manifest_path: &output,
                append,
                reveal,
                eve_frames_file: None,
                syndrome_file: None,
            })?;
            println!(
                "distilled key {} from {} input bits (manifest {})",
                key.fingerprint(),
                key.input_bits.len(),
                output.display()
            );
        }
        Command::Challenge(cmd) => match cmd {
            ChallengeCommand::Make {
                keys,
                out,
                plaintexts,
                truth_out,
                evidence_root,
            } => {
                stages::challenge_make(&keys, &out, plaintexts.as_deref(), &truth_out, &evidence_root)?;
                println!(
                    "bundle sealed at {} (truth plaintexts: {}; do not publish them)",
                    out.display(),
                    truth_out.display()
                );
            }
            ChallengeCommand::Verify {
                bundle,
                submission,
                truth,
            } => {
                let report = stages::challenge_verify(&bundle, &submission, &truth)?;
                println!("{report}");
            }
            ChallengeCommand::Sweep {
                config,
                out,
                frames,
                plaintexts,
            } => {
                let cfg = load_config(&config.config, None, None)?;
                let bundle = stages::challenge_sweep(&cfg, &out, frames, plaintexts.as_deref())?;
                println!(
                    "bundle sealed at {} (withheld material in {}; publish only the bundle)",
                    bundle.display(),
                    out.display()
                );
            }
        },
        Command::Eval {
            config,
            output,
            frames,
            full_scale,
        } => {
            let cfg = PipelineConfig::load(&config.config)?;
            let frames = if full_scale { 100_000 } else { frames };
            stages::eval_stage(&cfg, frames, &output)?;
            println!("wrote {}", output.display());
        }
        Command::Run {
            config,
            out_dir,
            frames,
            seed,
            reveal,
        } => {
            let cfg = load_config(&config.config, seed, frames)?;
            let summary = stages::run_pipeline(&cfg, &out_dir, reveal)?;
            println!(
                "pipeline complete: {} frames, A-B mismatch {:.4}, A-E mismatch {:.4}, \
                 A-B FER {:.4}, A-E FER {:.4}, CME {:.4}/bit (effective {:.4}), key {}",
                summary.frames,
                summary.ab_mismatch,
                summary.ae_mismatch,
                summary.ab_fer,
                summary.ae_fer,
                summary.cme_per_bit,
                summary.cme_per_bit_effective,
                summary.key.fingerprint()
            );
        }
    }
    Ok(())
}
