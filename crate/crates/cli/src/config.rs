//! Pipeline configuration: one TOML file with a section per stage, plus
//! environment and flag overrides.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use skg_core::entropy::{EstimatorConfig, EstimatorKind};
use skg_core::filterbank::FilterbankConfig;
use skg_core::quantize::{QuantConfig, QuantDomain};
use skg_core::waveform::{ChannelScenario, ChirpConfig};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpSection {
    pub bandwidth_hz: f64,
    pub symbol_duration_s: f64,
    pub sample_rate_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub num_taps: usize,
    /// Defaults to a uniform profile over `num_taps`.
    #[serde(default)]
    pub tap_power_profile: Option<Vec<f64>>,
    pub reciprocity_coeff: f64,
    pub eve_correlation: f64,
    /// `inf` disables noise.
    pub snr_db: f64,
    pub dynamic: bool,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterbankSection {
    pub num_filters: usize,
    pub rolloff: f64,
    #[serde(default = "default_prototype_taps")]
    pub prototype_taps: usize,
}

fn default_prototype_taps() -> usize {
    129
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSection {
    pub levels: u32,
    pub domain: QuantDomain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub rate: f64,
    #[serde(default = "default_design_param")]
    pub design_param: f64,
    /// Optional; must equal num_filters * log2(levels) when given.
    #[serde(default)]
    pub block_length: Option<usize>,
}

fn default_design_param() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropySection {
    pub method: EstimatorKind,
    pub train_fraction: f64,
    pub checkpoints: usize,
    pub window: usize,
    pub delta: f64,
    pub scale: bool,
    pub bins_per_dim: Option<usize>,
    /// Condition on Eve's quantized bits instead of her raw power vector.
    pub use_eve_bits: bool,
    pub include_syndrome: bool,
}

impl Default for EntropySection {
    fn default() -> Self {
        let est = EstimatorConfig::default();
        Self {
            method: EstimatorKind::Combined,
            train_fraction: est.train_fraction,
            checkpoints: est.checkpoints,
            window: est.window,
            delta: est.delta,
            scale: est.scale,
            bins_per_dim: est.bins_per_dim,
            use_eve_bits: false,
            include_syndrome: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub frames: usize,
    pub start_frame_index: u64,
    pub scenario_label: String,
    pub eve_position: String,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            frames: 1000,
            start_frame_index: 0,
            scenario_label: "sim".into(),
            eve_position: "4lambda".into(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub chirp: ChirpSection,
    pub scenario: ScenarioSection,
    pub filterbank: FilterbankSection,
    pub quant: QuantSection,
    pub code: CodeSection,
    #[serde(default)]
    pub entropy: EntropySection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub paths: PathsSection,
}

impl PipelineConfig {
    /// Parse, apply the `SKG_SEED` environment override, and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if let Ok(seed) = std::env::var("SKG_SEED") {
            cfg.scenario.rng_seed = seed
                .parse()
                .context("SKG_SEED must be an unsigned integer")?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.chirp_config()?;
        self.scenario_config()?.validate().map_err(anyhow::Error::from)?;
        self.filterbank_config()?.validate()?;
        self.quant_config()?;

        let k = self.filterbank.num_filters;
        let bits = self.quant_config()?.bits_per_measurement();
        let n = k * bits;
        if let Some(given) = self.code.block_length {
            if given != n {
                bail!(
                    "code.block_length = {given} contradicts num_filters * log2(levels) \
                     = {k} * {bits} = {n}; drop code.block_length or fix the filterbank/quantizer"
                );
            }
        }
        if !n.is_power_of_two() {
            bail!(
                "num_filters * log2(levels) = {n} must be a power of two for the polar code; \
                 adjust filterbank.num_filters or quant.levels"
            );
        }
        if !(self.code.rate > 0.0 && self.code.rate < 1.0) {
            bail!("code.rate must lie in (0,1), got {}", self.code.rate);
        }
        if !(self.code.design_param > 0.0 && self.code.design_param < 0.5) {
            bail!(
                "code.design_param must lie in (0, 0.5), got {}",
                self.code.design_param
            );
        }
        if self.pipeline.frames == 0 {
            bail!("pipeline.frames must be positive");
        }
        Ok(())
    }

    pub fn chirp_config(&self) -> Result<ChirpConfig> {
        Ok(ChirpConfig::new(
            self.chirp.bandwidth_hz,
            self.chirp.symbol_duration_s,
            self.chirp.sample_rate_hz,
        )?)
    }

    pub fn scenario_config(&self) -> Result<ChannelScenario> {
        let profile = self
            .scenario
            .tap_power_profile
            .clone()
            .unwrap_or_else(|| ChannelScenario::uniform_profile(self.scenario.num_taps));
        Ok(ChannelScenario {
            num_taps: self.scenario.num_taps,
            tap_power_profile: profile,
            reciprocity_coeff: self.scenario.reciprocity_coeff,
            eve_correlation: self.scenario.eve_correlation,
            snr_db: self.scenario.snr_db,
            dynamic: self.scenario.dynamic,
            rng_seed: self.scenario.rng_seed,
        })
    }

    pub fn filterbank_config(&self) -> Result<FilterbankConfig> {
        Ok(FilterbankConfig {
            num_filters: self.filterbank.num_filters,
            rolloff: self.filterbank.rolloff,
            prototype_taps: self.filterbank.prototype_taps,
            bandwidth_hz: self.chirp.bandwidth_hz,
            sample_rate_hz: self.chirp.sample_rate_hz,
        })
    }

    pub fn quant_config(&self) -> Result<QuantConfig> {
        Ok(QuantConfig::new(self.quant.levels, self.quant.domain)?)
    }

    pub fn block_length(&self) -> Result<usize> {
        Ok(self.filterbank.num_filters * self.quant_config()?.bits_per_measurement())
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            train_fraction: self.entropy.train_fraction,
            checkpoints: self.entropy.checkpoints,
            window: self.entropy.window,
            delta: self.entropy.delta,
            scale: self.entropy.scale,
            bins_per_dim: self.entropy.bins_per_dim,
            // Tied to the scenario seed so a full rerun is bit-identical.
            seed: self.scenario.rng_seed ^ 0x5347_4553_5449_4d41,
        }
    }

    /// Paper-style defaults: 70 MHz chirp, 16 raised-cosine subbands,
    /// 16 levels, rate 0.3.
    pub fn default_config() -> Self {
        Self {
            chirp: ChirpSection {
                bandwidth_hz: 70e6,
                symbol_duration_s: 17.1875e-6,
                sample_rate_hz: 140e6,
            },
            scenario: ScenarioSection {
                num_taps: 8,
                tap_power_profile: None,
                reciprocity_coeff: 0.99,
                eve_correlation: 0.5,
                snr_db: 25.0,
                dynamic: true,
                rng_seed: 1,
            },
            filterbank: FilterbankSection {
                num_filters: 16,
                rolloff: 0.25,
                prototype_taps: 129,
            },
            quant: QuantSection {
                levels: 16,
                domain: QuantDomain::Decibel,
            },
            code: CodeSection {
                rate: 0.3,
                design_param: 0.1,
                block_length: None,
            },
            entropy: EntropySection::default(),
            pipeline: PipelineSection::default(),
            paths: PathsSection::default(),
        }
    }
}
