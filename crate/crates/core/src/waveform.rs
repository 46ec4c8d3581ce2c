//! Chirp signaling over a simulated reciprocal multipath channel.
//!
//! Alice and Bob sound the channel with a linear complex chirp
//! `x(t) = (1/T) exp(jπct²)`, `c = B/T`, swept symmetrically over
//! `[-B/2, +B/2]`. Each node observes the chirp through its own tap set plus
//! white complex Gaussian noise. Reciprocity and the eavesdropper's channel
//! similarity are controlled by correlation coefficients applied at the tap
//! level:
//!
//! * `h_B = ρ·h_A + √(1−ρ²)·g`, with `ρ` the Alice-Bob reciprocity,
//! * `h_E = ρ_E·h_B + √(1−ρ_E²)·g'`, with `ρ_E` the Bob-Eve correlation.
//!
//! Static scenarios draw the tap triple once and reuse it for every frame
//! (only noise varies); dynamic scenarios redraw per frame.

use crate::error::{Error, Result};
use crate::rng::{derive_rng, Stream};
use crate::scalar::Real;
use crate::Node;
use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Chirp waveform parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    pub bandwidth_hz: f64,
    pub symbol_duration_s: f64,
    pub sample_rate_hz: f64,
    /// Must equal `round(symbol_duration_s * sample_rate_hz)`.
    pub samples_per_frame: usize,
}

impl ChirpConfig {
    /// Build a config, deriving `samples_per_frame` from duration and rate.
    pub fn new(bandwidth_hz: f64, symbol_duration_s: f64, sample_rate_hz: f64) -> Result<Self> {
        let cfg = Self {
            bandwidth_hz,
            symbol_duration_s,
            sample_rate_hz,
            samples_per_frame: (symbol_duration_s * sample_rate_hz).round() as usize,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Chirp rate `c = B/T` in Hz/s.
    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth_hz / self.symbol_duration_s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::Config(format!(
                "bandwidth_hz must be finite and positive, got {}",
                self.bandwidth_hz
            )));
        }
        if !(self.symbol_duration_s.is_finite() && self.symbol_duration_s > 0.0) {
            return Err(Error::Config(format!(
                "symbol_duration_s must be finite and positive, got {}",
                self.symbol_duration_s
            )));
        }
        // Complex baseband: the sample rate only needs to cover the swept
        // bandwidth, not twice it.
        if self.sample_rate_hz < self.bandwidth_hz {
            return Err(Error::Config(format!(
                "sample_rate_hz ({}) must be >= bandwidth_hz ({})",
                self.sample_rate_hz, self.bandwidth_hz
            )));
        }
        let expected = (self.symbol_duration_s * self.sample_rate_hz).round() as usize;
        if self.samples_per_frame != expected || expected == 0 {
            return Err(Error::Config(format!(
                "samples_per_frame must equal round(T*fs) = {expected}, got {}",
                self.samples_per_frame
            )));
        }
        let c = self.chirp_rate();
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("chirp rate {c} is not positive/finite")));
        }
        Ok(())
    }
}

/// Multipath channel and eavesdropper geometry knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScenario {
    pub num_taps: usize,
    /// Linear per-tap powers; must sum to 1.
    pub tap_power_profile: Vec<f64>,
    /// Alice-Bob channel correlation in [0,1]; 1 = perfectly reciprocal.
    pub reciprocity_coeff: f64,
    /// Bob-Eve channel correlation in [0,1].
    pub eve_correlation: f64,
    /// Per-sample SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    /// Fresh channel draw per frame (true) vs. fixed channel + noise only.
    pub dynamic: bool,
    pub rng_seed: u64,
}

impl ChannelScenario {
    pub fn validate(&self) -> Result<()> {
        if self.num_taps == 0 || self.tap_power_profile.len() != self.num_taps {
            return Err(Error::Config(format!(
                "tap_power_profile length {} must equal num_taps {} (> 0)",
                self.tap_power_profile.len(),
                self.num_taps
            )));
        }
        if self.tap_power_profile.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return Err(Error::Config("tap powers must be finite and nonnegative".into()));
        }
        let sum: f64 = self.tap_power_profile.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "tap_power_profile must sum to 1 (got {sum})"
            )));
        }
        for (name, v) in [
            ("reciprocity_coeff", self.reciprocity_coeff),
            ("eve_correlation", self.eve_correlation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db must not be NaN".into()));
        }
        Ok(())
    }

    /// Uniform power-delay profile over `num_taps` taps.
    pub fn uniform_profile(num_taps: usize) -> Vec<f64> {
        vec![1.0 / num_taps as f64; num_taps]
    }

    /// Exponentially decaying profile, normalized to unit total power.
    pub fn exponential_profile(num_taps: usize, decay: f64) -> Vec<f64> {
        let raw: Vec<f64> = (0..num_taps).map(|i| (-decay * i as f64).exp()).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / sum).collect()
    }
}

/// One complex-baseband received observation.
#[derive(Debug, Clone, PartialEq)]
pub struct IQFrame<R: Real> {
    pub node: Node,
    pub frame_index: u64,
    pub samples: Vec<Complex<R>>,
}

/// Tap sets for the three nodes at one frame instant.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeChannels<R: Real> {
    pub alice: Vec<Complex<R>>,
    pub bob: Vec<Complex<R>>,
    pub eve: Vec<Complex<R>>,
}

/// Baseband chirp samples `x[n] = (1/T)·exp(jπc·t_n²)`, `t_n = n/fs − T/2`.
///
/// The time axis is centered so the sweep covers `[-B/2, +B/2]`
/// symmetrically around DC.
pub fn generate_chirp<R: Real>(cfg: &ChirpConfig) -> Result<Vec<Complex<R>>> {
    cfg.validate()?;
    let c = cfg.chirp_rate();
    let amp = 1.0 / cfg.symbol_duration_s;
    let dt = 1.0 / cfg.sample_rate_hz;
    let half = cfg.symbol_duration_s / 2.0;
    Ok((0..cfg.samples_per_frame)
        .map(|n| {
            let t = n as f64 * dt - half;
            let phase = std::f64::consts::PI * c * t * t;
            Complex::new(
                R::from_f64_lossy(amp * phase.cos()),
                R::from_f64_lossy(amp * phase.sin()),
            )
        })
        .collect())
}

fn draw_taps<R: Real, G: Rng + ?Sized>(profile: &[f64], rng: &mut G) -> Vec<Complex<R>> {
    profile
        .iter()
        .map(|&p| {
            let s = R::from_f64_lossy((p / 2.0).sqrt());
            Complex::new(R::standard_normal(rng) * s, R::standard_normal(rng) * s)
        })
        .collect()
}

/// Correlated tap draws for Alice, Bob, and Eve.
///
/// Deterministic given `(scenario.rng_seed, frame_index)`; static scenarios
/// ignore `frame_index` for the channel (but not for noise, which is drawn in
/// [`synthesize_frame`]).
pub fn draw_channels<R: Real>(scn: &ChannelScenario, frame_index: u64) -> Result<NodeChannels<R>> {
    scn.validate()?;
    let channel_index = if scn.dynamic { frame_index } else { 0 };
    let mut rng = derive_rng(scn.rng_seed, Stream::Channel, channel_index);

    let alice = draw_taps::<R, _>(&scn.tap_power_profile, &mut rng);
    let g_bob = draw_taps::<R, _>(&scn.tap_power_profile, &mut rng);
    let g_eve = draw_taps::<R, _>(&scn.tap_power_profile, &mut rng);

    let rho = R::from_f64_lossy(scn.reciprocity_coeff);
    let rho_c = R::from_f64_lossy((1.0 - scn.reciprocity_coeff * scn.reciprocity_coeff).sqrt());
    let bob: Vec<Complex<R>> = alice
        .iter()
        .zip(&g_bob)
        .map(|(&a, &g)| a * rho + g * rho_c)
        .collect();

    let rho_e = R::from_f64_lossy(scn.eve_correlation);
    let rho_e_c = R::from_f64_lossy((1.0 - scn.eve_correlation * scn.eve_correlation).sqrt());
    let eve: Vec<Complex<R>> = bob
        .iter()
        .zip(&g_eve)
        .map(|(&b, &g)| b * rho_e + g * rho_e_c)
        .collect();

    Ok(NodeChannels { alice, bob, eve })
}

/// Convolve and keep the first `x.len()` outputs (channel tail discarded so
/// frame sizes stay uniform downstream).
fn convolve_keep_head<R: Real>(x: &[Complex<R>], taps: &[Complex<R>]) -> Vec<Complex<R>> {
    let mut out = vec![Complex::new(R::zero(), R::zero()); x.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let kmax = taps.len().min(n + 1);
        let mut acc = Complex::new(R::zero(), R::zero());
        for (k, &h) in taps.iter().enumerate().take(kmax) {
            acc += h * x[n - k];
        }
        *o = acc;
    }
    out
}

fn add_noise<R: Real, G: Rng + ?Sized>(samples: &mut [Complex<R>], snr_db: f64, rng: &mut G) {
    if snr_db.is_infinite() {
        return;
    }
    let sig_power: f64 = samples
        .iter()
        .map(|s| s.norm_sqr().to_f64_lossy())
        .sum::<f64>()
        / samples.len() as f64;
    // SNR = mean received signal power / noise variance per complex sample.
    let noise_var = sig_power / 10f64.powf(snr_db / 10.0);
    let s = R::from_f64_lossy((noise_var / 2.0).sqrt());
    for v in samples.iter_mut() {
        *v += Complex::new(R::standard_normal(rng) * s, R::standard_normal(rng) * s);
    }
}

/// Synthesize the received frames at all three nodes for one sounding.
pub fn synthesize_frame<R: Real>(
    cfg: &ChirpConfig,
    scn: &ChannelScenario,
    frame_index: u64,
) -> Result<(IQFrame<R>, IQFrame<R>, IQFrame<R>)> {
    let chirp = generate_chirp::<R>(cfg)?;
    synthesize_frame_with_chirp(&chirp, scn, frame_index)
}

/// Same as [`synthesize_frame`] but reusing a precomputed chirp.
pub fn synthesize_frame_with_chirp<R: Real>(
    chirp: &[Complex<R>],
    scn: &ChannelScenario,
    frame_index: u64,
) -> Result<(IQFrame<R>, IQFrame<R>, IQFrame<R>)> {
    let ch = draw_channels::<R>(scn, frame_index)?;

    let make = |node: Node, taps: &[Complex<R>], stream: Stream| {
        let mut samples = convolve_keep_head(chirp, taps);
        let mut rng = derive_rng(scn.rng_seed, stream, frame_index);
        add_noise(&mut samples, scn.snr_db, &mut rng);
        IQFrame {
            node,
            frame_index,
            samples,
        }
    };

    Ok((
        make(Node::Alice, &ch.alice, Stream::NoiseAlice),
        make(Node::Bob, &ch.bob, Stream::NoiseBob),
        make(Node::Eve, &ch.eve, Stream::NoiseEve),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn paper_chirp() -> ChirpConfig {
        ChirpConfig::new(70e6, 17.1875e-6, 140e6).unwrap()
    }

    fn scenario(seed: u64) -> ChannelScenario {
        ChannelScenario {
            num_taps: 3,
            tap_power_profile: vec![0.5, 0.3, 0.2],
            reciprocity_coeff: 0.9,
            eve_correlation: 0.5,
            snr_db: 20.0,
            dynamic: true,
            rng_seed: seed,
        }
    }

    #[test]
    fn chirp_length_and_sweep() {
        let cfg = paper_chirp();
        assert_eq!(cfg.samples_per_frame, 2406);
        // Instantaneous frequency c*t at the frame edges covers +-B/2.
        let c = cfg.chirp_rate();
        let t0 = -cfg.symbol_duration_s / 2.0;
        let t1 = (cfg.samples_per_frame - 1) as f64 / cfg.sample_rate_hz + t0;
        assert_abs_diff_eq!(c * t0, -35e6, epsilon = 40.0 * c / cfg.sample_rate_hz);
        assert_abs_diff_eq!(c * t1, 35e6, epsilon = 40.0 * c / cfg.sample_rate_hz);
    }

    #[test]
    fn chirp_phase_zero_at_time_origin() {
        // Pick T*fs even so t_n = 0 lands exactly on a sample.
        let cfg = ChirpConfig::new(10e6, 20e-6, 20e6).unwrap();
        let x = generate_chirp::<f64>(&cfg).unwrap();
        let n0 = cfg.samples_per_frame / 2;
        let inv_t = 1.0 / cfg.symbol_duration_s;
        assert_abs_diff_eq!(x[n0].re, inv_t, epsilon = 1e-6 * inv_t);
        assert_abs_diff_eq!(x[n0].im, 0.0, epsilon = 1e-6 * inv_t);
    }

    #[test]
    fn chirp_constant_modulus() {
        let cfg = paper_chirp();
        let x = generate_chirp::<f64>(&cfg).unwrap();
        for s in &x {
            assert_abs_diff_eq!(s.norm() * cfg.symbol_duration_s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_undersampled_config() {
        assert!(ChirpConfig::new(70e6, 17.1875e-6, 60e6).is_err());
    }

    #[test]
    fn perfect_reciprocity_gives_identical_taps() {
        let mut scn = scenario(11);
        scn.reciprocity_coeff = 1.0;
        let ch = draw_channels::<f64>(&scn, 0).unwrap();
        assert_eq!(ch.alice, ch.bob);
    }

    #[test]
    fn static_channel_is_frame_invariant() {
        let mut scn = scenario(12);
        scn.dynamic = false;
        let a = draw_channels::<f64>(&scn, 0).unwrap();
        let b = draw_channels::<f64>(&scn, 99).unwrap();
        assert_eq!(a.alice, b.alice);
    }

    #[test]
    fn uncorrelated_eve_has_near_zero_correlation() {
        let mut scn = scenario(13);
        scn.eve_correlation = 0.0;
        let mut num = Complex::new(0.0f64, 0.0);
        let (mut pb, mut pe) = (0.0f64, 0.0f64);
        for frame in 0..10_000u64 {
            let ch = draw_channels::<f64>(&scn, frame).unwrap();
            for (b, e) in ch.bob.iter().zip(&ch.eve) {
                num += b * e.conj();
                pb += b.norm_sqr();
                pe += e.norm_sqr();
            }
        }
        let corr = num.norm() / (pb.sqrt() * pe.sqrt());
        assert!(corr < 0.03, "correlation {corr} should be ~0");
    }

    #[test]
    fn single_tap_no_noise_is_scaled_chirp() {
        let cfg = ChirpConfig::new(10e6, 10e-6, 20e6).unwrap();
        let mut scn = scenario(14);
        scn.num_taps = 1;
        scn.tap_power_profile = vec![1.0];
        scn.snr_db = f64::INFINITY;
        let chirp = generate_chirp::<f64>(&cfg).unwrap();
        let (a, _, _) = synthesize_frame::<f64>(&cfg, &scn, 0).unwrap();
        let tap = draw_channels::<f64>(&scn, 0).unwrap().alice[0];
        for (y, x) in a.samples.iter().zip(&chirp) {
            let expect = x * tap;
            assert_abs_diff_eq!(y.re, expect.re, epsilon = 1e-9 * expect.norm().max(1.0));
            assert_abs_diff_eq!(y.im, expect.im, epsilon = 1e-9 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn noiseless_reciprocal_frames_are_identical() {
        let cfg = ChirpConfig::new(10e6, 10e-6, 20e6).unwrap();
        let mut scn = scenario(15);
        scn.reciprocity_coeff = 1.0;
        scn.snr_db = f64::INFINITY;
        let (a, b, _) = synthesize_frame::<f64>(&cfg, &scn, 7).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn measured_snr_matches_request() {
        let cfg = ChirpConfig::new(10e6, 5e-6, 20e6).unwrap();
        let mut scn = scenario(16);
        scn.snr_db = 10.0;
        let chirp = generate_chirp::<f64>(&cfg).unwrap();
        let (mut sig, mut noise) = (0.0f64, 0.0f64);
        for frame in 0..1000u64 {
            let ch = draw_channels::<f64>(&scn, frame).unwrap();
            let clean = convolve_keep_head(&chirp, &ch.bob);
            let (_, b, _) = synthesize_frame::<f64>(&cfg, &scn, frame).unwrap();
            for (y, x) in b.samples.iter().zip(&clean) {
                sig += x.norm_sqr();
                noise += (y - x).norm_sqr();
            }
        }
        let snr_db = 10.0 * (sig / noise).log10();
        assert!((snr_db - 10.0).abs() < 0.5, "measured {snr_db} dB");
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = ChirpConfig::new(10e6, 5e-6, 20e6).unwrap();
        let scn = scenario(17);
        let (a1, b1, e1) = synthesize_frame::<f64>(&cfg, &scn, 5).unwrap();
        let (a2, b2, e2) = synthesize_frame::<f64>(&cfg, &scn, 5).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(e1, e2);
    }
}
