//! Subband decomposition of received frames with a raised-cosine filter bank.
//!
//! The bank holds `K` complex FIR filters `g_k[n] = g[n]·exp(j2πf_k·t_n)`
//! obtained by modulating one real prototype `g` to the center frequencies
//!
//! ```text
//! f_k = -B(K - 2k + 1) / (2K),   k = 1..K
//! ```
//!
//! which tile `[-B/2, +B/2]` symmetrically around DC with spacing `B/K`.
//! The prototype is a spectral raised cosine of (Nyquist) bandwidth `B/K`,
//! truncated, Hamming-windowed, and normalized to unit DC gain. Each frame is
//! reduced to the vector of time-averaged powers at the filter outputs.
//!
//! A Welch periodogram utility is included for spectral diagnostics.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::waveform::IQFrame;
use crate::Node;
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterbankConfig {
    /// Number of subbands K (>= 2).
    pub num_filters: usize,
    /// Raised-cosine roll-off in [0,1].
    pub rolloff: f64,
    /// Prototype FIR length in taps.
    pub prototype_taps: usize,
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
}

impl FilterbankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_filters < 2 {
            return Err(Error::Config(format!(
                "num_filters must be >= 2, got {}",
                self.num_filters
            )));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::Config(format!(
                "rolloff must lie in [0,1], got {}",
                self.rolloff
            )));
        }
        if self.prototype_taps == 0 {
            return Err(Error::Config("prototype_taps must be positive".into()));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::Config("bandwidth_hz must be positive".into()));
        }
        if self.sample_rate_hz < self.bandwidth_hz {
            return Err(Error::Config(format!(
                "sample_rate_hz ({}) must be >= bandwidth_hz ({})",
                self.sample_rate_hz, self.bandwidth_hz
            )));
        }
        Ok(())
    }

    /// Subband width `B/K` in Hz.
    pub fn subband_width_hz(&self) -> f64 {
        self.bandwidth_hz / self.num_filters as f64
    }

    /// Center frequencies `f_k`, k = 1..K, strictly increasing, symmetric
    /// about 0.
    pub fn center_frequencies(&self) -> Vec<f64> {
        let k_total = self.num_filters as f64;
        (1..=self.num_filters)
            .map(|k| -self.bandwidth_hz * (k_total - 2.0 * k as f64 + 1.0) / (2.0 * k_total))
            .collect()
    }
}

/// K time-averaged subband powers for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector<R: Real> {
    pub node: Node,
    pub frame_index: u64,
    pub powers: Vec<R>,
}

/// Immutable bank of K modulated FIR filters.
#[derive(Debug, Clone)]
pub struct Filterbank<R: Real> {
    cfg: FilterbankConfig,
    filters: Vec<Vec<Complex<R>>>,
}

/// Raised-cosine impulse response (frequency-domain raised cosine) sampled at
/// `fs`, Nyquist bandwidth `band_hz`, with singular points patched.
fn raised_cosine_prototype(len: usize, rolloff: f64, band_hz: f64, fs: f64) -> Vec<f64> {
    let ts = 1.0 / band_hz; // symbol period of the subband pulse
    let center = (len - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let t = (n as f64 - center) / fs;
            let x = t / ts;
            let sinc = if x == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            };
            let denom = 1.0 - (2.0 * rolloff * x).powi(2);
            if denom.abs() < 1e-9 {
                // t = +-Ts/(2β): limit of the raised-cosine expression.
                std::f64::consts::FRAC_PI_4 * (std::f64::consts::FRAC_PI_2 / rolloff).sin()
                    / (std::f64::consts::FRAC_PI_2 / rolloff)
            } else {
                sinc * (std::f64::consts::PI * rolloff * x).cos() / denom
            }
        })
        .collect();

    // Hamming window to control truncation sidelobes.
    for (n, tap) in taps.iter_mut().enumerate() {
        let w = 0.54
            - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos();
        *tap *= w;
    }
    let dc: f64 = taps.iter().sum();
    for tap in taps.iter_mut() {
        *tap /= dc;
    }
    taps
}

/// Build the K complex FIR filters of the bank.
pub fn build_filterbank<R: Real>(cfg: &FilterbankConfig) -> Result<Filterbank<R>> {
    cfg.validate()?;
    let proto = raised_cosine_prototype(
        cfg.prototype_taps,
        cfg.rolloff,
        cfg.subband_width_hz(),
        cfg.sample_rate_hz,
    );
    let center = (cfg.prototype_taps - 1) as f64 / 2.0;
    let filters = cfg
        .center_frequencies()
        .iter()
        .map(|&fk| {
            proto
                .iter()
                .enumerate()
                .map(|(n, &g)| {
                    let t = (n as f64 - center) / cfg.sample_rate_hz;
                    let phase = 2.0 * std::f64::consts::PI * fk * t;
                    Complex::new(
                        R::from_f64_lossy(g * phase.cos()),
                        R::from_f64_lossy(g * phase.sin()),
                    )
                })
                .collect()
        })
        .collect();
    Ok(Filterbank {
        cfg: cfg.clone(),
        filters,
    })
}

impl<R: Real> Filterbank<R> {
    pub fn new(cfg: &FilterbankConfig) -> Result<Self> {
        build_filterbank(cfg)
    }

    pub fn config(&self) -> &FilterbankConfig {
        &self.cfg
    }

    pub fn num_filters(&self) -> usize {
        self.filters.len()
    }

    pub fn impulse_responses(&self) -> &[Vec<Complex<R>>] {
        &self.filters
    }

    /// Prepare an extractor for frames of the given length (precomputes the
    /// filter spectra and FFT plans; shareable across threads afterwards).
    pub fn extractor(&self, frame_len: usize) -> Result<PowerExtractor<R>> {
        PowerExtractor::new(self, frame_len)
    }
}

/// Frame-length-specialized fast-convolution engine for one bank.
pub struct PowerExtractor<R: Real> {
    frame_len: usize,
    taps_len: usize,
    fft_len: usize,
    fwd: Arc<dyn Fft<R>>,
    inv: Arc<dyn Fft<R>>,
    filter_spectra: Vec<Vec<Complex<R>>>,
}

impl<R: Real> PowerExtractor<R> {
    fn new(bank: &Filterbank<R>, frame_len: usize) -> Result<Self> {
        let taps_len = bank.cfg.prototype_taps;
        if frame_len < taps_len {
            return Err(Error::Input(format!(
                "frame length {frame_len} shorter than prototype filter ({taps_len} taps)"
            )));
        }
        let fft_len = (frame_len + taps_len - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(fft_len);
        let inv = planner.plan_fft_inverse(fft_len);
        let filter_spectra = bank
            .filters
            .iter()
            .map(|taps| {
                let mut buf = vec![Complex::new(R::zero(), R::zero()); fft_len];
                buf[..taps.len()].copy_from_slice(taps);
                fwd.process(&mut buf);
                buf
            })
            .collect();
        Ok(Self {
            frame_len,
            taps_len,
            fft_len,
            fwd,
            inv,
            filter_spectra,
        })
    }

    /// Time-averaged power of each filter output ("same"-length convolution,
    /// centered, edge transients included).
    pub fn extract_power(&self, frame: &IQFrame<R>) -> Result<PowerVector<R>> {
        if frame.samples.len() != self.frame_len {
            return Err(Error::Input(format!(
                "frame length {} does not match extractor ({})",
                frame.samples.len(),
                self.frame_len
            )));
        }
        let mut spectrum = vec![Complex::new(R::zero(), R::zero()); self.fft_len];
        spectrum[..self.frame_len].copy_from_slice(&frame.samples);
        self.fwd.process(&mut spectrum);

        let offset = (self.taps_len - 1) / 2;
        let scale = R::one() / R::from_f64_lossy(self.fft_len as f64);
        let norm = R::from_f64_lossy(1.0 / self.frame_len as f64);
        let powers = self
            .filter_spectra
            .iter()
            .map(|fs| {
                let mut buf: Vec<Complex<R>> =
                    spectrum.iter().zip(fs).map(|(&a, &b)| a * b).collect();
                self.inv.process(&mut buf);
                let mut acc = R::zero();
                for v in &buf[offset..offset + self.frame_len] {
                    acc += v.norm_sqr();
                }
                acc * scale * scale * norm
            })
            .collect();
        Ok(PowerVector {
            node: frame.node,
            frame_index: frame.frame_index,
            powers,
        })
    }
}

/// Reference direct-form "same" convolution power (used to validate the FFT
/// path; O(N·L), test/diagnostic use only).
pub fn extract_power_direct<R: Real>(
    frame: &IQFrame<R>,
    bank: &Filterbank<R>,
) -> Result<PowerVector<R>> {
    let n = frame.samples.len();
    let l = bank.cfg.prototype_taps;
    if n < l {
        return Err(Error::Input(format!(
            "frame length {n} shorter than prototype filter ({l} taps)"
        )));
    }
    let offset = (l - 1) / 2;
    let powers = bank
        .filters
        .iter()
        .map(|taps| {
            let mut acc = R::zero();
            for out_idx in 0..n {
                let full_idx = out_idx + offset;
                let mut v = Complex::new(R::zero(), R::zero());
                let k_lo = full_idx.saturating_sub(n - 1);
                let k_hi = (l - 1).min(full_idx);
                for k in k_lo..=k_hi {
                    v += taps[k] * frame.samples[full_idx - k];
                }
                acc += v.norm_sqr();
            }
            acc / R::from_f64_lossy(n as f64)
        })
        .collect();
    Ok(PowerVector {
        node: frame.node,
        frame_index: frame.frame_index,
        powers,
    })
}

/// Welch power spectral density estimate of one frame.
///
/// Hann-windowed segments of `segment_len` samples overlapping by `overlap`,
/// periodograms averaged and scaled to density (power per Hz). Returns
/// `(frequencies_hz, density)` in fftshifted order (DC centered); frequencies
/// span `[-fs/2, fs/2)`.
pub fn welch_psd<R: Real>(
    samples: &[Complex<R>],
    sample_rate_hz: f64,
    segment_len: usize,
    overlap: usize,
) -> Result<(Vec<f64>, Vec<R>)> {
    if segment_len == 0 || segment_len > samples.len() {
        return Err(Error::Input(format!(
            "segment_len {segment_len} invalid for {} samples",
            samples.len()
        )));
    }
    if overlap >= segment_len {
        return Err(Error::Input(format!(
            "overlap {overlap} must be smaller than segment_len {segment_len}"
        )));
    }
    let window: Vec<f64> = (0..segment_len)
        .map(|n| {
            0.5 * (1.0
                - (2.0 * std::f64::consts::PI * n as f64 / (segment_len - 1).max(1) as f64).cos())
        })
        .collect();
    let win_energy: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(segment_len);

    let step = segment_len - overlap;
    let mut acc = vec![R::zero(); segment_len];
    let mut count = 0usize;
    let mut start = 0usize;
    while start + segment_len <= samples.len() {
        let mut buf: Vec<Complex<R>> = samples[start..start + segment_len]
            .iter()
            .zip(&window)
            .map(|(&s, &w)| s * R::from_f64_lossy(w))
            .collect();
        fft.process(&mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            *a += v.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = R::from_f64_lossy(1.0 / (count as f64 * win_energy * sample_rate_hz));
    let mut density: Vec<R> = acc.into_iter().map(|p| p * scale).collect();
    density.rotate_left(segment_len.div_ceil(2)); // fftshift
    let freqs = (0..segment_len)
        .map(|i| (i as f64 - (segment_len / 2) as f64) * sample_rate_hz / segment_len as f64)
        .collect();
    Ok((freqs, density))
}

/// One CSV row per frame: node, frame_index, then K power columns.
pub fn write_power_csv<R: Real, P: AsRef<Path>>(path: P, vectors: &[PowerVector<R>]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let k = vectors.first().map_or(0, |v| v.powers.len());
    write!(w, "node,frame_index")?;
    for i in 1..=k {
        write!(w, ",p{i}")?;
    }
    writeln!(w)?;
    for v in vectors {
        write!(w, "{},{}", v.node, v.frame_index)?;
        for p in &v.powers {
            write!(w, ",{p}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_power_csv`].
pub fn read_power_csv<R: Real, P: AsRef<Path>>(path: P) -> Result<Vec<PowerVector<R>>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let node = match fields.next() {
            Some("alice") => Node::Alice,
            Some("bob") => Node::Bob,
            Some("eve") => Node::Eve,
            other => {
                return Err(Error::Format(format!(
                    "line {}: bad node column {:?}",
                    lineno + 1,
                    other
                )))
            }
        };
        let frame_index = fields
            .next()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::Format(format!("line {}: bad frame index", lineno + 1)))?;
        let powers = fields
            .map(|s| {
                s.parse::<f64>()
                    .map(R::from_f64_lossy)
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<R>>>()?;
        if powers.is_empty() {
            return Err(Error::Format(format!("line {}: no power columns", lineno + 1)));
        }
        out.push(PowerVector {
            node,
            frame_index,
            powers,
        });
    }
    Ok(out)
}

/// PSD rows as CSV (frequency_hz, density) for plotting.
pub fn write_psd_csv<R: Real, P: AsRef<Path>>(path: P, freqs: &[f64], density: &[R]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "frequency_hz,density")?;
    for (f, d) in freqs.iter().zip(density) {
        writeln!(w, "{f},{d}")?;
    }
    w.flush()?;
    Ok(())
}
