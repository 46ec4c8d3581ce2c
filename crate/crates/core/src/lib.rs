//! Secret-key generation (SKG) from reciprocal wireless channel measurements.
//!
//! The crate implements the full chain: chirp sounding over a simulated
//! multipath channel, filterbank power extraction, Gray-coded quantization,
//! syndrome-based Slepian-Wolf reconciliation with polar codes, conditional
//! min-entropy estimation, and SHA-256 privacy amplification, plus the
//! one-time-pad security-challenge tooling built on top of the distilled keys.
//!
//! Signal-processing and decoding kernels are generic over the scalar type
//! (`f32`/`f64`) through the [`Real`] trait; concrete aliases live at the
//! crate root.

pub mod amplify;
pub mod challenge;
pub mod dataio;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod filterbank;
pub mod quantize;
pub mod reconcile;
pub mod rng;
pub mod scalar;
pub mod waveform;

pub use error::{Error, Result};
pub use scalar::Real;

use serde::{Deserialize, Serialize};

pub use num_complex::Complex;

/// Complex baseband sample in storage precision (interleaved `f32` on disk).
pub type SampleC32 = Complex<f32>;
/// Complex baseband sample in processing precision.
pub type SampleC64 = Complex<f64>;

/// Single-precision received frame, the storage representation.
pub type Frame32 = waveform::IQFrame<f32>;
/// Double-precision received frame, the default processing representation.
pub type Frame64 = waveform::IQFrame<f64>;

/// Single-precision subband power vector.
pub type Powers32 = filterbank::PowerVector<f32>;
/// Double-precision subband power vector.
pub type Powers64 = filterbank::PowerVector<f64>;

/// Protocol participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Alice,
    Bob,
    Eve,
}

impl Node {
    /// Stable on-disk identifier.
    pub fn id(self) -> u8 {
        match self {
            Node::Alice => 0,
            Node::Bob => 1,
            Node::Eve => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Node::Alice),
            1 => Ok(Node::Bob),
            2 => Ok(Node::Eve),
            other => Err(Error::Format(format!("unknown node id {other}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Node::Alice => "alice",
            Node::Bob => "bob",
            Node::Eve => "eve",
        }
    }
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}
