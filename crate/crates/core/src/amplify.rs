//! Privacy amplification: compress reconciled bits into 256-bit keys.
//!
//! Successfully reconciled blocks are concatenated in frame order until the
//! entropy budget covers 256 bits (`ceil(256 / cme_per_bit)` input bits,
//! truncating the last block), then hashed with SHA-256. Hash input framing
//! is injective: an 8-byte big-endian bit-length prefix followed by the bits
//! packed MSB-first and zero-padded to a byte boundary.
//!
//! Key manifests record everything about a distillation except the key
//! itself; raw key bytes appear only when explicitly revealed.

use crate::error::{Error, Result};
use crate::quantize::{pack_bits_msb_first, BitBlock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const KEY_BITS: usize = 256;
pub const KEY_BYTES: usize = KEY_BITS / 8;

/// One distilled key with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyMaterial {
    pub scenario: String,
    pub start_frame_index: u64,
    /// The exact bit string that was hashed.
    pub input_bits: Vec<u8>,
    /// Margin-reduced per-bit entropy budget used for sizing.
    pub cme_per_bit_effective: f64,
    pub key: [u8; KEY_BYTES],
}

impl KeyMaterial {
    /// First 8 hex characters of the key, safe to print.
    pub fn fingerprint(&self) -> String {
        self.key[..4].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn key_hex(&self) -> String {
        self.key.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Input bits needed to distill a 256-bit key at the given per-bit budget.
pub fn required_input_length(cme_per_bit: f64) -> Result<usize> {
    if !(cme_per_bit > 0.0) || !cme_per_bit.is_finite() {
        return Err(Error::UnusableEntropy(cme_per_bit));
    }
    // Guard absorbs float fuzz without changing exact integer quotients.
    Ok((KEY_BITS as f64 / cme_per_bit - 1e-9).ceil().max(1.0) as usize)
}

pub fn sha256_digest(bytes: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().into()
}

/// SHA-256 over the injectively framed bit string.
fn hash_bits(bits: &[u8]) -> [u8; 32] {
    let mut message = Vec::with_capacity(8 + bits.len().div_ceil(8));
    message.extend_from_slice(&(bits.len() as u64).to_be_bytes());
    message.extend_from_slice(&pack_bits_msb_first(bits));
    sha256_digest(&message)
}

/// Distill one key from successfully reconciled blocks.
///
/// `blocks` must contain only blocks that reconciled exactly; they are
/// consumed in frame order starting at `start_frame_index`.
pub fn distill_key(
    scenario: &str,
    blocks: &[BitBlock],
    start_frame_index: u64,
    cme_per_bit_effective: f64,
) -> Result<KeyMaterial> {
    let needed = required_input_length(cme_per_bit_effective)?;

    let mut usable: Vec<&BitBlock> = blocks
        .iter()
        .filter(|b| b.frame_index >= start_frame_index)
        .collect();
    usable.sort_by_key(|b| b.frame_index);

    let mut input_bits = Vec::with_capacity(needed);
    for block in usable {
        if input_bits.len() >= needed {
            break;
        }
        let take = (needed - input_bits.len()).min(block.len());
        input_bits.extend_from_slice(&block.bits[..take]);
    }
    if input_bits.len() < needed {
        return Err(Error::Exhausted {
            needed_bits: needed,
            available_bits: input_bits.len(),
        });
    }

    let key = hash_bits(&input_bits);
    Ok(KeyMaterial {
        scenario: scenario.to_string(),
        start_frame_index,
        input_bits,
        cme_per_bit_effective,
        key,
    })
}

/// Final secret-key rate in bits per frame:
/// `K·log2(Q)·(1-FER)·Ĥ∞` with `Ĥ∞` the margin-reduced per-bit entropy.
pub fn key_rate(num_filters: usize, levels: u32, fer: f64, cme_per_bit_hat: f64) -> f64 {
    let bits_per_frame = num_filters as f64 * (levels as f64).log2();
    bits_per_frame * (1.0 - fer) * cme_per_bit_hat
}

/// Manifest entry; `key_hex` is present only when written with reveal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyManifestEntry {
    pub scenario: String,
    pub eve_position: String,
    pub eve_correlation: f64,
    pub start_frame_index: u64,
    pub input_bits: usize,
    pub cme_per_bit: f64,
    pub cme_per_bit_effective: f64,
    pub fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_hex: Option<String>,
    /// Relative paths of the evidence files this key corresponds to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eve_frames_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub syndrome_file: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyManifest {
    #[serde(default, rename = "key")]
    pub entries: Vec<KeyManifestEntry>,
}

impl KeyManifest {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("key manifest: {e}")))
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("key manifest: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Decode the raw key of an entry written with reveal.
    pub fn key_bytes(entry: &KeyManifestEntry) -> Result<[u8; KEY_BYTES]> {
        let hex = entry.key_hex.as_ref().ok_or_else(|| {
            Error::Input(format!(
                "manifest entry '{}' does not reveal its key; write the manifest with --reveal",
                entry.scenario
            ))
        })?;
        if hex.len() != KEY_BYTES * 2 {
            return Err(Error::Format(format!(
                "key_hex must be {} hex chars, got {}",
                KEY_BYTES * 2,
                hex.len()
            )));
        }
        let mut out = [0u8; KEY_BYTES];
        for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk).map_err(|_| Error::Format("bad hex".into()))?;
            out[i] =
                u8::from_str_radix(s, 16).map_err(|e| Error::Format(format!("bad hex: {e}")))?;
        }
        Ok(out)
    }
}
