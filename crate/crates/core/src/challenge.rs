//! Security-challenge bundles: one-time-pad ciphertexts plus the
//! eavesdropper's full evidence.
//!
//! A bundle holds exactly 20 entries (4 propagation/mobility scenarios × 5
//! eavesdropper positions). Each entry carries a 256-bit ciphertext
//! (`plaintext XOR key`), references to the evidence files (Eve's time-domain
//! frames and Alice's public syndromes) with SHA-256 content hashes, the
//! starting frame index of the hashed input sequence, and the estimated
//! per-bit conditional min-entropy. Keys themselves never enter the bundle.
//!
//! An attack submission claims plaintexts for any subset of entries; the
//! organizer scores it against the withheld plaintext store.

use crate::amplify::{KeyMaterial, KEY_BYTES};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

/// 4 scenarios × 5 eavesdropper positions.
pub const CHALLENGE_ENTRIES: usize = 20;
pub const BUNDLE_MANIFEST: &str = "manifest.toml";

/// Evidence metadata for one challenge entry (paths relative to bundle root).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub scenario: String,
    pub eve_position: String,
    pub eve_correlation: f64,
    pub eve_frames_file: String,
    pub syndrome_file: String,
    pub start_frame_index: u64,
    pub cme_per_bit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeEntry {
    pub id: usize,
    pub scenario: String,
    pub eve_position: String,
    pub eve_correlation: f64,
    pub ciphertext_hex: String,
    pub eve_frames_file: String,
    pub eve_frames_sha256: String,
    pub syndrome_file: String,
    pub syndrome_sha256: String,
    pub start_frame_index: u64,
    pub cme_per_bit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeBundle {
    pub version: u32,
    #[serde(rename = "entry")]
    pub entries: Vec<ChallengeEntry>,
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn from_hex_256(hex: &str) -> Result<[u8; KEY_BYTES]> {
    if hex.len() != KEY_BYTES * 2 || !hex.is_ascii() {
        return Err(Error::Parse(format!(
            "expected {} hex chars, got {:?}",
            KEY_BYTES * 2,
            hex.len()
        )));
    }
    let mut out = [0u8; KEY_BYTES];
    for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
        let s = std::str::from_utf8(chunk).map_err(|_| Error::Parse("bad hex".into()))?;
        out[i] = u8::from_str_radix(s, 16).map_err(|e| Error::Parse(format!("bad hex: {e}")))?;
    }
    Ok(out)
}

/// XOR 20 plaintext blocks with 20 distinct keys into a bundle skeleton.
///
/// Evidence hashes are filled later by [`seal_bundle`] once the referenced
/// files exist.
pub fn make_challenge(
    keys: &[KeyMaterial],
    plaintexts: &[[u8; KEY_BYTES]],
    evidence: &[EvidenceRef],
) -> Result<ChallengeBundle> {
    if keys.len() != CHALLENGE_ENTRIES
        || plaintexts.len() != CHALLENGE_ENTRIES
        || evidence.len() != CHALLENGE_ENTRIES
    {
        return Err(Error::Input(format!(
            "challenge needs exactly {CHALLENGE_ENTRIES} keys/plaintexts/evidence entries, got {}/{}/{}",
            keys.len(),
            plaintexts.len(),
            evidence.len()
        )));
    }
    for (i, a) in keys.iter().enumerate() {
        for b in keys.iter().skip(i + 1) {
            if a.key == b.key {
                return Err(Error::Input(format!(
                    "keys for '{}' and '{}' are identical; one-time-pad keys must be distinct",
                    a.scenario, b.scenario
                )));
            }
        }
    }
    let entries = keys
        .iter()
        .zip(plaintexts)
        .zip(evidence)
        .enumerate()
        .map(|(id, ((key, plaintext), ev))| {
            let mut ct = [0u8; KEY_BYTES];
            for (c, (p, k)) in ct.iter_mut().zip(plaintext.iter().zip(&key.key)) {
                *c = p ^ k;
            }
            ChallengeEntry {
                id,
                scenario: ev.scenario.clone(),
                eve_position: ev.eve_position.clone(),
                eve_correlation: ev.eve_correlation,
                ciphertext_hex: to_hex(&ct),
                eve_frames_file: ev.eve_frames_file.clone(),
                eve_frames_sha256: String::new(),
                syndrome_file: ev.syndrome_file.clone(),
                syndrome_sha256: String::new(),
                start_frame_index: ev.start_frame_index,
                cme_per_bit: ev.cme_per_bit,
            }
        })
        .collect();
    Ok(ChallengeBundle {
        version: 1,
        entries,
    })
}

fn file_sha256(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(to_hex(&hasher.finalize()))
}

/// Hash the referenced evidence files (must exist under `bundle_dir`) and
/// write the manifest.
pub fn seal_bundle(bundle: &mut ChallengeBundle, bundle_dir: &Path) -> Result<()> {
    for entry in &mut bundle.entries {
        entry.eve_frames_sha256 = file_sha256(&bundle_dir.join(&entry.eve_frames_file))?;
        entry.syndrome_sha256 = file_sha256(&bundle_dir.join(&entry.syndrome_file))?;
    }
    let text = toml::to_string_pretty(bundle)
        .map_err(|e| Error::Format(format!("bundle manifest: {e}")))?;
    std::fs::write(bundle_dir.join(BUNDLE_MANIFEST), text)?;
    Ok(())
}

/// Load a bundle manifest from a directory.
pub fn read_bundle(bundle_dir: &Path) -> Result<ChallengeBundle> {
    let text = std::fs::read_to_string(bundle_dir.join(BUNDLE_MANIFEST))?;
    let bundle: ChallengeBundle =
        toml::from_str(&text).map_err(|e| Error::Format(format!("bundle manifest: {e}")))?;
    if bundle.entries.len() != CHALLENGE_ENTRIES {
        return Err(Error::Format(format!(
            "bundle holds {} entries, expected {CHALLENGE_ENTRIES}",
            bundle.entries.len()
        )));
    }
    Ok(bundle)
}

/// Recompute evidence hashes and compare against the manifest.
pub fn check_evidence(bundle: &ChallengeBundle, bundle_dir: &Path) -> Result<()> {
    for entry in &bundle.entries {
        let frames = file_sha256(&bundle_dir.join(&entry.eve_frames_file))?;
        if frames != entry.eve_frames_sha256 {
            return Err(Error::Format(format!(
                "evidence hash mismatch for {}",
                entry.eve_frames_file
            )));
        }
        let synd = file_sha256(&bundle_dir.join(&entry.syndrome_file))?;
        if synd != entry.syndrome_sha256 {
            return Err(Error::Format(format!(
                "evidence hash mismatch for {}",
                entry.syndrome_file
            )));
        }
    }
    Ok(())
}

/// Ciphertext of an entry decrypted with a candidate key.
pub fn decrypt_entry(entry: &ChallengeEntry, key: &[u8; KEY_BYTES]) -> Result<[u8; KEY_BYTES]> {
    let ct = from_hex_256(&entry.ciphertext_hex)?;
    let mut pt = [0u8; KEY_BYTES];
    for (p, (c, k)) in pt.iter_mut().zip(ct.iter().zip(key)) {
        *p = c ^ k;
    }
    Ok(pt)
}

/// Per-entry scoring of a (possibly partial) submission.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    /// entry id -> exact plaintext match.
    pub per_entry: BTreeMap<usize, bool>,
    pub correct: usize,
    pub total: usize,
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (id, ok) in &self.per_entry {
            writeln!(f, "entry {id}: {}", if *ok { "MATCH" } else { "no" })?;
        }
        write!(f, "recovered {}/{} plaintext blocks", self.correct, self.total)
    }
}

/// Score claimed plaintexts against the organizer's truth store.
pub fn verify_attempt(
    bundle: &ChallengeBundle,
    claimed: &BTreeMap<usize, [u8; KEY_BYTES]>,
    truth: &[[u8; KEY_BYTES]],
) -> Result<VerifyReport> {
    if truth.len() != bundle.entries.len() {
        return Err(Error::Input(format!(
            "truth store holds {} blocks, bundle has {} entries",
            truth.len(),
            bundle.entries.len()
        )));
    }
    let mut per_entry = BTreeMap::new();
    let mut correct = 0usize;
    for (&id, claim) in claimed {
        if id >= bundle.entries.len() {
            return Err(Error::Parse(format!("submission names unknown entry {id}")));
        }
        let ok = claim == &truth[id];
        if ok {
            correct += 1;
        }
        per_entry.insert(id, ok);
    }
    Ok(VerifyReport {
        per_entry,
        correct,
        total: bundle.entries.len(),
    })
}

/// Parse a submission: one `<entry_id> <64 hex chars>` per line, `#` comments.
pub fn parse_submission(text: &str) -> Result<BTreeMap<usize, [u8; KEY_BYTES]>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id: usize = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: entry id: {e}", lineno + 1)))?;
        let hex = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: missing plaintext hex", lineno + 1)))?;
        if parts.next().is_some() {
            return Err(Error::Parse(format!("line {}: trailing tokens", lineno + 1)));
        }
        let block =
            from_hex_256(hex).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        if out.insert(id, block).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate entry {id}", lineno + 1)));
        }
    }
    Ok(out)
}

/// Default plaintexts: human-recognizable ASCII sentences, 32 bytes each.
pub fn default_plaintexts() -> Vec<[u8; KEY_BYTES]> {
    let sentences: [&str; CHALLENGE_ENTRIES] = [
        "the quick brown fox jumps high",
        "wireless channels hide secrets",
        "reciprocity is the key resource",
        "eavesdroppers sit on shoulders",
        "fading taps forge fresh entropy",
        "syndromes travel in the clear",
        "gray codes soften level errors",
        "polar codes freeze the weakest",
        "hash functions seal the output",
        "one time pads keep no residue",
        "sixteen subbands sample a sweep",
        "chirps sweep from low to high",
        "min entropy bounds the hashing",
        "leakage must be overestimated",
        "static rooms starve the source",
        "dynamic rooms feed the source",
        "correlation decays with space",
        "multipath interference matters",
        "measure twice and distill once",
        "keys differ or the pad breaks",
    ];
    sentences
        .iter()
        .map(|s| {
            let mut block = [b' '; KEY_BYTES];
            let bytes = s.as_bytes();
            block[..bytes.len()].copy_from_slice(bytes);
            block
        })
        .collect()
}
