//! Error type shared across the key-generation chain.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 8], found: [u8; 8] },

    #[error("unsupported format version {found}, expected {expected}")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("truncated payload: needed {needed} bytes, got {got}")]
    Truncated { needed: u64, got: u64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("no key can be distilled: entropy budget per bit is {0}")]
    UnusableEntropy(f64),

    #[error("insufficient reconciled material: needed {needed_bits} bits, had {available_bits}")]
    Exhausted {
        needed_bits: usize,
        available_bits: usize,
    },

    #[error("submission parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
