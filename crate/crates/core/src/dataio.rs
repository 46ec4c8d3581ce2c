//! Bit-exact binary persistence for frames, bit blocks, and syndromes.
//!
//! Simulated and externally captured data flow through identical files, so
//! every field is fixed little-endian regardless of host.
//!
//! `.iqf` frame store:
//!
//! ```text
//! [8B magic "SKGIQF01"][u16 version][u8 node][u32 frame_count]
//! [u32 samples_per_frame][f64 bandwidth_hz][f64 sample_rate_hz]
//! [payload: frame_count × samples_per_frame × (f32 re, f32 im)]
//! ```
//!
//! `.bits` block store (`.synd` is identical with magic "SKGSYN01"):
//!
//! ```text
//! [8B magic "SKGBITS1"][u32 block_count][u32 bits_per_block]
//! [payload: per block, bits packed MSB-first, zero-padded to a byte boundary]
//! ```
//!
//! Blocks are padded individually (bits_per_block need not be byte-aligned),
//! so block i starts at byte `i * ceil(bits_per_block/8)` of the payload.
//! Frame indices are positional: entry i is frame i.

use crate::error::{Error, Result};
use crate::quantize::{pack_bits_msb_first, unpack_bits_msb_first, BitBlock};
use crate::reconcile::Syndrome;
use crate::scalar::Real;
use crate::waveform::IQFrame;
use crate::Node;
use num_complex::Complex;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

pub const FRAME_MAGIC: [u8; 8] = *b"SKGIQF01";
pub const BITS_MAGIC: [u8; 8] = *b"SKGBITS1";
pub const SYNDROME_MAGIC: [u8; 8] = *b"SKGSYN01";
pub const FRAME_FORMAT_VERSION: u16 = 1;

/// Header of an `.iqf` file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStoreHeader {
    pub node: Node,
    pub frame_count: u32,
    pub samples_per_frame: u32,
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], needed: u64) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated { needed, got: 0 }
        } else {
            Error::Io(e)
        }
    })
}

/// Incremental `.iqf` writer; the frame count is patched into the header on
/// [`FrameStoreWriter::finish`], so captures larger than memory stream
/// straight to disk.
pub struct FrameStoreWriter {
    writer: BufWriter<std::fs::File>,
    node: Node,
    samples_per_frame: Option<usize>,
    count: u32,
}

impl FrameStoreWriter {
    pub fn create<P: AsRef<Path>>(
        path: P,
        node: Node,
        bandwidth_hz: f64,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let mut writer = BufWriter::new(std::fs::File::create(path)?);
        writer.write_all(&FRAME_MAGIC)?;
        writer.write_all(&FRAME_FORMAT_VERSION.to_le_bytes())?;
        writer.write_all(&[node.id()])?;
        writer.write_all(&0u32.to_le_bytes())?; // frame_count, patched on finish
        writer.write_all(&0u32.to_le_bytes())?; // samples_per_frame, patched on finish
        writer.write_all(&bandwidth_hz.to_le_bytes())?;
        writer.write_all(&sample_rate_hz.to_le_bytes())?;
        Ok(Self {
            writer,
            node,
            samples_per_frame: None,
            count: 0,
        })
    }

    pub fn append<R: Real>(&mut self, frame: &IQFrame<R>) -> Result<()> {
        if frame.node != self.node {
            return Err(Error::Format(format!(
                "mixed nodes in one store: {} vs {}",
                frame.node, self.node
            )));
        }
        match self.samples_per_frame {
            None => self.samples_per_frame = Some(frame.samples.len()),
            Some(len) if len != frame.samples.len() => {
                return Err(Error::Format(format!(
                    "heterogeneous frame lengths: {} vs {len}",
                    frame.samples.len()
                )));
            }
            _ => {}
        }
        for s in &frame.samples {
            self.writer
                .write_all(&(s.re.to_f64_lossy() as f32).to_le_bytes())?;
            self.writer
                .write_all(&(s.im.to_f64_lossy() as f32).to_le_bytes())?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        let mut file = self.writer.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(11))?; // magic + version + node
        file.write_all(&self.count.to_le_bytes())?;
        file.write_all(&(self.samples_per_frame.unwrap_or(0) as u32).to_le_bytes())?;
        file.sync_data()?;
        Ok(())
    }
}

/// Streaming `.iqf` reader.
pub struct FrameStoreReader<R: Real> {
    header: FrameStoreHeader,
    reader: BufReader<std::fs::File>,
    next_index: u32,
    _marker: std::marker::PhantomData<R>,
}

impl<R: Real> FrameStoreReader<R> {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(&path)?;
        let file_len = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let header = read_header(&mut reader)?;
        let header_len = 8 + 2 + 1 + 4 + 4 + 8 + 8;
        let needed =
            header_len as u64 + header.frame_count as u64 * header.samples_per_frame as u64 * 8;
        if file_len != needed {
            return Err(Error::Truncated {
                needed: needed - header_len as u64,
                got: file_len.saturating_sub(header_len as u64),
            });
        }
        Ok(Self {
            header,
            reader,
            next_index: 0,
            _marker: std::marker::PhantomData,
        })
    }

    pub fn header(&self) -> &FrameStoreHeader {
        &self.header
    }
}

impl<R: Real> Iterator for FrameStoreReader<R> {
    type Item = Result<IQFrame<R>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index >= self.header.frame_count {
            return None;
        }
        let spf = self.header.samples_per_frame as usize;
        let mut bytes = vec![0u8; spf * 8];
        if let Err(e) = read_exact_or_truncated(&mut self.reader, &mut bytes, (spf * 8) as u64) {
            self.next_index = self.header.frame_count;
            return Some(Err(e));
        }
        let samples = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                Complex::new(R::from_f64_lossy(re as f64), R::from_f64_lossy(im as f64))
            })
            .collect();
        let frame = IQFrame {
            node: self.header.node,
            frame_index: self.next_index as u64,
            samples,
        };
        self.next_index += 1;
        Some(Ok(frame))
    }
}

fn read_header(r: &mut BufReader<std::fs::File>) -> Result<FrameStoreHeader> {
    let mut magic = [0u8; 8];
    read_exact_or_truncated(r, &mut magic, 8)?;
    if magic != FRAME_MAGIC {
        return Err(Error::BadMagic {
            expected: FRAME_MAGIC,
            found: magic,
        });
    }
    let mut u16b = [0u8; 2];
    read_exact_or_truncated(r, &mut u16b, 2)?;
    let version = u16::from_le_bytes(u16b);
    if version != FRAME_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FRAME_FORMAT_VERSION,
            found: version,
        });
    }
    let mut byte = [0u8; 1];
    read_exact_or_truncated(r, &mut byte, 1)?;
    let node = Node::from_id(byte[0])?;
    let mut u32b = [0u8; 4];
    read_exact_or_truncated(r, &mut u32b, 4)?;
    let frame_count = u32::from_le_bytes(u32b);
    read_exact_or_truncated(r, &mut u32b, 4)?;
    let samples_per_frame = u32::from_le_bytes(u32b);
    let mut f64b = [0u8; 8];
    read_exact_or_truncated(r, &mut f64b, 8)?;
    let bandwidth_hz = f64::from_le_bytes(f64b);
    read_exact_or_truncated(r, &mut f64b, 8)?;
    let sample_rate_hz = f64::from_le_bytes(f64b);
    Ok(FrameStoreHeader {
        node,
        frame_count,
        samples_per_frame,
        bandwidth_hz,
        sample_rate_hz,
    })
}

/// Write frames (all from one node, equal lengths) to an `.iqf` file.
///
/// Samples are stored as interleaved real/imag `f32` little-endian
/// ("complex64"); higher-precision frames are narrowed on write.
pub fn write_frames<R: Real, P: AsRef<Path>>(
    path: P,
    frames: &[IQFrame<R>],
    bandwidth_hz: f64,
    sample_rate_hz: f64,
) -> Result<()> {
    let node = frames.first().map_or(Node::Alice, |f| f.node);
    let mut writer = FrameStoreWriter::create(path, node, bandwidth_hz, sample_rate_hz)?;
    for f in frames {
        writer.append(f)?;
    }
    writer.finish()
}

/// Read a whole `.iqf` file; entry i becomes frame_index i.
pub fn read_frames<R: Real, P: AsRef<Path>>(
    path: P,
) -> Result<(FrameStoreHeader, Vec<IQFrame<R>>)> {
    let reader = FrameStoreReader::<R>::open(path)?;
    let header = reader.header().clone();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, frames))
}

fn write_packed_store<P: AsRef<Path>>(
    path: P,
    magic: [u8; 8],
    rows: &[&[u8]],
    bits_per_block: usize,
) -> Result<()> {
    for row in rows {
        if row.len() != bits_per_block {
            return Err(Error::Format(format!(
                "heterogeneous block lengths: {} vs {bits_per_block}",
                row.len()
            )));
        }
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&magic)?;
    w.write_all(&(rows.len() as u32).to_le_bytes())?;
    w.write_all(&(bits_per_block as u32).to_le_bytes())?;
    for row in rows {
        w.write_all(&pack_bits_msb_first(row))?;
    }
    w.flush()?;
    Ok(())
}

fn read_packed_store<P: AsRef<Path>>(path: P, magic: [u8; 8]) -> Result<(usize, Vec<Vec<u8>>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut found = [0u8; 8];
    read_exact_or_truncated(&mut r, &mut found, 8)?;
    if found != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    let mut u32b = [0u8; 4];
    read_exact_or_truncated(&mut r, &mut u32b, 4)?;
    let block_count = u32::from_le_bytes(u32b) as usize;
    read_exact_or_truncated(&mut r, &mut u32b, 4)?;
    let bits_per_block = u32::from_le_bytes(u32b) as usize;

    let row_bytes = bits_per_block.div_ceil(8);
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let needed = (block_count * row_bytes) as u64;
    if (payload.len() as u64) != needed {
        return Err(Error::Truncated {
            needed,
            got: payload.len() as u64,
        });
    }
    let rows = (0..block_count)
        .map(|i| unpack_bits_msb_first(&payload[i * row_bytes..(i + 1) * row_bytes], bits_per_block))
        .collect::<Result<Vec<_>>>()?;
    Ok((bits_per_block, rows))
}

/// Write bit blocks to a `.bits` file (positional frame indices).
pub fn write_bit_blocks<P: AsRef<Path>>(path: P, blocks: &[BitBlock]) -> Result<()> {
    let bits_per_block = blocks.first().map_or(0, |b| b.len());
    let rows: Vec<&[u8]> = blocks.iter().map(|b| b.bits.as_slice()).collect();
    write_packed_store(path, BITS_MAGIC, &rows, bits_per_block)
}

/// Read a `.bits` file, labeling blocks with the given node.
pub fn read_bit_blocks<P: AsRef<Path>>(path: P, node: Node) -> Result<Vec<BitBlock>> {
    let (_, rows) = read_packed_store(path, BITS_MAGIC)?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, bits)| BitBlock {
            node,
            frame_index: i as u64,
            bits,
        })
        .collect())
}

/// Write syndromes to a `.synd` file (positional frame indices).
pub fn write_syndromes<P: AsRef<Path>>(path: P, syndromes: &[Syndrome]) -> Result<()> {
    let bits_per_block = syndromes.first().map_or(0, |s| s.bits.len());
    let rows: Vec<&[u8]> = syndromes.iter().map(|s| s.bits.as_slice()).collect();
    write_packed_store(path, SYNDROME_MAGIC, &rows, bits_per_block)
}

/// Read a `.synd` file.
pub fn read_syndromes<P: AsRef<Path>>(path: P) -> Result<Vec<Syndrome>> {
    let (_, rows) = read_packed_store(path, SYNDROME_MAGIC)?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, bits)| Syndrome {
            frame_index: i as u64,
            bits,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("skg_dataio_tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn empty_store_roundtrip() {
        let path = tmp("empty.iqf");
        write_frames::<f32, _>(&path, &[], 70e6, 140e6).unwrap();
        let (header, frames) = read_frames::<f32, _>(&path).unwrap();
        assert_eq!(header.frame_count, 0);
        assert!(frames.is_empty());
    }

    #[test]
    fn payload_size_is_eight_bytes_per_sample() {
        let path = tmp("sized.iqf");
        let frames: Vec<IQFrame<f32>> = (0..2)
            .map(|i| IQFrame {
                node: Node::Eve,
                frame_index: i,
                samples: vec![Complex::new(1.0f32, -1.0); 2406],
            })
            .collect();
        write_frames(&path, &frames, 70e6, 140e6).unwrap();
        let header_bytes = 8 + 2 + 1 + 4 + 4 + 8 + 8;
        let expect = header_bytes + 2 * 2406 * 8;
        assert_eq!(std::fs::metadata(&path).unwrap().len(), expect as u64);
    }

    #[test]
    fn truncated_payload_is_detected() {
        let path = tmp("trunc.iqf");
        let frames: Vec<IQFrame<f32>> = vec![IQFrame {
            node: Node::Alice,
            frame_index: 0,
            samples: vec![Complex::new(0.5f32, 0.25); 64],
        }];
        write_frames(&path, &frames, 1e6, 2e6).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        match read_frames::<f32, _>(&path) {
            Err(Error::Truncated { .. }) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version_are_distinct_errors() {
        let path = tmp("magic.iqf");
        write_frames::<f32, _>(&path, &[], 1e6, 2e6).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let good = bytes.clone();
        bytes[0] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_frames::<f32, _>(&path),
            Err(Error::BadMagic { .. })
        ));
        let mut versioned = good;
        versioned[8] = 0xEE;
        std::fs::write(&path, &versioned).unwrap();
        assert!(matches!(
            read_frames::<f32, _>(&path),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn heterogeneous_frames_are_rejected() {
        let frames = vec![
            IQFrame {
                node: Node::Alice,
                frame_index: 0,
                samples: vec![Complex::new(0.0f32, 0.0); 4],
            },
            IQFrame {
                node: Node::Alice,
                frame_index: 1,
                samples: vec![Complex::new(0.0f32, 0.0); 5],
            },
        ];
        assert!(matches!(
            write_frames(tmp("hetero.iqf"), &frames, 1e6, 2e6),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn frame_roundtrip_is_bit_exact(seed in 0u64..500, count in 0usize..4, len in 1usize..40) {
            let mut rng = derive_rng(seed, Stream::NoiseEve, 77);
            let frames: Vec<IQFrame<f32>> = (0..count)
                .map(|i| IQFrame {
                    node: Node::Eve,
                    frame_index: i as u64,
                    samples: (0..len)
                        .map(|_| Complex::new(rng.gen::<f32>() * 2.0 - 1.0, rng.gen::<f32>() * 2.0 - 1.0))
                        .collect(),
                })
                .collect();
            let path = tmp(&format!("rt_{seed}_{count}_{len}.iqf"));
            write_frames(&path, &frames, 70e6, 140e6).unwrap();
            let (header, back) = read_frames::<f32, _>(&path).unwrap();
            std::fs::remove_file(&path).unwrap();
            prop_assert_eq!(header.frame_count as usize, count);
            prop_assert_eq!(back, frames);
        }

        #[test]
        fn bit_block_roundtrip(seed in 0u64..500, count in 0usize..5, len in 1usize..70) {
            let mut rng = derive_rng(seed, Stream::NoiseEve, 78);
            let blocks: Vec<BitBlock> = (0..count)
                .map(|i| BitBlock {
                    node: Node::Bob,
                    frame_index: i as u64,
                    bits: (0..len).map(|_| rng.gen_range(0..=1u8)).collect(),
                })
                .collect();
            let path = tmp(&format!("rt_{seed}_{count}_{len}.bits"));
            write_bit_blocks(&path, &blocks).unwrap();
            let back = read_bit_blocks(&path, Node::Bob).unwrap();
            std::fs::remove_file(&path).unwrap();
            prop_assert_eq!(back, blocks);
        }

        #[test]
        fn syndrome_roundtrip(seed in 0u64..500, count in 0usize..5, len in 1usize..50) {
            let mut rng = derive_rng(seed, Stream::NoiseEve, 79);
            let synds: Vec<Syndrome> = (0..count)
                .map(|i| Syndrome {
                    frame_index: i as u64,
                    bits: (0..len).map(|_| rng.gen_range(0..=1u8)).collect(),
                })
                .collect();
            let path = tmp(&format!("rt_{seed}_{count}_{len}.synd"));
            write_syndromes(&path, &synds).unwrap();
            let back = read_syndromes(&path).unwrap();
            std::fs::remove_file(&path).unwrap();
            prop_assert_eq!(back, synds);
        }
    }
}
