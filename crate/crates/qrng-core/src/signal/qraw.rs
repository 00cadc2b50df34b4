//! QRAW binary capture format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic  "QRAW"        4 bytes
//! version u16 = 1      2
//! adc_bits u16         2
//! sample_rate f64 (Hz) 8
//! adc_full_scale f64   8   (volts, peak-to-peak)
//! lo_power f64 (W)     8
//! reserved             32
//! payload              interleaved q,p codes; one signed byte per sample
//!                      when adc_bits <= 8, two bytes (LE) otherwise
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampleBlock;

pub const QRAW_MAGIC: [u8; 4] = *b"QRAW";
pub const QRAW_VERSION: u16 = 1;
pub const QRAW_HEADER_LEN: u64 = 64;

/// Stream metadata carried by the QRAW header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub adc_bits: u8,
    pub sample_rate: f64,
    pub adc_full_scale: f64,
    pub lo_power: f64,
}

impl CaptureMeta {
    pub fn bytes_per_sample(&self) -> usize {
        if self.adc_bits <= 8 {
            1
        } else {
            2
        }
    }

    fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.adc_bits) {
            return Err(Error::Format(format!("unsupported bit depth {}", self.adc_bits)));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Format("sample_rate must be > 0".into()));
        }
        if !(self.adc_full_scale > 0.0) {
            return Err(Error::Format("adc_full_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Incremental QRAW writer. Blocks must carry identical metadata and
/// contiguous stream offsets.
pub struct CaptureWriter<W: Write> {
    sink: W,
    meta: CaptureMeta,
    bytes_written: u64,
    next_offset: u64,
}

impl<W: Write> CaptureWriter<W> {
    pub fn new(mut sink: W, meta: CaptureMeta) -> Result<Self> {
        meta.validate()?;
        sink.write_all(&QRAW_MAGIC)?;
        sink.write_all(&QRAW_VERSION.to_le_bytes())?;
        sink.write_all(&(meta.adc_bits as u16).to_le_bytes())?;
        sink.write_all(&meta.sample_rate.to_le_bytes())?;
        sink.write_all(&meta.adc_full_scale.to_le_bytes())?;
        sink.write_all(&meta.lo_power.to_le_bytes())?;
        sink.write_all(&[0u8; 32])?;
        Ok(Self { sink, meta, bytes_written: QRAW_HEADER_LEN, next_offset: 0 })
    }

    pub fn write_block(&mut self, block: &SampleBlock) -> Result<()> {
        block.validate()?;
        if block.meta() != self.meta {
            return Err(Error::Format(
                "block metadata differs from the capture header".into(),
            ));
        }
        if block.stream_offset != self.next_offset {
            return Err(Error::Format(format!(
                "non-contiguous block: expected offset {}, got {}",
                self.next_offset, block.stream_offset
            )));
        }
        let mut payload =
            Vec::with_capacity(block.len() * 2 * self.meta.bytes_per_sample());
        if self.meta.bytes_per_sample() == 1 {
            for (&q, &p) in block.channel_q.iter().zip(&block.channel_p) {
                payload.push(q as i8 as u8);
                payload.push(p as i8 as u8);
            }
        } else {
            for (&q, &p) in block.channel_q.iter().zip(&block.channel_p) {
                payload.extend_from_slice(&q.to_le_bytes());
                payload.extend_from_slice(&p.to_le_bytes());
            }
        }
        self.sink.write_all(&payload)?;
        self.bytes_written += payload.len() as u64;
        self.next_offset += block.len() as u64;
        Ok(())
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes_written
    }

    pub fn finish(mut self) -> Result<u64> {
        self.sink.flush()?;
        Ok(self.bytes_written)
    }
}

/// Streaming QRAW reader producing blocks of at most `block_len` sample
/// pairs.
pub struct CaptureReader<R: Read> {
    source: R,
    meta: CaptureMeta,
    block_len: usize,
    next_offset: u64,
    done: bool,
}

impl<R: Read> CaptureReader<R> {
    pub fn new(mut source: R, block_len: usize) -> Result<Self> {
        if block_len == 0 {
            return Err(Error::InvalidParameter("block_len must be > 0".into()));
        }
        let mut header = [0u8; QRAW_HEADER_LEN as usize];
        source.read_exact(&mut header).map_err(|_| Error::Format("truncated header".into()))?;
        if header[0..4] != QRAW_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != QRAW_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let adc_bits = u16::from_le_bytes([header[6], header[7]]);
        if !(2..=16).contains(&adc_bits) {
            return Err(Error::Format(format!("unsupported bit depth {adc_bits}")));
        }
        let f64_at = |i: usize| f64::from_le_bytes(header[i..i + 8].try_into().unwrap());
        let meta = CaptureMeta {
            adc_bits: adc_bits as u8,
            sample_rate: f64_at(8),
            adc_full_scale: f64_at(16),
            lo_power: f64_at(24),
        };
        meta.validate()?;
        Ok(Self { source, meta, block_len, next_offset: 0, done: false })
    }

    pub fn meta(&self) -> CaptureMeta {
        self.meta
    }

    fn read_block(&mut self) -> Result<Option<SampleBlock>> {
        if self.done {
            return Ok(None);
        }
        let pair_bytes = 2 * self.meta.bytes_per_sample();
        let mut buf = vec![0u8; self.block_len * pair_bytes];
        let mut filled = 0;
        while filled < buf.len() {
            match self.source.read(&mut buf[filled..])? {
                0 => break,
                n => filled += n,
            }
        }
        if filled == 0 {
            self.done = true;
            return Ok(None);
        }
        if filled % pair_bytes != 0 {
            return Err(Error::Format(format!(
                "truncated block: {filled} payload bytes is not a multiple of {pair_bytes}"
            )));
        }
        let pairs = filled / pair_bytes;
        let mut q = Vec::with_capacity(pairs);
        let mut p = Vec::with_capacity(pairs);
        if self.meta.bytes_per_sample() == 1 {
            for chunk in buf[..filled].chunks_exact(2) {
                q.push(chunk[0] as i8 as i16);
                p.push(chunk[1] as i8 as i16);
            }
        } else {
            for chunk in buf[..filled].chunks_exact(4) {
                q.push(i16::from_le_bytes([chunk[0], chunk[1]]));
                p.push(i16::from_le_bytes([chunk[2], chunk[3]]));
            }
        }
        let block = SampleBlock {
            channel_q: q,
            channel_p: p,
            sample_rate: self.meta.sample_rate,
            adc_bits: self.meta.adc_bits,
            adc_full_scale: self.meta.adc_full_scale,
            lo_power: self.meta.lo_power,
            stream_offset: self.next_offset,
        };
        block.validate()?;
        self.next_offset += pairs as u64;
        if pairs < self.block_len {
            self.done = true;
        }
        Ok(Some(block))
    }
}

impl<R: Read> Iterator for CaptureReader<R> {
    type Item = Result<SampleBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_block().transpose()
    }
}

/// Write a whole capture to `path`; returns total bytes written.
pub fn write_capture<'a>(
    path: &Path,
    meta: CaptureMeta,
    blocks: impl IntoIterator<Item = &'a SampleBlock>,
) -> Result<u64> {
    let mut writer = CaptureWriter::new(BufWriter::new(File::create(path)?), meta)?;
    for block in blocks {
        writer.write_block(block)?;
    }
    writer.finish()
}

/// Open a capture for streaming reads of `block_len`-pair blocks.
pub fn read_capture(path: &Path, block_len: usize) -> Result<CaptureReader<BufReader<File>>> {
    CaptureReader::new(BufReader::new(File::open(path)?), block_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{SourceParams, SyntheticSource};

    fn temp_path(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("qraw_test_{}_{name}", std::process::id()));
        p
    }

    #[test]
    fn roundtrip_is_identity() {
        let src = SyntheticSource::new(SourceParams::default()).unwrap();
        let blocks: Vec<_> =
            src.blocks(0, 1024, 2).collect::<Result<_>>().unwrap();
        let path = temp_path("roundtrip");
        write_capture(&path, src.params().capture_meta(), blocks.iter()).unwrap();

        let reader = read_capture(&path, 1024).unwrap();
        assert_eq!(reader.meta(), src.params().capture_meta());
        let back: Vec<_> = reader.collect::<Result<_>>().unwrap();
        assert_eq!(back, blocks);
        assert_eq!(back[0].stream_offset, 0);
        assert_eq!(back[1].stream_offset, 1024);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn header_sample_rate_is_reported() {
        let params = SourceParams { adc_rate: 25e9, ..SourceParams::default() };
        let src = SyntheticSource::new(params).unwrap();
        let block = src.generate_block(0, 64).unwrap();
        let path = temp_path("rate");
        write_capture(&path, src.params().capture_meta(), [&block]).unwrap();
        let mut reader = read_capture(&path, 64).unwrap();
        let read_block = reader.next().unwrap().unwrap();
        assert_eq!(read_block.sample_rate, 25e9);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn empty_stream_writes_header_only() {
        let meta = SourceParams::default().capture_meta();
        let path = temp_path("empty");
        let bytes = write_capture(&path, meta, std::iter::empty()).unwrap();
        assert_eq!(bytes, QRAW_HEADER_LEN);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), QRAW_HEADER_LEN);
        // Reading an empty capture yields no blocks.
        let blocks: Vec<_> = read_capture(&path, 16).unwrap().collect();
        assert!(blocks.is_empty());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn payload_size_arithmetic() {
        let src = SyntheticSource::new(SourceParams::default()).unwrap();
        // One-sample block: header + 2 bytes.
        let path = temp_path("one");
        let block = src.generate_block(0, 1).unwrap();
        let bytes = write_capture(&path, src.params().capture_meta(), [&block]).unwrap();
        assert_eq!(bytes, QRAW_HEADER_LEN + 2);
        std::fs::remove_file(&path).ok();

        // 1e6-sample 8-bit block: payload exactly 2e6 bytes.
        let path = temp_path("mega");
        let block = src.generate_block(0, 1_000_000).unwrap();
        let bytes = write_capture(&path, src.params().capture_meta(), [&block]).unwrap();
        assert_eq!(bytes, QRAW_HEADER_LEN + 2_000_000);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn wide_codes_use_two_bytes() {
        let meta = CaptureMeta {
            adc_bits: 12,
            sample_rate: 1e9,
            adc_full_scale: 1.0,
            lo_power: 0.0,
        };
        let block = SampleBlock {
            channel_q: vec![-2048, 2047, 5],
            channel_p: vec![100, -7, 0],
            sample_rate: 1e9,
            adc_bits: 12,
            adc_full_scale: 1.0,
            lo_power: 0.0,
            stream_offset: 0,
        };
        let path = temp_path("wide");
        let bytes = write_capture(&path, meta, [&block]).unwrap();
        assert_eq!(bytes, QRAW_HEADER_LEN + 12);
        let back: Vec<_> =
            read_capture(&path, 8).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(back[0], block);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut data = vec![0u8; 64];
        data[0..4].copy_from_slice(b"NOPE");
        assert!(matches!(
            CaptureReader::new(&data[..], 16),
            Err(Error::Format(msg)) if msg.contains("magic")
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let src = SyntheticSource::new(SourceParams::default()).unwrap();
        let block = src.generate_block(0, 8).unwrap();
        let path = temp_path("trunc");
        write_capture(&path, src.params().capture_meta(), [&block]).unwrap();
        let mut data = std::fs::read(&path).unwrap();
        data.truncate(data.len() - 1); // half a pair
        let result: Result<Vec<_>> = CaptureReader::new(&data[..], 8).unwrap().collect();
        assert!(matches!(result, Err(Error::Format(msg)) if msg.contains("truncated")));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn unsupported_bit_depth_is_rejected() {
        let mut data = vec![0u8; 64];
        data[0..4].copy_from_slice(&QRAW_MAGIC);
        data[4..6].copy_from_slice(&QRAW_VERSION.to_le_bytes());
        data[6..8].copy_from_slice(&24u16.to_le_bytes());
        data[8..16].copy_from_slice(&1e9f64.to_le_bytes());
        data[16..24].copy_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(
            CaptureReader::new(&data[..], 16),
            Err(Error::Format(msg)) if msg.contains("bit depth")
        ));
    }

    #[test]
    fn inconsistent_block_metadata_is_rejected() {
        let src = SyntheticSource::new(SourceParams::default()).unwrap();
        let mut block = src.generate_block(0, 8).unwrap();
        block.lo_power += 1.0;
        let path = temp_path("meta");
        let result = write_capture(&path, src.params().capture_meta(), [&block]);
        assert!(matches!(result, Err(Error::Format(_))));
        std::fs::remove_file(&path).ok();
    }
}
