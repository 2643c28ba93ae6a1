//! Mono RIFF/WAVE reading and writing.
//!
//! Reads 16-bit PCM and 32-bit IEEE float, plain or `WAVE_FORMAT_EXTENSIBLE`.
//! Malformed files are reported with the byte offset of the offending field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::perturb::AudioClip;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    Pcm16,
    Float32,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl Cursor<'_> {
    fn fail(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&self, offset: usize, len: usize, what: &str) -> Result<&[u8]> {
        self.bytes
            .get(offset..offset + len)
            .ok_or_else(|| self.fail(offset, format!("truncated {what}")))
    }

    fn u16(&self, offset: usize, what: &str) -> Result<u16> {
        let b = self.take(offset, 2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, offset: usize, what: &str) -> Result<u32> {
        let b = self.take(offset, 4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Fmt {
    format: SampleFormat,
    sample_rate: u32,
}

fn parse_fmt(c: &Cursor, start: usize, len: usize) -> Result<Fmt> {
    if len < 16 {
        return Err(c.fail(start, format!("fmt chunk too short ({len} bytes)")));
    }
    let mut tag = c.u16(start, "format tag")?;
    let channels = c.u16(start + 2, "channel count")?;
    let sample_rate = c.u32(start + 4, "sample rate")?;
    let block_align = c.u16(start + 12, "block align")?;
    let bits = c.u16(start + 14, "bits per sample")?;
    if tag == FORMAT_EXTENSIBLE {
        if len < 40 {
            return Err(c.fail(start, "extensible fmt chunk shorter than 40 bytes"));
        }
        // The sub-format GUID starts with the plain format tag.
        tag = c.u16(start + 24, "sub-format")?;
    }
    if channels != 1 {
        return Err(c.fail(
            start + 2,
            format!("expected mono, found {channels} channels"),
        ));
    }
    if sample_rate == 0 {
        return Err(c.fail(start + 4, "sample rate is zero"));
    }
    let format = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_FLOAT, 32) => SampleFormat::Float32,
        _ => {
            return Err(c.fail(
                start,
                format!("unsupported encoding: format tag {tag}, {bits} bits"),
            ))
        }
    };
    if block_align != bits / 8 {
        return Err(c.fail(
            start + 12,
            format!("block align {block_align} does not match {bits}-bit mono"),
        ));
    }
    Ok(Fmt {
        format,
        sample_rate,
    })
}

/// Decodes a WAVE byte stream; `path` only labels diagnostics.
pub fn parse_wav(bytes: &[u8], path: &Path) -> Result<AudioClip> {
    let c = Cursor { bytes, path };
    if c.take(0, 4, "RIFF header")? != b"RIFF" {
        return Err(c.fail(0, "missing RIFF signature"));
    }
    if c.take(8, 4, "WAVE id")? != b"WAVE" {
        return Err(c.fail(8, "missing WAVE form type"));
    }
    let mut pos = 12;
    let mut fmt: Option<Fmt> = None;
    while pos < bytes.len() {
        let id = c.take(pos, 4, "chunk id")?;
        let len = c.u32(pos + 4, "chunk size")? as usize;
        let body = pos + 8;
        if body + len > bytes.len() {
            return Err(c.fail(pos + 4, format!("chunk size {len} runs past end of file")));
        }
        match id {
            b"fmt " => fmt = Some(parse_fmt(&c, body, len)?),
            b"data" => {
                let f = fmt.ok_or_else(|| c.fail(pos, "data chunk before fmt chunk"))?;
                let width = match f.format {
                    SampleFormat::Pcm16 => 2,
                    SampleFormat::Float32 => 4,
                };
                if !len.is_multiple_of(width) {
                    return Err(c.fail(
                        pos + 4,
                        format!("data size {len} is not a multiple of {width}"),
                    ));
                }
                let data = &bytes[body..body + len];
                let samples: Vec<f64> = match f.format {
                    SampleFormat::Pcm16 => data
                        .chunks_exact(2)
                        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
                        .collect(),
                    SampleFormat::Float32 => data
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                        .collect(),
                };
                if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
                    return Err(c.fail(body + i * width, "non-finite sample"));
                }
                return AudioClip::new(f.sample_rate, samples);
            }
            _ => {}
        }
        // Chunks are padded to even length.
        pos = body + len + (len & 1);
    }
    Err(c.fail(bytes.len(), "no data chunk"))
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes, path)
}

/// Encodes a clip. PCM16 requires every sample in `[-1, 1]`.
pub fn encode_wav(clip: &AudioClip, format: SampleFormat) -> Result<Vec<u8>> {
    let (tag, width) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 2u16),
        SampleFormat::Float32 => (FORMAT_FLOAT, 4u16),
    };
    let data_len = clip.samples.len() * width as usize;
    let data_len_u32 = u32::try_from(data_len)
        .ok()
        .filter(|n| *n <= u32::MAX - 36)
        .ok_or_else(|| Error::Range("clip too long for a WAVE file".into()))?;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len_u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz * width as u32).to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&(width * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len_u32.to_le_bytes());
    for (i, s) in clip.samples.iter().enumerate() {
        match format {
            SampleFormat::Pcm16 => {
                if s.abs() > 1.0 {
                    return Err(Error::Range(format!("sample {i} = {s} exceeds full scale")));
                }
                let q = (s * 32767.0).round() as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            SampleFormat::Float32 => out.extend_from_slice(&(*s as f32).to_le_bytes()),
        }
    }
    Ok(out)
}

/// Encodes and writes atomically.
pub fn write_wav(path: &Path, clip: &AudioClip, format: SampleFormat) -> Result<()> {
    write_atomic(path, &encode_wav(clip, format)?)
}

/// Sorted `*.wav` files directly inside `dir`.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip() -> AudioClip {
        AudioClip::new(16_000, vec![0.0, 0.5, -0.5, 1.0, -1.0, 0.25]).unwrap()
    }

    fn offset_of(err: Error) -> u64 {
        match err {
            Error::Format { offset, .. } => offset,
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn pcm16_round_trip_within_quantisation() {
        let bytes = encode_wav(&clip(), SampleFormat::Pcm16).unwrap();
        assert_eq!(bytes.len(), 44 + 12);
        let back = parse_wav(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.sample_rate_hz, 16_000);
        for (a, b) in clip().samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn float32_round_trip_exact_for_representable() {
        let bytes = encode_wav(&clip(), SampleFormat::Float32).unwrap();
        let back = parse_wav(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.samples, clip().samples);
    }

    #[test]
    fn pcm16_rejects_overrange() {
        let c = AudioClip::new(8000, vec![1.5]).unwrap();
        assert!(matches!(
            encode_wav(&c, SampleFormat::Pcm16),
            Err(Error::Range(_))
        ));
        assert!(encode_wav(&c, SampleFormat::Float32).is_ok());
    }

    #[test]
    fn extensible_header_is_read() {
        let mut bytes = b"RIFF\0\0\0\0WAVEfmt ".to_vec();
        bytes.extend_from_slice(&40u32.to_le_bytes());
        bytes.extend_from_slice(&FORMAT_EXTENSIBLE.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(&22u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&FORMAT_PCM.to_le_bytes());
        bytes.extend_from_slice(&[0; 14]);
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(b"abc\0");
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&16384i16.to_le_bytes());
        bytes.extend_from_slice(&(-32768i16).to_le_bytes());
        let c = parse_wav(&bytes, Path::new("mem")).unwrap();
        assert_eq!(c.sample_rate_hz, 8000);
        assert_eq!(c.samples, vec![0.5, -1.0]);
    }

    #[test]
    fn diagnostics_carry_offsets() {
        let good = encode_wav(&clip(), SampleFormat::Pcm16).unwrap();
        let p = Path::new("x.wav");
        assert_eq!(offset_of(parse_wav(b"RIFX", p).unwrap_err()), 0);
        assert_eq!(offset_of(parse_wav(&good[..6], p).unwrap_err()), 8);

        let mut stereo = good.clone();
        stereo[22] = 2;
        assert_eq!(offset_of(parse_wav(&stereo, p).unwrap_err()), 22);

        let mut bits = good.clone();
        bits[34] = 24;
        assert_eq!(offset_of(parse_wav(&bits, p).unwrap_err()), 20);

        let mut long = good.clone();
        long[40] = 0xFF;
        assert_eq!(offset_of(parse_wav(&long, p).unwrap_err()), 40);

        let mut odd = good.clone();
        odd[40] = 11;
        odd.truncate(44 + 11);
        assert_eq!(offset_of(parse_wav(&odd, p).unwrap_err()), 40);

        let msg = parse_wav(&stereo, p).unwrap_err().to_string();
        assert!(msg.contains("x.wav") && msg.contains("byte 22"), "{msg}");
    }

    #[test]
    fn non_finite_float_rejected() {
        let mut bytes = encode_wav(&clip(), SampleFormat::Float32).unwrap();
        bytes[48..52].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(
            offset_of(parse_wav(&bytes, Path::new("m")).unwrap_err()),
            48
        );
    }
}
