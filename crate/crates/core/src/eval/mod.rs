//! Anonymization metrics.
//!
//! The speaker embedding is a lightweight proxy: per-coefficient mean and
//! standard deviation of MFCC frames (c0 excluded, so the embedding does not
//! see global gain). Similarity is the cosine between embeddings, optionally
//! after standardising each dimension against a background population.

pub mod mfcc;

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::io_util::fmt_sig;
use crate::perturb::AudioClip;

pub use mfcc::{EmbeddingConfig, MfccExtractor};

pub const DEFAULT_THRESHOLD: f64 = 0.25;
pub const DEFAULT_TRIALS: usize = 30;

/// `[mean(c1..cN), std(c1..cN)]` over all frames.
pub fn embed(audio: &AudioClip, config: &EmbeddingConfig) -> Result<Vec<f64>> {
    let extractor = MfccExtractor::new(*config, audio.sample_rate_hz)?;
    embed_with(&extractor, audio)
}

/// As [`embed`], reusing a prepared extractor.
pub fn embed_with(extractor: &MfccExtractor, audio: &AudioClip) -> Result<Vec<f64>> {
    let frames = extractor.frames(&audio.samples);
    if frames.len() < 3 {
        return Err(Error::param(format!(
            "audio yields {} analysis frames, need at least 3",
            frames.len()
        )));
    }
    let dims = frames[0].len();
    let count = frames.len() as f64;
    let mut mean = vec![0.0; dims];
    for f in &frames {
        for (m, c) in mean.iter_mut().zip(f) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; dims];
    for f in &frames {
        for ((v, c), m) in var.iter_mut().zip(f).zip(&mean) {
            *v += (c - m) * (c - m);
        }
    }
    let std = var.into_iter().map(|v| (v / count).sqrt());
    Ok(mean.iter().copied().chain(std).collect())
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param(format!(
            "embedding lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate(
            "cosine similarity of a zero vector".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Per-trial similarities and the resulting miss-match rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmrResult {
    pub similarities: Vec<f64>,
    pub threshold: f64,
    pub mmr: f64,
}

impl MmrResult {
    pub fn from_similarities(similarities: Vec<f64>, threshold: f64) -> Result<Self> {
        if similarities.is_empty() {
            return Err(Error::param("miss-match rate needs at least one trial"));
        }
        let misses = similarities.iter().filter(|s| **s < threshold).count();
        let mmr = misses as f64 / similarities.len() as f64;
        Ok(MmrResult {
            similarities,
            threshold,
            mmr,
        })
    }

    /// Writes `trial,similarity,below_threshold` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trial,similarity,below_threshold")?;
        for (i, s) in self.similarities.iter().enumerate() {
            writeln!(out, "{i},{},{}", fmt_sig(*s), *s < self.threshold)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Per-dimension standardisation fitted on background speakers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits population mean and standard deviation of `embeddings`.
    pub fn fit(embeddings: &[Vec<f64>]) -> Result<Self> {
        if embeddings.len() < 2 {
            return Err(Error::param(
                "normalizer needs at least two background embeddings",
            ));
        }
        let dims = embeddings[0].len();
        if embeddings.iter().any(|e| e.len() != dims) {
            return Err(Error::param("background embeddings differ in length"));
        }
        let n = embeddings.len() as f64;
        let mean: Vec<f64> = (0..dims)
            .map(|j| embeddings.iter().map(|e| e[j]).sum::<f64>() / n)
            .collect();
        let std: Vec<f64> = (0..dims)
            .map(|j| {
                (embeddings
                    .iter()
                    .map(|e| (e[j] - mean[j]).powi(2))
                    .sum::<f64>()
                    / n)
                    .sqrt()
            })
            .collect();
        if let Some(j) = std.iter().position(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::Degenerate(format!(
                "background dimension {j} has zero spread"
            )));
        }
        Ok(Normalizer { mean, std })
    }

    /// Embeds every clip and fits on the result.
    pub fn fit_clips(clips: &[AudioClip], config: &EmbeddingConfig) -> Result<Self> {
        let embeddings = clips
            .par_iter()
            .map(|c| embed(c, config))
            .collect::<Result<Vec<_>>>()?;
        Self::fit(&embeddings)
    }

    pub fn apply(&self, e: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.mean.len() {
            return Err(Error::param(format!(
                "embedding length {} does not match normalizer length {}",
                e.len(),
                self.mean.len()
            )));
        }
        Ok(e.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }
}

/// Fraction of `(original, anonymized)` pairs whose embeddings fall below
/// `threshold` in cosine similarity.
pub fn mmr(
    pairs: &[(AudioClip, AudioClip)],
    threshold: f64,
    config: &EmbeddingConfig,
) -> Result<MmrResult> {
    mmr_with(pairs, threshold, config, None)
}

/// As [`mmr`], scoring standardised embeddings when a normalizer is given.
/// Trials run in parallel; results keep pair order.
pub fn mmr_with(
    pairs: &[(AudioClip, AudioClip)],
    threshold: f64,
    config: &EmbeddingConfig,
    normalizer: Option<&Normalizer>,
) -> Result<MmrResult> {
    let sims = pairs
        .par_iter()
        .map(|(a, b)| {
            if a.sample_rate_hz != b.sample_rate_hz {
                return Err(Error::param("pair sample rates differ"));
            }
            let ex = MfccExtractor::new(*config, a.sample_rate_hz)?;
            let (ea, eb) = (embed_with(&ex, a)?, embed_with(&ex, b)?);
            match normalizer {
                Some(n) => similarity(&n.apply(&ea)?, &n.apply(&eb)?),
                None => similarity(&ea, &eb),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    MmrResult::from_similarities(sims, threshold)
}

/// Level change in one third-octave band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDistortion {
    pub center_hz: f64,
    pub lo_hz: f64,
    pub hi_hz: f64,
    /// `|10 log10(E_anonymized / E_original)|`.
    pub db: f64,
}

/// Base-10 third-octave bands (centre `1000 * 10^(k/10)`) lying entirely
/// inside `[min_hz, max_hz]`.
pub fn third_octave_bands(min_hz: f64, max_hz: f64) -> Vec<(f64, f64, f64)> {
    (-20..=20)
        .map(|k| {
            let c = 1000.0 * 10f64.powf(k as f64 / 10.0);
            (c, c * 10f64.powf(-0.05), c * 10f64.powf(0.05))
        })
        .filter(|(_, lo, hi)| *lo >= min_hz && *hi <= max_hz)
        .collect()
}

fn power_spectrum(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|s| Complex64::new(*s, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Lowest band centre considered by [`band_distortion`], Hz.
pub const MIN_BAND_HZ: f64 = 40.0;

/// Level change per third-octave band lying wholly outside `exclude`.
///
/// `normalization_gain` is the factor the anonymizer applied to its output;
/// it is divided out before comparing energies.
pub fn band_distortion(
    original: &AudioClip,
    anonymized: &AudioClip,
    normalization_gain: f64,
    exclude: (f64, f64),
) -> Result<Vec<BandDistortion>> {
    if original.samples.len() != anonymized.samples.len() {
        return Err(Error::param(format!(
            "length mismatch: {} vs {} samples",
            original.samples.len(),
            anonymized.samples.len()
        )));
    }
    if original.sample_rate_hz != anonymized.sample_rate_hz {
        return Err(Error::param("sample rate mismatch"));
    }
    ensure_positive("normalization_gain", normalization_gain)?;
    if original.samples.is_empty() {
        return Err(Error::param("empty audio"));
    }
    let sr = original.sample_rate_hz as f64;
    let n = original.samples.len();
    let p_orig = power_spectrum(&original.samples);
    let p_anon = power_spectrum(&anonymized.samples);
    let undo = 1.0 / (normalization_gain * normalization_gain);
    let bin_hz = sr / n as f64;
    let mut out = Vec::new();
    for (c, lo, hi) in third_octave_bands(MIN_BAND_HZ * 10f64.powf(-0.05), sr / 2.0) {
        if !(hi < exclude.0 || lo > exclude.1) {
            continue;
        }
        let k_lo = (lo / bin_hz).ceil() as usize;
        let k_hi = ((hi / bin_hz).floor() as usize).min(n / 2);
        if k_lo > k_hi {
            continue;
        }
        let e_orig: f64 = p_orig[k_lo..=k_hi].iter().sum();
        let e_anon: f64 = p_anon[k_lo..=k_hi].iter().sum::<f64>() * undo;
        if e_orig == 0.0 && e_anon == 0.0 {
            out.push(BandDistortion {
                center_hz: c,
                lo_hz: lo,
                hi_hz: hi,
                db: 0.0,
            });
            continue;
        }
        if e_orig == 0.0 || e_anon == 0.0 {
            return Err(Error::Degenerate(format!(
                "band {c:.0} Hz has zero energy in one signal"
            )));
        }
        out.push(BandDistortion {
            center_hz: c,
            lo_hz: lo,
            hi_hz: hi,
            db: (10.0 * (e_anon / e_orig).log10()).abs(),
        });
    }
    Ok(out)
}

/// Real-time coefficient: processing time over audio duration.
pub fn rtc(audio_duration_s: f64, processing_duration_s: f64) -> Result<f64> {
    ensure_positive("audio duration", audio_duration_s)?;
    ensure_positive("processing duration", processing_duration_s)?;
    Ok(processing_duration_s / audio_duration_s)
}

/// Summary of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub similarities: Vec<f64>,
    pub mmr: f64,
    pub threshold: f64,
    pub trials: usize,
    pub oob_distortion_db: Vec<BandDistortion>,
    /// Software processing time over audio duration; not the acoustic
    /// propagation delay of a physical device. `None` unless timing was requested.
    pub rtc: Option<f64>,
    pub rtc_kind: String,
}
