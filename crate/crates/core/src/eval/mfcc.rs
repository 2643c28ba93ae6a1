//! MFCC front end for the speaker-embedding proxy.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    /// Cepstral coefficients kept, counted from c1 (c0 is dropped).
    pub n_mfcc: usize,
    pub n_mel: usize,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub mel_lo_hz: f64,
    pub mel_hi_hz: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            n_mfcc: 13,
            n_mel: 26,
            win_ms: 25.0,
            hop_ms: 10.0,
            mel_lo_hz: 0.0,
            mel_hi_hz: 8000.0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mfcc == 0 || self.n_mel == 0 || self.n_mfcc >= self.n_mel {
            return Err(Error::param("need 0 < n_mfcc < n_mel"));
        }
        if !(self.win_ms > 0.0 && self.hop_ms > 0.0 && self.win_ms >= self.hop_ms) {
            return Err(Error::param("need win_ms >= hop_ms > 0"));
        }
        if !(self.mel_lo_hz >= 0.0 && self.mel_lo_hz < self.mel_hi_hz) {
            return Err(Error::param("invalid mel range"));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Frame-level MFCC analyser for one sample rate.
pub struct MfccExtractor {
    config: EmbeddingConfig,
    win: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    /// `filters[m]` lists `(bin, weight)` pairs.
    filters: Vec<Vec<(usize, f64)>>,
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(config: EmbeddingConfig, sample_rate: u32) -> Result<Self> {
        config.validate()?;
        let sr = sample_rate as f64;
        let win = (config.win_ms * sr / 1000.0).round() as usize;
        let hop = (config.hop_ms * sr / 1000.0).round() as usize;
        if win < 2 || hop == 0 {
            return Err(Error::param(
                "analysis window too short for this sample rate",
            ));
        }
        let n_fft = win.next_power_of_two();
        let window = (0..win)
            .map(|i| 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / (win - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);

        let hi = config.mel_hi_hz.min(sr / 2.0);
        let (mlo, mhi) = (hz_to_mel(config.mel_lo_hz), hz_to_mel(hi));
        let edges: Vec<f64> = (0..config.n_mel + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (config.n_mel + 1) as f64))
            .collect();
        let bin_hz = sr / n_fft as f64;
        let filters = (0..config.n_mel)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..=n_fft / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > l && f <= c {
                            (f - l) / (c - l)
                        } else if f > c && f < r {
                            (r - f) / (r - c)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();

        let m = config.n_mel as f64;
        let dct = (1..=config.n_mfcc)
            .map(|n| {
                (0..config.n_mel)
                    .map(|j| {
                        (2.0 / m).sqrt()
                            * (std::f64::consts::PI * n as f64 * (j as f64 + 0.5) / m).cos()
                    })
                    .collect()
            })
            .collect();
        Ok(MfccExtractor {
            config,
            win,
            hop,
            window,
            fft,
            filters,
            dct,
        })
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.win {
            0
        } else {
            (samples - self.win) / self.hop + 1
        }
    }

    /// Cepstral coefficients c1..=c_n_mfcc for every full frame.
    pub fn frames(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        let n_fft = self.fft.len();
        let mut buf = vec![Complex64::default(); n_fft];
        let mut power = vec![0.0; n_fft / 2 + 1];
        let mut log_mel = vec![0.0; self.config.n_mel];
        (0..self.frame_count(samples.len()))
            .map(|t| {
                let start = t * self.hop;
                buf.iter_mut().for_each(|b| *b = Complex64::default());
                for (i, w) in self.window.iter().enumerate() {
                    buf[i].re = samples[start + i] * w;
                }
                self.fft.process(&mut buf);
                for (p, b) in power.iter_mut().zip(&buf) {
                    *p = b.norm_sqr();
                }
                for (out, filt) in log_mel.iter_mut().zip(&self.filters) {
                    let e: f64 = filt.iter().map(|(k, w)| power[*k] * w).sum();
                    *out = e.max(f64::MIN_POSITIVE).ln();
                }
                self.dct
                    .iter()
                    .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    }
}
