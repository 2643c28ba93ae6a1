//! Weighted overlap-add STFT with a periodic Hann window on both the
//! analysis and synthesis side.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "StftRepr", into = "StftRepr")]
pub struct StftConfig {
    frame_len: usize,
    hop: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StftRepr {
    frame_len: usize,
    hop: usize,
}

impl TryFrom<StftRepr> for StftConfig {
    type Error = Error;
    fn try_from(r: StftRepr) -> Result<Self> {
        StftConfig::new(r.frame_len, r.hop)
    }
}

impl From<StftConfig> for StftRepr {
    fn from(c: StftConfig) -> Self {
        StftRepr {
            frame_len: c.frame_len,
            hop: c.hop,
        }
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            frame_len: 1024,
            hop: 256,
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

impl StftConfig {
    /// Validates `0 < hop <= frame_len`, an even frame length, and that the
    /// squared window overlap-adds to a constant at this hop.
    pub fn new(frame_len: usize, hop: usize) -> Result<Self> {
        if frame_len < 4 || !frame_len.is_multiple_of(2) {
            return Err(Error::param(format!(
                "frame_len must be even and >= 4, got {frame_len}"
            )));
        }
        if hop == 0 || hop > frame_len {
            return Err(Error::param(format!(
                "hop must lie in 1..={frame_len}, got {hop}"
            )));
        }
        let w = hann(frame_len);
        let sums: Vec<f64> = (0..hop)
            .map(|n| (n..frame_len).step_by(hop).map(|i| w[i] * w[i]).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / hop as f64;
        if sums.iter().any(|s| (s - mean).abs() > 1e-9 * mean) {
            return Err(Error::param(format!(
                "squared Hann window is not constant-overlap-add at frame_len {frame_len}, hop {hop}"
            )));
        }
        Ok(StftConfig { frame_len, hop })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Leading zero padding so the first sample sees the full overlap.
    fn lead(&self) -> usize {
        self.frame_len - self.hop
    }

    /// Number of frames needed to cover `len` samples with full overlap.
    pub fn frame_count(&self, len: usize) -> usize {
        if len == 0 {
            return 0;
        }
        (self.lead() + len - 1) / self.hop + 1
    }

    /// Frequency of FFT bin `k` at `sample_rate` Hz.
    pub fn bin_hz(&self, k: usize, sample_rate: f64) -> f64 {
        k as f64 * sample_rate / self.frame_len as f64
    }
}

/// Runs analysis, per-frame spectral modification and resynthesis.
///
/// `modify(frame, bins)` receives the non-negative-frequency half
/// (`frame_len / 2 + 1` bins); the negative half is rebuilt by conjugate
/// symmetry. Frames are overlap-added in index order.
pub fn process<F>(signal: &[f64], config: &StftConfig, mut modify: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &mut [Complex64]) -> Result<()>,
{
    let n = config.frame_len;
    let hop = config.hop;
    let lead = config.lead();
    let frames = config.frame_count(signal.len());
    if frames == 0 {
        return Ok(Vec::new());
    }
    let padded_len = (frames - 1) * hop + n;
    let mut padded = vec![0.0; padded_len];
    padded[lead..lead + signal.len()].copy_from_slice(signal);

    let window = hann(n);
    let mut planner = FftPlanner::<f64>::new();
    let forward: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n);
    let inverse: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(n);
    let mut scratch = vec![
        Complex64::default();
        forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len())
    ];

    let mut out = vec![0.0; padded_len];
    let mut norm = vec![0.0; padded_len];
    let mut buf = vec![Complex64::default(); n];
    let half = n / 2;
    for t in 0..frames {
        let start = t * hop;
        for i in 0..n {
            buf[i] = Complex64::new(padded[start + i] * window[i], 0.0);
        }
        forward.process_with_scratch(&mut buf, &mut scratch);
        modify(t, &mut buf[..=half])?;
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        for k in 1..half {
            buf[n - k] = buf[k].conj();
        }
        inverse.process_with_scratch(&mut buf, &mut scratch);
        let scale = 1.0 / n as f64;
        for i in 0..n {
            out[start + i] += buf[i].re * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    Ok((lead..lead + signal.len())
        .map(|i| {
            if norm[i] > 1e-12 {
                out[i] / norm[i]
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(1024, 256).is_ok());
        assert!(StftConfig::new(512, 128).is_ok());
        assert!(StftConfig::new(1024, 0).is_err());
        assert!(StftConfig::new(1024, 2048).is_err());
        assert!(StftConfig::new(1023, 256).is_err());
        // Hann^2 at 50 % overlap does not sum to a constant.
        assert!(StftConfig::new(1024, 512).is_err());
    }

    #[test]
    fn frame_count_covers_signal() {
        let c = StftConfig::default();
        assert_eq!(c.frame_count(0), 0);
        assert_eq!(c.frame_count(1), 4);
        assert_eq!(c.frame_count(256), 4);
        assert_eq!(c.frame_count(257), 5);
    }

    #[test]
    fn identity_round_trip() {
        let c = StftConfig::default();
        let x: Vec<f64> = (0..5000)
            .map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0)
            .collect();
        let y = process(&x, &c, |_, _| Ok(())).unwrap();
        assert_eq!(y.len(), x.len());
        let err = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "max error {err}");
    }

    #[test]
    fn short_signal_round_trip() {
        let c = StftConfig::new(64, 16).unwrap();
        let x = vec![0.25, -0.5, 0.75];
        let y = process(&x, &c, |_, _| Ok(())).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frames_visit_in_order() {
        let c = StftConfig::new(64, 16).unwrap();
        let mut seen = Vec::new();
        process(&vec![0.1; 100], &c, |t, bins| {
            assert_eq!(bins.len(), 33);
            seen.push(t);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, (0..c.frame_count(100)).collect::<Vec<_>>());
    }
}
