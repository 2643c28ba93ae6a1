//! Signal-level perturbation: applies the resonator's time-varying transfer
//! function to recorded audio in the STFT domain.

pub mod stft;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DEFAULT_COUPLING;
use crate::randomizer::PerturbationSchedule;
use crate::resonator::ResonatorSpec;

pub use stft::StftConfig;

/// Bins outside this range pass unchanged.
pub const DEFAULT_BAND_LIMIT_HZ: (f64, f64) = (250.0, 800.0);
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio with floating-point samples, nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

impl AudioClip {
    pub fn new(sample_rate_hz: u32, samples: Vec<f64>) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::param("sample rate must be > 0"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::param(format!("non-finite sample at index {i}")));
        }
        Ok(AudioClip {
            sample_rate_hz,
            samples,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f64) -> AudioClip {
        AudioClip {
            sample_rate_hz: self.sample_rate_hz,
            samples: self.samples.iter().map(|s| s * gain).collect(),
        }
    }
}

/// Per-frame scattering phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// Uniform in `[0, 2 pi)`, drawn independently per frame from `seed`.
    Seeded(u64),
    /// The same phase, in radians, for every frame.
    Fixed(f64),
}

impl PhaseModel {
    pub fn phase(&self, frame: usize) -> f64 {
        match *self {
            PhaseModel::Fixed(phi) => phi,
            PhaseModel::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(frame as u64);
                rng.random::<f64>() * std::f64::consts::TAU
            }
        }
    }
}

/// `H(f, t) = 1 + kappa * g(f; f0(t)) * exp(i phi(t))` for one frame.
pub fn frame_transfer(
    f: f64,
    frame: usize,
    schedule: &PerturbationSchedule,
    spec: &ResonatorSpec,
    kappa: f64,
    phase: &PhaseModel,
) -> Result<Complex64> {
    let center = schedule.omega0(frame)?;
    Ok(transfer(f, center, spec, kappa, phase.phase(frame)))
}

fn transfer(f: f64, center: f64, spec: &ResonatorSpec, kappa: f64, phi: f64) -> Complex64 {
    let g = spec.unit_gain_at_center(f, center);
    Complex64::new(1.0, 0.0) + Complex64::from_polar(kappa * g, phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbParams {
    pub kappa: f64,
    pub band_limit_hz: (f64, f64),
    pub stft: StftConfig,
    pub phase: PhaseModel,
}

impl Default for PerturbParams {
    fn default() -> Self {
        PerturbParams {
            kappa: DEFAULT_COUPLING,
            band_limit_hz: DEFAULT_BAND_LIMIT_HZ,
            stft: StftConfig::default(),
            phase: PhaseModel::Seeded(0),
        }
    }
}

/// Output of [`anonymize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Anonymized {
    /// Peak-normalized output.
    pub clip: AudioClip,
    /// Factor (<= 1) applied to reach peak <= 1; divide by it to undo.
    pub normalization_gain: f64,
    pub frames: usize,
}

impl Anonymized {
    /// Output before peak normalization.
    pub fn unnormalized(&self) -> AudioClip {
        self.clip.scaled(1.0 / self.normalization_gain)
    }
}

/// Frames of `schedule` needed to process `samples` samples.
pub fn frames_required(samples: usize, stft: &StftConfig) -> usize {
    stft.frame_count(samples)
}

/// Multiplies every STFT bin inside the band limit by the frame's transfer
/// function, resynthesizes, and peak-normalizes the result.
pub fn anonymize(
    audio: &AudioClip,
    schedule: &PerturbationSchedule,
    spec: &ResonatorSpec,
    params: &PerturbParams,
) -> Result<Anonymized> {
    let sr = audio.sample_rate_hz as f64;
    let (lo, hi) = params.band_limit_hz;
    if !(lo >= 0.0 && lo < hi) {
        return Err(Error::param(format!("invalid band limit [{lo}, {hi}]")));
    }
    if hi >= sr / 2.0 {
        return Err(Error::param(format!(
            "band limit {hi} Hz is not below the Nyquist frequency {} Hz",
            sr / 2.0
        )));
    }
    if !(params.kappa.is_finite() && params.kappa >= 0.0) {
        return Err(Error::param("kappa must be >= 0"));
    }
    let stft = params.stft;
    let frames = stft.frame_count(audio.samples.len());
    if schedule.len() < frames {
        return Err(Error::Range(format!(
            "schedule covers {} frames but the clip needs {frames}",
            schedule.len()
        )));
    }
    let bins: Vec<(usize, f64)> = (0..=stft.frame_len() / 2)
        .map(|k| (k, stft.bin_hz(k, sr)))
        .filter(|(_, f)| *f >= lo && *f <= hi)
        .collect();
    let raw = stft::process(&audio.samples, &stft, |t, spectrum| {
        let center = schedule.omega0(t)?;
        let phi = params.phase.phase(t);
        for &(k, f) in &bins {
            spectrum[k] *= transfer(f, center, spec, params.kappa, phi);
        }
        Ok(())
    })?;
    let peak = raw.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let normalization_gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    let samples = raw.into_iter().map(|s| s * normalization_gain).collect();
    Ok(Anonymized {
        clip: AudioClip::new(audio.sample_rate_hz, samples)?,
        normalization_gain,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomizer::{make_schedule, max_slide_coefficient, SlideParams};

    fn slide() -> (SlideParams, f64) {
        let spec = ResonatorSpec::reference();
        let k = max_slide_coefficient(spec.l0, 4.0, spec.c_eff, 50.0);
        (SlideParams::new(spec.l0, k, 4.0).unwrap(), spec.c_eff)
    }

    fn tone(freq: f64, seconds: f64, amp: f64) -> AudioClip {
        let n = (16_000.0 * seconds) as usize;
        let samples = (0..n)
            .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / 16_000.0).sin())
            .collect();
        AudioClip::new(16_000, samples).unwrap()
    }

    #[test]
    fn transfer_identity_at_zero_kappa() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let sched = make_schedule(4, 10, 0.016, 0.2, &s, c).unwrap();
        for f in [0.0, 300.0, 500.0, 2000.0] {
            let h = frame_transfer(f, 3, &sched, &spec, 0.0, &PhaseModel::Seeded(1)).unwrap();
            assert_eq!(h, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn transfer_on_center() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let sched = make_schedule(4, 10, 0.016, 0.2, &s, c).unwrap();
        let f0 = sched.omega0_values[5];
        let h = frame_transfer(f0, 5, &sched, &spec, 72.0, &PhaseModel::Fixed(0.0)).unwrap();
        assert_eq!(h, Complex64::new(73.0, 0.0));
    }

    #[test]
    fn transfer_tail_bound() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let sched = make_schedule(4, 10, 0.016, 0.2, &s, c).unwrap();
        for t in 0..10 {
            let f = sched.omega0_values[t] + 10.0 * spec.half_width_hz;
            let h = frame_transfer(f, t, &sched, &spec, 72.0, &PhaseModel::Seeded(9)).unwrap();
            assert!((h - 1.0).norm() <= 72.0 / 101.0 + 1e-12);
        }
    }

    #[test]
    fn transfer_magnitude_bounds() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let sched = make_schedule(4, 50, 0.016, 0.2, &s, c).unwrap();
        for t in 0..50 {
            for f in [100.0, 480.0, 530.0, 900.0] {
                let g = spec.unit_gain_at_center(f, sched.omega0_values[t]);
                let h = frame_transfer(f, t, &sched, &spec, 72.0, &PhaseModel::Seeded(2)).unwrap();
                assert!(h.norm() <= 1.0 + 72.0 * g + 1e-12);
                assert!(h.norm() >= (1.0 - 72.0 * g).abs() - 1e-12);
            }
        }
    }

    #[test]
    fn frame_outside_schedule() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let sched = make_schedule(4, 10, 0.016, 0.2, &s, c).unwrap();
        let r = frame_transfer(500.0, 10, &sched, &spec, 72.0, &PhaseModel::Fixed(0.0));
        assert!(matches!(r, Err(Error::Range(_))));
    }

    #[test]
    fn seeded_phase_is_uniform_and_reproducible() {
        let p = PhaseModel::Seeded(11);
        let phases: Vec<f64> = (0..4000).map(|t| p.phase(t)).collect();
        assert_eq!(phases[17], PhaseModel::Seeded(11).phase(17));
        assert!(phases
            .iter()
            .all(|x| (0.0..std::f64::consts::TAU).contains(x)));
        let mean = phases.iter().sum::<f64>() / phases.len() as f64;
        assert!((mean - std::f64::consts::PI).abs() < 0.15);
    }

    #[test]
    fn zero_kappa_round_trip() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let clip = tone(440.0, 0.5, 0.8);
        let frames = frames_required(clip.samples.len(), &StftConfig::default());
        let sched = make_schedule(1, frames, 0.016, 0.2, &s, c).unwrap();
        let params = PerturbParams {
            kappa: 0.0,
            ..PerturbParams::default()
        };
        let out = anonymize(&clip, &sched, &spec, &params).unwrap();
        assert_eq!(out.normalization_gain, 1.0);
        assert_eq!(out.clip.samples.len(), clip.samples.len());
        let err = clip
            .samples
            .iter()
            .zip(&out.clip.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn short_schedule_is_a_range_error() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let clip = tone(440.0, 0.5, 0.5);
        let sched = make_schedule(1, 5, 0.016, 0.2, &s, c).unwrap();
        let r = anonymize(&clip, &sched, &spec, &PerturbParams::default());
        assert!(matches!(r, Err(Error::Range(_))));
    }

    #[test]
    fn band_above_nyquist_rejected() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let clip = AudioClip::new(1_200, vec![0.0; 4096]).unwrap();
        let sched = make_schedule(1, 100, 0.016, 0.2, &s, c).unwrap();
        let r = anonymize(&clip, &sched, &spec, &PerturbParams::default());
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn output_is_peak_normalized_and_deterministic() {
        let spec = ResonatorSpec::reference();
        let (s, c) = slide();
        let clip = tone(520.0, 0.5, 0.5);
        let frames = frames_required(clip.samples.len(), &StftConfig::default());
        let sched = make_schedule(3, frames, 0.016, 0.2, &s, c).unwrap();
        let params = PerturbParams {
            phase: PhaseModel::Seeded(5),
            ..PerturbParams::default()
        };
        let a = anonymize(&clip, &sched, &spec, &params).unwrap();
        let b = anonymize(&clip, &sched, &spec, &params).unwrap();
        assert!(a.clip.peak() <= 1.0);
        assert!(a.normalization_gain < 1.0);
        let bits = |x: &Anonymized| {
            x.clip
                .samples
                .iter()
                .map(|s| s.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn clip_validation() {
        assert!(AudioClip::new(0, vec![0.0]).is_err());
        assert!(AudioClip::new(16_000, vec![0.0, f64::NAN]).is_err());
        let c = AudioClip::new(16_000, vec![0.0; 8000]).unwrap();
        assert_eq!(c.duration_s(), 0.5);
    }
}
