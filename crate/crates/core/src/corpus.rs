//! Formant-synthesised speech corpus.
//!
//! Each synthetic speaker has its own pitch, vocal-tract length (a common
//! scale on all formants) and spectral tilt. An utterance is a glide through
//! a seeded sequence of vowel targets, produced by a jittered glottal pulse
//! train driving a cascade of second-order formant resonators. A white
//! recording noise floor is added so that weak spectral regions sit at a
//! physical level rather than at the limits of floating-point precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::perturb::AudioClip;

/// Average adult vowel formants F1, F2, F3 in Hz.
const VOWELS: [(&str, [f64; 3]); 10] = [
    ("i", [270.0, 2290.0, 3010.0]),
    ("I", [390.0, 1990.0, 2550.0]),
    ("E", [530.0, 1840.0, 2480.0]),
    ("ae", [660.0, 1720.0, 2410.0]),
    ("a", [730.0, 1090.0, 2440.0]),
    ("O", [570.0, 840.0, 2410.0]),
    ("U", [440.0, 1020.0, 2240.0]),
    ("u", [300.0, 870.0, 2240.0]),
    ("V", [640.0, 1190.0, 2390.0]),
    ("3", [490.0, 1350.0, 1690.0]),
];

const BANDWIDTHS_HZ: [f64; 4] = [80.0, 100.0, 140.0, 200.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: usize,
    pub f0_hz: f64,
    /// Multiplier on all formant frequencies (shorter tract, higher formants).
    pub formant_scale: f64,
    /// Glottal low-pass pole; larger is darker.
    pub tilt: f64,
    /// Relative period-to-period pitch jitter.
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub vowels_per_utterance: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    /// RMS of the added white noise relative to the clip peak, dB.
    pub noise_floor_db: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            speakers: 10,
            utterances_per_speaker: 3,
            vowels_per_utterance: 10,
            duration_s: 3.0,
            sample_rate_hz: 16_000,
            noise_floor_db: -60.0,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: Speaker,
    pub index: usize,
    pub vowels: Vec<&'static str>,
    pub clip: AudioClip,
}

impl Utterance {
    /// Stable file stem, e.g. `spk03_utt1`.
    pub fn name(&self) -> String {
        format!("spk{:02}_utt{}", self.speaker.id, self.index)
    }
}

/// Second-order resonator with unity gain at DC.
struct Formant {
    y1: f64,
    y2: f64,
}

impl Formant {
    fn step(&mut self, x: f64, freq: f64, bw: f64, sr: f64) -> f64 {
        let t = 1.0 / sr;
        let c = -(-std::f64::consts::TAU * bw * t).exp();
        let b =
            2.0 * (-std::f64::consts::PI * bw * t).exp() * (std::f64::consts::TAU * freq * t).cos();
        let a = 1.0 - b - c;
        let y = a * x + b * self.y1 + c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn draw_speaker(id: usize, rng: &mut ChaCha8Rng) -> Speaker {
    Speaker {
        id,
        f0_hz: rng.random_range(90.0..250.0),
        formant_scale: rng.random_range(0.82..1.25),
        tilt: rng.random_range(0.90..0.98),
        jitter: rng.random_range(0.005..0.02),
    }
}

/// Vowel sequence cycling through shuffled copies of the full vowel set, so
/// every utterance of at least ten vowels covers each vowel.
fn draw_vowels(count: usize, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut set: Vec<&'static str> = VOWELS.iter().map(|(v, _)| *v).collect();
        for i in (1..set.len()).rev() {
            set.swap(i, rng.random_range(0..=i));
        }
        out.extend(set.into_iter().take(count - out.len()));
    }
    out
}

/// Synthesises one utterance gliding through `vowels`.
pub fn synthesize(
    speaker: &Speaker,
    vowels: &[&'static str],
    duration_s: f64,
    sample_rate_hz: u32,
    noise_floor_db: f64,
    seed: u64,
) -> Result<AudioClip> {
    ensure_positive("duration_s", duration_s)?;
    if !(noise_floor_db.is_finite() || noise_floor_db == f64::NEG_INFINITY) || noise_floor_db > 0.0
    {
        return Err(Error::param(format!(
            "noise_floor_db must be <= 0, got {noise_floor_db}"
        )));
    }
    if vowels.is_empty() {
        return Err(Error::param("utterance needs at least one vowel"));
    }
    let targets: Vec<[f64; 3]> = vowels
        .iter()
        .map(|v| {
            VOWELS
                .iter()
                .find(|(name, _)| name == v)
                .map(|(_, f)| *f)
                .ok_or_else(|| Error::param(format!("unknown vowel {v}")))
        })
        .collect::<Result<_>>()?;
    let sr = sample_rate_hz as f64;
    let n = (duration_s * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut formants: Vec<Formant> = (0..4).map(|_| Formant { y1: 0.0, y2: 0.0 }).collect();
    let mut glottal = [0.0f64; 2];
    let mut phase = 0.0;
    let mut period_f0 = speaker.f0_hz;
    let mut prev = 0.0;
    let segment = n as f64 / targets.len() as f64;
    let fade = (0.02 * sr) as usize;

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Hold each vowel for the middle of its segment and glide between them.
        let pos = i as f64 / segment;
        let seg = (pos.floor() as usize).min(targets.len() - 1);
        let frac = pos - seg as f64;
        let next = (seg + 1).min(targets.len() - 1);
        let blend = ((frac - 0.7) / 0.3).clamp(0.0, 1.0);
        let f: Vec<f64> = (0..3)
            .map(|k| {
                speaker.formant_scale * (targets[seg][k] * (1.0 - blend) + targets[next][k] * blend)
            })
            .collect();

        // Slow pitch declination across the utterance.
        let f0 = period_f0 * (1.0 - 0.08 * i as f64 / n as f64);
        phase += f0 / sr;
        let mut excitation = 0.0;
        if phase >= 1.0 {
            phase -= 1.0;
            excitation = 1.0;
            period_f0 = speaker.f0_hz * (1.0 + speaker.jitter * rng.random_range(-1.0..1.0));
        }
        excitation += 0.01 * rng.random_range(-1.0..1.0);
        for g in glottal.iter_mut() {
            *g = speaker.tilt * *g + (1.0 - speaker.tilt) * excitation;
            excitation = *g;
        }
        let mut y = excitation;
        for (k, res) in formants.iter_mut().enumerate() {
            let freq = if k < 3 {
                f[k]
            } else {
                3500.0 * speaker.formant_scale
            };
            y = res.step(y, freq, BANDWIDTHS_HZ[k] * speaker.formant_scale, sr);
        }
        // Lip radiation.
        let radiated = y - prev;
        prev = y;
        let env = (i.min(n - 1 - i) as f64 / fade as f64).min(1.0);
        out.push(radiated * env);
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        // Uniform noise on [-a, a] has RMS a / sqrt(3).
        let a = 3f64.sqrt() * peak * 10f64.powf(noise_floor_db / 20.0);
        out.iter_mut()
            .for_each(|s| *s += a * rng.random_range(-1.0..=1.0));
        let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        out.iter_mut().for_each(|s| *s *= 0.5 / peak);
    }
    AudioClip::new(sample_rate_hz, out)
}

/// Disjoint population used to fit score normalisation: `speakers` fresh
/// speakers drawn from the complement of the evaluation seed.
pub fn background_config(config: &CorpusConfig, speakers: usize) -> CorpusConfig {
    CorpusConfig {
        speakers,
        seed: !config.seed,
        ..*config
    }
}

/// Builds `speakers * utterances_per_speaker` utterances, ordered by speaker.
pub fn synthesize_corpus(config: &CorpusConfig) -> Result<Vec<Utterance>> {
    if config.speakers == 0
        || config.utterances_per_speaker == 0
        || config.vowels_per_utterance == 0
    {
        return Err(Error::param("corpus dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let speakers: Vec<Speaker> = (0..config.speakers)
        .map(|id| draw_speaker(id, &mut rng))
        .collect();
    let mut corpus = Vec::new();
    for speaker in &speakers {
        for index in 0..config.utterances_per_speaker {
            let vowels = draw_vowels(config.vowels_per_utterance, &mut rng);
            let seed = rng.random::<u64>();
            let clip = synthesize(
                speaker,
                &vowels,
                config.duration_s,
                config.sample_rate_hz,
                config.noise_floor_db,
                seed,
            )?;
            corpus.push(Utterance {
                speaker: *speaker,
                index,
                vowels,
                clip,
            });
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{embed, similarity, EmbeddingConfig};

    #[test]
    fn corpus_shape() {
        let cfg = CorpusConfig::default();
        let corpus = synthesize_corpus(&cfg).unwrap();
        assert_eq!(corpus.len(), 30);
        for u in &corpus {
            assert_eq!(u.clip.samples.len(), 48_000);
            assert!((u.clip.peak() - 0.5).abs() < 1e-12);
            let mut v = u.vowels.clone();
            v.sort();
            v.dedup();
            assert_eq!(v.len(), 10);
        }
        assert_eq!(corpus[4].name(), "spk01_utt1");
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = synthesize_corpus(&CorpusConfig::default()).unwrap();
        let b = synthesize_corpus(&CorpusConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn speakers_are_distinct() {
        let corpus = synthesize_corpus(&CorpusConfig::default()).unwrap();
        let mut f0s: Vec<f64> = corpus.iter().map(|u| u.speaker.f0_hz).collect();
        f0s.dedup();
        assert_eq!(f0s.len(), 10);
    }

    #[test]
    fn same_speaker_is_more_similar_than_noise() {
        let corpus = synthesize_corpus(&CorpusConfig::default()).unwrap();
        let cfg = EmbeddingConfig::default();
        let a = embed(&corpus[0].clip, &cfg).unwrap();
        let b = embed(&corpus[1].clip, &cfg).unwrap();
        assert!(similarity(&a, &b).unwrap() > 0.5);
    }

    #[test]
    fn noise_floor_level() {
        let spk = Speaker {
            id: 0,
            f0_hz: 120.0,
            formant_scale: 1.0,
            tilt: 0.95,
            jitter: 0.01,
        };
        let clean = synthesize(&spk, &["a", "i"], 1.0, 16_000, f64::NEG_INFINITY, 3).unwrap();
        let noisy = synthesize(&spk, &["a", "i"], 1.0, 16_000, -40.0, 3).unwrap();
        let scale = clean.peak() / noisy.peak();
        let diff: Vec<f64> = noisy
            .samples
            .iter()
            .zip(&clean.samples)
            .map(|(n, c)| n - c)
            .collect();
        let rms = (diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64).sqrt();
        let db = 20.0 * (rms / 0.5).log10();
        assert!((db + 40.0).abs() < 0.5, "{db} dB (scale {scale})");
    }

    #[test]
    fn unknown_vowel_rejected() {
        let spk = Speaker {
            id: 0,
            f0_hz: 120.0,
            formant_scale: 1.0,
            tilt: 0.95,
            jitter: 0.01,
        };
        assert!(synthesize(&spk, &["q"], 0.5, 16_000, -60.0, 1).is_err());
        assert!(synthesize(&spk, &[], 0.5, 16_000, -60.0, 1).is_err());
        assert!(synthesize(&spk, &["a"], 0.5, 16_000, 3.0, 1).is_err());
    }
}
