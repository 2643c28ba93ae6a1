//! Anonymizes a WAV file, or a synthesized vowel when no path is given.
//!
//! `cargo run --example anonymize_wav -- [input.wav] [output.wav]`

use std::path::PathBuf;

use metashield::config::{derive_seed, RunConfig};
use metashield::corpus::{synthesize, Speaker};
use metashield::perturb::{anonymize, frames_required, AudioClip};
use metashield::randomizer::make_schedule;
use metashield::wav::{read_wav, write_wav};

fn main() -> metashield::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = RunConfig::default();
    let audio: AudioClip = match args.next() {
        Some(path) => read_wav(&PathBuf::from(path))?,
        None => {
            let speaker = Speaker {
                id: 0,
                f0_hz: 120.0,
                formant_scale: 1.0,
                tilt: 0.9,
                jitter: 0.01,
            };
            synthesize(&speaker, &["a", "i", "u"], 1.5, 16_000, -60.0, 7)?
        }
    };
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("metashield_anonymized.wav"));

    let spec = cfg.resonator()?;
    let schedule = make_schedule(
        derive_seed(cfg.seed, 0),
        frames_required(audio.samples.len(), &cfg.stft),
        cfg.slide.frame_hop_s,
        cfg.slide.step_mm,
        &cfg.slide_params()?,
        spec.c_eff,
    )?;
    let result = anonymize(
        &audio,
        &schedule,
        &spec,
        &cfg.perturb_params(derive_seed(cfg.seed, 1)),
    )?;
    write_wav(&out, &result.clip, cfg.perturb.output_format)?;
    println!(
        "{} samples, {} frames, normalization gain {:.4}",
        audio.samples.len(),
        result.frames,
        result.normalization_gain
    );
    println!("wrote {}", out.display());
    Ok(())
}
