//! Subcommand implementations behind the `metashield` binary.
//!
//! Every run writes its outputs atomically and records a `run_manifest.json`
//! holding the command, the fully resolved config and the seed. Replaying a
//! manifest reproduces the outputs byte for byte.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, RunConfig};
use crate::corpus::{background_config, synthesize_corpus, Utterance};
use crate::error::{Error, Result};
use crate::eval::{band_distortion, mmr_with, rtc, BandDistortion, EvalReport, Normalizer};
use crate::field::gain_map;
use crate::io_util::{read_json, to_json_bytes, write_atomic};
use crate::layout::{design_layout, LayoutDesign};
use crate::perturb::{anonymize, frames_required, AudioClip, PhaseModel};
use crate::randomizer::{make_schedule, PerturbationSchedule};
use crate::resonator::gain_curve;
use crate::wav::{encode_wav, list_wavs, parse_wav, read_wav, SampleFormat};

pub const MANIFEST_NAME: &str = "run_manifest.json";
pub const RTC_KIND: &str = "software processing time / audio duration";

/// One subcommand with its path arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    GainCurve {
        out: PathBuf,
    },
    DesignLayout {
        out: PathBuf,
    },
    GainMap {
        out: PathBuf,
        /// Output of `design-layout`; the config's `map.unit_angles_deg` otherwise.
        layout: Option<PathBuf>,
    },
    Schedule {
        out: PathBuf,
        frames: Option<usize>,
        /// Sizes the schedule for this WAV file.
        input: Option<PathBuf>,
    },
    Anonymize {
        input: PathBuf,
        out: PathBuf,
        schedule: Option<PathBuf>,
    },
    /// Writes `report.json` and `similarities.csv` into `out`. Without
    /// directories, evaluates the bundled synthetic corpus.
    Evaluate {
        out: PathBuf,
        original: Option<PathBuf>,
        anonymized: Option<PathBuf>,
    },
    Pipeline {
        out: PathBuf,
    },
}

impl Command {
    pub fn out(&self) -> &Path {
        match self {
            Command::GainCurve { out }
            | Command::DesignLayout { out }
            | Command::GainMap { out, .. }
            | Command::Schedule { out, .. }
            | Command::Anonymize { out, .. }
            | Command::Evaluate { out, .. }
            | Command::Pipeline { out } => out,
        }
    }

    pub fn with_out(&self, new_out: PathBuf) -> Command {
        let mut cmd = self.clone();
        match &mut cmd {
            Command::GainCurve { out }
            | Command::DesignLayout { out }
            | Command::GainMap { out, .. }
            | Command::Schedule { out, .. }
            | Command::Anonymize { out, .. }
            | Command::Evaluate { out, .. }
            | Command::Pipeline { out } => *out = new_out,
        }
        cmd
    }

    fn writes_directory(&self) -> bool {
        matches!(self, Command::Evaluate { .. } | Command::Pipeline { .. })
    }

    /// Where this command's manifest goes.
    pub fn manifest_path(&self) -> PathBuf {
        let out = self.out();
        if self.writes_directory() {
            out.join(MANIFEST_NAME)
        } else {
            out.parent().unwrap_or(Path::new("")).join(MANIFEST_NAME)
        }
    }

    /// Resolves every path against the current directory.
    pub fn absolutized(&self) -> Result<Command> {
        let abs = |p: &PathBuf| std::path::absolute(p).map_err(|e| Error::io(p, e));
        let opt = |p: &Option<PathBuf>| p.as_ref().map(abs).transpose();
        Ok(match self {
            Command::GainCurve { out } => Command::GainCurve { out: abs(out)? },
            Command::DesignLayout { out } => Command::DesignLayout { out: abs(out)? },
            Command::GainMap { out, layout } => Command::GainMap {
                out: abs(out)?,
                layout: opt(layout)?,
            },
            Command::Schedule { out, frames, input } => Command::Schedule {
                out: abs(out)?,
                frames: *frames,
                input: opt(input)?,
            },
            Command::Anonymize {
                input,
                out,
                schedule,
            } => Command::Anonymize {
                input: abs(input)?,
                out: abs(out)?,
                schedule: opt(schedule)?,
            },
            Command::Evaluate {
                out,
                original,
                anonymized,
            } => Command::Evaluate {
                out: abs(out)?,
                original: opt(original)?,
                anonymized: opt(anonymized)?,
            },
            Command::Pipeline { out } => Command::Pipeline { out: abs(out)? },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: RunManifest = read_json(path)?;
        m.config.validate()?;
        Ok(m)
    }
}

/// Sidecar written next to an anonymized WAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnonymizeRecord {
    pub sample_rate_hz: u32,
    pub frames: usize,
    /// Factor applied to reach peak <= 1; divide by it to recover the level.
    pub normalization_gain: f64,
    pub schedule_seed: u64,
    pub phase: PhaseModel,
}

/// Sidecar path for an anonymized WAV: same stem, `.json` extension.
pub fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("json")
}

/// Process exit status for an error: 2 usage/config, 3 data, 4 internal.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parameter(_) | Error::Json { .. } => 2,
        Error::Geometry(_)
        | Error::Range(_)
        | Error::Degenerate(_)
        | Error::Format { .. }
        | Error::Io { .. } => 3,
        Error::Invariant(_) => 4,
    }
}

/// Runs `command` and writes its manifest. Returns the output paths.
pub fn run(command: &Command, config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let command = command.absolutized()?;
    let outputs = execute(&command, config)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        command: command.clone(),
        config: config.clone(),
        outputs: outputs.clone(),
    };
    write_atomic(&command.manifest_path(), &to_json_bytes(&manifest))?;
    Ok(outputs)
}

/// Re-runs a manifest, optionally redirecting its output.
pub fn replay(manifest_path: &Path, out: Option<PathBuf>) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(manifest_path)?;
    let command = match out {
        Some(o) => manifest.command.with_out(o),
        None => manifest.command,
    };
    run(&command, &manifest.config)
}

fn execute(command: &Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match command {
        Command::GainCurve { out } => {
            write_gain_curve(cfg, out)?;
            Ok(vec![out.clone()])
        }
        Command::DesignLayout { out } => {
            write_design(cfg, out)?;
            Ok(vec![out.clone()])
        }
        Command::GainMap { out, layout } => {
            let design = layout
                .as_deref()
                .map(read_json::<LayoutDesign>)
                .transpose()?;
            write_gain_map(cfg, design.as_ref(), out)?;
            Ok(vec![out.clone()])
        }
        Command::Schedule { out, frames, input } => {
            let n = match (frames, input) {
                (Some(n), None) => *n,
                (None, Some(path)) => frames_required(read_wav(path)?.samples.len(), &cfg.stft),
                _ => {
                    return Err(Error::param(
                        "schedule needs exactly one of --frames or --input",
                    ))
                }
            };
            let schedule = build_schedule(cfg, derive_seed(cfg.seed, 0), n)?;
            schedule.save(out)?;
            Ok(vec![out.clone()])
        }
        Command::Anonymize {
            input,
            out,
            schedule,
        } => {
            let audio = read_wav(input)?;
            let schedule = schedule
                .as_deref()
                .map(PerturbationSchedule::load)
                .transpose()?;
            let (bytes, _, record) = anonymize_clip(cfg, &audio, schedule, 0)?;
            write_atomic(out, &bytes)?;
            let side = sidecar_path(out);
            write_atomic(&side, &to_json_bytes(&record))?;
            Ok(vec![out.clone(), side])
        }
        Command::Evaluate {
            out,
            original,
            anonymized,
        } => {
            let report = match (original, anonymized) {
                (None, None) => evaluate_corpus(cfg)?.report,
                (Some(o), Some(a)) => evaluate_dirs(cfg, o, a)?,
                _ => {
                    return Err(Error::param(
                        "evaluate needs both --original and --anonymized, or neither",
                    ))
                }
            };
            write_report(&report, out)
        }
        Command::Pipeline { out } => pipeline(cfg, out),
    }
}

fn write_gain_curve(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = &cfg.gain_curve;
    let curve = gain_curve(&cfg.resonator()?, g.f_lo_hz, g.f_hi_hz, g.step_hz)?;
    write_atomic(out, curve.to_csv_string().as_bytes())
}

fn write_design(cfg: &RunConfig, out: &Path) -> Result<LayoutDesign> {
    let design = design_layout(&cfg.scene, &cfg.resonator()?, &cfg.field, &cfg.search)?;
    write_atomic(out, &to_json_bytes(&design))?;
    Ok(design)
}

fn write_gain_map(cfg: &RunConfig, design: Option<&LayoutDesign>, out: &Path) -> Result<()> {
    let layout = match design {
        Some(d) => d.layout()?,
        None => cfg.map_layout()?,
    };
    let map = gain_map(
        &layout,
        &cfg.scene,
        cfg.map.user_range_deg,
        cfg.map.user_step_deg,
        &cfg.resonator()?,
        &cfg.field,
    )?;
    write_atomic(out, map.to_csv_string().as_bytes())
}

fn build_schedule(cfg: &RunConfig, seed: u64, frames: usize) -> Result<PerturbationSchedule> {
    let spec = cfg.resonator()?;
    make_schedule(
        seed,
        frames,
        cfg.slide.frame_hop_s,
        cfg.slide.step_mm,
        &cfg.slide_params()?,
        spec.c_eff,
    )
}

/// Encodes a clip and decodes it back, so later stages see exactly what a
/// file holds.
fn quantize(clip: &AudioClip, format: SampleFormat) -> Result<(Vec<u8>, AudioClip)> {
    let bytes = encode_wav(clip, format)?;
    let decoded = parse_wav(&bytes, Path::new("<memory>"))?;
    Ok((bytes, decoded))
}

/// Anonymizes one clip using seed streams `2 * index` (schedule) and
/// `2 * index + 1` (phase) of the run seed.
fn anonymize_clip(
    cfg: &RunConfig,
    audio: &AudioClip,
    schedule: Option<PerturbationSchedule>,
    index: u64,
) -> Result<(Vec<u8>, AudioClip, AnonymizeRecord)> {
    let schedule_seed = derive_seed(cfg.seed, 2 * index);
    let phase_seed = derive_seed(cfg.seed, 2 * index + 1);
    let schedule = match schedule {
        Some(s) => s,
        None => build_schedule(
            cfg,
            schedule_seed,
            frames_required(audio.samples.len(), &cfg.stft),
        )?,
    };
    let params = cfg.perturb_params(phase_seed);
    let result = anonymize(audio, &schedule, &cfg.resonator()?, &params)?;
    let (bytes, decoded) = quantize(&result.clip, cfg.perturb.output_format)?;
    let record = AnonymizeRecord {
        sample_rate_hz: audio.sample_rate_hz,
        frames: result.frames,
        normalization_gain: result.normalization_gain,
        schedule_seed: schedule.seed,
        phase: params.phase,
    };
    Ok((bytes, decoded, record))
}

/// One evaluated trial of the bundled corpus.
pub struct CorpusTrial {
    pub utterance: Utterance,
    pub original_bytes: Vec<u8>,
    pub anonymized_bytes: Vec<u8>,
    pub record: AnonymizeRecord,
}

pub struct CorpusEvaluation {
    pub report: EvalReport,
    pub trials: Vec<CorpusTrial>,
}

/// Synthesizes the corpus, anonymizes the first `eval.trials` utterances and
/// scores them.
pub fn evaluate_corpus(cfg: &RunConfig) -> Result<CorpusEvaluation> {
    cfg.validate()?;
    let corpus = synthesize_corpus(&cfg.corpus)?;
    if corpus.len() < cfg.eval.trials {
        return Err(Error::param(format!(
            "corpus has {} utterances but {} trials were requested",
            corpus.len(),
            cfg.eval.trials
        )));
    }
    let start = Instant::now();
    let processed = corpus
        .into_par_iter()
        .take(cfg.eval.trials)
        .enumerate()
        .map(|(i, utterance)| {
            let (original_bytes, original) = quantize(&utterance.clip, cfg.perturb.output_format)?;
            let (anonymized_bytes, anonymized, record) =
                anonymize_clip(cfg, &original, None, i as u64 + 1)?;
            Ok((
                CorpusTrial {
                    utterance,
                    original_bytes,
                    anonymized_bytes,
                    record,
                },
                original,
                anonymized,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut trials = Vec::with_capacity(processed.len());
    let mut pairs = Vec::with_capacity(processed.len());
    let mut gains = Vec::with_capacity(processed.len());
    for (trial, original, anonymized) in processed {
        gains.push(trial.record.normalization_gain);
        pairs.push((original, anonymized));
        trials.push(trial);
    }
    let audio_s: f64 = pairs.iter().map(|(o, _)| o.duration_s()).sum();
    let timing = cfg.eval.measure_rtc.then_some((audio_s, elapsed));
    let report = score_pairs(cfg, &pairs, &gains, timing)?;
    Ok(CorpusEvaluation { report, trials })
}

/// Pairs every WAV in `original` with the same file name in `anonymized`.
fn evaluate_dirs(cfg: &RunConfig, original: &Path, anonymized: &Path) -> Result<EvalReport> {
    let files = list_wavs(original)?;
    if files.is_empty() {
        return Err(Error::param(format!(
            "no .wav files in {}",
            original.display()
        )));
    }
    let mut pairs = Vec::with_capacity(files.len());
    let mut gains = Vec::with_capacity(files.len());
    for path in files {
        let name = path.file_name().expect("listed files have names");
        let anon_path = anonymized.join(name);
        let side = sidecar_path(&anon_path);
        let gain = if side.exists() {
            read_json::<AnonymizeRecord>(&side)?.normalization_gain
        } else {
            1.0
        };
        pairs.push((read_wav(&path)?, read_wav(&anon_path)?));
        gains.push(gain);
    }
    score_pairs(cfg, &pairs, &gains, None)
}

/// Embedding normalizer fitted on the synthetic background population.
pub fn background_normalizer(cfg: &RunConfig, sample_rate_hz: u32) -> Result<Normalizer> {
    let mut bg = background_config(&cfg.corpus, cfg.eval.background_speakers);
    bg.sample_rate_hz = sample_rate_hz;
    let clips: Vec<AudioClip> = synthesize_corpus(&bg)?
        .into_iter()
        .map(|u| u.clip)
        .collect();
    Normalizer::fit_clips(&clips, &cfg.eval.embedding)
}

fn score_pairs(
    cfg: &RunConfig,
    pairs: &[(AudioClip, AudioClip)],
    gains: &[f64],
    timing: Option<(f64, f64)>,
) -> Result<EvalReport> {
    let normalizer = if cfg.eval.normalize {
        Some(background_normalizer(cfg, pairs[0].0.sample_rate_hz)?)
    } else {
        None
    };
    let result = mmr_with(
        pairs,
        cfg.eval.threshold,
        &cfg.eval.embedding,
        normalizer.as_ref(),
    )?;
    let per_trial = pairs
        .par_iter()
        .zip(gains)
        .map(|((o, a), g)| band_distortion(o, a, *g, cfg.eval.exclude_hz))
        .collect::<Result<Vec<_>>>()?;
    let oob_distortion_db = worst_per_band(&per_trial)?;
    let rtc = timing.map(|(audio, proc)| rtc(audio, proc)).transpose()?;
    Ok(EvalReport {
        trials: result.similarities.len(),
        similarities: result.similarities,
        mmr: result.mmr,
        threshold: result.threshold,
        oob_distortion_db,
        rtc,
        rtc_kind: RTC_KIND.to_string(),
    })
}

/// Largest distortion seen in each band across trials.
fn worst_per_band(per_trial: &[Vec<BandDistortion>]) -> Result<Vec<BandDistortion>> {
    let mut worst = per_trial
        .first()
        .cloned()
        .ok_or_else(|| Error::param("no trials"))?;
    for trial in &per_trial[1..] {
        if trial.len() != worst.len() {
            return Err(Error::param("trials differ in sample rate or band layout"));
        }
        for (w, b) in worst.iter_mut().zip(trial) {
            w.db = w.db.max(b.db);
        }
    }
    Ok(worst)
}

fn write_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let json = dir.join("report.json");
    let csv = dir.join("similarities.csv");
    write_atomic(&json, &to_json_bytes(report))?;
    let table =
        crate::eval::MmrResult::from_similarities(report.similarities.clone(), report.threshold)?;
    write_atomic(&csv, table.to_csv_string().as_bytes())?;
    Ok(vec![json, csv])
}

fn pipeline(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    let curve = out.join("gain_curve.csv");
    write_gain_curve(cfg, &curve)?;
    outputs.push(curve);

    let layout = out.join("layout.json");
    let design = write_design(cfg, &layout)?;
    outputs.push(layout);

    let map = out.join("gain_map.csv");
    write_gain_map(cfg, Some(&design), &map)?;
    outputs.push(map);

    let eval = evaluate_corpus(cfg)?;
    let orig_dir = out.join("corpus").join("original");
    let anon_dir = out.join("corpus").join("anonymized");
    for trial in &eval.trials {
        let name = format!("{}.wav", trial.utterance.name());
        let o = orig_dir.join(&name);
        let a = anon_dir.join(&name);
        let side = sidecar_path(&a);
        write_atomic(&o, &trial.original_bytes)?;
        write_atomic(&a, &trial.anonymized_bytes)?;
        write_atomic(&side, &to_json_bytes(&trial.record))?;
        outputs.extend([o, a, side]);
    }
    outputs.extend(write_report(&eval.report, out)?);
    Ok(outputs)
}
