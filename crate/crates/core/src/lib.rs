//! Reduced-order modelling toolkit for passive acoustic-metamaterial
//! voiceprint anonymizers.
//!
//! The crate is organised bottom-up:
//!
//! - [`resonator`]: Lorentzian gain of a single Mie-type resonator and its
//!   size/frequency relation.
//! - [`randomizer`]: the sliding-block frequency shift and seeded per-frame
//!   displacement schedules.
//! - [`geometry`]: mouth and microphone positions under head rotation.
//! - [`field`]: directional superposition of resonator units at the microphone.
//! - [`layout`]: greedy orientation search for multi-unit layouts.
//! - [`perturb`]: STFT-domain application of the time-varying transfer function.
//! - [`eval`]: MFCC-statistics embedding, miss-match rate, out-of-band
//!   distortion and real-time coefficient.
//! - [`corpus`]: formant-synthesised speakers for self-contained evaluation.
//! - [`cli`]: the commands behind the `metashield` binary, including run
//!   manifests and replay.
//!
//! Runnable walkthroughs for each capability live in the crate's
//! `examples/` directory.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod layout;
pub mod perturb;
pub mod randomizer;
pub mod resonator;
pub mod wav;

mod io_util;

pub use error::{Error, Result};
