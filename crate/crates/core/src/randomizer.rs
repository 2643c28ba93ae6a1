//! Sliding-block resonance randomization.
//!
//! A block of slide `u` (mm) shrinks the effective size to `L0 - k * u`,
//! which raises the resonance to `c_eff / (L0 - k * u)`. User motion is
//! modelled as a seeded reflected random walk of `u`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::io_util::{read_json, to_json_bytes, write_atomic};

/// Default slide travel of the telescopic segment, mm.
pub const DEFAULT_U_MAX_MM: f64 = 4.0;
/// Default allowed drift of the resonance, Hz.
pub const DEFAULT_BAND_HZ: f64 = 50.0;
/// Default per-frame walk step, mm.
pub const DEFAULT_STEP_MM: f64 = 0.2;
/// Default frame hop of a schedule, s.
pub const DEFAULT_FRAME_HOP_S: f64 = 0.016;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlideParams {
    pub l0: f64,
    /// Effective-size units removed per mm of slide.
    pub slide_coeff: f64,
    pub u_max_mm: f64,
    pub block_total_mm: f64,
    pub u2_fixed_mm: f64,
    pub block_cross_mm: f64,
}

impl SlideParams {
    pub fn new(l0: f64, slide_coeff: f64, u_max_mm: f64) -> Result<Self> {
        ensure_positive("l0", l0)?;
        ensure_positive("u_max_mm", u_max_mm)?;
        if !(slide_coeff.is_finite() && slide_coeff >= 0.0) {
            return Err(Error::param(format!(
                "slide_coeff must be >= 0, got {slide_coeff}"
            )));
        }
        if l0 - slide_coeff * u_max_mm <= 0.0 {
            return Err(Error::param(format!(
                "slide collapses the effective size: l0 - slide_coeff * u_max = {}",
                l0 - slide_coeff * u_max_mm
            )));
        }
        Ok(SlideParams {
            l0,
            slide_coeff,
            u_max_mm,
            block_total_mm: 16.0,
            u2_fixed_mm: 8.0,
            block_cross_mm: 5.0,
        })
    }

    /// Effective size at slide `u`.
    pub fn effective_size(&self, u_mm: f64) -> f64 {
        self.l0 - self.slide_coeff * u_mm
    }
}

/// Resonance at slide `u`: `c_eff / (l0 - slide_coeff * u)`.
pub fn shifted_resonance(u_mm: f64, slide: &SlideParams, c_eff: f64) -> Result<f64> {
    if !(0.0..=slide.u_max_mm).contains(&u_mm) {
        return Err(Error::param(format!(
            "slide {u_mm} mm outside [0, {}] mm",
            slide.u_max_mm
        )));
    }
    Ok(c_eff / slide.effective_size(u_mm))
}

/// Largest slide coefficient keeping the full-travel shift within `band_hz`.
///
/// Solves `c_eff / (l0 - k * u_max) - c_eff / l0 = band_hz` for `k`.
pub fn max_slide_coefficient(l0: f64, u_max_mm: f64, c_eff: f64, band_hz: f64) -> f64 {
    debug_assert!(band_hz >= 0.0);
    let center = c_eff / l0;
    l0 * (1.0 - center / (center + band_hz)) / u_max_mm
}

/// Seeded per-frame slide displacements and the resulting resonances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSchedule {
    pub seed: u64,
    pub frame_hop_s: f64,
    pub u_values: Vec<f64>,
    pub omega0_values: Vec<f64>,
}

impl PerturbationSchedule {
    pub fn len(&self) -> usize {
        self.u_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_values.is_empty()
    }

    /// A schedule that holds the slide at `u_mm` for every frame.
    pub fn constant(
        u_mm: f64,
        n_frames: usize,
        frame_hop_s: f64,
        slide: &SlideParams,
        c_eff: f64,
    ) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::param("schedule needs at least one frame"));
        }
        let omega0 = shifted_resonance(u_mm, slide, c_eff)?;
        Ok(PerturbationSchedule {
            seed: 0,
            frame_hop_s,
            u_values: vec![u_mm; n_frames],
            omega0_values: vec![omega0; n_frames],
        })
    }

    pub fn omega0(&self, frame: usize) -> Result<f64> {
        self.omega0_values.get(frame).copied().ok_or_else(|| {
            Error::Range(format!(
                "frame {frame} beyond schedule of {} frames",
                self.omega0_values.len()
            ))
        })
    }

    /// Structural checks applied to imported schedules.
    pub fn validate(&self) -> Result<()> {
        if self.u_values.is_empty() {
            return Err(Error::param("schedule has no frames"));
        }
        if self.u_values.len() != self.omega0_values.len() {
            return Err(Error::param(format!(
                "schedule length mismatch: {} u values, {} omega0 values",
                self.u_values.len(),
                self.omega0_values.len()
            )));
        }
        ensure_positive("frame_hop_s", self.frame_hop_s)?;
        if let Some(i) = self
            .u_values
            .iter()
            .chain(&self.omega0_values)
            .position(|v| !v.is_finite())
        {
            return Err(Error::param(format!(
                "non-finite schedule value at index {i}"
            )));
        }
        if let Some(bad) = self.omega0_values.iter().find(|w| **w <= 0.0) {
            return Err(Error::param(format!(
                "non-positive resonance {bad} in schedule"
            )));
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        to_json_bytes(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let schedule: PerturbationSchedule = read_json(path)?;
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Reflected uniform random walk of the slide in `[0, u_max]`.
///
/// The start point is drawn uniformly from the travel range; each frame adds
/// a step drawn uniformly from `[-step_mm, step_mm]`.
pub fn make_schedule(
    seed: u64,
    n_frames: usize,
    frame_hop_s: f64,
    step_mm: f64,
    slide: &SlideParams,
    c_eff: f64,
) -> Result<PerturbationSchedule> {
    if n_frames == 0 {
        return Err(Error::param("schedule needs at least one frame"));
    }
    ensure_positive("frame_hop_s", frame_hop_s)?;
    if !(step_mm.is_finite() && (0.0..=slide.u_max_mm).contains(&step_mm)) {
        return Err(Error::param(format!(
            "step_mm must lie in [0, {}], got {step_mm}",
            slide.u_max_mm
        )));
    }
    let u_max = slide.u_max_mm;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = rng.random_range(0.0..=u_max);
    let mut u_values = Vec::with_capacity(n_frames);
    u_values.push(u);
    for _ in 1..n_frames {
        if step_mm > 0.0 {
            u += rng.random_range(-step_mm..=step_mm);
            if u < 0.0 {
                u = -u;
            } else if u > u_max {
                u = 2.0 * u_max - u;
            }
            u = u.clamp(0.0, u_max);
        }
        u_values.push(u);
    }
    let omega0_values = u_values
        .iter()
        .map(|&u| shifted_resonance(u, slide, c_eff))
        .collect::<Result<Vec<_>>>()?;
    Ok(PerturbationSchedule {
        seed,
        frame_hop_s,
        u_values,
        omega0_values,
    })
}
