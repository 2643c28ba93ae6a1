//! Greedy orientation search for multi-unit layouts.
//!
//! The first unit faces the speaker (0 deg). Each further unit is placed by
//! scanning its orientation over a grid while the earlier units stay fixed,
//! keeping the orientation that maximises the aggregate interference gain
//! over the range of head angles.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::field::{
    angle_grid, gain_map, FieldConfig, InterferenceMap, Layout, DEFAULT_COUPLING, MAX_UNITS,
};
use crate::geometry::Scene;
use crate::resonator::ResonatorSpec;

/// Relative margin under which two candidate scores count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Mean,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub user_range_deg: (f64, f64),
    pub user_step_deg: f64,
    pub unit_angle_range_deg: (f64, f64),
    pub unit_step_deg: f64,
    pub aggregate: Aggregate,
    pub max_units: usize,
    pub directivity_exponent: f64,
    pub coupling: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            user_range_deg: (-90.0, 90.0),
            user_step_deg: 5.0,
            unit_angle_range_deg: (-180.0, 180.0),
            unit_step_deg: 5.0,
            aggregate: Aggregate::Mean,
            max_units: 3,
            directivity_exponent: 1.0,
            coupling: DEFAULT_COUPLING,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("user_step_deg", self.user_step_deg)?;
        ensure_positive("unit_step_deg", self.unit_step_deg)?;
        let (ulo, uhi) = self.user_range_deg;
        if !(-180.0 <= ulo && ulo <= uhi && uhi <= 180.0) {
            return Err(Error::param(format!("invalid user range [{ulo}, {uhi}]")));
        }
        let (alo, ahi) = self.unit_angle_range_deg;
        if !(-180.0 <= alo && alo <= ahi && ahi <= 180.0) {
            return Err(Error::param(format!(
                "invalid unit angle range [{alo}, {ahi}]"
            )));
        }
        if !(1..=MAX_UNITS).contains(&self.max_units) {
            return Err(Error::param(format!(
                "max_units must lie in 1..={MAX_UNITS}, got {}",
                self.max_units
            )));
        }
        Ok(())
    }

    /// Candidate orientations in preference order: smaller |angle| first,
    /// negative before positive.
    pub fn candidates(&self) -> Result<Vec<f64>> {
        let (lo, hi) = self.unit_angle_range_deg;
        let mut grid = angle_grid(lo, hi, self.unit_step_deg)?;
        grid.sort_by(|a, b| prefer(*a, *b));
        Ok(grid)
    }

    fn layout(&self, angles: Vec<f64>) -> Result<Layout> {
        Layout::new(angles, self.directivity_exponent, self.coupling)
    }
}

/// Ordering used to break ties between equally scoring orientations.
pub fn prefer(a: f64, b: f64) -> Ordering {
    a.abs().total_cmp(&b.abs()).then_with(|| a.total_cmp(&b))
}

/// Mean or minimum of the map's gains.
pub fn aggregate_objective(map: &InterferenceMap, mode: Aggregate) -> Result<f64> {
    if map.gains.is_empty() {
        return Err(Error::param("cannot aggregate an empty interference map"));
    }
    Ok(match mode {
        Aggregate::Mean => map.gains.iter().sum::<f64>() / map.gains.len() as f64,
        Aggregate::Min => map.gains.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

/// Aggregate objective of a complete layout over the configured user range.
pub fn layout_score(
    angles: &[f64],
    scene: &Scene,
    spec: &ResonatorSpec,
    field: &FieldConfig,
    config: &SearchConfig,
) -> Result<f64> {
    let layout = config.layout(angles.to_vec())?;
    let map = gain_map(
        &layout,
        scene,
        config.user_range_deg,
        config.user_step_deg,
        spec,
        field,
    )?;
    aggregate_objective(&map, config.aggregate)
}

/// Index of the best score; earlier indices win ties.
pub fn argmax_with_ties(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if *s > scores[b] + TIE_TOLERANCE * scores[b].abs() => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Result of [`design_layout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDesign {
    pub unit_angles_deg: Vec<f64>,
    /// Objective after placing 1, 2, ... units.
    pub stage_scores: Vec<f64>,
    pub config: SearchConfig,
}

impl LayoutDesign {
    pub fn layout(&self) -> Result<Layout> {
        self.config.layout(self.unit_angles_deg.clone())
    }
}

/// Greedy per-unit search with the first unit fixed at 0 deg.
pub fn design_layout(
    scene: &Scene,
    spec: &ResonatorSpec,
    field: &FieldConfig,
    config: &SearchConfig,
) -> Result<LayoutDesign> {
    config.validate()?;
    field.validate()?;
    let candidates = config.candidates()?;
    let mut angles = vec![0.0];
    let mut stage_scores = vec![layout_score(&angles, scene, spec, field, config)?];
    for _ in 1..config.max_units {
        let scores = candidates
            .par_iter()
            .map(|&a| {
                let mut trial = angles.clone();
                trial.push(a);
                layout_score(&trial, scene, spec, field, config)
            })
            .collect::<Result<Vec<_>>>()?;
        let best = argmax_with_ties(&scores)
            .ok_or_else(|| Error::Invariant("empty candidate grid".into()))?;
        angles.push(candidates[best]);
        stage_scores.push(scores[best]);
    }
    Ok(LayoutDesign {
        unit_angles_deg: angles,
        stage_scores,
        config: config.clone(),
    })
}
