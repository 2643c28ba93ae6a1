//! Reduced-order field model: direct sound plus directional scattering from
//! resonator units on a small ring around the microphone.
//!
//! For a head angle `theta` the complex response at the microphone is
//!
//! ```text
//! H(f) = 1 + sum_j kappa * D(theta - a_j) * g(f) * exp(i 2 pi f dr_j / c)
//! ```
//!
//! with `D` a raised-cosine directivity, `g` the unit-peak Lorentzian and
//! `dr_j` the extra path length via unit `j`. The interference gain is the
//! mean of `|H|` over a uniform grid spanning the perturbation band.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::geometry::{MicKind, Point3, Scene};
use crate::io_util::fmt_sig;
use crate::resonator::ResonatorSpec;

pub const MAX_UNITS: usize = 8;
/// On-axis coupling making a single unit reach 73x at resonance.
pub const DEFAULT_COUPLING: f64 = 72.0;

/// Orientations of the resonator units around the microphone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub unit_angles_deg: Vec<f64>,
    pub directivity_exponent: f64,
    pub coupling: f64,
}

impl Layout {
    pub fn new(
        unit_angles_deg: Vec<f64>,
        directivity_exponent: f64,
        coupling: f64,
    ) -> Result<Self> {
        let layout = Layout {
            unit_angles_deg,
            directivity_exponent,
            coupling,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Layout with the default exponent (1) and coupling (72).
    pub fn with_angles(unit_angles_deg: Vec<f64>) -> Result<Self> {
        Layout::new(unit_angles_deg, 1.0, DEFAULT_COUPLING)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.unit_angles_deg.len();
        if !(1..=MAX_UNITS).contains(&n) {
            return Err(Error::param(format!(
                "layout needs 1..={MAX_UNITS} units, got {n}"
            )));
        }
        if let Some(a) = self
            .unit_angles_deg
            .iter()
            .find(|a| !(-180.0..=180.0).contains(*a))
        {
            return Err(Error::param(format!("unit angle {a} outside [-180, 180]")));
        }
        if !(self.directivity_exponent.is_finite() && self.directivity_exponent >= 0.0) {
            return Err(Error::param("directivity exponent must be >= 0"));
        }
        if !(self.coupling.is_finite() && self.coupling >= 0.0) {
            return Err(Error::param("coupling must be >= 0"));
        }
        Ok(())
    }

    /// The same layout with every unit angle negated.
    pub fn mirrored(&self) -> Layout {
        Layout {
            unit_angles_deg: self.unit_angles_deg.iter().map(|a| -a).collect(),
            ..self.clone()
        }
    }
}

/// Raised-cosine directivity `((1 + cos(delta)) / 2)^p`.
pub fn directivity(delta_deg: f64, p: f64) -> f64 {
    let base = 0.5 * (1.0 + delta_deg.to_radians().cos());
    // cos(pi) rounds to -1 exactly, but clamp guards tiny negatives.
    base.max(0.0).powf(p)
}

/// Numerical settings of the field model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    /// Radius of the ring carrying the units, centred on the microphone.
    pub ring_radius_cm: f64,
    pub c_air_m_s: f64,
    pub band_hz: (f64, f64),
    pub n_freq: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            ring_radius_cm: 2.0,
            c_air_m_s: 343.0,
            band_hz: (300.0, 700.0),
            n_freq: 128,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ring_radius_cm.is_finite() && self.ring_radius_cm >= 0.0) {
            return Err(Error::param("ring_radius_cm must be >= 0"));
        }
        ensure_positive("c_air_m_s", self.c_air_m_s)?;
        let (lo, hi) = self.band_hz;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::param(format!("invalid band [{lo}, {hi}]")));
        }
        if self.n_freq == 0 || (self.n_freq < 2 && lo != hi) {
            return Err(Error::param(
                "n_freq must be >= 2 unless the band is a single frequency",
            ));
        }
        Ok(())
    }

    /// Uniform grid over the band, endpoints included.
    pub fn frequencies(&self) -> Vec<f64> {
        let (lo, hi) = self.band_hz;
        if self.n_freq == 1 {
            return vec![lo];
        }
        let span = hi - lo;
        let last = (self.n_freq - 1) as f64;
        (0..self.n_freq)
            .map(|i| lo + span * (i as f64 / last))
            .collect()
    }
}

/// Positions of the units and the effective incidence angle for one head angle.
struct Placement {
    source: Point3,
    mic: Point3,
    /// Rotation of the ring and of the incidence direction (handheld follows the head).
    frame_rotation_deg: f64,
}

fn placement(scene: &Scene, theta_user: f64) -> Result<Placement> {
    let source = scene.source_position(theta_user)?;
    let mic = scene.mic_position(theta_user)?;
    if source.distance(&mic) < 1e-9 {
        return Err(Error::Geometry(format!(
            "source coincides with microphone at theta = {theta_user}"
        )));
    }
    let frame_rotation_deg = match scene.mic_kind {
        MicKind::Gooseneck => 0.0,
        MicKind::Handheld => theta_user,
    };
    Ok(Placement {
        source,
        mic,
        frame_rotation_deg,
    })
}

/// Extra path length via each unit, in cm.
fn path_excess(layout: &Layout, place: &Placement, ring_radius_cm: f64) -> Vec<f64> {
    let direct = place.source.distance(&place.mic);
    layout
        .unit_angles_deg
        .iter()
        .map(|a| {
            let az = (a + place.frame_rotation_deg).to_radians();
            let unit = Point3::new(
                place.mic.x + ring_radius_cm * az.sin(),
                place.mic.y + ring_radius_cm * az.cos(),
                place.mic.z,
            );
            place.source.distance(&unit) + ring_radius_cm - direct
        })
        .collect()
}

/// Band-mean of `|H|` at the microphone for head angle `theta_user`.
pub fn interference_gain(
    layout: &Layout,
    scene: &Scene,
    theta_user: f64,
    spec: &ResonatorSpec,
    field: &FieldConfig,
) -> Result<f64> {
    layout.validate()?;
    field.validate()?;
    let place = placement(scene, theta_user)?;
    let excess = path_excess(layout, &place, field.ring_radius_cm);
    let incidence = theta_user - place.frame_rotation_deg;
    let weights: Vec<f64> = layout
        .unit_angles_deg
        .iter()
        .map(|a| layout.coupling * directivity(incidence - a, layout.directivity_exponent))
        .collect();
    let c_cm_s = field.c_air_m_s * 100.0;
    let freqs = field.frequencies();
    let mut total = 0.0;
    for &f in &freqs {
        let g = spec.unit_gain(f);
        let mut h = Complex64::new(1.0, 0.0);
        for (w, dr) in weights.iter().zip(&excess) {
            let phase = std::f64::consts::TAU * f * dr / c_cm_s;
            h += Complex64::from_polar(w * g, phase);
        }
        total += h.norm();
    }
    Ok(total / freqs.len() as f64)
}

/// Interference gain tabulated over head angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMap {
    pub user_angles_deg: Vec<f64>,
    pub band_hz: (f64, f64),
    pub gains: Vec<f64>,
}

impl InterferenceMap {
    pub fn gain_at(&self, theta: f64) -> Option<f64> {
        self.user_angles_deg
            .iter()
            .position(|t| (t - theta).abs() < 1e-9)
            .map(|i| self.gains[i])
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, g) in self.gains.iter().enumerate() {
            if *g > self.gains[best] {
                best = i;
            }
        }
        best
    }

    /// Writes `theta_deg,gain` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "theta_deg,gain")?;
        for (t, g) in self.user_angles_deg.iter().zip(&self.gains) {
            writeln!(out, "{},{}", fmt_sig(*t), fmt_sig(*g))?;
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

/// Grid `lo, lo + step, ...` up to `hi` inclusive, computed without accumulation.
pub fn angle_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    ensure_positive("angle step", step)?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::param(format!("invalid angle range [{lo}, {hi}]")));
    }
    let count = ((hi - lo) / step * (1.0 + 1e-12)).floor() as usize + 1;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}

/// Interference gain at each angle of `[lo, hi]` in steps of `step`.
///
/// Angles are evaluated in parallel; each gain is computed independently, so
/// the result does not depend on the thread count.
pub fn gain_map(
    layout: &Layout,
    scene: &Scene,
    theta_range: (f64, f64),
    theta_step: f64,
    spec: &ResonatorSpec,
    field: &FieldConfig,
) -> Result<InterferenceMap> {
    let angles = angle_grid(theta_range.0, theta_range.1, theta_step)?;
    let gains = angles
        .par_iter()
        .map(|&t| interference_gain(layout, scene, t, spec, field))
        .collect::<Result<Vec<_>>>()?;
    Ok(InterferenceMap {
        user_angles_deg: angles,
        band_hz: field.band_hz,
        gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> ResonatorSpec {
        ResonatorSpec::reference()
    }

    #[test]
    fn directivity_values() {
        assert_eq!(directivity(0.0, 1.0), 1.0);
        assert!((directivity(90.0, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(directivity(180.0, 1.0), 0.0);
        assert_eq!(directivity(-180.0, 2.0), 0.0);
        assert_eq!(directivity(37.0, 0.0), 1.0);
        assert_eq!(directivity(30.0, 1.5), directivity(-30.0, 1.5));
    }

    #[test]
    fn on_axis_calibration_anchor() {
        let layout = Layout::with_angles(vec![0.0]).unwrap();
        let field = FieldConfig {
            ring_radius_cm: 0.0,
            band_hz: (500.0, 500.0),
            n_freq: 1,
            ..FieldConfig::default()
        };
        let g = interference_gain(&layout, &Scene::default(), 0.0, &spec(), &field).unwrap();
        assert!((g - 73.0).abs() < 1e-12, "{g}");
    }

    #[test]
    fn zero_coupling_is_identity() {
        let layout = Layout::new(vec![0.0, -120.0, 120.0], 1.0, 0.0).unwrap();
        let map = gain_map(
            &layout,
            &Scene::default(),
            (-90.0, 90.0),
            15.0,
            &spec(),
            &FieldConfig::default(),
        )
        .unwrap();
        assert!(map.gains.iter().all(|g| (g - 1.0).abs() < 1e-15));
    }

    #[test]
    fn symmetric_layout_is_even() {
        let layout = Layout::with_angles(vec![-120.0, 0.0, 120.0]).unwrap();
        let field = FieldConfig::default();
        for deg in 0..=90 {
            let t = deg as f64;
            let a = interference_gain(&layout, &Scene::default(), t, &spec(), &field).unwrap();
            let b = interference_gain(&layout, &Scene::default(), -t, &spec(), &field).unwrap();
            assert!((a - b).abs() < 1e-12, "theta {t}: {a} vs {b}");
        }
    }

    #[test]
    fn single_unit_shape() {
        let layout = Layout::with_angles(vec![0.0]).unwrap();
        let map = gain_map(
            &layout,
            &Scene::default(),
            (-90.0, 90.0),
            5.0,
            &spec(),
            &FieldConfig::default(),
        )
        .unwrap();
        let peak_angle = map.user_angles_deg[map.argmax()];
        assert!(peak_angle.abs() <= 5.0, "peak at {peak_angle}");
        let g0 = map.gain_at(0.0).unwrap();
        for side in [-90.0, 90.0] {
            let ratio = map.gain_at(side).unwrap() / g0;
            assert!((0.4..=0.6).contains(&ratio), "ratio at {side}: {ratio}");
        }
    }

    #[test]
    fn band_mean_converges() {
        let layout = Layout::with_angles(vec![0.0, -120.0, 120.0]).unwrap();
        for t in [-60.0, 0.0, 45.0] {
            let coarse = FieldConfig {
                n_freq: 64,
                ..FieldConfig::default()
            };
            let fine = FieldConfig {
                n_freq: 128,
                ..FieldConfig::default()
            };
            let a = interference_gain(&layout, &Scene::default(), t, &spec(), &coarse).unwrap();
            let b = interference_gain(&layout, &Scene::default(), t, &spec(), &fine).unwrap();
            assert!((a - b).abs() / b < 5e-3);
        }
    }

    #[test]
    fn coincident_source_and_mic_is_a_geometry_error() {
        // Zero distance is unreachable through the constructors.
        let scene = Scene {
            d_cm: 0.0,
            h_cm: 0.0,
            ..Scene::default()
        };
        let layout = Layout::with_angles(vec![0.0]).unwrap();
        let r = interference_gain(&layout, &scene, 0.0, &spec(), &FieldConfig::default());
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn layout_validation() {
        assert!(Layout::with_angles(vec![]).is_err());
        assert!(Layout::with_angles(vec![0.0; 9]).is_err());
        assert!(Layout::with_angles(vec![181.0]).is_err());
        assert!(Layout::new(vec![0.0], -1.0, 72.0).is_err());
    }

    #[test]
    fn csv_export() {
        let layout = Layout::with_angles(vec![0.0]).unwrap();
        let map = gain_map(
            &layout,
            &Scene::default(),
            (-10.0, 10.0),
            10.0,
            &spec(),
            &FieldConfig::default(),
        )
        .unwrap();
        let csv = map.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "theta_deg,gain");
        assert!(lines[2].starts_with("0,"));
    }

    #[test]
    fn empty_grid_rejected() {
        let layout = Layout::with_angles(vec![0.0]).unwrap();
        let r = gain_map(
            &layout,
            &Scene::default(),
            (10.0, -10.0),
            5.0,
            &spec(),
            &FieldConfig::default(),
        );
        assert!(r.is_err());
        let r = gain_map(
            &layout,
            &Scene::default(),
            (-10.0, 10.0),
            0.0,
            &spec(),
            &FieldConfig::default(),
        );
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn mirror_invariance(
            angles in proptest::collection::vec(-180.0f64..=180.0, 1..4),
            theta in -180.0f64..=180.0,
            handheld in any::<bool>(),
        ) {
            let layout = Layout::with_angles(angles).unwrap();
            let scene = if handheld { Scene::handheld(20.0).unwrap() } else { Scene::default() };
            let field = FieldConfig { n_freq: 16, ..FieldConfig::default() };
            let a = interference_gain(&layout, &scene, theta, &spec(), &field).unwrap();
            let b = interference_gain(&layout.mirrored(), &scene, -theta, &spec(), &field).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn gain_bounds(
            angles in proptest::collection::vec(-180.0f64..=180.0, 1..5),
            theta in -90.0f64..=90.0,
            kappa in 0.0f64..100.0,
        ) {
            let layout = Layout::new(angles, 1.0, kappa).unwrap();
            let n = layout.unit_angles_deg.len() as f64;
            let g = interference_gain(&layout, &Scene::default(), theta, &spec(), &FieldConfig::default()).unwrap();
            prop_assert!(g >= 0.0);
            prop_assert!(g <= 1.0 + n * kappa + 1e-9);
        }
    }
}
