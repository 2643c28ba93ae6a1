//! Lorentzian model of a single Mie-type resonator.
//!
//! All frequencies are ordinary frequencies in Hz. The amplitude `A` is
//! calibrated in Hz² so that `A / ((f0 - f)^2 + gamma^2)` is dimensionless.
//! The effective size `L` is a fitted scalar; only ratios of it matter.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::io_util::fmt_sig;

/// Nominal peak gain of the reference unit.
pub const REFERENCE_PEAK_GAIN: f64 = 73.0;
/// Nominal resonance of the reference unit, Hz.
pub const REFERENCE_CENTER_HZ: f64 = 500.0;
/// Half-width placing the half-gain points at 300 Hz and 700 Hz.
pub const REFERENCE_HALF_WIDTH_HZ: f64 = 200.0;
/// Nominal effective size of the reference unit.
pub const REFERENCE_L0: f64 = 779.0;

/// Physical dimensions of a fabricated unit, in mm. Recorded only; the
/// reduced model is calibrated rather than derived from these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitGeometry {
    pub d_mm: f64,
    pub h_mm: f64,
    pub t_mm: f64,
    pub s_mm: f64,
    /// Thickness. Has no effect on the resonance in this model.
    pub z_mm: Option<f64>,
}

impl UnitGeometry {
    pub const REFERENCE: UnitGeometry = UnitGeometry {
        d_mm: 19.5,
        h_mm: 21.0,
        t_mm: 1.95,
        s_mm: 49.5,
        z_mm: None,
    };
}

/// Calibrated Lorentzian parameters of one resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSpec {
    pub peak_gain: f64,
    pub center_hz: f64,
    pub half_width_hz: f64,
    /// `peak_gain * half_width_hz^2`, Hz².
    pub amplitude: f64,
    /// `center_hz * l0`.
    pub c_eff: f64,
    pub l0: f64,
    pub geometry: Option<UnitGeometry>,
}

impl ResonatorSpec {
    /// Builds a spec whose Lorentzian peaks at `center_hz` with height `peak_gain`.
    pub fn calibrate(peak_gain: f64, center_hz: f64, half_width_hz: f64, l0: f64) -> Result<Self> {
        ensure_positive("peak_gain", peak_gain)?;
        ensure_positive("center_hz", center_hz)?;
        ensure_positive("half_width_hz", half_width_hz)?;
        ensure_positive("l0", l0)?;
        Ok(ResonatorSpec {
            peak_gain,
            center_hz,
            half_width_hz,
            amplitude: peak_gain * half_width_hz * half_width_hz,
            c_eff: center_hz * l0,
            l0,
            geometry: None,
        })
    }

    /// The 73x / 500 Hz / 200 Hz / 779 reference unit with its recorded geometry.
    pub fn reference() -> Self {
        let mut spec = Self::calibrate(
            REFERENCE_PEAK_GAIN,
            REFERENCE_CENTER_HZ,
            REFERENCE_HALF_WIDTH_HZ,
            REFERENCE_L0,
        )
        .expect("reference constants are positive");
        spec.geometry = Some(UnitGeometry::REFERENCE);
        spec
    }

    pub fn with_geometry(mut self, geometry: UnitGeometry) -> Self {
        self.geometry = Some(geometry);
        self
    }

    /// Gain at `f` with the resonance moved to `center_hz`, amplitude unchanged.
    pub fn gain_at_center(&self, f: f64, center_hz: f64) -> f64 {
        let detune = center_hz - f;
        let g2 = self.half_width_hz * self.half_width_hz;
        // peak * (g2 / (d^2 + g2)) equals A / (d^2 + g2) and is exactly
        // peak_gain on resonance.
        self.peak_gain * (g2 / (detune * detune + g2))
    }

    /// Unit-peak lineshape `G(f) / peak_gain` around `center_hz`.
    pub fn unit_gain_at_center(&self, f: f64, center_hz: f64) -> f64 {
        let detune = center_hz - f;
        let g2 = self.half_width_hz * self.half_width_hz;
        g2 / (detune * detune + g2)
    }

    pub fn gain(&self, f: f64) -> f64 {
        self.gain_at_center(f, self.center_hz)
    }

    pub fn unit_gain(&self, f: f64) -> f64 {
        self.unit_gain_at_center(f, self.center_hz)
    }
}

/// `A / ((f0 - f)^2 + gamma^2)`.
pub fn lorentzian_gain(f: f64, spec: &ResonatorSpec) -> f64 {
    spec.gain(f)
}

/// Resonance of a unit of effective size `l`: `c_eff / l`.
pub fn resonance_frequency(l: f64, c_eff: f64) -> Result<f64> {
    ensure_positive("effective size", l)?;
    Ok(c_eff / l)
}

/// Tabulated gain over a uniform frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    pub frequencies: Vec<f64>,
    pub gains: Vec<f64>,
}

impl GainCurve {
    /// Index of the largest gain (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, g) in self.gains.iter().enumerate() {
            if *g > self.gains[best] {
                best = i;
            }
        }
        best
    }

    pub fn mean_gain(&self) -> f64 {
        self.gains.iter().sum::<f64>() / self.gains.len() as f64
    }

    /// Writes `frequency_hz,gain` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frequency_hz,gain")?;
        for (f, g) in self.frequencies.iter().zip(&self.gains) {
            writeln!(out, "{},{}", fmt_sig(*f), fmt_sig(*g))?;
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

/// Evaluates the gain on `f_lo, f_lo + step, ...` up to `f_hi` inclusive.
pub fn gain_curve(spec: &ResonatorSpec, f_lo: f64, f_hi: f64, step: f64) -> Result<GainCurve> {
    if !(f_lo.is_finite() && f_hi.is_finite() && f_lo >= 0.0 && f_lo < f_hi) {
        return Err(Error::param(format!(
            "frequency range must satisfy 0 <= lo < hi, got [{f_lo}, {f_hi}]"
        )));
    }
    ensure_positive("step", step)?;
    let count = ((f_hi - f_lo) / step * (1.0 + 1e-12)).floor() as usize + 1;
    let frequencies: Vec<f64> = (0..count).map(|i| f_lo + step * i as f64).collect();
    let gains = frequencies.iter().map(|&f| spec.gain(f)).collect();
    Ok(GainCurve { frequencies, gains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn calibrate_reference() {
        let spec = ResonatorSpec::calibrate(73.0, 500.0, 200.0, 779.0).unwrap();
        assert_eq!(spec.amplitude, 2_920_000.0);
        assert_eq!(spec.c_eff, 500.0 * 779.0);
        assert_eq!(spec.center_hz, spec.c_eff / spec.l0);
    }

    #[test]
    fn calibrate_unit_peak_gives_gamma_squared() {
        let spec = ResonatorSpec::calibrate(1.0, 440.0, 37.5, 1.0).unwrap();
        assert_eq!(spec.amplitude, 37.5 * 37.5);
    }

    #[test]
    fn calibrate_rejects_non_positive() {
        assert!(matches!(
            ResonatorSpec::calibrate(0.0, 500.0, 200.0, 779.0),
            Err(Error::Parameter(_))
        ));
        assert!(ResonatorSpec::calibrate(73.0, -1.0, 200.0, 779.0).is_err());
        assert!(ResonatorSpec::calibrate(73.0, 500.0, 0.0, 779.0).is_err());
        assert!(ResonatorSpec::calibrate(73.0, 500.0, 200.0, f64::NAN).is_err());
    }

    #[test]
    fn band_edges_at_half_gain() {
        let spec = ResonatorSpec::reference();
        // Independent scalar evaluation of A / ((f0 - f)^2 + gamma^2).
        let direct = |f: f64| 2_920_000.0 / ((500.0 - f) * (500.0 - f) + 40_000.0);
        assert_eq!(direct(300.0), 36.5);
        assert!((lorentzian_gain(300.0, &spec) - direct(300.0)).abs() < 1e-12);
        assert!((lorentzian_gain(700.0, &spec) - direct(700.0)).abs() < 1e-12);
        assert_eq!(lorentzian_gain(500.0, &spec), 73.0);
    }

    #[test]
    fn tail_values() {
        let spec = ResonatorSpec::reference();
        let g = spec.half_width_hz;
        assert!((spec.gain(500.0 + g) - 36.5).abs() < 1e-12);
        assert!((spec.gain(500.0 - 10.0 * g) - 73.0 / 101.0).abs() < 1e-12);
        assert!((spec.gain(500.0 + 10.0 * g) - 73.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn resonance_frequency_scaling() {
        let spec = ResonatorSpec::reference();
        assert_eq!(resonance_frequency(spec.l0, spec.c_eff).unwrap(), 500.0);
        assert_eq!(
            resonance_frequency(spec.l0 / 2.0, spec.c_eff).unwrap(),
            1000.0
        );
        assert_eq!(resonance_frequency(779.0, 500.0 * 779.0).unwrap(), 500.0);
        assert!(resonance_frequency(0.0, 1.0).is_err());
        assert!(resonance_frequency(-3.0, 1.0).is_err());
    }

    #[test]
    fn reference_curve_peak() {
        let curve = gain_curve(&ResonatorSpec::reference(), 100.0, 900.0, 1.0).unwrap();
        assert_eq!(curve.frequencies.len(), 801);
        let i = curve.argmax();
        assert_eq!(curve.frequencies[i], 500.0);
        assert_eq!(curve.gains[i], 73.0);
    }

    #[test]
    fn two_point_curve_is_monotone_in_tail() {
        let spec = ResonatorSpec::calibrate(10.0, 400.0, 50.0, 2.0).unwrap();
        let above = gain_curve(&spec, 450.0, 451.0, 1.0).unwrap();
        assert_eq!(above.gains.len(), 2);
        assert!(above.gains[0] >= above.gains[1]);
        let below = gain_curve(&spec, 300.0, 301.0, 1.0).unwrap();
        assert!(below.gains[0] < below.gains[1]);
    }

    #[test]
    fn band_mean_matches_quadrature() {
        let spec = ResonatorSpec::reference();
        let curve = gain_curve(&spec, 300.0, 700.0, 1.0).unwrap();
        // Independent trapezoid rule on a 100k-interval grid of the closed form.
        let n = 100_000;
        let h = 400.0 / n as f64;
        let f = |x: f64| 2_920_000.0 / ((500.0 - x).powi(2) + 40_000.0);
        let mut integral = 0.5 * (f(300.0) + f(700.0));
        for k in 1..n {
            integral += f(300.0 + h * k as f64);
        }
        let quad_mean = integral * h / 400.0;
        let rel = (curve.mean_gain() - quad_mean).abs() / quad_mean;
        assert!(rel < 1e-3, "relative deviation {rel}");
    }

    #[test]
    fn empty_grid_is_rejected() {
        let spec = ResonatorSpec::reference();
        assert!(gain_curve(&spec, 700.0, 300.0, 1.0).is_err());
        assert!(gain_curve(&spec, 300.0, 300.0, 1.0).is_err());
        assert!(gain_curve(&spec, 300.0, 700.0, 0.0).is_err());
        assert!(gain_curve(&spec, -5.0, 700.0, 1.0).is_err());
    }

    #[test]
    fn csv_header_and_peak_row() {
        let curve = gain_curve(&ResonatorSpec::reference(), 499.0, 501.0, 1.0).unwrap();
        let csv = curve.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "frequency_hz,gain");
        assert_eq!(lines[2], "500.0000000,73.00000000");
    }

    proptest! {
        #[test]
        fn symmetric_about_center(offset in 0.0f64..5_000.0, gamma in 1.0f64..500.0, peak in 0.1f64..200.0) {
            let spec = ResonatorSpec::calibrate(peak, 1_000.0, gamma, 3.0).unwrap();
            let hi = spec.gain(1_000.0 + offset);
            let lo = spec.gain(1_000.0 - offset);
            prop_assert!((hi - lo).abs() <= 1e-12 * peak);
        }

        #[test]
        fn peak_is_exact(peak in 0.1f64..500.0, center in 1.0f64..8_000.0, gamma in 0.5f64..1_000.0, l0 in 0.1f64..5_000.0) {
            let spec = ResonatorSpec::calibrate(peak, center, gamma, l0).unwrap();
            prop_assert_eq!(spec.gain(center), peak);
            prop_assert_eq!(spec.amplitude, peak * gamma * gamma);
        }

        #[test]
        fn decreasing_away_from_center(a in 0.0f64..2_000.0, b in 0.0f64..2_000.0) {
            let spec = ResonatorSpec::reference();
            let (near, far) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(far - near > 1e-6);
            prop_assert!(spec.gain(500.0 + near) > spec.gain(500.0 + far));
        }

        #[test]
        fn curve_matches_pointwise(lo in 0.0f64..1_000.0, span in 1.0f64..500.0, step in 0.5f64..20.0) {
            let spec = ResonatorSpec::reference();
            let curve = gain_curve(&spec, lo, lo + span, step).unwrap();
            prop_assert_eq!(curve.frequencies.len(), curve.gains.len());
            for (f, g) in curve.frequencies.iter().zip(&curve.gains) {
                prop_assert_eq!(*g, lorentzian_gain(*f, &spec));
                prop_assert!(*f <= lo + span + 1e-9);
            }
        }

        #[test]
        fn resonance_scales_inversely(l in 0.01f64..1e4, k in 0.01f64..100.0) {
            let c = 500.0 * 779.0;
            let scaled = resonance_frequency(k * l, c).unwrap() * k;
            let base = resonance_frequency(l, c).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-12 * base);
        }
    }
}
