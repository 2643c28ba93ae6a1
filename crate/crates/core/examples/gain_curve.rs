//! Prints the resonator's gain curve around its centre and the effective
//! sound speed implied by the calibration.

use metashield::resonator::{gain_curve, ResonatorSpec};

fn main() -> metashield::Result<()> {
    let spec = ResonatorSpec::reference();
    let curve = gain_curve(&spec, 100.0, 900.0, 50.0)?;
    println!("c_eff = {:.0} (size units * Hz)", spec.c_eff);
    for (f, g) in curve.frequencies.iter().zip(&curve.gains) {
        let bar = "#".repeat((g / 2.0).round() as usize);
        println!("{f:>5.0} Hz {g:>7.2} {bar}");
    }
    let peak = curve.argmax();
    println!(
        "peak {:.2} at {:.0} Hz",
        curve.gains[peak], curve.frequencies[peak]
    );
    Ok(())
}
