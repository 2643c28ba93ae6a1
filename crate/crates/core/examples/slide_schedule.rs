//! Builds a seeded slide schedule and reports how far it moves the resonance.

use metashield::config::{derive_seed, RunConfig};
use metashield::randomizer::{make_schedule, shifted_resonance};

fn main() -> metashield::Result<()> {
    let cfg = RunConfig::default();
    let spec = cfg.resonator()?;
    let slide = cfg.slide_params()?;
    println!("slide coefficient {:.4}", slide.slide_coeff);
    println!(
        "f0 at u = 0: {:.1} Hz, at u = {} mm: {:.1} Hz",
        shifted_resonance(0.0, &slide, spec.c_eff)?,
        slide.u_max_mm,
        shifted_resonance(slide.u_max_mm, &slide, spec.c_eff)?,
    );

    let schedule = make_schedule(
        derive_seed(cfg.seed, 0),
        200,
        cfg.slide.frame_hop_s,
        cfg.slide.step_mm,
        &slide,
        spec.c_eff,
    )?;
    let (lo, hi) = schedule
        .omega0_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
            (lo.min(*f), hi.max(*f))
        });
    println!(
        "{} frames, f0 visited [{lo:.1}, {hi:.1}] Hz",
        schedule.len()
    );
    for (i, (u, f)) in schedule
        .u_values
        .iter()
        .zip(&schedule.omega0_values)
        .take(8)
        .enumerate()
    {
        println!("frame {i}: u = {u:.3} mm, f0 = {f:.2} Hz");
    }
    Ok(())
}
