//! Greedy orientation search under both aggregates.

use metashield::field::FieldConfig;
use metashield::geometry::Scene;
use metashield::layout::{design_layout, Aggregate, SearchConfig};
use metashield::resonator::ResonatorSpec;

fn main() -> metashield::Result<()> {
    let spec = ResonatorSpec::reference();
    for aggregate in [Aggregate::Mean, Aggregate::Min] {
        let cfg = SearchConfig {
            aggregate,
            unit_step_deg: 5.0,
            ..SearchConfig::default()
        };
        let d = design_layout(&Scene::default(), &spec, &FieldConfig::default(), &cfg)?;
        println!("{aggregate:?}: units {:?}", d.unit_angles_deg);
        for (k, s) in d.stage_scores.iter().enumerate() {
            println!("  {} unit(s): {s:.3}", k + 1);
        }
    }
    Ok(())
}
