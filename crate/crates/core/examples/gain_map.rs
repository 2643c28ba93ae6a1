//! Interference gain against head angle for one, two and three units.

use metashield::field::{gain_map, FieldConfig, Layout};
use metashield::geometry::Scene;
use metashield::resonator::ResonatorSpec;

fn main() -> metashield::Result<()> {
    let spec = ResonatorSpec::reference();
    let field = FieldConfig::default();
    let scene = Scene::default();
    for angles in [vec![0.0], vec![0.0, -120.0], vec![0.0, -120.0, 120.0]] {
        let layout = Layout::with_angles(angles.clone())?;
        let map = gain_map(&layout, &scene, (-180.0, 180.0), 45.0, &spec, &field)?;
        let row: Vec<String> = map.gains.iter().map(|g| format!("{g:6.1}")).collect();
        println!("{angles:?}");
        println!("  theta: -180 .. 180 by 45");
        println!("  gain: {}", row.join(" "));
    }
    Ok(())
}
