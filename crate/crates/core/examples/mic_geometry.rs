//! Mouth and microphone positions as the head turns, for both mounts.

use metashield::geometry::Scene;

fn main() -> metashield::Result<()> {
    let scenes = [
        ("gooseneck", Scene::gooseneck(20.0, 10.0)?),
        ("handheld", Scene::handheld(20.0)?),
    ];
    for (name, scene) in scenes {
        println!("{name}");
        for theta in [-90.0, -45.0, 0.0, 45.0, 90.0] {
            let s = scene.source_position(theta)?;
            let m = scene.mic_position(theta)?;
            println!(
                "  theta {theta:>5.0}: mouth ({:6.2}, {:6.2}, {:6.2}) mic ({:6.2}, {:6.2}, {:6.2}) distance {:5.2} cm",
                s.x,
                s.y,
                s.z,
                m.x,
                m.y,
                m.z,
                s.distance(&m)
            );
        }
    }
    Ok(())
}
