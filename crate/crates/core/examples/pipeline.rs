//! Runs every stage into a directory and replays it from the manifest.
//!
//! `cargo run --release --example pipeline -- [out_dir]`

use std::path::PathBuf;

use metashield::cli::{replay, run, Command, MANIFEST_NAME};
use metashield::config::RunConfig;

fn main() -> metashield::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("metashield_pipeline"));
    let mut cfg = RunConfig::default();
    cfg.corpus.speakers = 4;
    cfg.corpus.utterances_per_speaker = 2;
    cfg.eval.trials = 8;

    let outputs = run(&Command::Pipeline { out: out.clone() }, &cfg)?;
    println!("{} outputs in {}", outputs.len(), out.display());

    let again = out.with_file_name(format!(
        "{}_replay",
        out.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("pipeline")
    ));
    let replayed = replay(&out.join(MANIFEST_NAME), Some(again.clone()))?;
    let same = outputs
        .iter()
        .filter(|p| p.file_name() != Some(MANIFEST_NAME.as_ref()))
        .all(|p| {
            let rel = p.strip_prefix(&out).expect("outputs live under out");
            std::fs::read(p).ok() == std::fs::read(again.join(rel)).ok()
        });
    println!(
        "replayed {} outputs into {}; identical: {same}",
        replayed.len(),
        again.display()
    );
    Ok(())
}
