//! Miss-match rate and out-of-band distortion on a reduced synthetic corpus.

use metashield::cli::evaluate_corpus;
use metashield::config::RunConfig;

fn main() -> metashield::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.corpus.speakers = 5;
    cfg.corpus.utterances_per_speaker = 2;
    cfg.eval.trials = 10;
    let eval = evaluate_corpus(&cfg)?;
    let r = &eval.report;
    for (t, s) in eval.trials.iter().zip(&r.similarities) {
        println!("{:<12} similarity {s:+.3}", t.utterance.name());
    }
    println!("MMR {:.2} at threshold {}", r.mmr, r.threshold);
    for b in &r.oob_distortion_db {
        println!("band {:>6.0} Hz: {:.2} dB", b.center_hz, b.db);
    }

    cfg.perturb.kappa = 0.0;
    println!(
        "MMR with the resonator decoupled: {:.2}",
        evaluate_corpus(&cfg)?.report.mmr
    );
    Ok(())
}
