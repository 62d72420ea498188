//! Run the whole pipeline on the bundled synthetic probe: baseline plus
//! oracle, retrieved, adversarial and generated contexts, scored by the copy
//! mock in both input modes. Prints the P@1 table of each run.
//!
//! `cargo run --example full_run [-- <out_dir>]`

use std::path::PathBuf;

use ctxprobe::featurize::Mode;
use ctxprobe::run::{run, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    let out_root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ctxprobe-full-run"));

    for mode in [Mode::TwoSegment, Mode::OneSegment] {
        let out_dir = out_root.join(mode.name());
        let set = [format!("mode={}", mode.name()), format!("out_dir={}", out_dir.display())];
        let cfg = RunConfig::load(&data.join("run.json"), &set)?;
        let outcome = run(&cfg)?;
        let m = &outcome.manifest;
        println!("== {} ({} facts, config {})", mode.name(), m.facts_after_vocab_filter, &m.config_hash[..12]);
        print!("{}", std::fs::read_to_string(out_dir.join("report/precision.tsv"))?);
        print!("{}", std::fs::read_to_string(out_dir.join("report/nsp_rate.tsv"))?);
        println!();
    }
    println!("artifacts under {}", out_root.display());
    Ok(())
}
